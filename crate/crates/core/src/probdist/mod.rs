//! Diagonal Gaussian posteriors and the loss terms built from them.
//!
//! Every quantity here exists twice: as a plain function on values and as a
//! tape-recording function on nodes. The value forms double as test oracles
//! for the node forms.

mod rng;

pub use rng::{derive_seed, RngStream};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{DenseTensor, NodeId, Tape};

/// `0.5 * ln(2π)`.
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Mean-field Gaussian `N(mean, diag(exp(2 * log_std)))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentGaussian {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
}

impl LatentGaussian {
    pub fn new(mean: Vec<f64>, log_std: Vec<f64>) -> Result<Self> {
        if mean.len() != log_std.len() {
            return Err(Error::ShapeMismatch {
                op: "latent_gaussian",
                lhs: vec![mean.len()],
                rhs: vec![log_std.len()],
            });
        }
        if mean.iter().chain(&log_std).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: "latent_gaussian" });
        }
        Ok(Self { mean, log_std })
    }

    pub fn standard(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            log_std: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn std(&self) -> Vec<f64> {
        self.log_std.iter().map(|s| s.exp()).collect()
    }

    /// `mean + exp(log_std) * eps`.
    pub fn reparam_sample(&self, eps: &[f64]) -> Result<Vec<f64>> {
        if eps.len() != self.dim() {
            return Err(Error::ShapeMismatch {
                op: "reparam_sample",
                lhs: vec![self.dim()],
                rhs: vec![eps.len()],
            });
        }
        Ok(self
            .mean
            .iter()
            .zip(&self.log_std)
            .zip(eps)
            .map(|((m, s), e)| m + s.exp() * e)
            .collect())
    }

    /// `[mean ‖ log_std]`.
    pub fn concat(&self) -> Vec<f64> {
        let mut v = self.mean.clone();
        v.extend_from_slice(&self.log_std);
        v
    }

    /// Inverse of [`LatentGaussian::concat`].
    pub fn from_concat(values: &[f64]) -> Result<Self> {
        if values.len() % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "head of odd length {} cannot be split into mean and log-std",
                values.len()
            )));
        }
        let z = values.len() / 2;
        Self::new(values[..z].to_vec(), values[z..].to_vec())
    }
}

/// Log-density of `x` under a diagonal Gaussian.
pub fn gaussian_logpdf_diag(x: &[f64], mean: &[f64], log_std: &[f64]) -> Result<f64> {
    if x.len() != mean.len() || x.len() != log_std.len() {
        return Err(Error::ShapeMismatch {
            op: "gaussian_logpdf_diag",
            lhs: vec![x.len()],
            rhs: vec![mean.len(), log_std.len()],
        });
    }
    Ok(x.iter()
        .zip(mean)
        .zip(log_std)
        .map(|((&xj, &mj), &sj)| {
            let r = (xj - mj) / sj.exp();
            -sj - HALF_LN_2PI - 0.5 * r * r
        })
        .sum())
}

/// `KL(q || N(0, I))` in closed form.
pub fn kl_diag_to_std_normal(q: &LatentGaussian) -> f64 {
    q.mean
        .iter()
        .zip(&q.log_std)
        .map(|(&m, &s)| 0.5 * (m * m + (2.0 * s).exp() - 1.0 - 2.0 * s))
        .sum()
}

/// Mean squared error over every element.
pub fn recon_loss(x_hat: &DenseTensor, x: &DenseTensor) -> Result<f64> {
    if x_hat.shape() != x.shape() {
        return Err(Error::ShapeMismatch {
            op: "recon_loss",
            lhs: x_hat.shape().to_vec(),
            rhs: x.shape().to_vec(),
        });
    }
    let s: f64 = x_hat
        .data()
        .iter()
        .zip(x.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(s / x.numel() as f64)
}

fn same_shape(tape: &Tape, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
    let (sa, sb) = (tape.value(a).shape(), tape.value(b).shape());
    if sa != sb {
        return Err(Error::ShapeMismatch {
            op,
            lhs: sa.to_vec(),
            rhs: sb.to_vec(),
        });
    }
    Ok(())
}

/// Records `mean + exp(log_std) ⊙ eps`.
pub fn reparam_sample_node(tape: &mut Tape, mean: NodeId, log_std: NodeId, eps: NodeId) -> Result<NodeId> {
    same_shape(tape, "reparam_sample", mean, log_std)?;
    same_shape(tape, "reparam_sample", mean, eps)?;
    let std = tape.exp(log_std)?;
    let noise = tape.mul(std, eps)?;
    tape.add(mean, noise)
}

/// Records the summed diagonal Gaussian log-density over all elements.
pub fn gaussian_logpdf_node(tape: &mut Tape, x: NodeId, mean: NodeId, log_std: NodeId) -> Result<NodeId> {
    same_shape(tape, "gaussian_logpdf_diag", x, mean)?;
    same_shape(tape, "gaussian_logpdf_diag", x, log_std)?;
    let n = tape.value(x).numel() as f64;
    let diff = tape.sub(x, mean)?;
    let neg_log_std = tape.scale(log_std, -1.0)?;
    let inv_std = tape.exp(neg_log_std)?;
    let r = tape.mul(diff, inv_std)?;
    let r2 = tape.square(r)?;
    let quad = tape.sum(r2)?;
    let half_quad = tape.scale(quad, -0.5)?;
    let log_det = tape.sum(log_std)?;
    let partial = tape.sub(half_quad, log_det)?;
    let c = tape.constant(DenseTensor::scalar(-HALF_LN_2PI * n))?;
    tape.add(partial, c)
}

/// Records `Σ 0.5 (mean² + exp(2 log_std) − 1 − 2 log_std)`.
pub fn kl_node(tape: &mut Tape, mean: NodeId, log_std: NodeId) -> Result<NodeId> {
    same_shape(tape, "kl_diag_to_std_normal", mean, log_std)?;
    let n = tape.value(mean).numel() as f64;
    let m2 = tape.square(mean)?;
    let m2_sum = tape.sum(m2)?;
    let two_s = tape.scale(log_std, 2.0)?;
    let var = tape.exp(two_s)?;
    let var_sum = tape.sum(var)?;
    let s_sum = tape.sum(log_std)?;
    let a = tape.add(m2_sum, var_sum)?;
    let a = tape.scale(a, 0.5)?;
    let b = tape.sub(a, s_sum)?;
    let c = tape.constant(DenseTensor::scalar(-0.5 * n))?;
    tape.add(b, c)
}

/// Records the mean squared error between `x_hat` and `x`.
pub fn recon_loss_node(tape: &mut Tape, x_hat: NodeId, x: NodeId) -> Result<NodeId> {
    same_shape(tape, "recon_loss", x_hat, x)?;
    let d = tape.sub(x_hat, x)?;
    let sq = tape.square(d)?;
    tape.mean(sq)
}
