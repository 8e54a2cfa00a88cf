//! Adam for dense network parameters and for the per-datapoint posterior table.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probdist::LatentGaussian;
use crate::svi::PosteriorTable;
use crate::tensor::DenseTensor;

pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_EPS: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
}

impl AdamState {
    pub fn new(numel: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; numel],
            v: vec![0.0; numel],
            t: 0,
            lr,
            beta1: DEFAULT_BETA1,
            beta2: DEFAULT_BETA2,
            eps_hat: DEFAULT_EPS,
        }
    }

    pub fn numel(&self) -> usize {
        self.m.len()
    }

    /// One bias-corrected Adam update of `param` in place.
    pub fn update(&mut self, param: &mut [f64], grad: &[f64], name: &str) -> Result<()> {
        if param.len() != grad.len() || param.len() != self.m.len() {
            return Err(Error::ShapeMismatch {
                op: "adam_step",
                lhs: vec![param.len()],
                rhs: vec![grad.len(), self.m.len()],
            });
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient { name: name.to_string() });
        }
        self.t += 1;
        let t = self.t.min(i32::MAX as u64) as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..param.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            param[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps_hat);
        }
        Ok(())
    }
}

pub fn adam_step(param: &mut DenseTensor, grad: &DenseTensor, state: &mut AdamState, name: &str) -> Result<()> {
    if param.shape() != grad.shape() {
        return Err(Error::ShapeMismatch {
            op: "adam_step",
            lhs: param.shape().to_vec(),
            rhs: grad.shape().to_vec(),
        });
    }
    state.update(param.data_mut(), grad.data(), name)
}

/// One [`AdamState`] per tensor of a parameter list, sharing a learning rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    states: Vec<AdamState>,
}

impl Adam {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a DenseTensor>, lr: f64) -> Self {
        Self {
            states: params.into_iter().map(|p| AdamState::new(p.numel(), lr)).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.states.first().map_or(0, |s| s.t)
    }

    pub fn step(&mut self, params: Vec<&mut DenseTensor>, grads: &[DenseTensor]) -> Result<()> {
        if params.len() != self.states.len() || grads.len() != self.states.len() {
            return Err(Error::InvalidArgument(format!(
                "optimizer tracks {} tensors, got {} params and {} grads",
                self.states.len(),
                params.len(),
                grads.len()
            )));
        }
        // Validate everything first so a bad gradient leaves all tensors untouched.
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(Error::ShapeMismatch {
                    op: "adam_step",
                    lhs: p.shape().to_vec(),
                    rhs: g.shape().to_vec(),
                });
            }
            if !g.all_finite() {
                return Err(Error::NonFiniteGradient { name: format!("tensor{i}") });
            }
        }
        for (i, ((p, g), s)) in params.into_iter().zip(grads).zip(&mut self.states).enumerate() {
            adam_step(p, g, s, &format!("tensor{i}"))?;
        }
        Ok(())
    }
}

/// Adam step on the listed posterior entries only.
///
/// Each listed entry advances its private state by one step; every other
/// entry is left bit-identical.
pub fn sparse_posterior_step(
    table: &mut PosteriorTable,
    batch_ids: &[usize],
    grads: &[LatentGaussian],
    lr: f64,
) -> Result<()> {
    if batch_ids.len() != grads.len() {
        return Err(Error::InvalidArgument(format!(
            "{} ids but {} gradients",
            batch_ids.len(),
            grads.len()
        )));
    }
    let size = table.len();
    let mut seen = vec![false; size];
    for (&id, g) in batch_ids.iter().zip(grads) {
        if id >= size {
            return Err(Error::IdOutOfRange { id, size });
        }
        if std::mem::replace(&mut seen[id], true) {
            return Err(Error::DuplicateId(id));
        }
        if g.dim() != table.latent_dim() {
            return Err(Error::ShapeMismatch {
                op: "sparse_posterior_step",
                lhs: vec![table.latent_dim()],
                rhs: vec![g.dim()],
            });
        }
        if g.mean.iter().chain(&g.log_std).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient {
                name: format!("posterior[{id}]"),
            });
        }
    }
    for (&id, g) in batch_ids.iter().zip(grads) {
        let (entry, state) = table.entry_mut(id);
        let mut params = entry.concat();
        state.lr = lr;
        state.update(&mut params, &g.concat(), "posterior")?;
        let z = entry.dim();
        entry.mean.copy_from_slice(&params[..z]);
        entry.log_std.copy_from_slice(&params[z..]);
    }
    Ok(())
}
