//! Early decoder training: the decoder and a free-form Gaussian posterior
//! per training point are optimized together on the reconstruction term.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{build_decoder, ArchSpec, MlpParams, RecordedMlp};
use crate::optim::{sparse_posterior_step, Adam, AdamState};
use crate::probdist::{derive_seed, recon_loss_node, reparam_sample_node, LatentGaussian, RngStream};
use crate::tensor::{DenseTensor, NodeId, Tape};

pub const INIT_MEAN_RANGE: f64 = 0.1;
pub const INIT_LOG_STD: f64 = -1.0;

// Seed derivation tags, shared with the VAE so paired runs start identically.
pub(crate) const DECODER_SEED_TAG: u64 = 1;
pub(crate) const ENCODER_SEED_TAG: u64 = 2;
pub(crate) const POSTERIOR_SEED_TAG: u64 = 3;
pub(crate) const SHUFFLE_SEED_TAG: u64 = 4;
pub(crate) const NOISE_SEED_TAG: u64 = 5;

/// One Gaussian plus one Adam state per training datapoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorTable {
    latent_dim: usize,
    entries: Vec<LatentGaussian>,
    states: Vec<AdamState>,
}

impl PosteriorTable {
    /// Table over `entries` with fresh optimizer state.
    pub fn from_entries(entries: Vec<LatentGaussian>) -> Result<Self> {
        let latent_dim = entries
            .first()
            .map(LatentGaussian::dim)
            .ok_or_else(|| Error::InvalidArgument("posterior table needs at least one entry".into()))?;
        if let Some(bad) = entries.iter().find(|e| e.dim() != latent_dim) {
            return Err(Error::ShapeMismatch {
                op: "posterior_table",
                lhs: vec![latent_dim],
                rhs: vec![bad.dim()],
            });
        }
        let states = entries.iter().map(|_| AdamState::new(2 * latent_dim, 0.0)).collect();
        Ok(Self {
            latent_dim,
            entries,
            states,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn entry(&self, i: usize) -> &LatentGaussian {
        &self.entries[i]
    }

    pub fn entries(&self) -> &[LatentGaussian] {
        &self.entries
    }

    pub fn state(&self, i: usize) -> &AdamState {
        &self.states[i]
    }

    pub fn entry_mut(&mut self, i: usize) -> (&mut LatentGaussian, &mut AdamState) {
        (&mut self.entries[i], &mut self.states[i])
    }

    /// `(ids.len(), z)` matrices of means and log-stds.
    pub fn gather(&self, ids: &[usize]) -> (DenseTensor, DenseTensor) {
        let z = self.latent_dim;
        let mut mean = Vec::with_capacity(ids.len() * z);
        let mut log_std = Vec::with_capacity(ids.len() * z);
        for &i in ids {
            mean.extend_from_slice(&self.entries[i].mean);
            log_std.extend_from_slice(&self.entries[i].log_std);
        }
        (
            DenseTensor::matrix(ids.len(), z, mean).expect("gather shape"),
            DenseTensor::matrix(ids.len(), z, log_std).expect("gather shape"),
        )
    }

    pub fn bit_eq(&self, other: &PosteriorTable) -> bool {
        let bits = |t: &PosteriorTable| -> Vec<u64> {
            t.entries
                .iter()
                .flat_map(|e| e.mean.iter().chain(&e.log_std).map(|v| v.to_bits()))
                .collect()
        };
        self.latent_dim == other.latent_dim && bits(self) == bits(other) && self.states == other.states
    }
}

/// Means `~ U(-0.1, 0.1)`, log-std `-1`, fresh Adam states.
pub fn init_posterior_table(n: usize, latent_dim: usize, seed: u64) -> Result<PosteriorTable> {
    if n == 0 || latent_dim == 0 {
        return Err(Error::InvalidArgument(format!(
            "posterior table needs n >= 1 and latent_dim >= 1 (got {n}, {latent_dim})"
        )));
    }
    let mut rng = RngStream::new(seed);
    let entries = (0..n)
        .map(|_| LatentGaussian {
            mean: (0..latent_dim)
                .map(|_| rng.uniform(-INIT_MEAN_RANGE, INIT_MEAN_RANGE))
                .collect(),
            log_std: vec![INIT_LOG_STD; latent_dim],
        })
        .collect();
    PosteriorTable::from_entries(entries)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model_lr: f64,
    pub latent_lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub mc_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model_lr: 1e-2,
            latent_lr: 1e-1,
            epochs: 300,
            batch_size: 32,
            seed: 0,
            mc_samples: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.model_lr >= 0.0
            && self.latent_lr >= 0.0
            && self.model_lr.is_finite()
            && self.latent_lr.is_finite()
            && self.epochs >= 1
            && self.batch_size >= 1
            && self.mc_samples >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid training config {self:?}")))
        }
    }
}

/// Records the reparameterized reconstruction loss for a batch.
///
/// `mean`/`log_std` are `(B, z)` nodes, `x` is `(B, d)`. Draws `mc_samples`
/// noise matrices from `rng` and averages the per-sample MSE.
pub fn elbo_recon_node(
    tape: &mut Tape,
    decoder: &RecordedMlp,
    mean: NodeId,
    log_std: NodeId,
    x: NodeId,
    rng: &mut RngStream,
    mc_samples: usize,
) -> Result<NodeId> {
    let shape = tape.value(mean).shape().to_vec();
    let n: usize = shape.iter().product();
    let mut total: Option<NodeId> = None;
    for _ in 0..mc_samples.max(1) {
        let eps = tape.constant(DenseTensor::new(shape.clone(), rng.normals(n))?)?;
        let z = reparam_sample_node(tape, mean, log_std, eps)?;
        let x_hat = decoder.forward(tape, z)?;
        let loss = recon_loss_node(tape, x_hat, x)?;
        total = Some(match total {
            None => loss,
            Some(t) => tape.add(t, loss)?,
        });
    }
    let total = total.expect("at least one sample");
    if mc_samples > 1 {
        tape.scale(total, 1.0 / mc_samples as f64)
    } else {
        Ok(total)
    }
}

/// Value of the reconstruction estimate for one datapoint.
pub fn elbo_recon_estimate(
    decoder: &MlpParams,
    q: &LatentGaussian,
    x: &[f64],
    rng: &mut RngStream,
    mc_samples: usize,
) -> Result<f64> {
    if x.len() != decoder.output_dim() || q.dim() != decoder.input_dim() {
        return Err(Error::ShapeMismatch {
            op: "elbo_recon_estimate",
            lhs: vec![q.dim(), x.len()],
            rhs: vec![decoder.input_dim(), decoder.output_dim()],
        });
    }
    let mut tape = Tape::new();
    let rec = decoder.record(&mut tape, false)?;
    let z = q.dim();
    let m = tape.constant(DenseTensor::matrix(1, z, q.mean.clone())?)?;
    let s = tape.constant(DenseTensor::matrix(1, z, q.log_std.clone())?)?;
    let xn = tape.constant(DenseTensor::matrix(1, x.len(), x.to_vec())?)?;
    let loss = elbo_recon_node(&mut tape, &rec, m, s, xn, rng, mc_samples)?;
    Ok(tape.value(loss).data()[0])
}

#[derive(Clone, Debug)]
pub struct SviOutcome {
    pub decoder: MlpParams,
    pub table: PosteriorTable,
    /// Mean batch loss per epoch.
    pub trace: Vec<f64>,
}

pub fn train_early_decoder(data: &DenseTensor, spec: &ArchSpec, cfg: &TrainConfig) -> Result<SviOutcome> {
    if data.rank() != 2 || data.rows() == 0 || data.cols() != spec.data_dim {
        return Err(Error::ShapeMismatch {
            op: "train_early_decoder",
            lhs: data.shape().to_vec(),
            rhs: vec![spec.data_dim],
        });
    }
    let decoder = build_decoder(spec, derive_seed(cfg.seed, DECODER_SEED_TAG))?;
    let table = init_posterior_table(data.rows(), spec.latent_dim, derive_seed(cfg.seed, POSTERIOR_SEED_TAG))?;
    train_early_decoder_from(data, decoder, table, cfg)
}

/// Same as [`train_early_decoder`] but starting from the given decoder and table.
pub fn train_early_decoder_from(
    data: &DenseTensor,
    mut decoder: MlpParams,
    mut table: PosteriorTable,
    cfg: &TrainConfig,
) -> Result<SviOutcome> {
    cfg.validate()?;
    let n = data.rows();
    if n == 0 || table.len() != n {
        return Err(Error::InvalidArgument(format!(
            "dataset has {n} rows but posterior table has {} entries",
            table.len()
        )));
    }
    if data.cols() != decoder.output_dim() || table.latent_dim() != decoder.input_dim() {
        return Err(Error::ShapeMismatch {
            op: "train_early_decoder",
            lhs: vec![table.latent_dim(), data.cols()],
            rhs: vec![decoder.input_dim(), decoder.output_dim()],
        });
    }

    let shuffle_seed = derive_seed(cfg.seed, SHUFFLE_SEED_TAG);
    let mut noise = RngStream::new(derive_seed(cfg.seed, NOISE_SEED_TAG));
    let mut opt = Adam::new(decoder.tensors(), cfg.model_lr);
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 0..cfg.epochs {
        let mut shuffler = RngStream::with_stream(shuffle_seed, epoch as u64);
        order.sort_unstable();
        shuffler.shuffle(&mut order);

        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for (batch, ids) in order.chunks(cfg.batch_size).enumerate() {
            let diverged = |e: Error| match e {
                Error::NonFinite { .. } | Error::NonFiniteGradient { .. } => Error::Diverged { epoch, batch },
                other => other,
            };
            let mut tape = Tape::new();
            let rec = decoder.record(&mut tape, true)?;
            let x = tape.constant(data.gather_rows(ids))?;
            let (m, s) = table.gather(ids);
            let mean = tape.leaf(m).map_err(diverged)?;
            let log_std = tape.leaf(s).map_err(diverged)?;
            let loss = elbo_recon_node(&mut tape, &rec, mean, log_std, x, &mut noise, cfg.mc_samples)
                .map_err(diverged)?;
            tape.backward(loss)?;

            let grads = rec.grads(&tape);
            opt.step(decoder.tensors_mut(), &grads).map_err(diverged)?;

            let (gm, gs) = (tape.grad(mean), tape.grad(log_std));
            let point_grads: Vec<LatentGaussian> = (0..ids.len())
                .map(|r| LatentGaussian {
                    mean: gm.row(r).to_vec(),
                    log_std: gs.row(r).to_vec(),
                })
                .collect();
            sparse_posterior_step(&mut table, ids, &point_grads, cfg.latent_lr).map_err(diverged)?;

            epoch_loss += tape.value(loss).data()[0];
            batches += 1;
        }
        trace.push(epoch_loss / batches as f64);
    }

    Ok(SviOutcome { decoder, table, trace })
}
