//! Deferred encoder training: regress `x_i ↦ [mean*_i ‖ log_std*_i]` onto the
//! posteriors learned during early decoder training.

use crate::error::{Error, Result};
use crate::nn::{build_encoder, ArchSpec, MlpParams};
use crate::optim::Adam;
use crate::probdist::{derive_seed, recon_loss_node, LatentGaussian, RngStream};
use crate::svi::{PosteriorTable, TrainConfig, ENCODER_SEED_TAG, SHUFFLE_SEED_TAG};
use crate::tensor::{DenseTensor, Tape};
use crate::vae::encode_batch;

/// Frozen regression targets, one `[mean ‖ log_std]` row per datapoint.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderTargets {
    rows: DenseTensor,
}

impl EncoderTargets {
    pub fn from_table(table: &PosteriorTable) -> Self {
        Self::from_posteriors(table.entries()).expect("table entries share a dimension")
    }

    pub fn from_posteriors(qs: &[LatentGaussian]) -> Result<Self> {
        let z = qs.first().map(LatentGaussian::dim).unwrap_or(0);
        let data: Vec<f64> = qs.iter().flat_map(LatentGaussian::concat).collect();
        Ok(Self {
            rows: DenseTensor::matrix(qs.len(), 2 * z, data)?,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn latent_dim(&self) -> usize {
        self.rows.cols() / 2
    }

    pub fn as_matrix(&self) -> &DenseTensor {
        &self.rows
    }
}

#[derive(Clone, Debug)]
pub struct PseudoEncoderOutcome {
    pub encoder: MlpParams,
    /// Mean batch MSE per epoch.
    pub trace: Vec<f64>,
}

/// Trains a fresh encoder with learning rate `cfg.model_lr`.
pub fn train_pseudo_encoder(
    data: &DenseTensor,
    targets: &EncoderTargets,
    spec: &ArchSpec,
    cfg: &TrainConfig,
) -> Result<PseudoEncoderOutcome> {
    let encoder = build_encoder(spec, derive_seed(cfg.seed, ENCODER_SEED_TAG))?;
    train_pseudo_encoder_from(data, targets, encoder, cfg)
}

pub fn train_pseudo_encoder_from(
    data: &DenseTensor,
    targets: &EncoderTargets,
    mut encoder: MlpParams,
    cfg: &TrainConfig,
) -> Result<PseudoEncoderOutcome> {
    cfg.validate()?;
    let n = data.rows();
    if targets.len() != n || n == 0 {
        return Err(Error::InvalidArgument(format!(
            "{} targets for {n} datapoints",
            targets.len()
        )));
    }
    if data.cols() != encoder.input_dim() || targets.as_matrix().cols() != encoder.output_dim() {
        return Err(Error::ShapeMismatch {
            op: "train_pseudo_encoder",
            lhs: vec![data.cols(), targets.as_matrix().cols()],
            rhs: vec![encoder.input_dim(), encoder.output_dim()],
        });
    }

    let shuffle_seed = derive_seed(cfg.seed, SHUFFLE_SEED_TAG);
    let mut opt = Adam::new(encoder.tensors(), cfg.model_lr);
    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);

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
            let rec = encoder.record(&mut tape, true)?;
            let x = tape.constant(data.gather_rows(ids))?;
            let y = tape.constant(targets.as_matrix().gather_rows(ids))?;
            let head = rec.forward(&mut tape, x).map_err(diverged)?;
            let loss = recon_loss_node(&mut tape, head, y).map_err(diverged)?;
            tape.backward(loss)?;
            opt.step(encoder.tensors_mut(), &rec.grads(&tape)).map_err(diverged)?;
            epoch_loss += tape.value(loss).data()[0];
            batches += 1;
        }
        trace.push(epoch_loss / batches as f64);
    }
    Ok(PseudoEncoderOutcome { encoder, trace })
}

/// Encoder estimate of the posterior for one datapoint.
pub fn predict_posterior(encoder: &MlpParams, x: &[f64]) -> Result<LatentGaussian> {
    crate::vae::vae_encode(encoder, x)
}

pub fn predict_batch(encoder: &MlpParams, xs: &DenseTensor) -> Result<Vec<LatentGaussian>> {
    encode_batch(encoder, xs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ArchId;

    #[test]
    fn zero_targets_zero_head_start_at_zero_loss() {
        let spec = ArchSpec::new(ArchId::A2, 2, 3).unwrap();
        let mut enc = build_encoder(&spec, 0).unwrap();
        let last = enc.layers.last_mut().unwrap();
        last.weight.data_mut().fill(0.0);
        let data = DenseTensor::matrix(4, 3, (0..12).map(|i| i as f64).collect()).unwrap();
        let targets = EncoderTargets::from_posteriors(&vec![LatentGaussian::standard(2); 4]).unwrap();
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let out = train_pseudo_encoder_from(&data, &targets, enc, &cfg).unwrap();
        assert_eq!(out.trace[0], 0.0);
    }

    #[test]
    fn misaligned_targets_rejected() {
        let spec = ArchSpec::new(ArchId::A1, 2, 3).unwrap();
        let data = DenseTensor::zeros(&[4, 3]);
        let targets = EncoderTargets::from_posteriors(&vec![LatentGaussian::standard(2); 3]).unwrap();
        assert!(train_pseudo_encoder(&data, &targets, &spec, &TrainConfig::default()).is_err());
    }

    #[test]
    fn prediction_is_pure() {
        let spec = ArchSpec::new(ArchId::A2, 3, 5).unwrap();
        let enc = build_encoder(&spec, 3).unwrap();
        let x = [0.1, -0.4, 2.0, 0.0, 1.0];
        let a = predict_posterior(&enc, &x).unwrap();
        let b = predict_posterior(&enc, &x).unwrap();
        assert_eq!(a, b);
        let mut zero = enc.clone();
        for t in zero.tensors_mut() {
            t.data_mut().fill(0.0);
        }
        assert_eq!(predict_posterior(&zero, &x).unwrap(), LatentGaussian::standard(3));
        assert!(predict_posterior(&enc, &x[..4]).is_err());
    }
}
