//! Jointly trained encoder/decoder baseline on the reconstruction term.

use crate::error::{Error, Result};
use crate::nn::{build_decoder, build_encoder, split_head, ArchSpec, MlpParams, RecordedMlp};
use crate::optim::Adam;
use crate::probdist::{derive_seed, LatentGaussian, RngStream};
use crate::svi::{elbo_recon_node, TrainConfig, DECODER_SEED_TAG, ENCODER_SEED_TAG, NOISE_SEED_TAG, SHUFFLE_SEED_TAG};
use crate::tensor::{DenseTensor, NodeId, Tape};

#[derive(Clone, Debug)]
pub struct VaeOutcome {
    pub encoder: MlpParams,
    pub decoder: MlpParams,
    pub trace: Vec<f64>,
}

/// Records encoder → split head → reparameterize → decoder → MSE for a batch.
pub fn vae_loss_node(
    tape: &mut Tape,
    encoder: &RecordedMlp,
    decoder: &RecordedMlp,
    x: NodeId,
    latent_dim: usize,
    rng: &mut RngStream,
    mc_samples: usize,
) -> Result<NodeId> {
    let head = encoder.forward(tape, x)?;
    let (mean, log_std) = split_head(tape, head, latent_dim)?;
    elbo_recon_node(tape, decoder, mean, log_std, x, rng, mc_samples)
}

/// Trains a VAE with one learning rate (`cfg.model_lr`) over both networks.
pub fn train_vae(data: &DenseTensor, spec: &ArchSpec, cfg: &TrainConfig) -> Result<VaeOutcome> {
    let encoder = build_encoder(spec, derive_seed(cfg.seed, ENCODER_SEED_TAG))?;
    let decoder = build_decoder(spec, derive_seed(cfg.seed, DECODER_SEED_TAG))?;
    train_vae_from(data, encoder, decoder, cfg)
}

pub fn train_vae_from(
    data: &DenseTensor,
    mut encoder: MlpParams,
    mut decoder: MlpParams,
    cfg: &TrainConfig,
) -> Result<VaeOutcome> {
    cfg.validate()?;
    let n = data.rows();
    if n == 0 || data.rank() != 2 || data.cols() != encoder.input_dim() || data.cols() != decoder.output_dim() {
        return Err(Error::ShapeMismatch {
            op: "train_vae",
            lhs: data.shape().to_vec(),
            rhs: vec![encoder.input_dim(), decoder.output_dim()],
        });
    }
    if encoder.output_dim() != 2 * decoder.input_dim() {
        return Err(Error::ShapeMismatch {
            op: "train_vae",
            lhs: vec![encoder.output_dim()],
            rhs: vec![2 * decoder.input_dim()],
        });
    }
    let latent_dim = decoder.input_dim();
    let shuffle_seed = derive_seed(cfg.seed, SHUFFLE_SEED_TAG);
    let mut noise = RngStream::new(derive_seed(cfg.seed, NOISE_SEED_TAG));
    let mut opt = Adam::new(encoder.tensors().into_iter().chain(decoder.tensors()), cfg.model_lr);
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
            let enc = encoder.record(&mut tape, true)?;
            let dec = decoder.record(&mut tape, true)?;
            let x = tape.constant(data.gather_rows(ids))?;
            let loss = vae_loss_node(&mut tape, &enc, &dec, x, latent_dim, &mut noise, cfg.mc_samples)
                .map_err(diverged)?;
            tape.backward(loss)?;
            let mut grads = enc.grads(&tape);
            grads.extend(dec.grads(&tape));
            let params: Vec<&mut DenseTensor> = encoder
                .tensors_mut()
                .into_iter()
                .chain(decoder.tensors_mut())
                .collect();
            opt.step(params, &grads).map_err(diverged)?;
            epoch_loss += tape.value(loss).data()[0];
            batches += 1;
        }
        trace.push(epoch_loss / batches as f64);
    }
    Ok(VaeOutcome {
        encoder,
        decoder,
        trace,
    })
}

/// Encoder head for one datapoint, split into mean and log-std.
pub fn vae_encode(encoder: &MlpParams, x: &[f64]) -> Result<LatentGaussian> {
    Ok(encode_batch(encoder, &DenseTensor::matrix(1, x.len(), x.to_vec())?)?
        .pop()
        .expect("one row"))
}

/// Encoder heads for every row of `xs`.
pub fn encode_batch(encoder: &MlpParams, xs: &DenseTensor) -> Result<Vec<LatentGaussian>> {
    if xs.rank() != 2 || xs.cols() != encoder.input_dim() {
        return Err(Error::ShapeMismatch {
            op: "encode",
            lhs: xs.shape().to_vec(),
            rhs: vec![encoder.input_dim()],
        });
    }
    let head = encoder.eval(xs)?;
    (0..head.rows()).map(|r| LatentGaussian::from_concat(head.row(r))).collect()
}
