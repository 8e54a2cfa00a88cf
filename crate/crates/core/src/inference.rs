//! Test-time posterior inference with a frozen decoder.
//!
//! Refinement runs Adam on `(mean, log_std)` of private posterior copies. The
//! batched path stacks points as rows; every op used is row-independent and
//! each point draws noise from its own stream, so a point's trace is
//! bit-identical whether it is refined alone or inside any batch.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::MlpParams;
use crate::optim::AdamState;
use crate::par::{self, Execution};
use crate::probdist::{reparam_sample_node, LatentGaussian, RngStream};
use crate::svi::{INIT_LOG_STD, INIT_MEAN_RANGE};
use crate::tensor::{DenseTensor, Tape};
use crate::vae::encode_batch;

/// Tag for the stream that draws random initializations.
const RANDOM_INIT_TAG: u64 = 0x1a17;

/// Points per batched refinement chunk.
pub const REFINE_CHUNK: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitKind {
    Encoder,
    Random,
    Provided,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinementTrace {
    /// Loss before each update; entry `k` is the loss after the last update.
    pub losses: Vec<f64>,
    pub lr_used: f64,
    pub init_kind: InitKind,
    /// Set when a non-finite value cut the trace short.
    pub diverged: bool,
}

impl RefinementTrace {
    pub fn final_loss(&self) -> f64 {
        *self.losses.last().unwrap_or(&f64::INFINITY)
    }

    pub fn running_min(&self) -> Vec<f64> {
        self.losses
            .iter()
            .scan(f64::INFINITY, |m, &v| {
                *m = m.min(v);
                Some(*m)
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCriterion {
    pub target_loss: f64,
    pub rel_tol: f64,
}

impl ConvergenceCriterion {
    pub const DEFAULT_REL_TOL: f64 = 0.01;

    pub fn new(target_loss: f64, rel_tol: f64) -> Result<Self> {
        if !(rel_tol > 0.0) {
            return Err(Error::InvalidArgument(format!("rel_tol must be positive, got {rel_tol}")));
        }
        Ok(Self { target_loss, rel_tol })
    }

    pub fn threshold(&self) -> f64 {
        self.target_loss * (1.0 + self.rel_tol)
    }
}

/// First step whose loss is within `rel_tol` of the target, if any.
pub fn steps_to_converge(trace: &RefinementTrace, crit: &ConvergenceCriterion) -> Option<usize> {
    let threshold = crit.threshold();
    trace.losses.iter().position(|&l| l <= threshold)
}

/// The training-style random start: means `U(-0.1, 0.1)`, log-std `-1`.
pub fn random_init(latent_dim: usize, rng: &RngStream) -> LatentGaussian {
    let mut r = rng.split(RANDOM_INIT_TAG);
    LatentGaussian {
        mean: (0..latent_dim).map(|_| r.uniform(-INIT_MEAN_RANGE, INIT_MEAN_RANGE)).collect(),
        log_std: vec![INIT_LOG_STD; latent_dim],
    }
}

/// Noise stream for point `index` of a run seeded with `seed`.
pub fn point_stream(seed: u64, index: usize) -> RngStream {
    RngStream::with_stream(seed, index as u64)
}

fn check_dims(decoder: &MlpParams, q0s: &[LatentGaussian], xs: &DenseTensor) -> Result<()> {
    if xs.rank() != 2 || xs.rows() != q0s.len() || xs.cols() != decoder.output_dim() {
        return Err(Error::ShapeMismatch {
            op: "refine",
            lhs: xs.shape().to_vec(),
            rhs: vec![q0s.len(), decoder.output_dim()],
        });
    }
    if let Some(q) = q0s.iter().find(|q| q.dim() != decoder.input_dim()) {
        return Err(Error::ShapeMismatch {
            op: "refine",
            lhs: vec![q.dim()],
            rhs: vec![decoder.input_dim()],
        });
    }
    Ok(())
}

/// Refines all rows together; fails as a whole on any non-finite value.
fn refine_rows(
    decoder: &MlpParams,
    q0s: &[LatentGaussian],
    xs: &DenseTensor,
    k: usize,
    lr: f64,
    rngs: &mut [RngStream],
) -> Result<(Vec<LatentGaussian>, Vec<Vec<f64>>)> {
    let b = q0s.len();
    let z = decoder.input_dim();
    let d = decoder.output_dim() as f64;
    let mut qs = q0s.to_vec();
    let mut states = vec![AdamState::new(2 * z, lr); b];
    let mut losses = vec![Vec::with_capacity(k + 1); b];

    for step in 0..=k {
        let mut tape = Tape::new();
        let dec = decoder.record(&mut tape, false)?;
        let x = tape.constant(xs.clone())?;
        let mean = tape.leaf(DenseTensor::matrix(b, z, qs.iter().flat_map(|q| q.mean.iter().copied()).collect())?)?;
        let log_std = tape.leaf(DenseTensor::matrix(
            b,
            z,
            qs.iter().flat_map(|q| q.log_std.iter().copied()).collect(),
        )?)?;
        let eps_data: Vec<f64> = rngs.iter_mut().flat_map(|r| r.normals(z)).collect();
        let eps = tape.constant(DenseTensor::matrix(b, z, eps_data)?)?;
        let zz = reparam_sample_node(&mut tape, mean, log_std, eps)?;
        let x_hat = dec.forward(&mut tape, zz)?;
        let diff = tape.sub(x_hat, x)?;
        let sq = tape.square(diff)?;
        let total = tape.sum(sq)?;
        // Sum of per-point MSEs: each row's gradient equals its own loss gradient.
        let loss = tape.scale(total, 1.0 / d)?;

        let sqv = tape.value(sq);
        for (r, trace) in losses.iter_mut().enumerate() {
            let row_sum: f64 = sqv.row(r).iter().sum();
            trace.push(row_sum * (1.0 / d));
        }
        if step == k {
            break;
        }
        tape.backward(loss)?;
        let (gm, gs) = (tape.grad(mean), tape.grad(log_std));
        for (r, (q, state)) in qs.iter_mut().zip(&mut states).enumerate() {
            let mut params = q.concat();
            let mut grad = gm.row(r).to_vec();
            grad.extend_from_slice(gs.row(r));
            state.update(&mut params, &grad, "posterior")?;
            if params.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { op: "adam_step" });
            }
            q.mean.copy_from_slice(&params[..z]);
            q.log_std.copy_from_slice(&params[z..]);
        }
    }
    Ok((qs, losses))
}

/// Refines one point, truncating the trace at the first non-finite value.
fn refine_single_guarded(
    decoder: &MlpParams,
    q0: &LatentGaussian,
    x: &[f64],
    k: usize,
    lr: f64,
    rng: &mut RngStream,
) -> Result<(LatentGaussian, Vec<f64>, bool)> {
    let xs = DenseTensor::matrix(1, x.len(), x.to_vec())?;
    let start = rng.clone();
    match refine_rows(decoder, std::slice::from_ref(q0), &xs, k, lr, std::slice::from_mut(rng)) {
        Ok((mut qs, mut losses)) => Ok((qs.pop().expect("one"), losses.pop().expect("one"), false)),
        Err(Error::NonFinite { .. } | Error::NonFiniteGradient { .. }) => {
            // Replay step by step to find the last finite state.
            let mut q = q0.clone();
            let mut losses = Vec::new();
            let mut state = AdamState::new(2 * q0.dim(), lr);
            let mut r = start;
            for step in 0..=k {
                let mut probe = r.clone();
                let one = refine_rows(decoder, std::slice::from_ref(&q), &xs, 0, lr, std::slice::from_mut(&mut probe));
                let Ok((_, l)) = one else { break };
                let loss = l[0][0];
                if step == k {
                    losses.push(loss);
                    break;
                }
                match single_update(decoder, &q, &xs, &mut state, &mut r) {
                    Ok(next) => {
                        losses.push(loss);
                        q = next;
                    }
                    Err(_) => {
                        losses.push(loss);
                        break;
                    }
                }
            }
            *rng = r;
            Ok((q, losses, true))
        }
        Err(e) => Err(e),
    }
}

fn single_update(
    decoder: &MlpParams,
    q: &LatentGaussian,
    xs: &DenseTensor,
    state: &mut AdamState,
    rng: &mut RngStream,
) -> Result<LatentGaussian> {
    let z = q.dim();
    let d = decoder.output_dim() as f64;
    let mut tape = Tape::new();
    let dec = decoder.record(&mut tape, false)?;
    let x = tape.constant(xs.clone())?;
    let mean = tape.leaf(DenseTensor::matrix(1, z, q.mean.clone())?)?;
    let log_std = tape.leaf(DenseTensor::matrix(1, z, q.log_std.clone())?)?;
    let eps = tape.constant(DenseTensor::matrix(1, z, rng.normals(z))?)?;
    let zz = reparam_sample_node(&mut tape, mean, log_std, eps)?;
    let x_hat = dec.forward(&mut tape, zz)?;
    let diff = tape.sub(x_hat, x)?;
    let sq = tape.square(diff)?;
    let total = tape.sum(sq)?;
    let loss = tape.scale(total, 1.0 / d)?;
    tape.backward(loss)?;
    let mut params = q.concat();
    let mut grad = tape.grad(mean).into_data();
    grad.extend(tape.grad(log_std).into_data());
    state.update(&mut params, &grad, "posterior")?;
    if params.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { op: "adam_step" });
    }
    LatentGaussian::from_concat(&params)
}

/// Refines every row of `xs` from the matching `q0s` for `k` Adam steps.
///
/// `rngs[i]` supplies point `i`'s noise. Points are processed in chunks of
/// [`REFINE_CHUNK`], in parallel when `exec` allows.
pub fn refine_batch(
    decoder: &MlpParams,
    q0s: &[LatentGaussian],
    xs: &DenseTensor,
    k: usize,
    lr: f64,
    rngs: &[RngStream],
    init_kind: InitKind,
    exec: Execution,
) -> Result<Vec<(LatentGaussian, RefinementTrace)>> {
    check_dims(decoder, q0s, xs)?;
    if rngs.len() != q0s.len() {
        return Err(Error::InvalidArgument(format!(
            "{} noise streams for {} points",
            rngs.len(),
            q0s.len()
        )));
    }
    let starts: Vec<usize> = (0..q0s.len()).step_by(REFINE_CHUNK).collect();
    let chunks = par::map(exec, &starts, |&start| {
        let end = (start + REFINE_CHUNK).min(q0s.len());
        let ids: Vec<usize> = (start..end).collect();
        let rows = xs.gather_rows(&ids);
        let mut chunk_rngs = rngs[start..end].to_vec();
        match refine_rows(decoder, &q0s[start..end], &rows, k, lr, &mut chunk_rngs) {
            Ok((qs, losses)) => Ok(qs
                .into_iter()
                .zip(losses)
                .map(|(q, l)| (q, l, false))
                .collect::<Vec<_>>()),
            Err(Error::NonFinite { .. } | Error::NonFiniteGradient { .. }) => (start..end)
                .map(|i| {
                    let mut r = rngs[i].clone();
                    refine_single_guarded(decoder, &q0s[i], xs.row(i), k, lr, &mut r)
                })
                .collect::<Result<Vec<_>>>(),
            Err(e) => Err(e),
        }
    });
    let mut out = Vec::with_capacity(q0s.len());
    for chunk in chunks {
        for (q, losses, diverged) in chunk? {
            out.push((
                q,
                RefinementTrace {
                    losses,
                    lr_used: lr,
                    init_kind,
                    diverged,
                },
            ));
        }
    }
    Ok(out)
}

/// `k` Adam steps on a private copy of `q0` against a frozen decoder.
pub fn refine_posterior(
    decoder: &MlpParams,
    q0: &LatentGaussian,
    x: &[f64],
    k: usize,
    lr: f64,
    rng: &mut RngStream,
) -> Result<(LatentGaussian, RefinementTrace)> {
    refine_one(decoder, q0, x, k, lr, rng, InitKind::Provided)
}

fn refine_one(
    decoder: &MlpParams,
    q0: &LatentGaussian,
    x: &[f64],
    k: usize,
    lr: f64,
    rng: &mut RngStream,
    init_kind: InitKind,
) -> Result<(LatentGaussian, RefinementTrace)> {
    let xs = DenseTensor::matrix(1, x.len(), x.to_vec())?;
    check_dims(decoder, std::slice::from_ref(q0), &xs)?;
    let (q, losses, diverged) = refine_single_guarded(decoder, q0, x, k, lr, rng)?;
    Ok((
        q,
        RefinementTrace {
            losses,
            lr_used: lr,
            init_kind,
            diverged,
        },
    ))
}

/// Encoder initialization followed by `k` refinement steps at `lr`.
pub fn pe_svi_infer(
    decoder: &MlpParams,
    encoder: &MlpParams,
    x: &[f64],
    k: usize,
    lr: f64,
    rng: &mut RngStream,
) -> Result<(LatentGaussian, RefinementTrace)> {
    let q0 = crate::pseudo_encoder::predict_posterior(encoder, x)?;
    refine_one(decoder, &q0, x, k, lr, rng, InitKind::Encoder)
}

/// Random initialization followed by `max_steps` refinement steps.
pub fn svi_infer_random(
    decoder: &MlpParams,
    x: &[f64],
    max_steps: usize,
    lr: f64,
    rng: &mut RngStream,
) -> Result<(LatentGaussian, RefinementTrace)> {
    if max_steps == 0 {
        return Err(Error::InvalidArgument("max_steps must be at least 1".into()));
    }
    let q0 = random_init(decoder.input_dim(), rng);
    refine_one(decoder, &q0, x, max_steps, lr, rng, InitKind::Random)
}

/// Batched [`pe_svi_infer`]; point `i` uses `point_stream(seed, ids[i])`.
pub fn pe_svi_batch(
    decoder: &MlpParams,
    encoder: &MlpParams,
    xs: &DenseTensor,
    ids: &[usize],
    k: usize,
    lr: f64,
    seed: u64,
    exec: Execution,
) -> Result<Vec<(LatentGaussian, RefinementTrace)>> {
    let q0s = encode_batch(encoder, xs)?;
    let rngs: Vec<RngStream> = ids.iter().map(|&i| point_stream(seed, i)).collect();
    refine_batch(decoder, &q0s, xs, k, lr, &rngs, InitKind::Encoder, exec)
}

/// Batched [`svi_infer_random`]; point `i` uses `point_stream(seed, ids[i])`.
pub fn svi_random_batch(
    decoder: &MlpParams,
    xs: &DenseTensor,
    ids: &[usize],
    max_steps: usize,
    lr: f64,
    seed: u64,
    exec: Execution,
) -> Result<Vec<(LatentGaussian, RefinementTrace)>> {
    let rngs: Vec<RngStream> = ids.iter().map(|&i| point_stream(seed, i)).collect();
    let q0s: Vec<LatentGaussian> = rngs.iter().map(|r| random_init(decoder.input_dim(), r)).collect();
    refine_batch(decoder, &q0s, xs, max_steps, lr, &rngs, InitKind::Random, exec)
}

/// Single-sample loss of each given posterior (a zero-step refinement).
pub fn evaluate_posteriors(
    decoder: &MlpParams,
    qs: &[LatentGaussian],
    xs: &DenseTensor,
    ids: &[usize],
    seed: u64,
    exec: Execution,
) -> Result<Vec<f64>> {
    let rngs: Vec<RngStream> = ids.iter().map(|&i| point_stream(seed, i)).collect();
    Ok(refine_batch(decoder, qs, xs, 0, 0.0, &rngs, InitKind::Provided, exec)?
        .into_iter()
        .map(|(_, t)| t.losses[0])
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PaceSelection {
    pub lr: f64,
    /// `(lr, mean final loss)` for every candidate, in grid order.
    pub scores: Vec<(f64, f64)>,
}

/// Picks the refinement rate with the lowest mean loss after `k` steps from
/// the encoder initialization. Ties go to the smaller rate.
pub fn select_pace_lr(
    decoder: &MlpParams,
    encoder: &MlpParams,
    xs: &DenseTensor,
    ids: &[usize],
    grid: &[f64],
    k: usize,
    seed: u64,
    exec: Execution,
) -> Result<PaceSelection> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty pace grid".into()));
    }
    let mut scores = Vec::with_capacity(grid.len());
    for &lr in grid {
        let runs = pe_svi_batch(decoder, encoder, xs, ids, k, lr, seed, exec)?;
        let score = mean_final_loss(runs.iter().map(|(_, t)| t));
        scores.push((lr, score));
    }
    let (lr, _) = scores
        .iter()
        .copied()
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.total_cmp(&b.0)))
        .expect("non-empty");
    Ok(PaceSelection { lr, scores })
}

/// Mean final loss; a diverged trace counts as infinite.
pub fn mean_final_loss<'a>(traces: impl IntoIterator<Item = &'a RefinementTrace>) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for t in traces {
        sum += if t.diverged { f64::INFINITY } else { t.final_loss() };
        n += 1;
    }
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Per-step mean of equally long traces (shorter traces are padded with
/// their last value).
pub fn mean_trace<'a>(traces: impl IntoIterator<Item = &'a RefinementTrace>) -> Vec<f64> {
    let traces: Vec<&RefinementTrace> = traces.into_iter().collect();
    let len = traces.iter().map(|t| t.losses.len()).max().unwrap_or(0);
    (0..len)
        .map(|s| {
            let total: f64 = traces
                .iter()
                .map(|t| *t.losses.get(s).or(t.losses.last()).unwrap_or(&f64::NAN))
                .sum();
            total / traces.len() as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{build_decoder, build_encoder, ArchId, ArchSpec, Layer};

    fn identity_decoder(n: usize) -> MlpParams {
        let mut w = DenseTensor::zeros(&[n, n]);
        for i in 0..n {
            w.data_mut()[i * n + i] = 1.0;
        }
        MlpParams::from_layers(vec![Layer {
            weight: w,
            bias: DenseTensor::zeros(&[n]),
        }])
        .unwrap()
    }

    fn trace(losses: &[f64]) -> RefinementTrace {
        RefinementTrace {
            losses: losses.to_vec(),
            lr_used: 0.1,
            init_kind: InitKind::Random,
            diverged: false,
        }
    }

    #[test]
    fn steps_to_converge_examples() {
        let c = ConvergenceCriterion::new(1.0, 0.01).unwrap();
        assert_eq!(steps_to_converge(&trace(&[1.0, 1.0, 1.0]), &c), Some(0));
        assert_eq!(steps_to_converge(&trace(&[10.0, 5.0, 1.0, 1.0]), &c), Some(2));
        assert_eq!(steps_to_converge(&trace(&[10.0, 5.0]), &c), None);
        assert!(ConvergenceCriterion::new(1.0, 0.0).is_err());
    }

    #[test]
    fn zero_steps_is_identity() {
        let spec = ArchSpec::new(ArchId::A2, 3, 5).unwrap();
        let dec = build_decoder(&spec, 1).unwrap();
        let q0 = LatentGaussian::new(vec![0.1, 0.2, 0.3], vec![-1.0, -2.0, 0.5]).unwrap();
        let x = [0.5, 0.1, -0.3, 0.9, 1.1];
        let mut rng = RngStream::new(4);
        let (q, t) = refine_posterior(&dec, &q0, &x, 0, 0.1, &mut rng).unwrap();
        assert_eq!(q, q0);
        assert_eq!(t.losses.len(), 1);
        let expect = crate::svi::elbo_recon_estimate(&dec, &q0, &x, &mut RngStream::new(4), 1).unwrap();
        assert_eq!(t.losses[0], expect);
    }

    #[test]
    fn trace_length_and_decoder_untouched() {
        let spec = ArchSpec::new(ArchId::A2, 2, 4).unwrap();
        let dec = build_decoder(&spec, 1).unwrap();
        let fp = dec.fingerprint();
        let mut rng = RngStream::new(2);
        let (_, t) = svi_infer_random(&dec, &[0.3, -0.2, 0.1, 0.0], 7, 0.05, &mut rng).unwrap();
        assert_eq!(t.losses.len(), 8);
        assert_eq!(t.init_kind, InitKind::Random);
        assert_eq!(dec.fingerprint(), fp);
        let rm = t.running_min();
        assert!(rm.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn identity_decoder_origin_target() {
        let dec = identity_decoder(3);
        let mut rng = RngStream::new(8);
        let (q, _) = svi_infer_random(&dec, &[0.0; 3], 3000, 0.01, &mut rng).unwrap();
        // Expected loss is |mean|^2 + |std|^2, so both shrink toward zero.
        assert!(q.mean.iter().all(|m| m.abs() < 5e-2), "{:?}", q.mean);
        assert!(q.log_std.iter().all(|s| *s < -2.0), "{:?}", q.log_std);
    }

    #[test]
    fn deterministic_under_seed() {
        let spec = ArchSpec::new(ArchId::A2, 2, 4).unwrap();
        let dec = build_decoder(&spec, 1).unwrap();
        let x = [0.3, -0.2, 0.1, 0.0];
        let a = svi_infer_random(&dec, &x, 20, 0.05, &mut RngStream::new(5)).unwrap();
        let b = svi_infer_random(&dec, &x, 20, 0.05, &mut RngStream::new(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn batch_matches_single_bitwise() {
        let spec = ArchSpec::new(ArchId::A3, 3, 6).unwrap();
        let dec = build_decoder(&spec, 3).unwrap();
        let enc = build_encoder(&spec, 4).unwrap();
        let mut rng = RngStream::new(1);
        let n = 70; // spans two chunks
        let xs = DenseTensor::matrix(n, 6, rng.normals(n * 6)).unwrap();
        let ids: Vec<usize> = (100..100 + n).collect();
        for exec in [Execution::Sequential, Execution::Parallel] {
            let batch = pe_svi_batch(&dec, &enc, &xs, &ids, 5, 0.1, 9, exec).unwrap();
            for (i, (q, t)) in batch.iter().enumerate() {
                let mut r = point_stream(9, ids[i]);
                let (q1, t1) = pe_svi_infer(&dec, &enc, xs.row(i), 5, 0.1, &mut r).unwrap();
                assert_eq!(q, &q1);
                assert_eq!(
                    t.losses.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                    t1.losses.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
                );
            }
        }
    }

    #[test]
    fn divergence_truncates_trace() {
        // Squaring a 1e200-scale reconstruction overflows.
        let mut dec = identity_decoder(1);
        dec.layers[0].weight.data_mut()[0] = 1e200;
        let q0 = LatentGaussian::new(vec![0.0], vec![0.0]).unwrap();
        let mut rng = RngStream::new(1);
        let (_, t) = refine_posterior(&dec, &q0, &[1.0], 10, 1.0, &mut rng).unwrap();
        assert!(t.diverged);
        assert!(t.losses.len() < 11);
    }

    #[test]
    fn dims_checked() {
        let dec = identity_decoder(2);
        let mut rng = RngStream::new(1);
        assert!(refine_posterior(&dec, &LatentGaussian::standard(3), &[0.0, 0.0], 1, 0.1, &mut rng).is_err());
        assert!(refine_posterior(&dec, &LatentGaussian::standard(2), &[0.0], 1, 0.1, &mut rng).is_err());
        assert!(svi_infer_random(&dec, &[0.0, 0.0], 0, 0.1, &mut rng).is_err());
    }

    #[test]
    fn pace_selection_tie_breaks_to_smaller_rate() {
        let spec = ArchSpec::new(ArchId::A1, 2, 3).unwrap();
        let dec = build_decoder(&spec, 1).unwrap();
        let enc = build_encoder(&spec, 2).unwrap();
        let xs = DenseTensor::matrix(2, 3, vec![0.1, 0.2, 0.3, -0.1, 0.0, 0.4]).unwrap();
        // k = 0: every rate scores the same.
        let sel = select_pace_lr(&dec, &enc, &xs, &[0, 1], &[0.5, 0.1, 1.0], 0, 3, Execution::Sequential).unwrap();
        assert_eq!(sel.lr, 0.1);
        assert_eq!(sel.scores.len(), 3);
    }
}
