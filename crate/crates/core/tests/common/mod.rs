#![allow(dead_code)]

use pesvi::inference::refine_posterior;
use pesvi::nn::{ArchSpec, Layer, MlpParams, RecordedMlp};
use pesvi::probdist::{LatentGaussian, RngStream};
use pesvi::svi::elbo_recon_node;
use pesvi::tensor::{grad_check_many, DenseTensor, NodeId, Tape};
use pesvi::vae::vae_loss_node;

/// Step-decayed refinement rates: each phase restarts Adam at a tenth of the rate.
pub const DECADE_SCHEDULE: [(f64, usize); 4] = [(1e-1, 2000), (1e-2, 2000), (1e-3, 2000), (1e-4, 2000)];

/// Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for c in (0..n).rev() {
        let s: f64 = (c + 1..n).map(|k| a[c][k] * x[k]).sum();
        x[c] = (b[c] - s) / a[c][c];
    }
    x
}

/// `argmin_mu ||W mu + b - x||^2` for a single-layer decoder, via the normal equations.
pub fn least_squares(decoder: &MlpParams, x: &[f64]) -> Vec<f64> {
    assert_eq!(decoder.layers.len(), 1);
    let l = &decoder.layers[0];
    let (d, z) = (l.fan_out(), l.fan_in());
    let w = |r: usize, p: usize| l.weight.data()[r * z + p];
    let ata = (0..z)
        .map(|p| (0..z).map(|q| (0..d).map(|r| w(r, p) * w(r, q)).sum()).collect())
        .collect();
    let atb = (0..z)
        .map(|p| (0..d).map(|r| w(r, p) * (x[r] - l.bias.data()[r])).sum())
        .collect();
    solve(ata, atb)
}

pub fn worst_relative_error(got: &[f64], want: &[f64]) -> f64 {
    got.iter()
        .zip(want)
        .map(|(g, w)| (g - w).abs() / w.abs().max(1.0))
        .fold(0.0, f64::max)
}

/// Weights and biases drawn from `N(0, scale^2)`.
pub fn random_mlp(widths: &[usize], scale: f64, rng: &mut RngStream) -> MlpParams {
    let layers = widths
        .windows(2)
        .map(|w| Layer {
            weight: DenseTensor::matrix(w[1], w[0], rng.normals(w[0] * w[1]).iter().map(|v| v * scale).collect())
                .unwrap(),
            bias: DenseTensor::vector(rng.normals(w[1]).iter().map(|v| v * scale).collect()),
        })
        .collect();
    MlpParams::from_layers(layers).unwrap()
}

/// Continues refinement of `q` through the later phases of [`DECADE_SCHEDULE`].
pub fn anneal(decoder: &MlpParams, q: LatentGaussian, x: &[f64], rng: &mut RngStream) -> LatentGaussian {
    DECADE_SCHEDULE[1..].iter().fold(q, |q, &(lr, steps)| {
        refine_posterior(decoder, &q, x, steps, lr, rng).unwrap().0
    })
}

/// Leaves in `(in, out)` weight layout for every layer of `widths`, with
/// fan-balanced normal weights and small normal biases.
pub fn transposed_params(widths: &[usize], rng: &mut RngStream) -> Vec<DenseTensor> {
    widths
        .windows(2)
        .flat_map(|w| {
            let scale = (2.0 / (w[0] + w[1]) as f64).sqrt();
            [
                DenseTensor::matrix(w[0], w[1], rng.normals(w[0] * w[1]).iter().map(|v| scale * v).collect()).unwrap(),
                DenseTensor::vector(rng.normals(w[1]).iter().map(|v| 0.1 * v).collect()),
            ]
        })
        .collect()
}

pub fn recorded(ids: &[NodeId]) -> RecordedMlp {
    RecordedMlp::from_nodes(ids.chunks(2).map(|p| (p[0], p[1])).collect()).unwrap()
}

pub const GRAD_STEP: f64 = 1e-5;

/// Pre-activations closer than this to a ReLU kink make a configuration
/// inadmissible for central differences at [`GRAD_STEP`].
pub const KINK_MARGIN: f64 = 10.0 * GRAD_STEP;

pub struct GradCheck {
    pub error: f64,
    /// Smallest `|pre-activation|` over every hidden unit at the base point.
    pub relu_margin: f64,
}

/// Plain forward pass over `(in, out)` leaves; returns the output rows and the
/// smallest hidden pre-activation magnitude.
pub fn forward_margin(params: &[DenseTensor], input: &[Vec<f64>]) -> (Vec<Vec<f64>>, f64) {
    let mut margin = f64::INFINITY;
    let layers = params.len() / 2;
    let mut h = input.to_vec();
    for (l, p) in params.chunks(2).enumerate() {
        let (w, b) = (&p[0], &p[1]);
        let (fan_in, fan_out) = (w.shape()[0], w.shape()[1]);
        h = h
            .iter()
            .map(|row| {
                (0..fan_out)
                    .map(|o| {
                        let pre = b.data()[o] + (0..fan_in).map(|i| row[i] * w.data()[i * fan_out + o]).sum::<f64>();
                        if l + 1 < layers {
                            margin = margin.min(pre.abs());
                            pre.max(0.0)
                        } else {
                            pre
                        }
                    })
                    .collect()
            })
            .collect();
    }
    (h, margin)
}

fn rows(t: &DenseTensor) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

/// `mean + exp(log_std) * eps` row by row.
fn reparam(mean: &[Vec<f64>], log_std: &[Vec<f64>], eps: &[f64]) -> Vec<Vec<f64>> {
    let z = mean[0].len();
    mean.iter()
        .zip(log_std)
        .enumerate()
        .map(|(r, (m, s))| (0..z).map(|j| m[j] + s[j].exp() * eps[r * z + j]).collect())
        .collect()
}

/// Finite-difference check of the SVI loss in decoder weights and posterior parameters.
pub fn svi_grad_check(spec: &ArchSpec, batch: usize, rng: &mut RngStream) -> GradCheck {
    let (z, d) = (spec.latent_dim, spec.data_dim);
    let mc = 2;
    let x = DenseTensor::matrix(batch, d, rng.normals(batch * d)).unwrap();
    let mut points = transposed_params(&spec.decoder_widths(), rng);
    let n_dec = points.len();
    points.push(DenseTensor::matrix(batch, z, rng.normals(batch * z)).unwrap());
    points.push(DenseTensor::matrix(batch, z, rng.normals(batch * z).iter().map(|v| 0.3 * v).collect()).unwrap());
    let noise_seed = rng.below(1 << 20) as u64;
    let loss = |tape: &mut Tape, ids: &[NodeId]| {
        let xn = tape.constant(x.clone())?;
        let mut noise = RngStream::new(noise_seed);
        elbo_recon_node(tape, &recorded(&ids[..n_dec]), ids[n_dec], ids[n_dec + 1], xn, &mut noise, mc)
    };
    let error = grad_check_many(loss, &points, GRAD_STEP).unwrap();

    let mut noise = RngStream::new(noise_seed);
    let (mean, log_std) = (rows(&points[n_dec]), rows(&points[n_dec + 1]));
    let relu_margin = (0..mc)
        .map(|_| forward_margin(&points[..n_dec], &reparam(&mean, &log_std, &noise.normals(batch * z))).1)
        .fold(f64::INFINITY, f64::min);
    GradCheck { error, relu_margin }
}

/// Finite-difference check of the VAE loss in encoder and decoder weights.
pub fn vae_grad_check(spec: &ArchSpec, batch: usize, rng: &mut RngStream) -> GradCheck {
    let (z, d) = (spec.latent_dim, spec.data_dim);
    let x = DenseTensor::matrix(batch, d, rng.normals(batch * d)).unwrap();
    let mut points = transposed_params(&spec.encoder_widths(), rng);
    let n_enc = points.len();
    points.extend(transposed_params(&spec.decoder_widths(), rng));
    let noise_seed = rng.below(1 << 20) as u64;
    let loss = |tape: &mut Tape, ids: &[NodeId]| {
        let xn = tape.constant(x.clone())?;
        let mut noise = RngStream::new(noise_seed);
        vae_loss_node(tape, &recorded(&ids[..n_enc]), &recorded(&ids[n_enc..]), xn, z, &mut noise, 1)
    };
    let error = grad_check_many(loss, &points, GRAD_STEP).unwrap();

    let (head, enc_margin) = forward_margin(&points[..n_enc], &rows(&x));
    let mean: Vec<Vec<f64>> = head.iter().map(|h| h[..z].to_vec()).collect();
    let log_std: Vec<Vec<f64>> = head.iter().map(|h| h[z..].to_vec()).collect();
    let eps = RngStream::new(noise_seed).normals(batch * z);
    let (_, dec_margin) = forward_margin(&points[n_enc..], &reparam(&mean, &log_std, &eps));
    GradCheck {
        error,
        relu_margin: enc_margin.min(dec_margin),
    }
}
