//! Fully connected ReLU networks for the decoder and encoder families.
//!
//! Hidden width is `min(2·|z|, 128)`. `A1` is a single affine map, `A2` adds
//! one hidden layer and `A3` two. Encoders mirror the decoder's hidden widths
//! and end in a `2·|z|` head read as `[mean ‖ log_std]`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probdist::RngStream;
use crate::tensor::{DenseTensor, NodeId, Tape};

pub const MAX_HIDDEN_WIDTH: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchId {
    A1,
    A2,
    A3,
}

impl ArchId {
    pub const ALL: [ArchId; 3] = [ArchId::A1, ArchId::A2, ArchId::A3];

    pub fn hidden_layers(self) -> usize {
        match self {
            ArchId::A1 => 0,
            ArchId::A2 => 1,
            ArchId::A3 => 2,
        }
    }
}

impl fmt::Display for ArchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ArchId::A1 => "a1",
            ArchId::A2 => "a2",
            ArchId::A3 => "a3",
        };
        f.write_str(s)
    }
}

impl FromStr for ArchId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a1" | "arch1" => Ok(ArchId::A1),
            "a2" | "arch2" => Ok(ArchId::A2),
            "a3" | "arch3" => Ok(ArchId::A3),
            other => Err(Error::InvalidArgument(format!("unknown architecture `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArchSpec {
    pub arch: ArchId,
    pub latent_dim: usize,
    pub data_dim: usize,
}

impl ArchSpec {
    pub fn new(arch: ArchId, latent_dim: usize, data_dim: usize) -> Result<Self> {
        if latent_dim == 0 || data_dim == 0 {
            return Err(Error::InvalidArgument(format!(
                "latent_dim and data_dim must be positive (got {latent_dim}, {data_dim})"
            )));
        }
        Ok(Self {
            arch,
            latent_dim,
            data_dim,
        })
    }

    pub fn hidden_width(&self) -> usize {
        (2 * self.latent_dim).min(MAX_HIDDEN_WIDTH)
    }

    pub fn decoder_widths(&self) -> Vec<usize> {
        let mut w = vec![self.latent_dim];
        w.extend(std::iter::repeat_n(self.hidden_width(), self.arch.hidden_layers()));
        w.push(self.data_dim);
        w
    }

    pub fn encoder_widths(&self) -> Vec<usize> {
        let mut w = vec![self.data_dim];
        w.extend(std::iter::repeat_n(self.hidden_width(), self.arch.hidden_layers()));
        w.push(2 * self.latent_dim);
        w
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `(out, in)`.
    pub weight: DenseTensor,
    /// `(out,)`.
    pub bias: DenseTensor,
}

impl Layer {
    pub fn fan_in(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn fan_out(&self) -> usize {
        self.weight.shape()[0]
    }
}

/// Affine layers with ReLU between them and identity at the output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

impl MlpParams {
    /// Uniform fan-balanced weights, zero biases.
    pub fn init(widths: &[usize], seed: u64) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::InvalidArgument(format!("bad layer widths {widths:?}")));
        }
        let mut rng = RngStream::new(seed);
        let layers = widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data = (0..fan_in * fan_out).map(|_| rng.uniform(-a, a)).collect();
                Layer {
                    weight: DenseTensor::matrix(fan_out, fan_in, data).expect("layer shape"),
                    bias: DenseTensor::zeros(&[fan_out]),
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("network needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weight.rank() != 2 || l.bias.shape() != [l.fan_out()] {
                return Err(Error::ShapeMismatch {
                    op: "layer",
                    lhs: l.weight.shape().to_vec(),
                    rhs: l.bias.shape().to_vec(),
                });
            }
            if i > 0 && layers[i - 1].fan_out() != l.fan_in() {
                return Err(Error::ShapeMismatch {
                    op: "layer_chain",
                    lhs: layers[i - 1].weight.shape().to_vec(),
                    rhs: l.weight.shape().to_vec(),
                });
            }
        }
        Ok(Self { layers })
    }

    /// `[in, hidden..., out]`.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].fan_in()];
        w.extend(self.layers.iter().map(Layer::fan_out));
        w
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        let w = self.widths();
        w[1..w.len() - 1].to_vec()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.numel() + l.bias.numel()).sum()
    }

    /// Parameter tensors in `[w0, b0, w1, b1, ...]` order.
    pub fn tensors(&self) -> Vec<&DenseTensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut DenseTensor> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias]).collect()
    }

    /// FNV-1a over the raw bits of every parameter.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for t in self.tensors() {
            for v in t.data() {
                for b in v.to_bits().to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        h
    }

    /// Puts the parameters on `tape` as leaves (`trainable`) or constants.
    pub fn record(&self, tape: &mut Tape, trainable: bool) -> Result<RecordedMlp> {
        let mut layers = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            // Weights enter transposed so a batch `(B, in)` multiplies on the left.
            let wt = l.weight.transpose();
            let b = l.bias.clone();
            let (w, b) = if trainable {
                (tape.leaf(wt)?, tape.leaf(b)?)
            } else {
                (tape.constant(wt)?, tape.constant(b)?)
            };
            layers.push((w, b));
        }
        Ok(RecordedMlp { layers })
    }

    /// Forward pass with the parameters recorded as constants.
    pub fn forward(&self, tape: &mut Tape, input: NodeId) -> Result<NodeId> {
        self.record(tape, false)?.forward(tape, input)
    }

    /// Tape-backed evaluation of a `(B, in)` batch.
    pub fn eval(&self, input: &DenseTensor) -> Result<DenseTensor> {
        let mut tape = Tape::new();
        let x = tape.constant(input.clone())?;
        let y = self.forward(&mut tape, x)?;
        Ok(tape.value(y).clone())
    }
}

/// Parameter node ids of an [`MlpParams`] on a tape.
#[derive(Clone, Debug)]
pub struct RecordedMlp {
    layers: Vec<(NodeId, NodeId)>,
}

impl RecordedMlp {
    /// Wraps `(weight, bias)` nodes already on a tape. Weights are `(in, out)`,
    /// the transpose of [`Layer::weight`].
    pub fn from_nodes(layers: Vec<(NodeId, NodeId)>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("an MLP needs at least one layer".into()));
        }
        Ok(Self { layers })
    }

    pub fn forward(&self, tape: &mut Tape, input: NodeId) -> Result<NodeId> {
        let x = tape.value(input);
        let fan_in = tape.value(self.layers[0].0).shape()[0];
        if x.rank() != 2 || x.shape()[1] != fan_in {
            return Err(Error::ShapeMismatch {
                op: "mlp_forward",
                lhs: x.shape().to_vec(),
                rhs: vec![fan_in],
            });
        }
        let last = self.layers.len() - 1;
        let mut h = input;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let a = tape.matmul(h, w)?;
            h = tape.add(a, b)?;
            if i != last {
                h = tape.relu(h)?;
            }
        }
        Ok(h)
    }

    /// Gradients in [`MlpParams::tensors`] order, weights back in `(out, in)` layout.
    pub fn grads(&self, tape: &Tape) -> Vec<DenseTensor> {
        self.layers
            .iter()
            .flat_map(|&(w, b)| [tape.grad(w).transpose(), tape.grad(b)])
            .collect()
    }
}

pub fn build_decoder(spec: &ArchSpec, init_seed: u64) -> Result<MlpParams> {
    MlpParams::init(&spec.decoder_widths(), init_seed)
}

pub fn build_encoder(spec: &ArchSpec, init_seed: u64) -> Result<MlpParams> {
    MlpParams::init(&spec.encoder_widths(), init_seed)
}

/// Splits a `(B, 2z)` head node into `(mean, log_std)` nodes of shape `(B, z)`.
///
/// The split multiplies by constant 0/1 selection matrices, so it stays within
/// the tape's op set and is exact.
pub fn split_head(tape: &mut Tape, head: NodeId, latent_dim: usize) -> Result<(NodeId, NodeId)> {
    let width = tape.value(head).cols();
    if width != 2 * latent_dim {
        return Err(Error::ShapeMismatch {
            op: "split_head",
            lhs: tape.value(head).shape().to_vec(),
            rhs: vec![2 * latent_dim],
        });
    }
    let select = |offset: usize| {
        let mut s = DenseTensor::zeros(&[2 * latent_dim, latent_dim]);
        for j in 0..latent_dim {
            s.data_mut()[(offset + j) * latent_dim + j] = 1.0;
        }
        s
    };
    let sm = tape.constant(select(0))?;
    let ss = tape.constant(select(latent_dim))?;
    let mean = tape.matmul(head, sm)?;
    let log_std = tape.matmul(head, ss)?;
    Ok((mean, log_std))
}
