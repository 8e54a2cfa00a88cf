//! Versioned JSON checkpoints of flat parameter arrays.
//!
//! Floats are written as shortest round-trip decimals and read back exactly,
//! so save → load → save reproduces the file byte for byte.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{ArchSpec, Layer, MlpParams};
use crate::probdist::LatentGaussian;
use crate::svi::PosteriorTable;
use crate::tensor::DenseTensor;

pub const FORMAT_VERSION: u32 = 1;

/// Layer widths plus `[w0, b0, w1, b1, ...]`, weights row-major `(out, in)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatMlp {
    pub widths: Vec<usize>,
    pub params: Vec<f64>,
}

impl FlatMlp {
    pub fn from_mlp(mlp: &MlpParams) -> Self {
        Self {
            widths: mlp.widths(),
            params: mlp.tensors().into_iter().flat_map(|t| t.data().iter().copied()).collect(),
        }
    }

    pub fn to_mlp(&self) -> Result<MlpParams> {
        if self.widths.len() < 2 {
            return Err(Error::Checkpoint(format!("bad widths {:?}", self.widths)));
        }
        let expected: usize = self.widths.windows(2).map(|w| w[1] * w[0] + w[1]).sum();
        if self.params.len() != expected {
            return Err(Error::Checkpoint(format!(
                "{} parameters for widths {:?} (expected {expected})",
                self.params.len(),
                self.widths
            )));
        }
        let mut rest = &self.params[..];
        let mut layers = Vec::with_capacity(self.widths.len() - 1);
        for w in self.widths.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let (weight, tail) = rest.split_at(fan_in * fan_out);
            let (bias, tail) = tail.split_at(fan_out);
            rest = tail;
            layers.push(Layer {
                weight: DenseTensor::new_finite(vec![fan_out, fan_in], weight.to_vec())?,
                bias: DenseTensor::new_finite(vec![fan_out], bias.to_vec())?,
            });
        }
        MlpParams::from_layers(layers)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatPosterior {
    pub latent_dim: usize,
    /// Row-major `n × latent_dim`.
    pub means: Vec<f64>,
    pub log_stds: Vec<f64>,
}

impl FlatPosterior {
    pub fn from_entries(entries: &[LatentGaussian]) -> Self {
        Self {
            latent_dim: entries.first().map_or(0, LatentGaussian::dim),
            means: entries.iter().flat_map(|q| q.mean.iter().copied()).collect(),
            log_stds: entries.iter().flat_map(|q| q.log_std.iter().copied()).collect(),
        }
    }

    pub fn from_table(table: &PosteriorTable) -> Self {
        Self::from_entries(table.entries())
    }

    pub fn to_entries(&self) -> Result<Vec<LatentGaussian>> {
        let z = self.latent_dim;
        if z == 0 || self.means.len() != self.log_stds.len() || self.means.len() % z != 0 {
            return Err(Error::Checkpoint("posterior arrays do not tile the latent dimension".into()));
        }
        self.means
            .chunks(z)
            .zip(self.log_stds.chunks(z))
            .map(|(m, s)| LatentGaussian::new(m.to_vec(), s.to_vec()))
            .collect()
    }

    /// A table with fresh optimizer state around the stored entries.
    pub fn to_table(&self) -> Result<PosteriorTable> {
        PosteriorTable::from_entries(self.to_entries()?)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointSeeds {
    pub train_seed: Option<u64>,
    pub data_seed: Option<u64>,
    pub split_seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub arch: ArchSpec,
    pub decoder: Option<FlatMlp>,
    pub encoder: Option<FlatMlp>,
    pub posterior: Option<FlatPosterior>,
    pub seeds: CheckpointSeeds,
}

impl Checkpoint {
    pub fn new(arch: ArchSpec) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            arch,
            decoder: None,
            encoder: None,
            posterior: None,
            seeds: CheckpointSeeds::default(),
        }
    }

    pub fn with_decoder(mut self, decoder: &MlpParams) -> Self {
        self.decoder = Some(FlatMlp::from_mlp(decoder));
        self
    }

    pub fn with_encoder(mut self, encoder: &MlpParams) -> Self {
        self.encoder = Some(FlatMlp::from_mlp(encoder));
        self
    }

    pub fn with_posterior(mut self, table: &PosteriorTable) -> Self {
        self.posterior = Some(FlatPosterior::from_table(table));
        self
    }

    pub fn decoder(&self) -> Result<MlpParams> {
        let flat = self.decoder.as_ref().ok_or_else(|| Error::Checkpoint("no decoder stored".into()))?;
        let mlp = flat.to_mlp()?;
        if mlp.widths() != self.arch.decoder_widths() {
            return Err(Error::Checkpoint(format!(
                "decoder widths {:?} disagree with {:?}",
                mlp.widths(),
                self.arch.decoder_widths()
            )));
        }
        Ok(mlp)
    }

    pub fn encoder(&self) -> Result<MlpParams> {
        let flat = self.encoder.as_ref().ok_or_else(|| Error::Checkpoint("no encoder stored".into()))?;
        let mlp = flat.to_mlp()?;
        if mlp.widths() != self.arch.encoder_widths() {
            return Err(Error::Checkpoint(format!(
                "encoder widths {:?} disagree with {:?}",
                mlp.widths(),
                self.arch.encoder_widths()
            )));
        }
        Ok(mlp)
    }

    pub fn posterior(&self) -> Result<PosteriorTable> {
        let flat = self.posterior.as_ref().ok_or_else(|| Error::Checkpoint("no posterior stored".into()))?;
        if flat.latent_dim != self.arch.latent_dim {
            return Err(Error::Checkpoint(format!(
                "posterior latent dim {} disagrees with {}",
                flat.latent_dim, self.arch.latent_dim
            )));
        }
        flat.to_table()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            format_version: u32,
        }
        let header: Header =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(format!("unreadable checkpoint: {e}")))?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::CheckpointVersion {
                found: header.format_version,
                expected: FORMAT_VERSION,
            });
        }
        serde_json::from_str(text).map_err(|e| Error::Checkpoint(format!("malformed checkpoint: {e}")))
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    std::fs::write(path, ckpt.to_json()?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::from_json(&std::fs::read_to_string(path)?)
}
