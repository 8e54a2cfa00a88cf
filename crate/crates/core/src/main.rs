use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use pesvi::datagen::{generate_dataset, GeneratorSpec};
use pesvi::harness::report::trace_tsv;
use pesvi::harness::{
    emit_report, load_checkpoint, load_dataset, load_records, make_splits, run_grid, save_checkpoint, save_dataset,
    save_records, Checkpoint, Dataset, GridConfig,
};
use pesvi::inference::{mean_final_loss, mean_trace, pe_svi_batch, svi_random_batch};
use pesvi::nn::{ArchId, ArchSpec};
use pesvi::par::{self, Execution};
use pesvi::pseudo_encoder::{train_pseudo_encoder, EncoderTargets};
use pesvi::svi::{train_early_decoder, TrainConfig};
use pesvi::vae::train_vae;
use pesvi::{Error, Result};

#[derive(Parser)]
#[command(name = "pesvi", version, about = "Decoder-first variational inference with warm-started refinement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Vae,
    Svi,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and its recipe manifest.
    GenData {
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 30)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a VAE or an SVI decoder on the train split.
    Train {
        #[arg(long, value_enum)]
        model: ModelArg,
        #[arg(long, default_value = "a2")]
        arch: ArchId,
        #[arg(long, default_value_t = 8)]
        zdim: usize,
        #[arg(long, default_value_t = 1e-2)]
        model_lr: f64,
        #[arg(long, default_value_t = 1e-1)]
        latent_lr: f64,
        #[arg(long, default_value_t = 300)]
        epochs: usize,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        split_seed: u64,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a pseudo-encoder to the posteriors stored in an SVI checkpoint.
    TrainEncoder {
        #[arg(long)]
        decoder_ckpt: PathBuf,
        /// Defaults to the decoder checkpoint.
        #[arg(long)]
        posterior_ckpt: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-2)]
        lr: f64,
        #[arg(long, default_value_t = 300)]
        epochs: usize,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Dataset the posteriors were trained on.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Refine posteriors for every row of a dataset with a frozen decoder.
    Infer {
        #[arg(long)]
        decoder_ckpt: PathBuf,
        /// Warm start from this encoder; random init otherwise.
        #[arg(long)]
        encoder_ckpt: Option<PathBuf>,
        #[arg(long, default_value_t = 25)]
        k: usize,
        #[arg(long, default_value_t = 0.1)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        trace_out: Option<PathBuf>,
    },
    /// Run the full model grid and write records plus a report.
    Bench {
        /// JSON grid config; the desk grid when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        workers: usize,
        #[arg(long)]
        out_dir: PathBuf,
        /// Start from the large-scale grid instead of the desk grid.
        #[arg(long)]
        large_scale: bool,
        #[arg(long)]
        sequential: bool,
    },
    /// Rebuild tables and trace files from stored records.
    Report {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "synthetic")]
        dataset: String,
    },
}

fn manifest_path(out: &Path) -> PathBuf {
    out.with_extension("manifest.json")
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

fn train_rows(data: &Dataset, split_seed: u64) -> Result<Dataset> {
    let splits = make_splits(data.len(), split_seed)?;
    Dataset::new(data.subset(&splits.train), format!("{}#train", data.source))
}

fn run(cli: Cli) -> Result<serde_json::Value> {
    match cli.command {
        Command::GenData { n, dim, seed, out } => {
            let spec = GeneratorSpec::new(n, dim, seed)?;
            let generated = generate_dataset(&spec)?;
            save_dataset(&Dataset::new(generated.data, out.display().to_string())?, &out)?;
            let manifest = manifest_path(&out);
            write_json(&manifest, &generated.manifest)?;
            Ok(json!({ "data": out, "manifest": manifest, "n": n, "dim": dim }))
        }
        Command::Train {
            model,
            arch,
            zdim,
            model_lr,
            latent_lr,
            epochs,
            batch_size,
            seed,
            split_seed,
            data,
            out,
        } => {
            let full = load_dataset(&data)?;
            let train = train_rows(&full, split_seed)?;
            let spec = ArchSpec::new(arch, zdim, train.dim())?;
            let cfg = TrainConfig {
                model_lr,
                latent_lr,
                epochs,
                batch_size,
                seed,
                mc_samples: 1,
            };
            let (mut ckpt, trace) = match model {
                ModelArg::Vae => {
                    let vae = train_vae(&train.rows, &spec, &cfg)?;
                    let ckpt = Checkpoint::new(spec).with_decoder(&vae.decoder).with_encoder(&vae.encoder);
                    (ckpt, vae.trace)
                }
                ModelArg::Svi => {
                    let svi = train_early_decoder(&train.rows, &spec, &cfg)?;
                    let ckpt = Checkpoint::new(spec).with_decoder(&svi.decoder).with_posterior(&svi.table);
                    (ckpt, svi.trace)
                }
            };
            ckpt.seeds.train_seed = Some(seed);
            ckpt.seeds.split_seed = Some(split_seed);
            save_checkpoint(&ckpt, &out)?;
            Ok(json!({ "checkpoint": out, "final_train_loss": trace.last(), "epochs": epochs }))
        }
        Command::TrainEncoder {
            decoder_ckpt,
            posterior_ckpt,
            lr,
            epochs,
            batch_size,
            seed,
            data,
            out,
        } => {
            let dec_ckpt = load_checkpoint(&decoder_ckpt)?;
            let post_ckpt = match &posterior_ckpt {
                Some(p) => load_checkpoint(p)?,
                None => dec_ckpt.clone(),
            };
            let table = post_ckpt.posterior()?;
            let split_seed = post_ckpt.seeds.split_seed.unwrap_or(0);
            let train = train_rows(&load_dataset(&data)?, split_seed)?;
            if train.len() != table.len() {
                return Err(Error::InvalidArgument(format!(
                    "{} posteriors for {} training rows",
                    table.len(),
                    train.len()
                )));
            }
            let cfg = TrainConfig {
                model_lr: lr,
                latent_lr: lr,
                epochs,
                batch_size,
                seed,
                mc_samples: 1,
            };
            let pe = train_pseudo_encoder(&train.rows, &EncoderTargets::from_table(&table), &dec_ckpt.arch, &cfg)?;
            let mut ckpt = Checkpoint::new(dec_ckpt.arch.clone())
                .with_decoder(&dec_ckpt.decoder()?)
                .with_encoder(&pe.encoder);
            ckpt.seeds = dec_ckpt.seeds.clone();
            save_checkpoint(&ckpt, &out)?;
            Ok(json!({ "checkpoint": out, "final_mse": pe.trace.last() }))
        }
        Command::Infer {
            decoder_ckpt,
            encoder_ckpt,
            k,
            lr,
            seed,
            data,
            trace_out,
        } => {
            let decoder = load_checkpoint(&decoder_ckpt)?.decoder()?;
            let dataset = load_dataset(&data)?;
            let ids: Vec<usize> = (0..dataset.len()).collect();
            let runs = match &encoder_ckpt {
                Some(p) => {
                    let encoder = load_checkpoint(p)?.encoder()?;
                    pe_svi_batch(&decoder, &encoder, &dataset.rows, &ids, k, lr, seed, Execution::Parallel)?
                }
                None => svi_random_batch(&decoder, &dataset.rows, &ids, k.max(1), lr, seed, Execution::Parallel)?,
            };
            let traces: Vec<_> = runs.iter().map(|(_, t)| t).collect();
            let trace = mean_trace(traces.iter().copied());
            if let Some(path) = &trace_out {
                std::fs::write(path, trace_tsv(&trace))?;
            }
            Ok(json!({
                "points": ids.len(),
                "init": if encoder_ckpt.is_some() { "encoder" } else { "random" },
                "initial_loss": trace.first(),
                "final_loss": mean_final_loss(traces.iter().copied()),
                "diverged": traces.iter().filter(|t| t.diverged).count(),
            }))
        }
        Command::Bench {
            config,
            workers,
            out_dir,
            large_scale,
            sequential,
        } => {
            let cfg: GridConfig = match &config {
                Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
                None if large_scale => GridConfig::large_scale(),
                None => GridConfig::desk(),
            };
            cfg.validate()?;
            std::fs::create_dir_all(&out_dir)?;
            let generated = generate_dataset(&cfg.data)?;
            let source = format!("synthetic-seed{}", cfg.data.seed);
            let data = Dataset::new(generated.data, source.clone())?;
            let splits = make_splits(data.len(), cfg.split_seed)?;
            write_json(&out_dir.join("config.json"), &cfg)?;
            write_json(&out_dir.join("manifest.json"), &generated.manifest)?;
            let exec = if sequential { Execution::Sequential } else { Execution::Parallel };
            let jobs = par::with_workers(workers, || run_grid(&data, &splits, &cfg, exec))?;
            let records: Vec<_> = jobs.into_iter().flat_map(|j| j.records).collect();
            let failed = records.iter().filter(|r| r.error.is_some()).count();
            let records_path = out_dir.join("records.json");
            save_records(&records, &records_path)?;
            let written = emit_report(&records, &source, &out_dir)?;
            Ok(json!({ "records": records_path, "runs": records.len(), "failed": failed, "files": written.len() }))
        }
        Command::Report { records, out, dataset } => {
            let records = load_records(&records)?;
            let written = emit_report(&records, &dataset, &out)?;
            Ok(json!({ "files": written }))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            let message = e.to_string();
            let first = message.lines().next().unwrap_or_default().trim_start_matches("error: ");
            eprintln!("{}", json!({ "error": "usage", "message": first }));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}
