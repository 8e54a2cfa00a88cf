//! Hyperparameter grids over (arch, |z|, seed) with validation selection.
//!
//! One job trains every grid point for a single (arch, |z|, seed), selects on
//! the validation split, and only then touches the test split. Jobs share no
//! mutable state, so their order and parallelism never change a record.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datagen::GeneratorSpec;
use crate::error::{Error, Result};
use crate::harness::dataset::{Dataset, Splits};
use crate::inference::{
    evaluate_posteriors, mean_final_loss, mean_trace, pe_svi_batch, select_pace_lr, steps_to_converge,
    svi_random_batch, ConvergenceCriterion, RefinementTrace,
};
use crate::nn::{ArchId, ArchSpec, MlpParams};
use crate::par::{self, Execution};
use crate::probdist::derive_seed;
use crate::pseudo_encoder::{train_pseudo_encoder, EncoderTargets};
use crate::svi::{train_early_decoder, SviOutcome, TrainConfig};
use crate::tensor::DenseTensor;
use crate::vae::{encode_batch, train_vae, VaeOutcome};

/// Seed tag for test-time noise streams.
const EVAL_SEED_TAG: u64 = 6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WarmStartConfig {
    /// Test points used (the first ones of the test split).
    pub points: usize,
    /// Rate for the random-init baseline.
    pub random_lr: f64,
    /// Steps for both traces; unreached targets count as `horizon + 1`.
    pub horizon: usize,
    pub rel_tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub data: GeneratorSpec,
    pub split_seed: u64,
    pub archs: Vec<ArchId>,
    pub z_dims: Vec<usize>,
    pub seeds: Vec<u64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub vae_lrs: Vec<f64>,
    pub svi_model_lrs: Vec<f64>,
    pub svi_latent_lrs: Vec<f64>,
    pub encoder_lrs: Vec<f64>,
    pub pace_lrs: Vec<f64>,
    pub pace_k: usize,
    /// Random-init refinement steps when scoring SVI on held-out points.
    pub svi_eval_steps: usize,
    pub warm_start: Option<WarmStartConfig>,
}

fn decades(mantissas: &[f64], exponents: &[i32]) -> Vec<f64> {
    exponents
        .iter()
        .flat_map(|&e| mantissas.iter().map(move |&m| m * 10f64.powi(e)))
        .collect()
}

impl GridConfig {
    pub fn desk() -> Self {
        Self {
            data: GeneratorSpec::desk(0),
            split_seed: 0,
            archs: vec![ArchId::A1, ArchId::A2, ArchId::A3],
            z_dims: vec![4, 8, 16],
            seeds: vec![0, 1, 2],
            epochs: 300,
            batch_size: 32,
            vae_lrs: vec![1e-2, 5e-3, 1e-3],
            svi_model_lrs: vec![1e-2, 1e-3],
            svi_latent_lrs: vec![1e-1, 1e-2],
            encoder_lrs: vec![1e-2, 1e-3],
            pace_lrs: decades(&[1.0, 5.0], &[0, -1, -2]),
            pace_k: 25,
            svi_eval_steps: 300,
            warm_start: Some(WarmStartConfig {
                points: 20,
                random_lr: 1e-3,
                horizon: 10_000,
                rel_tol: ConvergenceCriterion::DEFAULT_REL_TOL,
            }),
        }
    }

    pub fn large_scale() -> Self {
        Self {
            data: GeneratorSpec::large_scale(0),
            z_dims: vec![16, 32, 64, 128],
            epochs: 3000,
            vae_lrs: decades(&[1.0, 5.0, 8.0], &[-2, -3, -4, -5]),
            svi_model_lrs: vec![1e-2, 1e-3],
            svi_latent_lrs: vec![1e-1, 1e-2, 1e-3],
            encoder_lrs: vec![1e-2, 1e-3],
            svi_eval_steps: 3000,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        let empty = [
            ("archs", self.archs.is_empty()),
            ("z_dims", self.z_dims.is_empty()),
            ("seeds", self.seeds.is_empty()),
            ("vae_lrs", self.vae_lrs.is_empty()),
            ("svi_model_lrs", self.svi_model_lrs.is_empty()),
            ("svi_latent_lrs", self.svi_latent_lrs.is_empty()),
            ("encoder_lrs", self.encoder_lrs.is_empty()),
            ("pace_lrs", self.pace_lrs.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(Error::InvalidArgument(format!("grid `{name}` is empty")));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.svi_eval_steps == 0 {
            return Err(Error::InvalidArgument("epochs, batch_size and svi_eval_steps must be positive".into()));
        }
        Ok(())
    }

    fn train_config(&self, model_lr: f64, latent_lr: f64, seed: u64) -> TrainConfig {
        TrainConfig {
            model_lr,
            latent_lr,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed,
            mc_samples: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "VAE")]
    Vae,
    #[serde(rename = "SVI")]
    Svi,
    #[serde(rename = "PE-SVI-0")]
    PeSvi0,
    #[serde(rename = "PE-SVI-k")]
    PeSviK,
}

impl ModelKind {
    pub fn label(self, k: usize) -> String {
        match self {
            ModelKind::Vae => "VAE".into(),
            ModelKind::Svi => "SVI".into(),
            ModelKind::PeSvi0 => "PE-SVI-0".into(),
            ModelKind::PeSviK => format!("PE-SVI-{k}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub model: ModelKind,
    pub arch: ArchId,
    pub latent_dim: usize,
    pub seed: u64,
    pub model_lr: Option<f64>,
    pub latent_lr: Option<f64>,
    pub encoder_lr: Option<f64>,
    pub refine_lr: Option<f64>,
    /// Test-time refinement steps per datapoint.
    pub refine_steps: usize,
    pub epochs: usize,
    pub train_loss: Option<f64>,
    pub val_loss: Option<f64>,
    /// Filled only for the selected configuration.
    pub test_loss: Option<f64>,
    pub selected: bool,
    /// Mean steps to reach the random-init converged loss.
    pub steps_to_converge: Option<f64>,
    pub wall_clock_ms: u64,
    pub config_hash: String,
    /// Per-epoch training loss.
    pub train_trace: Vec<f64>,
    /// Mean test-time trace of the selected configuration.
    pub test_trace: Vec<f64>,
    pub error: Option<String>,
}

impl RunRecord {
    fn new(model: ModelKind, arch: ArchId, latent_dim: usize, seed: u64, cfg: &GridConfig) -> Self {
        Self {
            model,
            arch,
            latent_dim,
            seed,
            model_lr: None,
            latent_lr: None,
            encoder_lr: None,
            refine_lr: None,
            refine_steps: 0,
            epochs: cfg.epochs,
            train_loss: None,
            val_loss: None,
            test_loss: None,
            selected: false,
            steps_to_converge: None,
            wall_clock_ms: 0,
            config_hash: String::new(),
            train_trace: Vec::new(),
            test_trace: Vec::new(),
            error: None,
        }
    }

    /// Hash over everything that determines this record's numbers.
    fn seal(&mut self, cfg: &GridConfig) {
        #[derive(Serialize)]
        struct Key<'a> {
            model: ModelKind,
            arch: ArchId,
            latent_dim: usize,
            seed: u64,
            model_lr: Option<f64>,
            latent_lr: Option<f64>,
            encoder_lr: Option<f64>,
            refine_lr: Option<f64>,
            refine_steps: usize,
            epochs: usize,
            batch_size: usize,
            data: &'a GeneratorSpec,
            split_seed: u64,
        }
        let key = Key {
            model: self.model,
            arch: self.arch,
            latent_dim: self.latent_dim,
            seed: self.seed,
            model_lr: self.model_lr,
            latent_lr: self.latent_lr,
            encoder_lr: self.encoder_lr,
            refine_lr: self.refine_lr,
            refine_steps: self.refine_steps,
            epochs: self.epochs,
            batch_size: cfg.batch_size,
            data: &cfg.data,
            split_seed: cfg.split_seed,
        };
        let bytes = serde_json::to_vec(&key).expect("plain data serializes");
        self.config_hash = hex::encode(&Sha256::digest(&bytes)[..8]);
    }

    /// Learning rates in tie-break order.
    fn lr_key(&self) -> [f64; 4] {
        [self.model_lr, self.latent_lr, self.encoder_lr, self.refine_lr].map(|v| v.unwrap_or(0.0))
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Index of the record with the lowest validation loss; ties go to smaller
/// learning rates. Records without a validation loss are never chosen.
pub fn select_best(records: &[RunRecord]) -> Option<usize> {
    records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.val_loss.is_some())
        .min_by(|(_, a), (_, b)| {
            let (va, vb) = (a.val_loss.unwrap_or(f64::INFINITY), b.val_loss.unwrap_or(f64::INFINITY));
            va.total_cmp(&vb)
                .then_with(|| {
                    a.lr_key()
                        .iter()
                        .zip(b.lr_key())
                        .map(|(x, y)| x.total_cmp(&y))
                        .find(|o| o.is_ne())
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
                .then(a.seed.cmp(&b.seed))
        })
        .map(|(i, _)| i)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WarmStartReport {
    pub points: usize,
    pub random_lr: f64,
    pub pace_lr: f64,
    pub k: usize,
    pub horizon: usize,
    pub random_mean_steps: f64,
    pub pe_mean_steps: f64,
    pub random_median_steps: f64,
    pub pe_median_steps: f64,
    /// Share of points whose PE-SVI trace reaches the target.
    pub pe_reached: f64,
    /// Mean of the random-init final losses (the targets).
    pub converged_loss: f64,
    pub pe_k_loss: f64,
    pub random_trace: Vec<f64>,
    pub pe_trace: Vec<f64>,
}

impl WarmStartReport {
    pub fn step_ratio(&self) -> f64 {
        self.pe_mean_steps / self.random_mean_steps
    }

    /// Relative excess of the PE-SVI-k loss over the converged loss.
    pub fn pe_k_excess(&self) -> f64 {
        (self.pe_k_loss - self.converged_loss) / self.converged_loss
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Paired step counts: random-init SVI run for `horizon` steps sets each
/// point's target (its final loss); PE-SVI at `pace_lr` is timed to it.
#[allow(clippy::too_many_arguments)]
pub fn warm_start_study(
    decoder: &MlpParams,
    encoder: &MlpParams,
    xs: &DenseTensor,
    ids: &[usize],
    pace_lr: f64,
    k: usize,
    ws: &WarmStartConfig,
    seed: u64,
    exec: Execution,
) -> Result<WarmStartReport> {
    if ids.is_empty() || ws.horizon < k {
        return Err(Error::InvalidArgument("warm-start study needs points and horizon >= k".into()));
    }
    let random = svi_random_batch(decoder, xs, ids, ws.horizon, ws.random_lr, seed, exec)?;
    let pe = pe_svi_batch(decoder, encoder, xs, ids, ws.horizon, pace_lr, seed, exec)?;
    let censored = (ws.horizon + 1) as f64;
    let mut random_steps = Vec::with_capacity(ids.len());
    let mut pe_steps = Vec::with_capacity(ids.len());
    let mut targets = Vec::with_capacity(ids.len());
    let mut pe_k = Vec::with_capacity(ids.len());
    let mut reached = 0usize;
    for ((_, r), (_, p)) in random.iter().zip(&pe) {
        let target = r.final_loss();
        let crit = ConvergenceCriterion::new(target, ws.rel_tol)?;
        random_steps.push(steps_to_converge(r, &crit).map_or(censored, |s| s as f64));
        match steps_to_converge(p, &crit) {
            Some(s) => {
                reached += 1;
                pe_steps.push(s as f64);
            }
            None => pe_steps.push(censored),
        }
        targets.push(target);
        pe_k.push(p.losses.get(k).copied().unwrap_or(f64::INFINITY));
    }
    let truncate = |t: &RefinementTrace| RefinementTrace {
        losses: t.losses[..t.losses.len().min(k + 1)].to_vec(),
        ..t.clone()
    };
    let pe_trace = mean_trace(pe.iter().map(|(_, t)| truncate(t)).collect::<Vec<_>>().iter());
    Ok(WarmStartReport {
        points: ids.len(),
        random_lr: ws.random_lr,
        pace_lr,
        k,
        horizon: ws.horizon,
        random_mean_steps: mean(&random_steps),
        pe_mean_steps: mean(&pe_steps),
        random_median_steps: median(&mut random_steps.clone()),
        pe_median_steps: median(&mut pe_steps.clone()),
        pe_reached: reached as f64 / ids.len() as f64,
        converged_loss: mean(&targets),
        pe_k_loss: mean(&pe_k),
        random_trace: mean_trace(random.iter().map(|(_, t)| t)),
        pe_trace,
    })
}

/// Everything one (arch, |z|, seed) job produced.
#[derive(Clone, Debug)]
pub struct JobResult {
    pub arch: ArchId,
    pub latent_dim: usize,
    pub seed: u64,
    pub records: Vec<RunRecord>,
    pub vae: Option<VaeOutcome>,
    pub svi: Option<SviOutcome>,
    pub encoder: Option<MlpParams>,
    pub pace_lr: Option<f64>,
    pub warm_start: Option<WarmStartReport>,
}

impl JobResult {
    pub fn selected(&self, model: ModelKind) -> Option<&RunRecord> {
        self.records.iter().find(|r| r.model == model && r.selected)
    }
}

struct Split<'a> {
    ids: &'a [usize],
    rows: DenseTensor,
}

fn split<'a>(data: &Dataset, ids: &'a [usize]) -> Split<'a> {
    Split {
        ids,
        rows: data.subset(ids),
    }
}

fn elapsed_ms(start: Instant) -> u64 {
    start.elapsed().as_millis() as u64
}

/// Runs every grid point of one (arch, |z|, seed).
pub fn run_job(
    data: &Dataset,
    splits: &Splits,
    cfg: &GridConfig,
    arch: ArchId,
    latent_dim: usize,
    seed: u64,
    exec: Execution,
) -> Result<JobResult> {
    cfg.validate()?;
    let spec = ArchSpec::new(arch, latent_dim, data.dim())?;
    let train = split(data, &splits.train);
    let val = split(data, &splits.val);
    let test = split(data, &splits.test);
    let eval_seed = derive_seed(seed, EVAL_SEED_TAG);
    let loss_of = |dec: &MlpParams, qs: &[crate::probdist::LatentGaussian], s: &Split| -> Result<f64> {
        Ok(mean(&evaluate_posteriors(dec, qs, &s.rows, s.ids, eval_seed, exec)?))
    };
    let mut records = Vec::new();
    let fresh = |model| RunRecord::new(model, arch, latent_dim, seed, cfg);

    // VAE: one rate over both networks.
    let mut vae_runs: Vec<(RunRecord, Option<VaeOutcome>)> = Vec::new();
    for &lr in &cfg.vae_lrs {
        let started = Instant::now();
        let mut rec = fresh(ModelKind::Vae);
        rec.model_lr = Some(lr);
        let outcome = train_vae(&train.rows, &spec, &cfg.train_config(lr, lr, seed)).and_then(|vae| {
            rec.train_trace = vae.trace.clone();
            rec.train_loss = finite(loss_of(&vae.decoder, &encode_batch(&vae.encoder, &train.rows)?, &train)?);
            rec.val_loss = finite(loss_of(&vae.decoder, &encode_batch(&vae.encoder, &val.rows)?, &val)?);
            Ok(vae)
        });
        let kept = outcome.map_err(|e| rec.error = Some(e.to_string())).ok();
        rec.wall_clock_ms = elapsed_ms(started);
        vae_runs.push((rec, kept));
    }
    let best_vae = select_best(&vae_runs.iter().map(|(r, _)| r.clone()).collect::<Vec<_>>());
    let mut vae_sel = None;
    if let Some(i) = best_vae {
        let (rec, vae) = &mut vae_runs[i];
        let vae = vae.take().expect("selected run succeeded");
        let test_loss = loss_of(&vae.decoder, &encode_batch(&vae.encoder, &test.rows)?, &test)?;
        rec.selected = true;
        rec.test_loss = finite(test_loss);
        rec.test_trace = vec![test_loss];
        vae_sel = Some(vae);
    }
    records.extend(vae_runs.into_iter().map(|(r, _)| r));

    // SVI: model × latent rates; held-out points are refined from random init.
    let mut svi_runs: Vec<(RunRecord, Option<SviOutcome>)> = Vec::new();
    for &mlr in &cfg.svi_model_lrs {
        for &llr in &cfg.svi_latent_lrs {
            let started = Instant::now();
            let mut rec = fresh(ModelKind::Svi);
            rec.model_lr = Some(mlr);
            rec.latent_lr = Some(llr);
            rec.refine_lr = Some(llr);
            rec.refine_steps = cfg.svi_eval_steps;
            let outcome = train_early_decoder(&train.rows, &spec, &cfg.train_config(mlr, llr, seed)).and_then(|svi| {
                rec.train_trace = svi.trace.clone();
                rec.train_loss = finite(loss_of(&svi.decoder, svi.table.entries(), &train)?);
                let runs = svi_random_batch(&svi.decoder, &val.rows, val.ids, cfg.svi_eval_steps, llr, eval_seed, exec)?;
                rec.val_loss = finite(mean_final_loss(runs.iter().map(|(_, t)| t)));
                Ok(svi)
            });
            let kept = outcome.map_err(|e| rec.error = Some(e.to_string())).ok();
            rec.wall_clock_ms = elapsed_ms(started);
            svi_runs.push((rec, kept));
        }
    }
    let best_svi = select_best(&svi_runs.iter().map(|(r, _)| r.clone()).collect::<Vec<_>>());
    let mut svi_sel = None;
    if let Some(i) = best_svi {
        let (rec, svi) = &mut svi_runs[i];
        let svi = svi.take().expect("selected run succeeded");
        let llr = rec.latent_lr.expect("set");
        let runs = svi_random_batch(&svi.decoder, &test.rows, test.ids, cfg.svi_eval_steps, llr, eval_seed, exec)?;
        rec.selected = true;
        rec.test_loss = finite(mean_final_loss(runs.iter().map(|(_, t)| t)));
        rec.test_trace = mean_trace(runs.iter().map(|(_, t)| t));
        svi_sel = Some(svi);
    }
    let svi_lrs = best_svi.map(|i| (svi_runs[i].0.model_lr, svi_runs[i].0.latent_lr));
    records.extend(svi_runs.into_iter().map(|(r, _)| r));

    let (mut encoder_sel, mut pace_sel, mut warm_start) = (None, None, None);
    if let (Some(svi), Some((mlr, llr))) = (&svi_sel, svi_lrs) {
        // Pseudo-encoder on the selected SVI posteriors.
        let targets = EncoderTargets::from_table(&svi.table);
        let mut pe_runs: Vec<(RunRecord, Option<MlpParams>)> = Vec::new();
        for &elr in &cfg.encoder_lrs {
            let started = Instant::now();
            let mut rec = fresh(ModelKind::PeSvi0);
            (rec.model_lr, rec.latent_lr, rec.encoder_lr) = (mlr, llr, Some(elr));
            let outcome = train_pseudo_encoder(&train.rows, &targets, &spec, &cfg.train_config(elr, elr, seed))
                .and_then(|pe| {
                    rec.train_trace = pe.trace.clone();
                    rec.train_loss = finite(loss_of(&svi.decoder, &encode_batch(&pe.encoder, &train.rows)?, &train)?);
                    rec.val_loss = finite(loss_of(&svi.decoder, &encode_batch(&pe.encoder, &val.rows)?, &val)?);
                    Ok(pe.encoder)
                });
            let kept = outcome.map_err(|e| rec.error = Some(e.to_string())).ok();
            rec.wall_clock_ms = elapsed_ms(started);
            pe_runs.push((rec, kept));
        }
        let best_pe = select_best(&pe_runs.iter().map(|(r, _)| r.clone()).collect::<Vec<_>>());
        if let Some(i) = best_pe {
            let (rec, enc) = &mut pe_runs[i];
            let enc = enc.take().expect("selected run succeeded");
            let test_loss = loss_of(&svi.decoder, &encode_batch(&enc, &test.rows)?, &test)?;
            rec.selected = true;
            rec.test_loss = finite(test_loss);
            rec.test_trace = vec![test_loss];
            encoder_sel = Some(enc);
        }
        let elr = best_pe.and_then(|i| pe_runs[i].0.encoder_lr);
        let pe_train_trace = best_pe.map(|i| pe_runs[i].0.train_trace.clone()).unwrap_or_default();
        records.extend(pe_runs.into_iter().map(|(r, _)| r));

        // Pace adjustment: k steps from the encoder at each candidate rate.
        if let Some(enc) = &encoder_sel {
            let started = Instant::now();
            let sel = select_pace_lr(&svi.decoder, enc, &val.rows, val.ids, &cfg.pace_lrs, cfg.pace_k, eval_seed, exec)?;
            let per_lr_ms = elapsed_ms(started) / cfg.pace_lrs.len() as u64;
            let mut pace_runs: Vec<RunRecord> = sel
                .scores
                .iter()
                .map(|&(lr, score)| {
                    let mut rec = fresh(ModelKind::PeSviK);
                    (rec.model_lr, rec.latent_lr, rec.encoder_lr, rec.refine_lr) = (mlr, llr, elr, Some(lr));
                    rec.refine_steps = cfg.pace_k;
                    rec.val_loss = finite(score);
                    rec.train_trace = pe_train_trace.clone();
                    rec.wall_clock_ms = per_lr_ms;
                    if rec.val_loss.is_none() {
                        rec.error = Some("refinement diverged on validation points".into());
                    }
                    rec
                })
                .collect();
            if let Some(i) = select_best(&pace_runs) {
                let lr = pace_runs[i].refine_lr.expect("set");
                let on_train = pe_svi_batch(&svi.decoder, enc, &train.rows, train.ids, cfg.pace_k, lr, eval_seed, exec)?;
                let on_test = pe_svi_batch(&svi.decoder, enc, &test.rows, test.ids, cfg.pace_k, lr, eval_seed, exec)?;
                let rec = &mut pace_runs[i];
                rec.selected = true;
                rec.train_loss = finite(mean_final_loss(on_train.iter().map(|(_, t)| t)));
                rec.test_loss = finite(mean_final_loss(on_test.iter().map(|(_, t)| t)));
                rec.test_trace = mean_trace(on_test.iter().map(|(_, t)| t));
                pace_sel = Some(lr);

                if let Some(ws) = &cfg.warm_start {
                    let n = ws.points.min(test.ids.len());
                    let ids = &test.ids[..n];
                    let rows = test.rows.gather_rows(&(0..n).collect::<Vec<_>>());
                    let report = warm_start_study(&svi.decoder, enc, &rows, ids, lr, cfg.pace_k, ws, eval_seed, exec)?;
                    rec.steps_to_converge = finite(report.pe_mean_steps);
                    if let Some(svi_rec) = records.iter_mut().find(|r| r.model == ModelKind::Svi && r.selected) {
                        svi_rec.steps_to_converge = finite(report.random_mean_steps);
                    }
                    warm_start = Some(report);
                }
            }
            records.extend(pace_runs);
        }
    }

    for rec in &mut records {
        rec.seal(cfg);
    }
    Ok(JobResult {
        arch,
        latent_dim,
        seed,
        records,
        vae: vae_sel,
        svi: svi_sel,
        encoder: encoder_sel,
        pace_lr: pace_sel,
        warm_start,
    })
}

/// All (arch, |z|, seed) jobs, in parallel under `exec`. A failed job
/// becomes a single error record and the grid carries on.
pub fn run_grid(data: &Dataset, splits: &Splits, cfg: &GridConfig, exec: Execution) -> Result<Vec<JobResult>> {
    cfg.validate()?;
    let jobs: Vec<(ArchId, usize, u64)> = cfg
        .archs
        .iter()
        .flat_map(|&a| cfg.z_dims.iter().flat_map(move |&z| cfg.seeds.iter().map(move |&s| (a, z, s))))
        .collect();
    let inner = if exec.is_parallel() { Execution::Sequential } else { exec };
    let results = par::map(exec, &jobs, |&(arch, z, seed)| {
        log::info!("job {arch} z={z} seed={seed}");
        run_job(data, splits, cfg, arch, z, seed, inner).unwrap_or_else(|e| {
            let mut rec = RunRecord::new(ModelKind::Svi, arch, z, seed, cfg);
            rec.error = Some(e.to_string());
            rec.seal(cfg);
            JobResult {
                arch,
                latent_dim: z,
                seed,
                records: vec![rec],
                vae: None,
                svi: None,
                encoder: None,
                pace_lr: None,
                warm_start: None,
            }
        })
    });
    Ok(results)
}
