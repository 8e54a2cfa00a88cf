//! Acceptance suite. Prints one `criterion N: PASS|FAIL` line per criterion
//! and exits non-zero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use common::{
    anneal, least_squares, svi_grad_check, vae_grad_check, worst_relative_error, DECADE_SCHEDULE, KINK_MARGIN,
};
use pesvi::datagen::generate_dataset;
use pesvi::harness::{
    load_checkpoint, make_splits, run_grid, run_job, save_checkpoint, warm_start_study, Checkpoint, Dataset,
    GridConfig, JobResult, ModelKind, RunRecord, Splits,
};
use pesvi::inference::{pe_svi_batch, pe_svi_infer, refine_posterior, svi_infer_random, RefinementTrace};
use pesvi::nn::{build_decoder, ArchId, ArchSpec};
use pesvi::par::{self, Execution};
use pesvi::probdist::{gaussian_logpdf_diag, kl_diag_to_std_normal, LatentGaussian, RngStream};
use pesvi::pseudo_encoder::{train_pseudo_encoder, EncoderTargets};
use pesvi::svi::{init_posterior_table, train_early_decoder, train_early_decoder_from, TrainConfig};
use pesvi::vae::train_vae;
use statrs::distribution::{Continuous, Normal};
use statrs::statistics::Distribution;

const LATENT_DIMS: [usize; 3] = [4, 8, 16];
const ARCHS: [ArchId; 2] = [ArchId::A1, ArchId::A2];

struct Verdict {
    pass: bool,
    summary: String,
    details: Vec<String>,
}

impl Verdict {
    fn new(pass: bool, summary: String) -> Self {
        Self {
            pass,
            summary,
            details: Vec::new(),
        }
    }
}

fn print_verdict(n: usize, elapsed: Duration, v: &Verdict) {
    let tag = if v.pass { "PASS" } else { "FAIL" };
    println!("criterion {n}: {tag} [{:.1}s] {}", elapsed.as_secs_f64(), v.summary);
    for d in &v.details {
        println!("    {d}");
    }
}

struct Desk {
    data: Dataset,
    splits: Splits,
    jobs: Vec<JobResult>,
    grid_time: Duration,
}

impl Desk {
    fn job(&self, arch: ArchId, z: usize, seed: u64) -> &JobResult {
        self.jobs
            .iter()
            .find(|j| j.arch == arch && j.latent_dim == z && j.seed == seed)
            .expect("job in grid")
    }

    fn selected(&self, arch: ArchId, z: usize, seed: u64, model: ModelKind) -> Option<&RunRecord> {
        self.job(arch, z, seed).selected(model)
    }
}

fn desk_grid() -> GridConfig {
    GridConfig {
        archs: ARCHS.to_vec(),
        z_dims: LATENT_DIMS.to_vec(),
        warm_start: None,
        ..GridConfig::desk()
    }
}

fn build_desk() -> Desk {
    let started = Instant::now();
    let cfg = desk_grid();
    let data = Dataset::new(generate_dataset(&cfg.data).unwrap().data, "desk").unwrap();
    let splits = make_splits(data.len(), cfg.split_seed).unwrap();
    let jobs = run_grid(&data, &splits, &cfg, Execution::Parallel).unwrap();
    Desk {
        data,
        splits,
        jobs,
        grid_time: started.elapsed(),
    }
}

fn gradient_checks() -> Verdict {
    let mut rng = RngStream::new(2024);
    let mut worst = 0.0f64;
    let mut details = Vec::new();
    for arch in ArchId::ALL {
        let (mut arch_worst, mut accepted, mut redrawn) = (0.0f64, 0, 0);
        while accepted < 100 {
            let z = LATENT_DIMS[rng.below(3)];
            let d = 3 + rng.below(4);
            let batch = 1 + rng.below(3);
            let spec = ArchSpec::new(arch, z, d).unwrap();
            let (svi, vae) = (svi_grad_check(&spec, batch, &mut rng), vae_grad_check(&spec, batch, &mut rng));
            // Central differences are only valid away from ReLU kinks.
            if svi.relu_margin < KINK_MARGIN || vae.relu_margin < KINK_MARGIN {
                redrawn += 1;
                continue;
            }
            arch_worst = arch_worst.max(svi.error).max(vae.error);
            accepted += 1;
        }
        details.push(format!(
            "{arch}: max relative error {arch_worst:.2e} over 100 configurations ({redrawn} redrawn with a pre-activation within {KINK_MARGIN:.0e} of a kink)"
        ));
        worst = worst.max(arch_worst);
    }
    Verdict {
        pass: worst < 1e-4,
        summary: format!("max relative error {worst:.2e} (limit 1e-4)"),
        details,
    }
}

fn closed_forms() -> Verdict {
    let mut rng = RngStream::new(7);
    let (mut kl_err, mut lp_err, mut kl_min) = (0.0f64, 0.0f64, f64::INFINITY);
    for _ in 0..1000 {
        let dim = 1 + rng.below(16);
        let mean: Vec<f64> = (0..dim).map(|_| rng.uniform(-3.0, 3.0)).collect();
        let log_std: Vec<f64> = (0..dim).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let x: Vec<f64> = (0..dim).map(|_| rng.uniform(-5.0, 5.0)).collect();
        let q = LatentGaussian::new(mean.clone(), log_std.clone()).unwrap();

        // KL = cross-entropy against N(0, 1) minus entropy of q.
        let oracle_kl: f64 = mean
            .iter()
            .zip(&log_std)
            .map(|(&m, &s)| {
                let qj = Normal::new(m, s.exp()).unwrap();
                let cross = 0.5 * (2.0 * std::f64::consts::PI).ln() + 0.5 * (m * m + (2.0 * s).exp());
                cross - qj.entropy().unwrap()
            })
            .sum();
        let oracle_lp: f64 = (0..dim).map(|j| Normal::new(mean[j], log_std[j].exp()).unwrap().ln_pdf(x[j])).sum();
        let kl = kl_diag_to_std_normal(&q);
        let lp = gaussian_logpdf_diag(&x, &mean, &log_std).unwrap();
        kl_err = kl_err.max((kl - oracle_kl).abs() / oracle_kl.abs().max(1.0));
        lp_err = lp_err.max((lp - oracle_lp).abs() / oracle_lp.abs().max(1.0));
        kl_min = kl_min.min(kl);
    }
    let kl_zero = kl_diag_to_std_normal(&LatentGaussian::standard(8));
    let pass = kl_err <= 1e-10 && lp_err <= 1e-10 && kl_zero == 0.0 && kl_min >= 0.0;
    Verdict::new(
        pass,
        format!("kl err {kl_err:.1e}, logpdf err {lp_err:.1e}, kl(0,0) = {kl_zero}, min kl {kl_min:.3e}"),
    )
}

fn linear_fixed_point(desk: &Desk) -> Verdict {
    let (z, d) = (8, desk.data.dim());
    let spec = ArchSpec::new(ArchId::A1, z, d).unwrap();
    let decoder = build_decoder(&spec, 31).unwrap();

    // Pseudo-encoder fitted to frozen-decoder SVI posteriors of other rows.
    let fit_ids: Vec<usize> = (50..250).collect();
    let fit_rows = desk.data.subset(&fit_ids);
    let cfg = TrainConfig {
        model_lr: 0.0,
        epochs: 300,
        ..TrainConfig::default()
    };
    let table = init_posterior_table(fit_ids.len(), z, 1).unwrap();
    let svi = train_early_decoder_from(&fit_rows, decoder.clone(), table, &cfg).unwrap();
    let enc_cfg = TrainConfig {
        model_lr: 1e-2,
        ..cfg
    };
    let encoder = train_pseudo_encoder(&fit_rows, &EncoderTargets::from_table(&svi.table), &spec, &enc_cfg)
        .unwrap()
        .encoder;

    let (lr, steps) = DECADE_SCHEDULE[0];
    let (mut random_worst, mut pe_worst) = (0.0f64, 0.0f64);
    for i in 0..50 {
        let x = desk.data.rows.row(i);
        let oracle = least_squares(&decoder, x);
        let mut rng = RngStream::with_stream(3, i as u64);
        let (q, _) = svi_infer_random(&decoder, x, steps, lr, &mut rng).unwrap();
        random_worst = random_worst.max(worst_relative_error(&anneal(&decoder, q, x, &mut rng).mean, &oracle));
        let (q, _) = pe_svi_infer(&decoder, &encoder, x, steps, lr, &mut rng).unwrap();
        pe_worst = pe_worst.max(worst_relative_error(&anneal(&decoder, q, x, &mut rng).mean, &oracle));
    }
    Verdict::new(
        random_worst <= 1e-3 && pe_worst <= 1e-3,
        format!("worst relative error: random init {random_worst:.2e}, encoder init {pe_worst:.2e} (limit 1e-3)"),
    )
}

fn train_loss(desk: &Desk, arch: ArchId, z: usize, seed: u64, model: ModelKind) -> f64 {
    desk.selected(arch, z, seed, model)
        .and_then(|r| r.train_loss)
        .unwrap_or(f64::INFINITY)
}

fn amortization_gap(desk: &Desk) -> Verdict {
    let seeds = &desk_grid().seeds;
    let mut pass = desk.grid_time < Duration::from_secs(300);
    let mut details = Vec::new();
    let mut cells_ok = 0;
    for arch in ARCHS {
        for z in LATENT_DIMS {
            let (mut half, mut below_pe, mut pe_below_vae) = (0, 0, 0);
            let mut ratios = Vec::new();
            for &seed in seeds {
                let svi = train_loss(desk, arch, z, seed, ModelKind::Svi);
                let vae = train_loss(desk, arch, z, seed, ModelKind::Vae);
                let pe0 = train_loss(desk, arch, z, seed, ModelKind::PeSvi0);
                half += usize::from(svi <= 0.5 * vae);
                below_pe += usize::from(svi <= pe0);
                pe_below_vae += usize::from(pe0 <= vae);
                ratios.push(format!("{:.3}/{:.3}/{:.3}", svi, vae, pe0));
            }
            let ok = half >= 2 && below_pe >= 2 && pe_below_vae >= 2;
            cells_ok += usize::from(ok);
            pass &= ok;
            details.push(format!(
                "{arch} z{z}: SVI<=0.5*VAE {half}/3, SVI<=PE-SVI-0 {below_pe}/3, PE-SVI-0<=VAE {pe_below_vae}/3; train SVI/VAE/PE-SVI-0 per seed {}",
                ratios.join(" ")
            ));
        }
    }
    Verdict {
        pass,
        summary: format!(
            "{cells_ok}/6 (arch, |z|) cells satisfy all orderings; desk grid took {:.0}s (limit 300s)",
            desk.grid_time.as_secs_f64()
        ),
        details,
    }
}

fn warm_start(desk: &Desk) -> Verdict {
    let started = Instant::now();
    let cfg = GridConfig::desk();
    let ws = cfg.warm_start.clone().expect("desk warm-start settings");
    let ids = &desk.splits.test[..ws.points];
    let rows = desk.data.subset(ids);
    let mut pass = true;
    let mut details = Vec::new();
    for arch in ARCHS {
        let job = desk.job(arch, 8, 0);
        let (Some(svi), Some(encoder), Some(pace_lr)) = (&job.svi, &job.encoder, job.pace_lr) else {
            details.push(format!("{arch} z8: missing trained models"));
            pass = false;
            continue;
        };
        let report =
            warm_start_study(&svi.decoder, encoder, &rows, ids, pace_lr, cfg.pace_k, &ws, 0, Execution::Parallel)
                .unwrap();
        let ratio = report.step_ratio();
        let excess = report.pe_k_excess();
        let ok = ratio <= 0.05 && excess <= 0.10;
        pass &= ok;
        details.push(format!(
            "{arch} z8: mean steps PE-SVI {:.1} vs random {:.1} (ratio {ratio:.3}, limit 0.05); medians {:.1} vs {:.1}; PE reached target on {:.0}% of points; PE-SVI-{} loss {:.4} vs converged {:.4} ({:+.1}%, limit +10%); pace lr {pace_lr}",
            report.pe_mean_steps,
            report.random_mean_steps,
            report.pe_median_steps,
            report.random_median_steps,
            100.0 * report.pe_reached,
            report.k,
            report.pe_k_loss,
            report.converged_loss,
            100.0 * excess,
        ));
    }
    let elapsed = started.elapsed();
    pass &= elapsed < Duration::from_secs(180);
    Verdict {
        pass,
        summary: format!("{} test points per decoder, a1 and a2 at |z|=8", ids.len()),
        details,
    }
}

fn latent_trend(desk: &Desk) -> Verdict {
    let seeds = desk_grid().seeds;
    let mut pass = true;
    let mut details = Vec::new();
    for arch in ARCHS {
        let mut good = 0;
        let mut per_seed = Vec::new();
        for &seed in &seeds {
            let losses: Vec<f64> = LATENT_DIMS
                .iter()
                .map(|&z| {
                    desk.selected(arch, z, seed, ModelKind::Svi)
                        .and_then(|r| r.test_loss)
                        .unwrap_or(f64::INFINITY)
                })
                .collect();
            let monotone = losses.windows(2).all(|w| w[1] <= w[0]);
            good += usize::from(monotone);
            per_seed.push(format!("seed {seed}: {:.4} {:.4} {:.4}", losses[0], losses[1], losses[2]));
        }
        pass &= good >= 2;
        details.push(format!("{arch}: non-increasing in {good}/3 seeds ({})", per_seed.join("; ")));
    }
    Verdict {
        pass,
        summary: "SVI test loss over |z| = 4, 8, 16".into(),
        details,
    }
}

fn without_timing(mut records: Vec<RunRecord>) -> Vec<RunRecord> {
    for r in &mut records {
        r.wall_clock_ms = 0;
    }
    records
}

fn determinism(desk: &Desk) -> Verdict {
    let train = desk.data.subset(&desk.splits.train);
    let spec = ArchSpec::new(ArchId::A2, 4, desk.data.dim()).unwrap();
    let cfg = TrainConfig {
        epochs: 15,
        ..TrainConfig::default()
    };
    let mut checks = Vec::new();

    let (a, b) = (train_vae(&train, &spec, &cfg).unwrap(), train_vae(&train, &spec, &cfg).unwrap());
    checks.push(("vae training", a.trace == b.trace && a.decoder == b.decoder && a.encoder == b.encoder));

    let (a, b) = (
        train_early_decoder(&train, &spec, &cfg).unwrap(),
        train_early_decoder(&train, &spec, &cfg).unwrap(),
    );
    checks.push(("svi training", a.trace == b.trace && a.decoder == b.decoder && a.table.bit_eq(&b.table)));

    let targets = EncoderTargets::from_table(&a.table);
    let (e1, e2) = (
        train_pseudo_encoder(&train, &targets, &spec, &cfg).unwrap(),
        train_pseudo_encoder(&train, &targets, &spec, &cfg).unwrap(),
    );
    checks.push(("pseudo-encoder training", e1.trace == e2.trace && e1.encoder == e2.encoder));

    let test = desk.data.subset(&desk.splits.test);
    let ids = &desk.splits.test;
    let runs = |exec| pe_svi_batch(&a.decoder, &e1.encoder, &test, ids, 25, 0.1, 9, exec).unwrap();
    checks.push(("batched inference, parallel vs sequential", runs(Execution::Parallel) == runs(Execution::Sequential)));

    let grid = GridConfig {
        epochs: 10,
        svi_eval_steps: 20,
        ..desk_grid()
    };
    let job = || without_timing(run_job(&desk.data, &desk.splits, &grid, ArchId::A2, 4, 1, Execution::Parallel).unwrap().records);
    checks.push(("grid job records", job() == job()));

    // Store a trace, then rebuild it from a reloaded checkpoint.
    let dir = tempfile::tempdir().unwrap();
    let ckpt_path = dir.path().join("model.json");
    let trace_path = dir.path().join("trace.json");
    let x = test.row(0);
    let (_, pe_trace) = pe_svi_infer(&a.decoder, &e1.encoder, x, 25, 0.1, &mut RngStream::new(5)).unwrap();
    let (_, table_trace) = refine_posterior(&a.decoder, a.table.entry(3), x, 25, 0.1, &mut RngStream::new(6)).unwrap();
    let ckpt = Checkpoint::new(spec)
        .with_decoder(&a.decoder)
        .with_encoder(&e1.encoder)
        .with_posterior(&a.table);
    save_checkpoint(&ckpt, &ckpt_path).unwrap();
    std::fs::write(&trace_path, serde_json::to_string(&(&pe_trace, &table_trace)).unwrap()).unwrap();

    let loaded = load_checkpoint(&ckpt_path).unwrap();
    let (stored_pe, stored_table): (RefinementTrace, RefinementTrace) =
        serde_json::from_str(&std::fs::read_to_string(&trace_path).unwrap()).unwrap();
    let (dec, enc) = (loaded.decoder().unwrap(), loaded.encoder().unwrap());
    let (_, replay_pe) = pe_svi_infer(&dec, &enc, x, 25, 0.1, &mut RngStream::new(5)).unwrap();
    let (_, replay_table) =
        refine_posterior(&dec, loaded.posterior().unwrap().entry(3), x, 25, 0.1, &mut RngStream::new(6)).unwrap();
    checks.push(("checkpoint replay", replay_pe == stored_pe && replay_table == stored_table));
    checks.push(("checkpoint bytes", loaded.to_json().unwrap() == std::fs::read_to_string(&ckpt_path).unwrap()));

    let failed: Vec<&str> = checks.iter().filter(|(_, ok)| !ok).map(|(name, _)| *name).collect();
    Verdict::new(
        failed.is_empty(),
        if failed.is_empty() {
            format!("{} repeat and replay checks bit-identical", checks.len())
        } else {
            format!("mismatch in: {}", failed.join(", "))
        },
    )
}

fn main() {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(8);
    let all_passed = par::with_workers(workers, || {
        let suite = Instant::now();
        let mut all = true;
        let mut run = |n: usize, f: &mut dyn FnMut() -> Verdict| {
            let started = Instant::now();
            let v = f();
            print_verdict(n, started.elapsed(), &v);
            all &= v.pass;
        };
        run(1, &mut gradient_checks);
        run(2, &mut closed_forms);
        let desk = build_desk();
        run(3, &mut || linear_fixed_point(&desk));
        run(4, &mut || amortization_gap(&desk));
        run(5, &mut || warm_start(&desk));
        run(6, &mut || latent_trend(&desk));
        run(7, &mut || determinism(&desk));
        let total = suite.elapsed();
        run(8, &mut || {
            Verdict::new(
                total < Duration::from_secs(600),
                format!("criteria 1-7 took {:.0}s on {workers} worker(s) (limit 600s)", total.as_secs_f64()),
            )
        });
        all
    });
    if !all_passed {
        std::process::exit(1);
    }
}
