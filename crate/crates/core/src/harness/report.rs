//! Result tables and trace files from stored run records.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::grid::{select_best, ModelKind, RunRecord};
use crate::nn::ArchId;

pub fn save_records(records: &[RunRecord], path: &Path) -> Result<()> {
    let mut s = serde_json::to_string_pretty(records)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

pub fn load_records(path: &Path) -> Result<Vec<RunRecord>> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

fn short(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

/// The reported record per (arch, model, |z|): best validation loss among the
/// per-seed selections, ties to smaller rates then lower seed.
pub fn report_rows(records: &[RunRecord]) -> Vec<&RunRecord> {
    let mut groups: BTreeMap<(ArchId, ModelKind, usize), Vec<&RunRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.selected) {
        groups.entry((r.arch, r.model, r.latent_dim)).or_default().push(r);
    }
    groups
        .into_values()
        .filter_map(|group| {
            let owned: Vec<RunRecord> = group.iter().map(|r| (*r).clone()).collect();
            select_best(&owned).map(|i| group[i])
        })
        .collect()
}

pub fn trace_file_name(r: &RunRecord) -> String {
    format!(
        "{}_z{}_{}_seed{}_{}.tsv",
        r.arch,
        r.latent_dim,
        r.model.label(r.refine_steps).to_lowercase(),
        r.seed,
        r.config_hash
    )
}

pub fn results_csv(rows: &[&RunRecord], dataset: &str) -> String {
    let mut s = String::from(
        "dataset,arch,model,latent_dim,seed,model_lr,latent_lr,encoder_lr,refine_lr,refine_steps,train_loss,val_loss,test_loss,steps_to_converge,config_hash\n",
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{dataset},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.arch,
            r.model.label(r.refine_steps),
            r.latent_dim,
            r.seed,
            cell(r.model_lr),
            cell(r.latent_lr),
            cell(r.encoder_lr),
            cell(r.refine_lr),
            r.refine_steps,
            cell(r.train_loss),
            cell(r.val_loss),
            cell(r.test_loss),
            cell(r.steps_to_converge),
            r.config_hash
        );
    }
    s
}

pub fn results_markdown(rows: &[&RunRecord], dataset: &str) -> String {
    let mut s = String::new();
    let mut archs: Vec<ArchId> = rows.iter().map(|r| r.arch).collect();
    archs.dedup();
    for arch in archs {
        let _ = writeln!(s, "## {dataset} / {arch}\n");
        s.push_str("| Model | \\|z\\| | train | val | test | steps to converge |\n");
        s.push_str("|---|---|---|---|---|---|\n");
        for r in rows.iter().filter(|r| r.arch == arch) {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} | {} |",
                r.model.label(r.refine_steps),
                r.latent_dim,
                short(r.train_loss),
                short(r.val_loss),
                short(r.test_loss),
                r.steps_to_converge.map_or_else(|| "-".to_string(), |v| format!("{v:.1}"))
            );
        }
        s.push('\n');
    }
    s
}

pub fn trace_tsv(trace: &[f64]) -> String {
    let mut s = String::from("step\tloss\n");
    for (i, v) in trace.iter().enumerate() {
        let _ = writeln!(s, "{i}\t{v}");
    }
    s
}

/// Writes `results.csv`, `results.md` and `traces/*.tsv` under `out_dir`.
/// Output depends only on `records`, so regenerating is byte-identical.
pub fn emit_report(records: &[RunRecord], dataset: &str, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let rows = report_rows(records);
    if rows.is_empty() {
        return Err(Error::InvalidArgument("no selected records to report".into()));
    }
    let traces = out_dir.join("traces");
    std::fs::create_dir_all(&traces)?;
    let mut written = Vec::new();
    let csv_path = out_dir.join("results.csv");
    std::fs::write(&csv_path, results_csv(&rows, dataset))?;
    written.push(csv_path);
    let md_path = out_dir.join("results.md");
    std::fs::write(&md_path, results_markdown(&rows, dataset))?;
    written.push(md_path);
    for r in &rows {
        let path = traces.join(trace_file_name(r));
        std::fs::write(&path, trace_tsv(&r.test_trace))?;
        written.push(path);
    }
    Ok(written)
}
