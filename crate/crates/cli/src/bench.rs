//! Resumable benchmark sweeps.
//!
//! The output directory holds `manifest.json` (the resolved config),
//! `results.csv` (one row per unit and method, appended in unit order) and
//! `summary.json`. Rows are written in unit order whatever the worker count, so
//! two complete runs differ only in the wall-time columns.

use std::collections::BTreeSet;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::Path;

use mmse_icp::discover::Method;
use mmse_icp::sweep::{run_unit, summarize, ResultRow, SummaryRow, SweepConfig, Unit};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::failure::{Failure, Outcome};

pub const RESULTS: &str = "results.csv";
pub const SUMMARY: &str = "summary.json";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    config: String,
    units: usize,
    rows: usize,
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    setup: &'a str,
    seed: u64,
    rows: usize,
    groups: Vec<SummaryRow>,
}

/// Column header of `results.csv`, taken from the row type itself.
pub fn header() -> String {
    let row = ResultRow {
        graph: 0,
        draw: 0,
        n: 0,
        method: Method::Icp,
        status: String::new(),
        parents_hat: String::new(),
        jaccard_pa: None,
        f1_pa: None,
        recall_pa: None,
        jaccard_s_star: None,
        f1_s_star: None,
        recall_s_star: None,
        invariance_tests_run: None,
        scm_seed: 0,
        data_seed: 0,
        wall_time_s: 0.0,
        message: String::new(),
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.serialize(&row).expect("in-memory write");
    let bytes = w.into_inner().expect("in-memory flush");
    let text = String::from_utf8(bytes).expect("csv output is utf-8");
    text.lines().next().unwrap_or_default().to_string() + "\n"
}

/// Drops a trailing partial line left by an interrupted write and returns the
/// rows already on disk.
fn recover(path: &Path) -> Outcome<Vec<ResultRow>> {
    let mut text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    if !text.is_empty() && !text.ends_with('\n') {
        let keep = text.rfind('\n').map_or(0, |i| i + 1);
        text.truncate(keep);
        fs::write(path, &text)?;
    }
    if text.is_empty() {
        return Ok(Vec::new());
    }
    if !text.starts_with(&header()) {
        return Err(Failure::data(format!(
            "{} does not start with the results header",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for row in csv::Reader::from_reader(text.as_bytes()).deserialize() {
        rows.push(row.map_err(|e| Failure::from(e).context(path.display()))?);
    }
    Ok(rows)
}

pub fn run(config: &SweepConfig, out: &Path, jobs: usize) -> Outcome<(usize, usize)> {
    config.validate()?;
    fs::create_dir_all(out)?;
    let text = config.to_text();
    let manifest_path = out.join(MANIFEST);
    if let Ok(existing) = fs::read_to_string(&manifest_path) {
        let m: Manifest =
            serde_json::from_str(&existing).map_err(|e| Failure::data(format!("{}: {e}", manifest_path.display())))?;
        if m.config != text {
            return Err(Failure::usage(format!(
                "{} holds a different sweep; use a fresh output directory",
                out.display()
            )));
        }
    }
    let units = config.units();
    let total_rows = units.len() * config.methods.len();
    let manifest = Manifest {
        config: text,
        units: units.len(),
        rows: total_rows,
    };
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)? + "\n")?;

    let results_path = out.join(RESULTS);
    let existing = recover(&results_path)?;
    let done: BTreeSet<(usize, usize, usize, Method)> = existing.iter().map(ResultRow::key).collect();
    let mut file = OpenOptions::new().create(true).append(true).open(&results_path)?;
    if existing.is_empty() && file.metadata()?.len() == 0 {
        file.write_all(header().as_bytes())?;
    }
    let pending: Vec<Unit> = units
        .into_iter()
        .filter(|u| {
            config
                .methods
                .iter()
                .any(|&m| !done.contains(&(u.graph, u.draw, u.n, m)))
        })
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Failure::internal(e.to_string()))?;
    let mut written = 0;
    for chunk in pending.chunks(jobs.max(1) * 4) {
        let rows: Vec<Vec<ResultRow>> = pool.install(|| chunk.par_iter().map(|u| run_unit(config, u)).collect());
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        for row in rows.into_iter().flatten().filter(|r| !done.contains(&r.key())) {
            w.serialize(&row)?;
            written += 1;
        }
        let bytes = w.into_inner().map_err(|e| Failure::internal(e.to_string()))?;
        // One write per chunk keeps every completed chunk whole on disk.
        file.write_all(&bytes)?;
        file.flush()?;
    }
    drop(file);

    let mut rows = recover(&results_path)?;
    rows.sort_by_key(ResultRow::key);
    let summary = Summary {
        setup: &config.setup,
        seed: config.seed,
        rows: rows.len(),
        groups: summarize(&rows),
    };
    let mut f = File::create(out.join(SUMMARY))?;
    f.write_all((serde_json::to_string_pretty(&summary)? + "\n").as_bytes())?;
    Ok((written, rows.len()))
}
