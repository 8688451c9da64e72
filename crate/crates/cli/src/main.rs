//! `mmse-icp`: simulate datasets, run discovery, benchmark sweeps and score
//! predictions.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 internal error.

mod bench;
mod failure;

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::BufReader;
use std::panic;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use mmse_icp::discover::{
    run, DiscoveryConfig, InvarianceProvider, Method, StatisticalProvider, EXHAUSTIVE_SCOPE_LIMIT,
};
use mmse_icp::evalkit::{score, ReferenceKind, ScoreReport};
use mmse_icp::invariance::InvarianceConfig;
use mmse_icp::regress::ModelKind;
use mmse_icp::scm::simulate;
use mmse_icp::sweep::{method_scope, SweepConfig};
use mmse_icp::{Dataset, GroundTruth};
use serde::{Deserialize, Serialize};

use failure::{Failure, Outcome};

#[derive(Parser)]
#[command(name = "mmse-icp", version, about = "Invariance-based causal parent discovery")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write simulated datasets, ground-truth sidecars and a manifest.
    Simulate(SweepArgs),
    /// Find the parents of Y in a dataset CSV.
    Discover(DiscoverArgs),
    /// Run a benchmark sweep into a resumable results directory.
    Bench(SweepArgs),
    /// Score a predicted parent set against a ground-truth sidecar.
    Score(ScoreArgs),
}

#[derive(Args)]
struct SweepArgs {
    /// Flat `key = value` sweep config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset name; replaces any `setup` in the config file.
    #[arg(long)]
    setup: Option<String>,
    /// Config override `key=value`; repeatable, applied in order.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Comma-separated methods.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    model: Option<String>,
    /// Worker threads; defaults to the available cores.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DiscoverArgs {
    /// Dataset CSV with header `env,X1,...,Xd,Y`.
    data: PathBuf,
    #[arg(long, default_value = "mmse_icp")]
    method: String,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value = "ols")]
    model: String,
    #[arg(long, default_value_t = 2)]
    max_depth: usize,
    /// Pre-selection size used when d exceeds the exhaustive limit.
    #[arg(long, default_value_t = 10)]
    scope_k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    /// Ground-truth sidecar.
    #[arg(long)]
    truth: PathBuf,
    /// Comma-separated 0-based covariate ids.
    #[arg(long, conflicts_with = "result", required_unless_present = "result")]
    predicted: Option<String>,
    /// JSON written by `discover`.
    #[arg(long)]
    result: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = panic::catch_unwind(|| dispatch(cli)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| p.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "panic".into());
        Err(Failure::internal(msg))
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            f.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Outcome<()> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Discover(a) => cmd_discover(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Score(a) => cmd_score(&a),
    }
}

fn resolve_sweep(a: &SweepArgs) -> Outcome<SweepConfig> {
    let mut config = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::usage(format!("{}: {e}", p.display())))?;
            let text = match &a.setup {
                Some(s) => format!("{text}\nsetup = {s}\n"),
                None => text,
            };
            SweepConfig::parse(&text).map_err(|e| Failure::from(e).context(p.display()))?
        }
        None => SweepConfig::preset(a.setup.as_deref().unwrap_or("custom"))?,
    };
    for o in &a.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Failure::usage(format!("--set expects KEY=VALUE, got `{o}`")))?;
        config
            .set(k.trim(), v.trim())
            .map_err(|e| Failure::usage(e.to_string()))?;
    }
    let flags = [
        ("seed", a.seed.map(|v| v.to_string())),
        ("alpha", a.alpha.map(|v| v.to_string())),
        ("methods", a.method.clone()),
        ("max_depth", a.max_depth.map(|v| v.to_string())),
        ("model", a.model.clone()),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            config.set(k, &v).map_err(|e| Failure::usage(e.to_string()))?;
        }
    }
    config.validate().map_err(|e| Failure::usage(e.to_string()))?;
    Ok(config)
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Outcome<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::data(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct SimulatedFile {
    graph: usize,
    draw: usize,
    n: usize,
    csv: String,
    truth: String,
    graph_seed: u64,
    scm_seed: u64,
    data_seed: u64,
}

#[derive(Serialize)]
struct SimulateManifest {
    config: String,
    files: Vec<SimulatedFile>,
}

fn cmd_simulate(a: &SweepArgs) -> Outcome<()> {
    let config = resolve_sweep(a)?;
    fs::create_dir_all(&a.out)?;
    let mut files = Vec::new();
    for unit in config.units() {
        let scm = config
            .build_scm(unit.graph, unit.draw)
            .map_err(|e| Failure::from(e).context(format!("graph {} draw {}", unit.graph, unit.draw)))?;
        let ds = simulate(&scm, unit.n, config.data_seed(&unit))?;
        let stem = format!("g{:03}_k{:03}_n{}", unit.graph, unit.draw, unit.n);
        let csv = format!("{stem}.csv");
        let truth = format!("{stem}.truth");
        ds.write_csv(File::create(a.out.join(&csv))?)?;
        fs::write(a.out.join(&truth), GroundTruth::from_dag(scm.dag()).to_text())?;
        files.push(SimulatedFile {
            graph: unit.graph,
            draw: unit.draw,
            n: unit.n,
            csv,
            truth,
            graph_seed: config.graph_seed(unit.graph),
            scm_seed: config.scm_seed(unit.graph, unit.draw),
            data_seed: config.data_seed(&unit),
        });
    }
    let count = files.len();
    write_json(
        &SimulateManifest {
            config: config.to_text(),
            files,
        },
        Some(&a.out.join("manifest.json")),
    )?;
    eprintln!("wrote {count} datasets to {}", a.out.display());
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct CandidateOut {
    subset: Vec<String>,
    mmse_hat: f64,
    p_value: f64,
}

#[derive(Serialize, Deserialize)]
struct DiscoverOut {
    method: Method,
    parents_hat: Vec<String>,
    parents_hat_ids: Vec<usize>,
    p_value: Option<f64>,
    no_invariant_set: bool,
    invariance_tests_run: usize,
    scope: Vec<String>,
    candidates: Vec<CandidateOut>,
    alpha: f64,
    model: ModelKind,
    max_depth: usize,
    wall_time_s: f64,
}

fn cmd_discover(a: &DiscoverArgs) -> Outcome<()> {
    let started = Instant::now();
    let method: Method = a.method.parse()?;
    let model: ModelKind = a.model.parse()?;
    let file = File::open(&a.data).map_err(|e| Failure::data(format!("{}: {e}", a.data.display())))?;
    let ds = Dataset::read_csv(BufReader::new(file)).map_err(|e| Failure::from(e).context(a.data.display()))?;
    if ds.env_count() < 2 {
        return Err(Failure::usage(format!(
            "{} has a single environment; invariance needs at least two",
            a.data.display()
        )));
    }
    let inv = InvarianceConfig {
        alpha: a.alpha,
        model,
        seed: a.seed,
        ..InvarianceConfig::default()
    };
    inv.validate()?;
    let dcfg = DiscoveryConfig {
        alpha: a.alpha,
        max_depth: a.max_depth,
        max_set_size: if ds.d() > EXHAUSTIVE_SCOPE_LIMIT {
            1
        } else {
            EXHAUSTIVE_SCOPE_LIMIT
        },
        ..DiscoveryConfig::default()
    };
    let provider = StatisticalProvider::new(&ds, inv)?;
    let scope = method_scope(&ds, method, a.scope_k, dcfg.fast_scope_limit);
    let r = run(method, &provider as &dyn InvarianceProvider, scope.as_deref(), &dcfg)?;
    let names = |ids: &[usize]| ids.iter().map(|&i| ds.column_names()[i].clone()).collect::<Vec<_>>();
    let out = DiscoverOut {
        method,
        parents_hat: names(&r.parents_hat),
        parents_hat_ids: r.parents_hat.clone(),
        p_value: r.p_value,
        no_invariant_set: r.no_invariant_set,
        invariance_tests_run: r.invariance_tests_run,
        scope: names(&r.scope),
        candidates: r
            .candidates
            .iter()
            .map(|c| CandidateOut {
                subset: names(&c.subset),
                mmse_hat: c.mmse_hat,
                p_value: c.p_value,
            })
            .collect(),
        alpha: a.alpha,
        model,
        max_depth: a.max_depth,
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    write_json(&out, a.out.as_deref())
}

fn cmd_bench(a: &SweepArgs) -> Outcome<()> {
    let config = resolve_sweep(a)?;
    let jobs = match a.jobs {
        Some(0) => return Err(Failure::usage("--jobs must be positive")),
        Some(j) => j,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let (written, total) = bench::run(&config, &a.out, jobs)?;
    eprintln!(
        "appended {written} rows ({total} total) to {}",
        a.out.join(bench::RESULTS).display()
    );
    Ok(())
}

#[derive(Serialize)]
struct ScoreOut {
    pa: ScoreReport,
    s_star: ScoreReport,
}

fn cmd_score(a: &ScoreArgs) -> Outcome<()> {
    let text = fs::read_to_string(&a.truth).map_err(|e| Failure::data(format!("{}: {e}", a.truth.display())))?;
    let truth = GroundTruth::parse(&text).map_err(|e| Failure::from(e).context(a.truth.display()))?;
    let predicted: BTreeSet<usize> = match (&a.predicted, &a.result) {
        (Some(list), _) => list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|_| Failure::usage(format!("`{s}` is not a covariate id")))
            })
            .collect::<Outcome<_>>()?,
        (None, Some(p)) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::data(format!("{}: {e}", p.display())))?;
            let out: DiscoverOut =
                serde_json::from_str(&text).map_err(|e| Failure::data(format!("{}: {e}", p.display())))?;
            out.parents_hat_ids.into_iter().collect()
        }
        (None, None) => return Err(Failure::usage("pass --predicted or --result")),
    };
    let dag = truth.dag();
    if let Some(&bad) = predicted.iter().find(|&&i| i >= dag.covariate_count()) {
        return Err(Failure::usage(format!(
            "covariate id {bad} is out of range for d={}",
            dag.covariate_count()
        )));
    }
    let out = ScoreOut {
        pa: score(&predicted, dag, ReferenceKind::Pa),
        s_star: score(&predicted, dag, ReferenceKind::SStar),
    };
    write_json(&out, a.out.as_deref())
}
