//! Benchmark sweeps: presets, the flat `key = value` config format, and the
//! per-row runner shared by the CLI.
//!
//! A sweep is a grid of units `(graph, draw, n)`. Every unit is generated from
//! seeds derived from the master seed alone, so units can run in any order and
//! on any number of workers.

use std::collections::BTreeSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::discover::{run, DiscoveryConfig, InvarianceProvider, Method, StatisticalProvider, EXHAUSTIVE_SCOPE_LIMIT};
use crate::error::{Error, Result};
use crate::evalkit::{reference_set, set_metrics, ReferenceKind};
use crate::invariance::InvarianceConfig;
use crate::regress::{l2_boost_select, ModelKind};
use crate::rng::derive_seed;
use crate::scm::{sample_random_dag, simulate, CoefficientRange, InterventionKind, Mechanism, Scm, ScmParams};
use crate::Dataset;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub setup: String,
    pub d: usize,
    pub p_edge: f64,
    /// Inclusive range; each graph draws its intervention count uniformly.
    pub n_int: (usize, usize),
    pub mechanism: Mechanism,
    pub intervention: InterventionKind,
    pub coefficients: CoefficientRange,
    pub sample_sizes: Vec<usize>,
    pub graphs: usize,
    pub coefficient_draws: usize,
    pub methods: Vec<Method>,
    pub alpha: f64,
    pub max_depth: usize,
    pub model: ModelKind,
    pub seed: u64,
    /// Pre-selection size for the exhaustive methods when `d` exceeds their limit.
    pub mb_k: usize,
    pub fast_scope_limit: usize,
}

pub const PRESETS: [&str; 9] = [
    "p1_full",
    "p2_kint",
    "p3_imperfect",
    "p4_noise",
    "p5_sparse100",
    "p6_dense100",
    "nl1",
    "nl2",
    "nl3",
];

impl SweepConfig {
    pub fn preset(name: &str) -> Result<Self> {
        use InterventionKind::*;
        use Mechanism::*;
        let (d, p_edge, n_int, mechanism, intervention) = match name {
            "p1_full" => (6, 0.240, (6, 6), Linear, Perfect),
            "p2_kint" => (6, 0.145, (1, 1), Linear, Perfect),
            "p3_imperfect" => (6, 0.158, (1, 1), Linear, Imperfect),
            "p4_noise" => (6, 0.153, (1, 1), Linear, Noise),
            "p5_sparse100" => (100, 0.010, (1, 5), Linear, Perfect),
            "p6_dense100" => (100, 0.050, (1, 5), Linear, Perfect),
            "nl1" => (6, 0.145, (1, 1), Nonlinear1, Perfect),
            "nl2" => (6, 0.145, (1, 1), Nonlinear2, Perfect),
            "nl3" => (6, 0.145, (1, 1), Nonlinear3, Perfect),
            "custom" => (6, 0.145, (1, 1), Linear, Perfect),
            other => {
                return Err(Error::arg(format!(
                    "unknown setup `{other}` (expected custom or one of {})",
                    PRESETS.join(", ")
                )))
            }
        };
        Ok(SweepConfig {
            setup: name.to_string(),
            d,
            p_edge,
            n_int,
            mechanism,
            intervention,
            coefficients: CoefficientRange::Literal,
            sample_sizes: vec![100, 1_000, 10_000, 100_000],
            graphs: 100,
            coefficient_draws: 50,
            methods: Method::ALL.to_vec(),
            alpha: 0.05,
            max_depth: 2,
            model: if mechanism.is_linear() {
                ModelKind::Ols
            } else {
                ModelKind::Gbt
            },
            seed: 0,
            mb_k: 10,
            fast_scope_limit: 100,
        })
    }

    /// Parses the flat config format: one `key = value` per line, `#` comments.
    /// `setup` is applied first; the remaining keys override it in file order.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(i + 1, format!("expected `key = value`, got `{line}`")))?;
            pairs.push((i + 1, k.trim().to_string(), v.trim().to_string()));
        }
        let setup = pairs.iter().rev().find(|(_, k, _)| k == "setup");
        let mut config = SweepConfig::preset(setup.map_or("custom", |(_, _, v)| v.as_str()))
            .map_err(|e| Error::parse(setup.map_or(1, |p| p.0), e.to_string()))?;
        for (line, k, v) in &pairs {
            if k != "setup" {
                config.set(k, v).map_err(|e| Error::parse(*line, e.to_string()))?;
            }
        }
        config.validate()?;
        Ok(config)
    }

    /// Applies one override; `setup` resets every other field to the preset.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::arg(format!("`{key}` expects a number, got `{v}`")))
        }
        match key {
            "setup" => *self = SweepConfig::preset(value)?,
            "d" => self.d = num(key, value)?,
            "p_edge" => self.p_edge = num(key, value)?,
            "n_int" => {
                self.n_int = match value.split_once('-') {
                    Some((a, b)) => (num(key, a.trim())?, num(key, b.trim())?),
                    None => {
                        let k = num(key, value)?;
                        (k, k)
                    }
                }
            }
            "mechanism" => self.mechanism = value.parse()?,
            "intervention" => self.intervention = value.parse()?,
            "coefficients" => self.coefficients = value.parse()?,
            "sample_sizes" => {
                self.sample_sizes = list(value).map(|v| num(key, v)).collect::<Result<_>>()?;
            }
            "graphs" => self.graphs = num(key, value)?,
            "coefficient_draws" => self.coefficient_draws = num(key, value)?,
            "methods" => self.methods = list(value).map(str::parse).collect::<Result<_>>()?,
            "alpha" => self.alpha = num(key, value)?,
            "max_depth" => self.max_depth = num(key, value)?,
            "model" => self.model = value.parse()?,
            "seed" => self.seed = num(key, value)?,
            "mb_k" => self.mb_k = num(key, value)?,
            "fast_scope_limit" => self.fast_scope_limit = num(key, value)?,
            other => return Err(Error::arg(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.n_int;
        if self.d == 0 || lo == 0 || lo > hi || hi > self.d {
            return Err(Error::arg(format!("n_int range {lo}-{hi} must lie in 1..={}", self.d)));
        }
        if !(self.p_edge > 0.0 && self.p_edge <= 1.0) {
            return Err(Error::arg("p_edge must lie in (0, 1]"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::arg("alpha must lie in (0, 1)"));
        }
        if self.coefficient_draws == 0 || self.sample_sizes.is_empty() || self.methods.is_empty() {
            return Err(Error::arg(
                "coefficient_draws, sample_sizes and methods must be non-empty",
            ));
        }
        if self.sample_sizes.iter().any(|&n| n < 4) {
            return Err(Error::arg("sample sizes must be at least 4"));
        }
        if self.max_depth == 0 || self.mb_k == 0 || self.fast_scope_limit == 0 {
            return Err(Error::arg("max_depth, mb_k and fast_scope_limit must be positive"));
        }
        Ok(())
    }

    /// Serializes back to the flat format; `parse(to_text())` round-trips.
    pub fn to_text(&self) -> String {
        let join = |v: Vec<String>| v.join(",");
        format!(
            "setup = {}\nd = {}\np_edge = {:?}\nn_int = {}-{}\nmechanism = {}\nintervention = {}\ncoefficients = {}\n\
             sample_sizes = {}\ngraphs = {}\ncoefficient_draws = {}\nmethods = {}\nalpha = {:?}\nmax_depth = {}\n\
             model = {}\nseed = {}\nmb_k = {}\nfast_scope_limit = {}\n",
            self.setup,
            self.d,
            self.p_edge,
            self.n_int.0,
            self.n_int.1,
            self.mechanism,
            self.intervention,
            self.coefficients,
            join(self.sample_sizes.iter().map(|n| n.to_string()).collect()),
            self.graphs,
            self.coefficient_draws,
            join(self.methods.iter().map(|m| m.to_string()).collect()),
            self.alpha,
            self.max_depth,
            self.model,
            self.seed,
            self.mb_k,
            self.fast_scope_limit,
        )
    }

    /// Every `(graph, draw, n)` unit in row order.
    pub fn units(&self) -> Vec<Unit> {
        let mut out = Vec::new();
        for graph in 0..self.graphs {
            for draw in 0..self.coefficient_draws {
                for &n in &self.sample_sizes {
                    out.push(Unit { graph, draw, n });
                }
            }
        }
        out
    }

    pub fn graph_seed(&self, graph: usize) -> u64 {
        derive_seed(self.seed, graph as u64)
    }

    pub fn scm_seed(&self, graph: usize, draw: usize) -> u64 {
        derive_seed(self.graph_seed(graph), 1_000 + draw as u64)
    }

    pub fn data_seed(&self, unit: &Unit) -> u64 {
        derive_seed(self.scm_seed(unit.graph, unit.draw), unit.n as u64)
    }

    /// The model of graph `graph`, coefficient draw `draw`.
    pub fn build_scm(&self, graph: usize, draw: usize) -> Result<Scm> {
        let gs = self.graph_seed(graph);
        let (lo, hi) = self.n_int;
        let n_int = lo + (derive_seed(gs, 0) % (hi - lo + 1) as u64) as usize;
        let params = ScmParams {
            d: self.d,
            p_edge: self.p_edge,
            n_int,
            mechanism: self.mechanism,
            intervention: self.intervention,
            coefficients: self.coefficients,
        };
        let dag = sample_random_dag(&params, derive_seed(gs, 1))?;
        Scm::with_random_parameters(
            dag,
            self.mechanism,
            self.intervention,
            self.coefficients,
            self.scm_seed(graph, draw),
        )
    }

    pub fn discovery_config(&self) -> DiscoveryConfig {
        DiscoveryConfig {
            alpha: self.alpha,
            max_depth: self.max_depth,
            max_set_size: if self.d > EXHAUSTIVE_SCOPE_LIMIT {
                1
            } else {
                EXHAUSTIVE_SCOPE_LIMIT
            },
            ias_alpha0: None,
            fast_scope_limit: self.fast_scope_limit,
        }
    }

    pub fn invariance_config(&self, unit: &Unit) -> InvarianceConfig {
        InvarianceConfig {
            alpha: self.alpha,
            model: self.model,
            seed: derive_seed(self.data_seed(unit), 7),
            ..InvarianceConfig::default()
        }
    }
}

fn list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Unit {
    pub graph: usize,
    pub draw: usize,
    pub n: usize,
}

/// Search scope for `method`: every covariate unless the method's limit is
/// exceeded, in which case the L2-boosting pre-selection (sorted).
pub fn method_scope(dataset: &Dataset, method: Method, mb_k: usize, fast_limit: usize) -> Option<Vec<usize>> {
    let d = dataset.d();
    let k = match method {
        Method::FastIcp if d > fast_limit => fast_limit,
        Method::FastIcp => return None,
        _ if d > EXHAUSTIVE_SCOPE_LIMIT => mb_k.min(EXHAUSTIVE_SCOPE_LIMIT),
        _ => return None,
    };
    let cols: Vec<&[f64]> = dataset.columns().iter().map(Vec::as_slice).collect();
    let mut s = l2_boost_select(&cols, dataset.y(), k);
    s.sort_unstable();
    Some(s)
}

/// One results-CSV row. `status` is `ok` or `error`; on error the metric
/// columns are empty and `message` explains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub graph: usize,
    pub draw: usize,
    pub n: usize,
    pub method: Method,
    pub status: String,
    pub parents_hat: String,
    pub jaccard_pa: Option<f64>,
    pub f1_pa: Option<f64>,
    pub recall_pa: Option<f64>,
    pub jaccard_s_star: Option<f64>,
    pub f1_s_star: Option<f64>,
    pub recall_s_star: Option<f64>,
    pub invariance_tests_run: Option<usize>,
    pub scm_seed: u64,
    pub data_seed: u64,
    pub wall_time_s: f64,
    pub message: String,
}

impl ResultRow {
    fn error(unit: &Unit, method: Method, config: &SweepConfig, message: String, wall: f64) -> Self {
        ResultRow {
            graph: unit.graph,
            draw: unit.draw,
            n: unit.n,
            method,
            status: "error".into(),
            parents_hat: String::new(),
            jaccard_pa: None,
            f1_pa: None,
            recall_pa: None,
            jaccard_s_star: None,
            f1_s_star: None,
            recall_s_star: None,
            invariance_tests_run: None,
            scm_seed: config.scm_seed(unit.graph, unit.draw),
            data_seed: config.data_seed(unit),
            wall_time_s: wall,
            message,
        }
    }

    pub fn key(&self) -> (usize, usize, usize, Method) {
        (self.graph, self.draw, self.n, self.method)
    }
}

/// Runs every configured method on one unit. Failures become `error` rows.
pub fn run_unit(config: &SweepConfig, unit: &Unit) -> Vec<ResultRow> {
    let started = Instant::now();
    let prepared = config.build_scm(unit.graph, unit.draw).and_then(|scm| {
        let ds = simulate(&scm, unit.n, config.data_seed(unit))?;
        Ok((scm, ds))
    });
    let (scm, ds) = match prepared {
        Ok(p) => p,
        Err(e) => {
            let wall = started.elapsed().as_secs_f64();
            return config
                .methods
                .iter()
                .map(|&m| ResultRow::error(unit, m, config, e.to_string(), wall))
                .collect();
        }
    };
    let provider = StatisticalProvider::new(&ds, config.invariance_config(unit));
    let dcfg = config.discovery_config();
    let pa = reference_set(scm.dag(), ReferenceKind::Pa);
    let s_star = reference_set(scm.dag(), ReferenceKind::SStar);
    config
        .methods
        .iter()
        .map(|&method| {
            let t0 = Instant::now();
            let outcome = provider.as_ref().map_err(|e| Error::arg(e.to_string())).and_then(|p| {
                let scope = method_scope(&ds, method, config.mb_k, config.fast_scope_limit);
                run(method, p as &dyn InvarianceProvider, scope.as_deref(), &dcfg)
            });
            let wall = t0.elapsed().as_secs_f64();
            match outcome {
                Err(e) => ResultRow::error(unit, method, config, e.to_string(), wall),
                Ok(r) => {
                    let predicted: BTreeSet<usize> = r.parents_hat.iter().copied().collect();
                    let (jp, fp, rp) = set_metrics(&predicted, &pa);
                    let (js, fs, rs) = set_metrics(&predicted, &s_star);
                    ResultRow {
                        graph: unit.graph,
                        draw: unit.draw,
                        n: unit.n,
                        method,
                        status: "ok".into(),
                        parents_hat: r
                            .parents_hat
                            .iter()
                            .map(|v| v.to_string())
                            .collect::<Vec<_>>()
                            .join(";"),
                        jaccard_pa: Some(jp),
                        f1_pa: Some(fp),
                        recall_pa: Some(rp),
                        jaccard_s_star: Some(js),
                        f1_s_star: Some(fs),
                        recall_s_star: Some(rs),
                        invariance_tests_run: Some(r.invariance_tests_run),
                        scm_seed: config.scm_seed(unit.graph, unit.draw),
                        data_seed: config.data_seed(unit),
                        wall_time_s: wall,
                        message: String::new(),
                    }
                }
            }
        })
        .collect()
}

/// Mean and standard error of one metric.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

impl MeanSe {
    pub fn of(values: &[f64]) -> Option<MeanSe> {
        let k = values.len();
        if k == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / k as f64;
        let se = if k < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64 / k as f64).sqrt()
        };
        Some(MeanSe { mean, se })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub n: usize,
    pub method: Method,
    pub rows: usize,
    pub errors: usize,
    pub jaccard_pa: Option<MeanSe>,
    pub f1_pa: Option<MeanSe>,
    pub recall_pa: Option<MeanSe>,
    pub jaccard_s_star: Option<MeanSe>,
    pub f1_s_star: Option<MeanSe>,
    pub recall_s_star: Option<MeanSe>,
    pub invariance_tests_run: Option<MeanSe>,
    pub wall_time_s: Option<MeanSe>,
}

/// Per `(n, method)` means ± standard errors over successful rows.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let keys: BTreeSet<(usize, Method)> = rows.iter().map(|r| (r.n, r.method)).collect();
    keys.into_iter()
        .map(|(n, method)| {
            let group: Vec<&ResultRow> = rows.iter().filter(|r| r.n == n && r.method == method).collect();
            let ok: Vec<&&ResultRow> = group.iter().filter(|r| r.status == "ok").collect();
            let stat =
                |f: &dyn Fn(&ResultRow) -> Option<f64>| MeanSe::of(&ok.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
            SummaryRow {
                n,
                method,
                rows: group.len(),
                errors: group.len() - ok.len(),
                jaccard_pa: stat(&|r| r.jaccard_pa),
                f1_pa: stat(&|r| r.f1_pa),
                recall_pa: stat(&|r| r.recall_pa),
                jaccard_s_star: stat(&|r| r.jaccard_s_star),
                f1_s_star: stat(&|r| r.f1_s_star),
                recall_s_star: stat(&|r| r.recall_s_star),
                invariance_tests_run: stat(&|r| r.invariance_tests_run.map(|c| c as f64)),
                wall_time_s: stat(&|r| Some(r.wall_time_s)),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_setup_table() {
        let p1 = SweepConfig::preset("p1_full").unwrap();
        assert_eq!(
            (p1.d, p1.p_edge, p1.n_int, p1.intervention),
            (6, 0.240, (6, 6), InterventionKind::Perfect)
        );
        let p5 = SweepConfig::preset("p5_sparse100").unwrap();
        assert_eq!((p5.d, p5.p_edge, p5.n_int), (100, 0.010, (1, 5)));
        assert_eq!(
            SweepConfig::preset("p4_noise").unwrap().intervention,
            InterventionKind::Noise
        );
        assert_eq!(SweepConfig::preset("nl2").unwrap().model, ModelKind::Gbt);
        for p in PRESETS {
            SweepConfig::preset(p).unwrap().validate().unwrap();
        }
        assert!(SweepConfig::preset("p9").is_err());
    }

    #[test]
    fn parse_applies_setup_then_overrides() {
        let c = SweepConfig::parse(
            "# demo\ngraphs = 3\nsetup = p2_kint\nn_int = 2-3\nmethods = icp, fast_icp\nsample_sizes = 100,1000\n",
        )
        .unwrap();
        assert_eq!(c.setup, "p2_kint");
        assert_eq!(c.graphs, 3);
        assert_eq!(c.n_int, (2, 3));
        assert_eq!(c.methods, vec![Method::Icp, Method::FastIcp]);
        assert_eq!(c.sample_sizes, vec![100, 1000]);
        assert_eq!(SweepConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let e = SweepConfig::parse("graphs = 2\nbogus = 1\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e}");
        let e = SweepConfig::parse("graphs = two\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }));
        let e = SweepConfig::parse("\n\nsetup = nope\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }));
        assert!(SweepConfig::parse("no equals sign\n").is_err());
        assert!(SweepConfig::parse("alpha = 2\n").is_err());
        assert!(SweepConfig::parse("n_int = 7\n").is_err());
    }

    #[test]
    fn units_and_seeds_are_stable() {
        let mut c = SweepConfig::preset("p2_kint").unwrap();
        c.graphs = 2;
        c.coefficient_draws = 2;
        c.sample_sizes = vec![100, 200];
        let u = c.units();
        assert_eq!(u.len(), 8);
        assert_eq!(
            u[1],
            Unit {
                graph: 0,
                draw: 0,
                n: 200
            }
        );
        assert_eq!(c.build_scm(1, 1).unwrap(), c.build_scm(1, 1).unwrap());
        // Draws share the graph.
        assert_eq!(c.build_scm(1, 0).unwrap().dag(), c.build_scm(1, 1).unwrap().dag());
        assert_ne!(c.data_seed(&u[0]), c.data_seed(&u[1]));
    }

    #[test]
    fn unit_rows_cover_methods() {
        let mut c = SweepConfig::preset("p2_kint").unwrap();
        c.graphs = 1;
        c.coefficient_draws = 1;
        c.sample_sizes = vec![300];
        let unit = c.units()[0];
        let rows = run_unit(&c, &unit);
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.status == "ok"));
        let again = run_unit(&c, &unit);
        let strip = |v: &[ResultRow]| {
            v.iter()
                .map(|r| ResultRow {
                    wall_time_s: 0.0,
                    ..r.clone()
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&rows), strip(&again));
        let s = summarize(&rows);
        assert_eq!(s.len(), 4);
        assert!(s.iter().all(|r| r.rows == 1 && r.errors == 0));
    }

    #[test]
    fn wide_graphs_are_preselected() {
        let mut c = SweepConfig::preset("p5_sparse100").unwrap();
        c.graphs = 1;
        c.coefficient_draws = 1;
        c.sample_sizes = vec![500];
        let unit = c.units()[0];
        let scm = c.build_scm(0, 0).unwrap();
        let ds = simulate(&scm, 500, c.data_seed(&unit)).unwrap();
        assert_eq!(method_scope(&ds, Method::MmseIcp, 10, 100).unwrap().len(), 10);
        assert!(method_scope(&ds, Method::FastIcp, 10, 100).is_none());
        assert_eq!(method_scope(&ds, Method::FastIcp, 10, 50).unwrap().len(), 50);
        assert_eq!(c.discovery_config().max_set_size, 1);
    }

    #[test]
    fn mean_and_standard_error() {
        let m = MeanSe::of(&[1.0, 2.0, 3.0]).unwrap();
        assert!((m.mean - 2.0).abs() < 1e-15);
        assert!((m.se - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(MeanSe::of(&[]), None);
        assert_eq!(MeanSe::of(&[4.0]).unwrap().se, 0.0);
    }
}
