//! Structural causal models: random generation, two-environment simulation,
//! noisy copies, and closed-form second moments of linear-Gaussian models.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, GroundTruth};
use crate::error::{Error, Result};
use crate::graphs::{Dag, NodeId, Relation};
use crate::rng::{rng_from_seed, SimRng};

/// Attempts before [`sample_random_scm`] gives up on finding `Y ∈ DE(E)`.
pub const MAX_GRAPH_ATTEMPTS: usize = 10_000;

pub type Edge = (NodeId, NodeId);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    /// `Σ β·x`
    Linear,
    /// `Π sign(β)·g(x)`
    Nonlinear1,
    /// `Σ β·g(x)`
    Nonlinear2,
    /// `Σ β·x²`
    Nonlinear3,
}

impl Mechanism {
    pub fn is_linear(self) -> bool {
        self == Mechanism::Linear
    }

    fn uses_g(self) -> bool {
        matches!(self, Mechanism::Nonlinear1 | Mechanism::Nonlinear2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterventionKind {
    /// Intervened value fixed to 1 before standardization.
    Perfect,
    /// Incoming coefficients scaled by a per-edge `γ ~ U(0, 0.2)`.
    Imperfect,
    /// Additive noise variance replaced by the configured shift.
    Noise,
}

/// Basis functions of the nonlinear mechanism families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GFunction {
    Identity,
    Relu,
    SignedSqrt,
    Sine,
}

impl GFunction {
    pub const ALL: [GFunction; 4] = [
        GFunction::Identity,
        GFunction::Relu,
        GFunction::SignedSqrt,
        GFunction::Sine,
    ];

    pub fn apply(self, x: f64) -> f64 {
        match self {
            GFunction::Identity => x,
            GFunction::Relu => x.max(0.0),
            GFunction::SignedSqrt => x.signum() * x.abs().sqrt(),
            GFunction::Sine => (2.0 * std::f64::consts::PI * x).sin(),
        }
    }
}

/// Interval the edge coefficients are drawn from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientRange {
    /// `U((-2, 0.5) ∪ (0.5, 2))`, as printed in the simulation protocol.
    #[default]
    Literal,
    /// `U((-2, -0.5) ∪ (0.5, 2))`.
    Symmetric,
}

impl CoefficientRange {
    pub fn sample(self, rng: &mut SimRng) -> f64 {
        match self {
            CoefficientRange::Literal => {
                let u = rng.random_range(0.0..4.0);
                if u < 2.5 {
                    -2.0 + u
                } else {
                    0.5 + (u - 2.5)
                }
            }
            CoefficientRange::Symmetric => {
                let u = rng.random_range(0.0..3.0);
                if u < 1.5 {
                    -2.0 + u
                } else {
                    0.5 + (u - 1.5)
                }
            }
        }
    }
}

macro_rules! text_enum {
    ($ty:ty { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(Self::$variant => $text),+ })
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s.trim() {
                    $($text => Ok(Self::$variant),)+
                    other => Err(Error::arg(format!(
                        "unknown {} {other:?} (expected one of: {})",
                        stringify!($ty),
                        [$($text),+].join(", ")
                    ))),
                }
            }
        }
    };
}

text_enum!(Mechanism {
    Linear => "linear",
    Nonlinear1 => "nonlinear1",
    Nonlinear2 => "nonlinear2",
    Nonlinear3 => "nonlinear3",
});
text_enum!(InterventionKind {
    Perfect => "perfect",
    Imperfect => "imperfect",
    Noise => "noise",
});
text_enum!(CoefficientRange {
    Literal => "literal",
    Symmetric => "symmetric",
});

#[derive(Clone, Debug, PartialEq)]
pub struct InterventionSpec {
    pub targets: BTreeSet<NodeId>,
    pub kind: InterventionKind,
    /// Per-edge modulation for imperfect interventions, keyed by edges into targets.
    pub gamma: BTreeMap<Edge, f64>,
    /// Noise variance of intervened nodes under noise interventions.
    pub noise_variance_shift: f64,
}

/// Parameters of [`sample_random_scm`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScmParams {
    pub d: usize,
    pub p_edge: f64,
    pub n_int: usize,
    pub mechanism: Mechanism,
    pub intervention: InterventionKind,
    pub coefficients: CoefficientRange,
}

/// A DAG with mechanisms, coefficients, noise variances and an intervention.
#[derive(Clone, Debug, PartialEq)]
pub struct Scm {
    dag: Dag,
    mechanism: Mechanism,
    coefficients: BTreeMap<Edge, f64>,
    g_choice: BTreeMap<Edge, GFunction>,
    noise_variance: Vec<f64>,
    intervention: InterventionSpec,
    seed: u64,
}

/// Per-node generating recipe resolved from the maps, for the sampling loops.
struct NodePlan {
    parents: Vec<NodeId>,
    beta: Vec<f64>,
    gamma: Vec<f64>,
    g: Vec<GFunction>,
}

impl Scm {
    /// Assembles an SCM, checking that coefficients cover exactly the edges not
    /// incident to `E`, that every noise variance is positive, and that the
    /// intervention targets are children of `E`.
    pub fn from_parts(
        dag: Dag,
        mechanism: Mechanism,
        coefficients: BTreeMap<Edge, f64>,
        g_choice: BTreeMap<Edge, GFunction>,
        noise_variance: Vec<f64>,
        intervention: InterventionSpec,
        seed: u64,
    ) -> Result<Self> {
        let env = dag.env();
        let expected: BTreeSet<Edge> = dag.edges().into_iter().filter(|&(s, _)| s != env).collect();
        let given: BTreeSet<Edge> = coefficients.keys().copied().collect();
        if expected != given {
            return Err(Error::arg("coefficients must cover exactly the edges not leaving E"));
        }
        if coefficients.values().any(|b| !b.is_finite()) {
            return Err(Error::arg("coefficients must be finite"));
        }
        if mechanism.uses_g() && g_choice.keys().copied().collect::<BTreeSet<_>>() != expected {
            return Err(Error::arg("nonlinear mechanisms need a basis function per edge"));
        }
        if noise_variance.len() != dag.node_count() - 1 || noise_variance.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::arg("every non-environment node needs a positive noise variance"));
        }
        let ch_e = dag.relatives(env, Relation::Children)?;
        if !intervention.targets.is_subset(&ch_e) {
            return Err(Error::arg("intervention targets must be children of E"));
        }
        if intervention.gamma.values().any(|g| !(0.0..=0.2).contains(g)) {
            return Err(Error::arg("gamma entries must lie in [0, 0.2]"));
        }
        if !(intervention.noise_variance_shift > 0.0 && intervention.noise_variance_shift.is_finite()) {
            return Err(Error::arg("noise_variance_shift must be positive"));
        }
        Ok(Scm {
            dag,
            mechanism,
            coefficients,
            g_choice,
            noise_variance,
            intervention,
            seed,
        })
    }

    /// Draws coefficients (and basis functions / `γ` where relevant) for a
    /// fixed graph. All children of `E` become intervention targets, unit
    /// noise variances throughout.
    pub fn with_random_parameters(
        dag: Dag,
        mechanism: Mechanism,
        kind: InterventionKind,
        range: CoefficientRange,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = rng_from_seed(seed);
        let env = dag.env();
        let edges: Vec<Edge> = dag.edges().into_iter().filter(|&(s, _)| s != env).collect();
        let coefficients: BTreeMap<Edge, f64> = edges.iter().map(|&e| (e, range.sample(&mut rng))).collect();
        let g_choice: BTreeMap<Edge, GFunction> = if mechanism.uses_g() {
            edges
                .iter()
                .map(|&e| (e, *GFunction::ALL.choose(&mut rng).expect("non-empty")))
                .collect()
        } else {
            BTreeMap::new()
        };
        let targets = dag.relatives(env, Relation::Children)?;
        let gamma = if kind == InterventionKind::Imperfect {
            edges
                .iter()
                .filter(|(_, dst)| targets.contains(dst))
                .map(|&e| (e, rng.random_range(0.0..=0.2)))
                .collect()
        } else {
            BTreeMap::new()
        };
        let noise = vec![1.0; dag.node_count() - 1];
        let spec = InterventionSpec {
            targets,
            kind,
            gamma,
            noise_variance_shift: 4.0,
        };
        Scm::from_parts(dag, mechanism, coefficients, g_choice, noise, spec, seed)
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn mechanism(&self) -> Mechanism {
        self.mechanism
    }

    pub fn coefficient(&self, src: NodeId, dst: NodeId) -> Option<f64> {
        self.coefficients.get(&(src, dst)).copied()
    }

    pub fn coefficients(&self) -> &BTreeMap<Edge, f64> {
        &self.coefficients
    }

    pub fn g_choice(&self, src: NodeId, dst: NodeId) -> Option<GFunction> {
        self.g_choice.get(&(src, dst)).copied()
    }

    pub fn noise_variance(&self, node: NodeId) -> f64 {
        self.noise_variance[node]
    }

    pub fn intervention(&self) -> &InterventionSpec {
        &self.intervention
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn ground_truth(&self) -> GroundTruth {
        GroundTruth::from_dag(&self.dag)
    }

    fn plan(&self, node: NodeId) -> NodePlan {
        let env = self.dag.env();
        let parents: Vec<NodeId> = self.dag.parents(node).iter().copied().filter(|&p| p != env).collect();
        NodePlan {
            beta: parents.iter().map(|&p| self.coefficients[&(p, node)]).collect(),
            gamma: parents
                .iter()
                .map(|&p| self.intervention.gamma.get(&(p, node)).copied().unwrap_or(1.0))
                .collect(),
            g: parents
                .iter()
                .map(|&p| self.g_choice.get(&(p, node)).copied().unwrap_or(GFunction::Identity))
                .collect(),
            parents,
        }
    }

    fn mechanism_value(&self, plan: &NodePlan, values: &[Vec<f64>], i: usize, modulate: bool) -> f64 {
        let scale = |k: usize| if modulate { plan.gamma[k] } else { 1.0 };
        let parent = |k: usize| values[plan.parents[k]][i];
        let terms = 0..plan.parents.len();
        match self.mechanism {
            Mechanism::Linear => terms.map(|k| scale(k) * plan.beta[k] * parent(k)).sum(),
            Mechanism::Nonlinear1 => {
                if plan.parents.is_empty() {
                    0.0
                } else {
                    terms
                        .map(|k| scale(k) * plan.beta[k].signum() * plan.g[k].apply(parent(k)))
                        .product()
                }
            }
            Mechanism::Nonlinear2 => terms
                .map(|k| scale(k) * plan.beta[k] * plan.g[k].apply(parent(k)))
                .sum(),
            Mechanism::Nonlinear3 => terms.map(|k| scale(k) * plan.beta[k] * parent(k) * parent(k)).sum(),
        }
    }
}

/// Random graph plus parameters following the two-environment protocol:
/// a random DAG over `d + 1` nodes, a random node with a parent as `Y`, `E`
/// pointing at `n_int` random covariates, retried until `Y ∈ DE(E)`.
pub fn sample_random_scm(params: &ScmParams, seed: u64) -> Result<Scm> {
    let dag = sample_random_dag(params, seed)?;
    Scm::with_random_parameters(
        dag,
        params.mechanism,
        params.intervention,
        params.coefficients,
        crate::rng::derive_seed(seed, 1),
    )
}

/// Graph half of [`sample_random_scm`].
pub fn sample_random_dag(params: &ScmParams, seed: u64) -> Result<Dag> {
    let ScmParams { d, p_edge, n_int, .. } = *params;
    if d == 0 {
        return Err(Error::arg("d must be at least 1"));
    }
    if !(p_edge > 0.0 && p_edge <= 1.0) {
        return Err(Error::arg(format!("p_edge must lie in (0, 1], got {p_edge}")));
    }
    if n_int == 0 || n_int > d {
        return Err(Error::arg(format!("n_int must lie in 1..={d}, got {n_int}")));
    }
    let mut rng = rng_from_seed(seed);
    for _ in 0..MAX_GRAPH_ATTEMPTS {
        if let Some(dag) = try_sample_dag(d, p_edge, n_int, &mut rng) {
            return Ok(dag);
        }
    }
    Err(Error::Generation {
        attempts: MAX_GRAPH_ATTEMPTS,
        d,
        p_edge,
        n_int,
    })
}

fn try_sample_dag(d: usize, p_edge: f64, n_int: usize, rng: &mut SimRng) -> Option<Dag> {
    let m = d + 1;
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(rng);
    let mut raw_edges = Vec::new();
    for a in 0..m {
        for b in (a + 1)..m {
            if rng.random_bool(p_edge) {
                raw_edges.push((order[a], order[b]));
            }
        }
    }
    let with_parent: Vec<usize> = (0..m).filter(|&v| raw_edges.iter().any(|&(_, dst)| dst == v)).collect();
    let &y_raw = with_parent.choose(rng)?;
    // Y takes id d; the remaining nodes keep their relative order.
    let relabel = |v: usize| match v.cmp(&y_raw) {
        std::cmp::Ordering::Less => v,
        std::cmp::Ordering::Equal => d,
        std::cmp::Ordering::Greater => v - 1,
    };
    let covariates: Vec<usize> = (0..d).collect();
    let mut edges: Vec<Edge> = raw_edges.iter().map(|&(s, t)| (relabel(s), relabel(t))).collect();
    edges.extend(covariates.choose_multiple(rng, n_int).map(|&x| (d + 1, x)));
    let dag = Dag::new(d, edges).expect("sampled edges follow a topological order");
    let de_e = dag.relatives(dag.env(), Relation::Descendants).ok()?;
    de_e.contains(&dag.target()).then_some(dag)
}

/// Draws `n` samples with `E ~ Bernoulli(0.5)`.
///
/// Nodes are generated in topological order; each column is standardized with
/// its pooled mean and standard deviation before any child reads it.
pub fn simulate(scm: &Scm, n: usize, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::arg("simulate needs n >= 2"));
    }
    let mut rng = rng_from_seed(seed);
    let dag = &scm.dag;
    let env_node = dag.env();
    let env: Vec<i64> = (0..n).map(|_| i64::from(rng.random_bool(0.5))).collect();
    let spec = &scm.intervention;

    let mut values: Vec<Vec<f64>> = vec![Vec::new(); dag.node_count() - 1];
    for node in dag.topological_order() {
        if node == env_node {
            continue;
        }
        let plan = scm.plan(node);
        let targeted = spec.targets.contains(&node);
        let base_sd = scm.noise_variance[node].sqrt();
        let shifted_sd = spec.noise_variance_shift.sqrt();
        let mut column = Vec::with_capacity(n);
        for i in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            let intervened = targeted && env[i] == 1;
            let v = match (intervened, spec.kind) {
                (true, InterventionKind::Perfect) => 1.0,
                (true, InterventionKind::Imperfect) => scm.mechanism_value(&plan, &values, i, true) + base_sd * z,
                (true, InterventionKind::Noise) => scm.mechanism_value(&plan, &values, i, false) + shifted_sd * z,
                (false, _) => scm.mechanism_value(&plan, &values, i, false) + base_sd * z,
            };
            column.push(v);
        }
        standardize(&mut column)
            .map_err(|_| Error::Simulation(format!("node {node} has zero pooled standard deviation")))?;
        values[node] = column;
    }

    let y = std::mem::take(&mut values[dag.target()]);
    values.truncate(dag.covariate_count());
    let mut ds = Dataset::new(env, values, y)?;
    ds.seed = Some(seed);
    Ok(ds)
}

fn standardize(column: &mut [f64]) -> std::result::Result<(), ()> {
    let n = column.len() as f64;
    let mean = column.iter().sum::<f64>() / n;
    let var = column.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    if !(sd > 0.0 && sd.is_finite()) {
        return Err(());
    }
    for v in column.iter_mut() {
        *v = (*v - mean) / sd;
    }
    Ok(())
}

/// Appends `X'_i = X_i + N(0, ε²)` for every covariate and extends the graph
/// with `X_i -> X'_i`. Copies take ids `d..2d`; `Y` and `E` move to `2d`, `2d+1`.
pub fn add_noisy_copies(dataset: &Dataset, scm: &Scm, epsilon: f64, seed: u64) -> Result<(Dataset, Scm)> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::arg("epsilon must be positive"));
    }
    let d = scm.dag.covariate_count();
    if dataset.d() != d {
        return Err(Error::arg("dataset and SCM disagree on the number of covariates"));
    }
    let mut rng = rng_from_seed(seed);
    let mut out = dataset.clone();
    for i in 0..d {
        let copy: Vec<f64> = dataset
            .column(i)
            .iter()
            .map(|&x| x + epsilon * rng.sample::<f64, _>(StandardNormal))
            .collect();
        out.push_column(format!("{}'", dataset.column_names()[i]), copy);
    }

    let remap = |v: NodeId| if v < d { v } else { v + d };
    let mut edges: Vec<Edge> = scm.dag.edges().into_iter().map(|(s, t)| (remap(s), remap(t))).collect();
    edges.extend((0..d).map(|i| (i, d + i)));
    let dag = Dag::new(2 * d, edges)?;
    let mut coefficients: BTreeMap<Edge, f64> = scm
        .coefficients
        .iter()
        .map(|(&(s, t), &b)| ((remap(s), remap(t)), b))
        .collect();
    coefficients.extend((0..d).map(|i| ((i, d + i), 1.0)));
    let mut g_choice: BTreeMap<Edge, GFunction> = scm
        .g_choice
        .iter()
        .map(|(&(s, t), &g)| ((remap(s), remap(t)), g))
        .collect();
    if scm.mechanism.uses_g() {
        g_choice.extend((0..d).map(|i| ((i, d + i), GFunction::Identity)));
    }
    let mut noise: Vec<f64> = scm.noise_variance[..d].to_vec();
    noise.extend(std::iter::repeat_n(epsilon * epsilon, d));
    noise.push(scm.noise_variance[d]);
    let spec = InterventionSpec {
        targets: scm.intervention.targets.iter().map(|&v| remap(v)).collect(),
        kind: scm.intervention.kind,
        gamma: scm
            .intervention
            .gamma
            .iter()
            .map(|(&(s, t), &g)| ((remap(s), remap(t)), g))
            .collect(),
        noise_variance_shift: scm.intervention.noise_variance_shift,
    };
    let extended = Scm::from_parts(dag, scm.mechanism, coefficients, g_choice, noise, spec, scm.seed)?;
    Ok((out, extended))
}

/// Minimum mean squared error of predicting `Y` from a covariate subset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationMmse {
    pub value: f64,
    /// The subset covariance was singular and a pseudo-inverse was used.
    pub degenerate: bool,
}

impl Scm {
    /// Correlation matrix of `X1..Xd, Y` in the observational regime of the
    /// system [`simulate`] generates (pooled standardization in causal order).
    /// `Var(Y) = 1` on this scale. Linear SCMs only.
    pub fn observational_covariance(&self) -> Result<DMatrix<f64>> {
        let cov = self.population_moments()?.cov[0].clone();
        let sd: Vec<f64> = (0..cov.nrows()).map(|i| cov[(i, i)].sqrt()).collect();
        Ok(DMatrix::from_fn(cov.nrows(), cov.ncols(), |i, j| {
            if i == j {
                1.0
            } else {
                cov[(i, j)] / (sd[i] * sd[j])
            }
        }))
    }

    /// Exact `Var(Y) - Cov(Y,S) Cov(S,S)^+ Cov(S,Y)` under
    /// [`Scm::observational_covariance`].
    pub fn population_mmse(&self, subset: &[NodeId]) -> Result<PopulationMmse> {
        let cov = self.observational_covariance()?;
        self.population_mmse_with(&cov, subset)
    }

    /// [`Scm::population_mmse`] reusing a precomputed covariance.
    pub fn population_mmse_with(&self, cov: &DMatrix<f64>, subset: &[NodeId]) -> Result<PopulationMmse> {
        let d = self.dag.covariate_count();
        if let Some(&bad) = subset.iter().find(|&&v| v >= d) {
            return Err(Error::arg(format!("node {bad} is not a covariate")));
        }
        let y = self.dag.target();
        let var_y = cov[(y, y)];
        if subset.is_empty() {
            return Ok(PopulationMmse {
                value: var_y,
                degenerate: false,
            });
        }
        let k = subset.len();
        let s_cov = DMatrix::from_fn(k, k, |i, j| cov[(subset[i], subset[j])]);
        let s_y = DVector::from_fn(k, |i, _| cov[(subset[i], y)]);
        let (pinv, degenerate) = symmetric_pinv(s_cov);
        let explained = s_y.dot(&(&pinv * &s_y));
        Ok(PopulationMmse {
            value: (var_y - explained).max(0.0),
            degenerate,
        })
    }

    /// Per-environment means and covariances of `X1..Xd, Y` when columns are
    /// standardized with pooled (both-environment, `P(E=1) = 0.5`) moments,
    /// which is what [`simulate`] converges to. Linear SCMs only.
    pub fn population_moments(&self) -> Result<PooledMoments> {
        self.require_linear()?;
        let m = self.dag.node_count() - 1;
        let env = self.dag.env();
        let spec = &self.intervention;
        let mut mean = [vec![0.0; m], vec![0.0; m]];
        let mut cov = [DMatrix::<f64>::zeros(m, m), DMatrix::<f64>::zeros(m, m)];
        let mut done: Vec<NodeId> = Vec::with_capacity(m);
        for node in self.dag.topological_order() {
            if node == env {
                continue;
            }
            let plan = self.plan(node);
            let mut raw_mean = [0.0; 2];
            let mut raw_var = [0.0; 2];
            let mut cross = [vec![0.0; m], vec![0.0; m]];
            for e in 0..2 {
                let intervened = e == 1 && spec.targets.contains(&node);
                if intervened && spec.kind == InterventionKind::Perfect {
                    raw_mean[e] = 1.0;
                    continue;
                }
                let beta: Vec<f64> = if intervened && spec.kind == InterventionKind::Imperfect {
                    plan.beta.iter().zip(&plan.gamma).map(|(b, g)| b * g).collect()
                } else {
                    plan.beta.clone()
                };
                let noise = if intervened && spec.kind == InterventionKind::Noise {
                    spec.noise_variance_shift
                } else {
                    self.noise_variance[node]
                };
                raw_mean[e] = plan.parents.iter().zip(&beta).map(|(&p, b)| b * mean[e][p]).sum();
                for &k in &done {
                    cross[e][k] = plan.parents.iter().zip(&beta).map(|(&p, b)| b * cov[e][(k, p)]).sum();
                }
                raw_var[e] = plan
                    .parents
                    .iter()
                    .zip(&beta)
                    .map(|(&p, b)| b * cross[e][p])
                    .sum::<f64>()
                    + noise;
            }
            let pooled_mean = 0.5 * (raw_mean[0] + raw_mean[1]);
            let pooled_var = 0.5 * (raw_var[0] + raw_var[1]) + 0.25 * (raw_mean[0] - raw_mean[1]).powi(2);
            let sd = pooled_var.sqrt();
            if sd.is_nan() || sd <= 0.0 {
                return Err(Error::Simulation(format!("node {node} has zero pooled variance")));
            }
            for e in 0..2 {
                mean[e][node] = (raw_mean[e] - pooled_mean) / sd;
                for &k in &done {
                    cov[e][(node, k)] = cross[e][k] / sd;
                    cov[e][(k, node)] = cross[e][k] / sd;
                }
                cov[e][(node, node)] = raw_var[e] / (sd * sd);
            }
            done.push(node);
        }
        Ok(PooledMoments { mean, cov })
    }

    fn require_linear(&self) -> Result<()> {
        if self.mechanism.is_linear() {
            Ok(())
        } else {
            Err(Error::Unsupported(format!(
                "closed-form moments need a linear SCM, this one is {}",
                self.mechanism
            )))
        }
    }
}

/// Output of [`Scm::population_moments`]; index 0 is `E = 0`, 1 is `E = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct PooledMoments {
    pub mean: [Vec<f64>; 2],
    pub cov: [DMatrix<f64>; 2],
}

/// Moore–Penrose inverse of a symmetric PSD matrix via its eigendecomposition.
pub(crate) fn symmetric_pinv(m: DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let k = m.nrows();
    let eig = m.symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let tol = max * 1e-12 * k as f64;
    let mut degenerate = false;
    let inv_vals = DVector::from_iterator(
        k,
        eig.eigenvalues.iter().map(|&l| {
            if l.abs() > tol {
                1.0 / l
            } else {
                degenerate = true;
                0.0
            }
        }),
    );
    let v = &eig.eigenvectors;
    (v * DMatrix::from_diagonal(&inv_vals) * v.transpose(), degenerate)
}

#[cfg(test)]
mod tests {
    use super::*;

    // E -> X2 -> X1 -> Y with X1 = 0, X2 = 1, Y = 2, E = 3.
    fn example_chain(kind: InterventionKind, seed: u64) -> Scm {
        let dag = Dag::new(2, [(3, 1), (1, 0), (0, 2)]).unwrap();
        Scm::with_random_parameters(dag, Mechanism::Linear, kind, CoefficientRange::Symmetric, seed).unwrap()
    }

    fn params(d: usize, p_edge: f64, n_int: usize) -> ScmParams {
        ScmParams {
            d,
            p_edge,
            n_int,
            mechanism: Mechanism::Linear,
            intervention: InterventionKind::Perfect,
            coefficients: CoefficientRange::Literal,
        }
    }

    #[test]
    fn single_covariate_full_density_is_forced() {
        let scm = sample_random_scm(&params(1, 1.0, 1), 3).unwrap();
        assert_eq!(scm.dag().edges(), vec![(0, 1), (2, 0)]);
    }

    #[test]
    fn generated_graphs_satisfy_protocol() {
        for seed in 0..50 {
            let scm = sample_random_scm(&params(6, 0.145, 1), seed).unwrap();
            let g = scm.dag();
            assert_eq!(g.children(g.env()).len(), 1);
            assert!(!g.parents(g.target()).is_empty());
            assert!(g
                .relatives(g.env(), Relation::Descendants)
                .unwrap()
                .contains(&g.target()));
            assert_eq!(scm.intervention().targets.len(), 1);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(sample_random_scm(&params(0, 0.5, 1), 0).is_err());
        assert!(sample_random_scm(&params(3, 0.0, 1), 0).is_err());
        assert!(sample_random_scm(&params(3, 0.5, 4), 0).is_err());
        assert!(sample_random_scm(&params(3, 0.5, 0), 0).is_err());
    }

    #[test]
    fn retry_budget_exhaustion_is_reported() {
        // With a vanishing edge probability no node ever gets a parent.
        let err = sample_random_scm(&params(2, 1e-300, 1), 0).unwrap_err();
        assert!(
            matches!(
                err,
                Error::Generation {
                    attempts: MAX_GRAPH_ATTEMPTS,
                    ..
                }
            ),
            "{err}"
        );
    }

    #[test]
    fn coefficient_ranges() {
        let mut rng = rng_from_seed(1);
        for _ in 0..10_000 {
            let b = CoefficientRange::Symmetric.sample(&mut rng);
            assert!((0.5..2.0).contains(&b.abs()), "{b}");
            let b = CoefficientRange::Literal.sample(&mut rng);
            assert!((-2.0..2.0).contains(&b) && !(0.5..0.5).contains(&b));
        }
    }

    #[test]
    fn columns_are_standardized() {
        let scm = sample_random_scm(&params(6, 0.3, 2), 9).unwrap();
        let ds = simulate(&scm, 2_000, 4).unwrap();
        for col in ds.columns().iter().chain(std::iter::once(&ds.y().to_vec())) {
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-9, "{mean}");
            assert!((var - 1.0).abs() < 1e-9, "{var}");
        }
    }

    #[test]
    fn perfect_intervention_is_constant() {
        let ds = simulate(&example_chain(InterventionKind::Perfect, 1), 500, 2).unwrap();
        let vals: Vec<f64> = (0..ds.n())
            .filter(|&i| ds.env()[i] == 1)
            .map(|i| ds.column(1)[i])
            .collect();
        assert!(vals.len() > 100);
        assert!(vals.iter().all(|&v| v == vals[0]));
    }

    #[test]
    fn same_seed_same_data() {
        let scm = sample_random_scm(&params(6, 0.3, 2), 5).unwrap();
        assert_eq!(sample_random_scm(&params(6, 0.3, 2), 5).unwrap(), scm);
        assert_eq!(simulate(&scm, 300, 8).unwrap(), simulate(&scm, 300, 8).unwrap());
        assert_ne!(simulate(&scm, 300, 8).unwrap(), simulate(&scm, 300, 9).unwrap());
    }

    #[test]
    fn every_mechanism_and_intervention_simulates() {
        for mech in [
            Mechanism::Linear,
            Mechanism::Nonlinear1,
            Mechanism::Nonlinear2,
            Mechanism::Nonlinear3,
        ] {
            for kind in [
                InterventionKind::Perfect,
                InterventionKind::Imperfect,
                InterventionKind::Noise,
            ] {
                let p = ScmParams {
                    mechanism: mech,
                    intervention: kind,
                    ..params(5, 0.4, 2)
                };
                let scm = sample_random_scm(&p, 21).unwrap();
                let ds = simulate(&scm, 200, 1).unwrap();
                assert_eq!(ds.d(), 5);
                assert!(ds.y().iter().all(|v| v.is_finite()));
            }
        }
    }

    #[test]
    fn g_functions() {
        assert_eq!(GFunction::Relu.apply(-2.0), 0.0);
        assert_eq!(GFunction::SignedSqrt.apply(-4.0), -2.0);
        assert!(GFunction::Sine.apply(0.5).abs() < 1e-12);
        assert_eq!(GFunction::Identity.apply(3.5), 3.5);
    }

    #[test]
    fn zero_pooled_deviation_is_an_error() {
        // X1 root targeted by E; with every sample intervened the column is constant.
        let dag = Dag::new(1, [(2, 0), (0, 1)]).unwrap();
        let scm = Scm::with_random_parameters(
            dag,
            Mechanism::Linear,
            InterventionKind::Perfect,
            CoefficientRange::Symmetric,
            0,
        )
        .unwrap();
        // Find a seed where every Bernoulli draw is 1.
        let seed = (0..10_000u64)
            .find(|&s| {
                let mut rng = rng_from_seed(s);
                rng.random_bool(0.5) && rng.random_bool(0.5)
            })
            .unwrap();
        assert!(matches!(simulate(&scm, 2, seed), Err(Error::Simulation(_))));
    }

    #[test]
    fn pooled_moments_match_simulation() {
        // Closed-form covariance of the standardized chain against 1e5 samples.
        let scm = example_chain(InterventionKind::Perfect, 17);
        let m = scm.population_moments().unwrap();
        let ds = simulate(&scm, 100_000, 5).unwrap();
        let rows: Vec<usize> = (0..ds.n()).filter(|&i| ds.env()[i] == 0).collect();
        let x1: Vec<f64> = rows.iter().map(|&i| ds.column(0)[i]).collect();
        let y: Vec<f64> = rows.iter().map(|&i| ds.y()[i]).collect();
        let cov = sample_cov(&x1, &y);
        assert!((cov - m.cov[0][(0, 2)]).abs() < 0.02, "{cov} vs {}", m.cov[0][(0, 2)]);
        let pooled_var_y = 0.5 * (m.cov[0][(2, 2)] + m.cov[1][(2, 2)]) + 0.25 * (m.mean[0][2] - m.mean[1][2]).powi(2);
        assert!((pooled_var_y - 1.0).abs() < 1e-12);
    }

    fn sample_cov(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n - 1.0)
    }

    /// Observational variances of the pooled-standardized X2 and X1 of the
    /// chain, with X2 set to 1 under intervention: `(a2, a1)`.
    fn chain_obs_variances(scm: &Scm) -> (f64, f64) {
        let b2 = scm.coefficient(1, 0).unwrap();
        let (s2, s1) = (scm.noise_variance(1), scm.noise_variance(0));
        // X2 raw: N(0, s2) observed, 1 intervened.
        let v2 = 0.5 * s2 + 0.25;
        let a2 = s2 / v2;
        // X1 raw = b2 * X2s + noise; the regime means differ by b2 / sqrt(v2).
        let v1 = 0.5 * (b2 * b2 * a2 + s1 + s1) + 0.25 * b2 * b2 / v2;
        (a2, (b2 * b2 * a2 + s1) / v1)
    }

    #[test]
    fn chain_covariance_by_hand() {
        let scm = example_chain(InterventionKind::Perfect, 3);
        let b2 = scm.coefficient(1, 0).unwrap();
        let b1 = scm.coefficient(0, 2).unwrap();
        let (s1, sy) = (scm.noise_variance(0), scm.noise_variance(2));
        let (a2, a1) = chain_obs_variances(&scm);
        let cov = scm.observational_covariance().unwrap();
        let r21 = b2 * a2.sqrt() / (b2 * b2 * a2 + s1).sqrt();
        let r1y = b1 * a1.sqrt() / (b1 * b1 * a1 + sy).sqrt();
        assert!((cov[(1, 0)] - r21).abs() < 1e-12);
        assert!((cov[(0, 2)] - r1y).abs() < 1e-12);
        assert!((cov[(1, 2)] - r21 * r1y).abs() < 1e-12);
        assert!((cov[(2, 2)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chain_population_mmse_ordering() {
        let scm = example_chain(InterventionKind::Perfect, 11);
        let mmse = |s: &[NodeId]| scm.population_mmse(s).unwrap().value;
        let b1 = scm.coefficient(0, 2).unwrap();
        let sy = scm.noise_variance(2);
        let (_, a1) = chain_obs_variances(&scm);
        assert!((mmse(&[]) - 1.0).abs() < 1e-12);
        // Standardized noise share of Y.
        assert!((mmse(&[0]) - sy / (b1 * b1 * a1 + sy)).abs() < 1e-12);
        assert!(mmse(&[1]) > mmse(&[0, 1]) + 1e-9);
        assert!((mmse(&[0, 1]) - mmse(&[0])).abs() < 1e-12);
    }

    #[test]
    fn population_mmse_rejects_nonlinear_and_non_covariates() {
        let scm = example_chain(InterventionKind::Perfect, 1);
        assert!(scm.population_mmse(&[2]).is_err());
        let dag = Dag::new(2, [(3, 1), (1, 0), (0, 2)]).unwrap();
        let nl = Scm::with_random_parameters(
            dag,
            Mechanism::Nonlinear2,
            InterventionKind::Perfect,
            CoefficientRange::Literal,
            0,
        )
        .unwrap();
        assert!(matches!(nl.population_mmse(&[0]), Err(Error::Unsupported(_))));
    }

    #[test]
    fn duplicated_predictor_is_degenerate() {
        let mut scm = example_chain(InterventionKind::Perfect, 2);
        let cov = scm.observational_covariance().unwrap();
        let r = scm.population_mmse_with(&cov, &[0, 0]).unwrap();
        assert!(r.degenerate);
        assert!((r.value - scm.population_mmse(&[0]).unwrap().value).abs() < 1e-9);
        scm.seed = 0;
    }

    #[test]
    fn noisy_copies() {
        let scm = sample_random_scm(&params(6, 0.24, 1), 2).unwrap();
        let ds = simulate(&scm, 10_000, 3).unwrap();
        let (ext, ext_scm) = add_noisy_copies(&ds, &scm, 0.01, 4).unwrap();
        assert_eq!(ext.d(), 12);
        assert_eq!(ext.column_names()[6], "X1'");
        assert_eq!(ext_scm.dag().covariate_count(), 12);
        for i in 0..6 {
            assert!(ext_scm.dag().has_edge(i, 6 + i));
            let r = corr(ext.column(i), ext.column(6 + i));
            assert!((r - 1.0 / (1.0f64 + 1e-4).sqrt()).abs() < 1e-3, "{r}");
        }
        assert_eq!(ext_scm.dag().parents(12), scm.dag().parents(6));
        assert!(add_noisy_copies(&ds, &scm, 0.0, 4).is_err());
    }

    #[test]
    fn copy_correlation_approaches_one() {
        let scm = example_chain(InterventionKind::Perfect, 2);
        let ds = simulate(&scm, 5_000, 3).unwrap();
        let mut last = 0.0;
        for eps in [1.0, 0.1, 0.01, 0.001] {
            let (ext, _) = add_noisy_copies(&ds, &scm, eps, 1).unwrap();
            let r = corr(ext.column(0), ext.column(2));
            assert!(r > last);
            last = r;
        }
        assert!(last > 0.999_999);
    }

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        sample_cov(a, b) / (sample_cov(a, a) * sample_cov(b, b)).sqrt()
    }

    #[test]
    fn text_enums_round_trip() {
        for m in ["linear", "nonlinear1", "nonlinear2", "nonlinear3"] {
            assert_eq!(m.parse::<Mechanism>().unwrap().to_string(), m);
        }
        assert_eq!("noise".parse::<InterventionKind>().unwrap(), InterventionKind::Noise);
        assert!("bogus".parse::<CoefficientRange>().is_err());
    }
}
