use std::collections::BTreeSet;

use nalgebra::DMatrix;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::graphs::Dag;
use crate::invariance::{InvarianceConfig, InvarianceTester};
use crate::scm::Scm;

/// Outcome of testing one covariate subset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    /// Corrected p-value of the invariance hypothesis.
    pub p_value: f64,
    pub mmse: f64,
    /// Stage-1 search heuristic of fastICP; lower means closer to invariant.
    pub dependency: f64,
}

impl Evaluation {
    pub fn invariant_at(&self, alpha: f64) -> bool {
        self.p_value >= alpha
    }
}

/// Source of invariance verdicts and MMSE values for the search algorithms.
pub trait InvarianceProvider: Sync {
    fn covariate_count(&self) -> usize;

    /// `subset` is sorted and holds valid covariate ids.
    fn evaluate(&self, subset: &[usize]) -> Result<Evaluation>;

    fn name(&self) -> &'static str;
}

/// Residual-based invariance tests on a dataset.
pub struct StatisticalProvider<'a> {
    tester: InvarianceTester<'a>,
}

impl<'a> StatisticalProvider<'a> {
    pub fn new(dataset: &'a Dataset, config: InvarianceConfig) -> Result<Self> {
        Ok(StatisticalProvider {
            tester: InvarianceTester::new(dataset, config)?,
        })
    }

    pub fn tester(&self) -> &InvarianceTester<'a> {
        &self.tester
    }
}

impl InvarianceProvider for StatisticalProvider<'_> {
    fn covariate_count(&self) -> usize {
        self.tester.dataset().d()
    }

    fn evaluate(&self, subset: &[usize]) -> Result<Evaluation> {
        let v = self.tester.test(subset)?;
        Ok(Evaluation {
            p_value: v.p_value,
            mmse: v.mmse_hat,
            dependency: 1.0 - v.p_value,
        })
    }

    fn name(&self) -> &'static str {
        "statistical"
    }
}

/// `1 - p` of the corrected invariance p-value; lower is more plausibly invariant.
pub fn stat_dependency(dataset: &Dataset, subset: &[usize], config: &InvarianceConfig) -> Result<f64> {
    Ok(1.0 - InvarianceTester::new(dataset, config.clone())?.test(subset)?.p_value)
}

/// Ground truth for exact invariance queries. Built only from a simulator model.
#[derive(Clone, Debug)]
pub struct OracleContext {
    scm: Scm,
    pub use_population_mmse: bool,
}

impl OracleContext {
    pub fn from_scm(scm: &Scm, use_population_mmse: bool) -> Self {
        OracleContext {
            scm: scm.clone(),
            use_population_mmse,
        }
    }

    pub fn dag(&self) -> &Dag {
        self.scm.dag()
    }

    pub fn scm(&self) -> &Scm {
        &self.scm
    }
}

/// Cap on enumerated open paths per dependency query.
pub const OPEN_PATH_CAP: usize = 10_000;

enum MmseSource<'a> {
    Population(DMatrix<f64>),
    Sample(InvarianceTester<'a>),
}

/// Invariance by d-separation of `E` and `Y`; MMSE from the closed-form
/// population value or, failing that, from a dataset fit.
///
/// The dependency is the number of open `E`–`Y` paths, which is zero exactly
/// on invariant sets.
pub struct OracleProvider<'a> {
    dag: Dag,
    mmse: MmseSource<'a>,
    scm: Scm,
}

/// Oracle provider using population MMSE (linear SCMs only).
pub fn with_oracle(ctx: &OracleContext) -> Result<OracleProvider<'static>> {
    if !ctx.use_population_mmse {
        return Err(Error::arg(
            "an oracle without population MMSE needs a dataset; use with_oracle_on",
        ));
    }
    let cov = ctx.scm.observational_covariance()?;
    Ok(OracleProvider {
        dag: ctx.dag().clone(),
        mmse: MmseSource::Population(cov),
        scm: ctx.scm.clone(),
    })
}

/// Oracle provider whose MMSE comes from `dataset` unless the context asks for
/// the population value.
pub fn with_oracle_on<'a>(
    ctx: &OracleContext,
    dataset: &'a Dataset,
    config: InvarianceConfig,
) -> Result<OracleProvider<'a>> {
    if ctx.use_population_mmse {
        return with_oracle(ctx);
    }
    if dataset.d() != ctx.dag().covariate_count() {
        return Err(Error::arg(format!(
            "dataset has {} covariates but the graph has {}",
            dataset.d(),
            ctx.dag().covariate_count()
        )));
    }
    Ok(OracleProvider {
        dag: ctx.dag().clone(),
        mmse: MmseSource::Sample(InvarianceTester::new(dataset, config)?),
        scm: ctx.scm.clone(),
    })
}

impl InvarianceProvider for OracleProvider<'_> {
    fn covariate_count(&self) -> usize {
        self.dag.covariate_count()
    }

    fn evaluate(&self, subset: &[usize]) -> Result<Evaluation> {
        let z: BTreeSet<usize> = subset.iter().copied().collect();
        let (e, y) = (self.dag.env(), self.dag.target());
        let open = self.dag.count_open_paths(e, y, &z, OPEN_PATH_CAP)?;
        let mmse = match &self.mmse {
            MmseSource::Population(cov) => self.scm.population_mmse_with(cov, subset)?.value,
            MmseSource::Sample(tester) => tester.test(subset)?.mmse_hat,
        };
        Ok(Evaluation {
            p_value: if open == 0 { 1.0 } else { 0.0 },
            mmse,
            dependency: open as f64,
        })
    }

    fn name(&self) -> &'static str {
        "oracle"
    }
}
