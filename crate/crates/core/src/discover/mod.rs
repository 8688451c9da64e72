//! Search for the causal parents of `Y` over covariate subsets: ICP, IAS,
//! MMSE-ICP and fastICP, driven by any [`InvarianceProvider`].
//!
//! Subsets are sorted id vectors. Within a cardinality they are visited in
//! lexicographic order, and every tie in the algorithms resolves toward the
//! earlier subset in that order.

mod provider;
mod search;

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use provider::{
    stat_dependency, with_oracle, with_oracle_on, Evaluation, InvarianceProvider, OracleContext, OracleProvider,
    StatisticalProvider, OPEN_PATH_CAP,
};
pub use search::{fast_icp, ias, icp, mmse_icp, run};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Icp,
    Ias,
    MmseIcp,
    FastIcp,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Icp, Method::Ias, Method::MmseIcp, Method::FastIcp];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Icp => "icp",
            Method::Ias => "ias",
            Method::MmseIcp => "mmse_icp",
            Method::FastIcp => "fast_icp",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| {
            Error::arg(format!(
                "unknown method `{s}` (expected icp, ias, mmse_icp or fast_icp)"
            ))
        })
    }
}

/// Largest scope the exhaustive searches accept.
pub const EXHAUSTIVE_SCOPE_LIMIT: usize = 25;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryConfig {
    pub alpha: f64,
    /// Removal depth of fastICP's first stage.
    pub max_depth: usize,
    /// Largest cardinality IAS tests.
    pub max_set_size: usize,
    /// Level IAS uses for its tests; `None` means `alpha`.
    pub ias_alpha0: Option<f64>,
    pub fast_scope_limit: usize,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        DiscoveryConfig {
            alpha: 0.05,
            max_depth: 2,
            max_set_size: EXHAUSTIVE_SCOPE_LIMIT,
            ias_alpha0: None,
            fast_scope_limit: 100,
        }
    }
}

impl DiscoveryConfig {
    pub fn validate(&self) -> Result<()> {
        for a in std::iter::once(self.alpha).chain(self.ias_alpha0) {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::arg(format!("significance level must lie in (0, 1), got {a}")));
            }
        }
        if self.max_depth == 0 || self.max_set_size == 0 {
            return Err(Error::arg("max_depth and max_set_size must be positive"));
        }
        Ok(())
    }
}

/// A subset judged invariant during the search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub subset: Vec<usize>,
    pub mmse_hat: f64,
    pub p_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryResult {
    pub method: Method,
    pub parents_hat: Vec<usize>,
    pub candidates: Vec<Candidate>,
    /// Distinct subsets evaluated by the provider.
    pub invariance_tests_run: usize,
    #[serde(with = "seconds")]
    pub wall_time: Duration,
    /// No subset in the searched space was judged invariant.
    pub no_invariant_set: bool,
    /// p-value of `parents_hat` when it was evaluated during the search.
    pub p_value: Option<f64>,
    pub scope: Vec<usize>,
    pub provider: String,
    pub config: DiscoveryConfig,
}

mod seconds {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_secs_f64(f64::deserialize(d)?))
    }
}

/// Memoizing wrapper: each distinct subset reaches the provider once.
pub(crate) struct Session<'p> {
    provider: &'p dyn InvarianceProvider,
    memo: RefCell<HashMap<Vec<usize>, Evaluation>>,
    started: Instant,
}

impl<'p> Session<'p> {
    pub(crate) fn new(provider: &'p dyn InvarianceProvider) -> Self {
        Session {
            provider,
            memo: RefCell::new(HashMap::new()),
            started: Instant::now(),
        }
    }

    pub(crate) fn eval(&self, subset: &[usize]) -> Result<Evaluation> {
        if let Some(e) = self.memo.borrow().get(subset) {
            return Ok(*e);
        }
        let e = self.provider.evaluate(subset)?;
        self.memo.borrow_mut().insert(subset.to_vec(), e);
        Ok(e)
    }

    pub(crate) fn lookup(&self, subset: &[usize]) -> Option<Evaluation> {
        self.memo.borrow().get(subset).copied()
    }

    pub(crate) fn finish(
        self,
        method: Method,
        parents_hat: Vec<usize>,
        candidates: Vec<Candidate>,
        scope: Vec<usize>,
        config: &DiscoveryConfig,
    ) -> DiscoveryResult {
        let p_value = self.lookup(&parents_hat).map(|e| e.p_value);
        DiscoveryResult {
            method,
            no_invariant_set: candidates.is_empty(),
            parents_hat,
            candidates,
            invariance_tests_run: self.memo.borrow().len(),
            wall_time: self.started.elapsed(),
            p_value,
            scope,
            provider: self.provider.name().to_string(),
            config: config.clone(),
        }
    }
}
