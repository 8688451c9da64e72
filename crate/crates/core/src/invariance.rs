//! Residual-based invariance testing across environments.
//!
//! One model is fitted on the pooled data. Each environment's residuals are
//! compared against all remaining residuals for equal means (Welch) and equal
//! spread (Levene); the subset is accepted when the corrected minimum p-value
//! stays at or above `alpha`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::regress::{residuals_cv, CrossProducts, GbtConfig, ModelKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Centering {
    #[default]
    Mean,
    Median,
}

impl fmt::Display for Centering {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Centering::Mean => "mean",
            Centering::Median => "median",
        })
    }
}

impl FromStr for Centering {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Centering::Mean),
            "median" => Ok(Centering::Median),
            other => Err(Error::arg(format!("unknown centering `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvarianceConfig {
    pub alpha: f64,
    pub model: ModelKind,
    /// Multiply the minimum per-environment p-value by the number of environments.
    pub bonferroni_envs: bool,
    pub centering: Centering,
    pub gbt: GbtConfig,
    /// Seeds the cross-validation shuffle of nonlinear fits.
    pub seed: u64,
}

impl Default for InvarianceConfig {
    fn default() -> Self {
        InvarianceConfig {
            alpha: 0.05,
            model: ModelKind::Ols,
            bonferroni_envs: true,
            centering: Centering::Mean,
            gbt: GbtConfig::default(),
            seed: 0,
        }
    }
}

impl InvarianceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::arg(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        self.gbt.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvarianceVerdict {
    pub p_value: f64,
    pub invariant: bool,
    pub mmse_hat: f64,
    pub per_env_p: BTreeMap<i64, f64>,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_variance(x: &[f64], m: f64) -> f64 {
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64
}

/// Upper tail `P(F > f)` of an F distribution with `(d1, d2)` degrees of freedom.
fn f_upper_tail(f: f64, d1: f64, d2: f64) -> f64 {
    if f <= 0.0 {
        return 1.0;
    }
    if f.is_infinite() {
        return 0.0;
    }
    beta_reg(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f)).clamp(0.0, 1.0)
}

fn check_sizes(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::arg("each sample needs at least two observations"));
    }
    Ok(())
}

/// Two-sided Welch two-sample t-test.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<f64> {
    check_sizes(a, b)?;
    let (ma, mb) = (mean(a), mean(b));
    let va = sample_variance(a, ma) / a.len() as f64;
    let vb = sample_variance(b, mb) / b.len() as f64;
    let se2 = va + vb;
    if se2 == 0.0 {
        return Ok(if ma == mb { 1.0 } else { 0.0 });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (va * va / (a.len() - 1) as f64 + vb * vb / (b.len() - 1) as f64);
    Ok(beta_reg(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0))
}

fn median(x: &[f64]) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let h = s.len() / 2;
    if s.len() % 2 == 1 {
        s[h]
    } else {
        0.5 * (s[h - 1] + s[h])
    }
}

/// Two-group Levene test for equal spread.
pub fn levene_test(a: &[f64], b: &[f64], centering: Centering) -> Result<f64> {
    check_sizes(a, b)?;
    let deviations = |x: &[f64]| -> Vec<f64> {
        let c = match centering {
            Centering::Mean => mean(x),
            Centering::Median => median(x),
        };
        x.iter().map(|v| (v - c).abs()).collect()
    };
    let (za, zb) = (deviations(a), deviations(b));
    let (na, nb) = (za.len() as f64, zb.len() as f64);
    let (ma, mb) = (mean(&za), mean(&zb));
    let grand = (ma * na + mb * nb) / (na + nb);
    let between = na * (ma - grand).powi(2) + nb * (mb - grand).powi(2);
    let within: f64 =
        za.iter().map(|z| (z - ma).powi(2)).sum::<f64>() + zb.iter().map(|z| (z - mb).powi(2)).sum::<f64>();
    if within == 0.0 {
        return Ok(if between == 0.0 { 1.0 } else { 0.0 });
    }
    let d2 = na + nb - 2.0;
    Ok(f_upper_tail(between / (within / d2), 1.0, d2))
}

/// Reusable invariance tester over one dataset. OLS fits share a cached Gram
/// matrix, so each subset costs one residual pass.
pub struct InvarianceTester<'a> {
    dataset: &'a Dataset,
    config: InvarianceConfig,
    groups: Vec<(i64, Vec<usize>)>,
    cross: Option<CrossProducts>,
}

impl<'a> InvarianceTester<'a> {
    pub fn new(dataset: &'a Dataset, config: InvarianceConfig) -> Result<Self> {
        config.validate()?;
        let groups = dataset.env_groups();
        if groups.len() < 2 {
            return Err(Error::arg("invariance testing needs at least two environments"));
        }
        if let Some((label, _)) = groups.iter().find(|(_, rows)| rows.len() < 2) {
            return Err(Error::arg(format!("environment {label} has fewer than two samples")));
        }
        let cross = match config.model {
            ModelKind::Ols => {
                let cols: Vec<&[f64]> = dataset.columns().iter().map(Vec::as_slice).collect();
                Some(CrossProducts::new(&cols, dataset.y())?)
            }
            ModelKind::Gbt => None,
        };
        Ok(InvarianceTester {
            dataset,
            config,
            groups,
            cross,
        })
    }

    pub fn config(&self) -> &InvarianceConfig {
        &self.config
    }

    pub fn dataset(&self) -> &Dataset {
        self.dataset
    }

    fn check_subset(&self, subset: &[usize]) -> Result<()> {
        let d = self.dataset.d();
        for (i, &j) in subset.iter().enumerate() {
            if j >= d {
                return Err(Error::UnknownNode(j));
            }
            if subset[..i].contains(&j) {
                return Err(Error::arg(format!("covariate {j} listed twice")));
            }
        }
        Ok(())
    }

    pub fn residuals(&self, subset: &[usize]) -> Result<Vec<f64>> {
        self.check_subset(subset)?;
        let x: Vec<&[f64]> = subset.iter().map(|&j| self.dataset.column(j)).collect();
        match &self.cross {
            Some(cross) => Ok(cross.fit(subset)?.residuals(&x, self.dataset.y())),
            None => residuals_cv(
                &x,
                self.dataset.y(),
                self.config.model,
                &self.config.gbt,
                self.config.seed,
            ),
        }
    }

    pub fn test(&self, subset: &[usize]) -> Result<InvarianceVerdict> {
        let r = self.residuals(subset)?;
        self.verdict(&r)
    }

    fn verdict(&self, r: &[f64]) -> Result<InvarianceVerdict> {
        let n = r.len();
        let mut per_env_p = BTreeMap::new();
        let mut inside = vec![false; n];
        for (label, rows) in &self.groups {
            inside.iter_mut().for_each(|v| *v = false);
            for &i in rows {
                inside[i] = true;
            }
            let a: Vec<f64> = rows.iter().map(|&i| r[i]).collect();
            let b: Vec<f64> = (0..n).filter(|&i| !inside[i]).map(|i| r[i]).collect();
            let p_t = welch_t_test(&a, &b)?;
            let p_l = levene_test(&a, &b, self.config.centering)?;
            per_env_p.insert(*label, (2.0 * p_t.min(p_l)).min(1.0));
        }
        let min_p = per_env_p.values().copied().fold(1.0, f64::min);
        let factor = if self.config.bonferroni_envs {
            per_env_p.len() as f64
        } else {
            1.0
        };
        let p_value = (min_p * factor).min(1.0);
        Ok(InvarianceVerdict {
            p_value,
            invariant: p_value >= self.config.alpha,
            mmse_hat: r.iter().map(|v| v * v).sum::<f64>() / n as f64,
            per_env_p,
        })
    }
}

/// Tests `H0: Y ⊥ E | X_subset` on `dataset`.
pub fn is_invariant(dataset: &Dataset, subset: &[usize], config: &InvarianceConfig) -> Result<InvarianceVerdict> {
    InvarianceTester::new(dataset, config.clone())?.test(subset)
}
