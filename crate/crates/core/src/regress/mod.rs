//! Regression engines: OLS, gradient-boosted trees, componentwise L2-boosting.

mod boost;
mod gbt;
mod ols;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use boost::{l2_boost_select, BOOST_ITERATIONS, BOOST_STEP};
pub use gbt::{fit_gbt, GbtConfig, GbtModel};
pub use ols::{fit_ols, CrossProducts, OlsModel};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Ols,
    Gbt,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Ols => "ols",
            ModelKind::Gbt => "gbt",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ols" => Ok(ModelKind::Ols),
            "gbt" => Ok(ModelKind::Gbt),
            other => Err(Error::arg(format!("unknown model kind `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Fitted {
    Ols(OlsModel),
    Gbt(GbtModel),
}

/// A fitted predictor of the target from a covariate subset.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionModel {
    subset: Vec<usize>,
    fitted: Fitted,
}

impl RegressionModel {
    /// Fits on `columns[j]` for `j` in `subset`.
    pub fn fit(columns: &[Vec<f64>], subset: &[usize], y: &[f64], kind: ModelKind, config: &GbtConfig) -> Result<Self> {
        let x: Vec<&[f64]> = subset.iter().map(|&j| columns[j].as_slice()).collect();
        let fitted = match kind {
            ModelKind::Ols => Fitted::Ols(fit_ols(&x, y)?),
            ModelKind::Gbt => Fitted::Gbt(fit_gbt(&x, y, config)?),
        };
        Ok(RegressionModel {
            subset: subset.to_vec(),
            fitted,
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self.fitted {
            Fitted::Ols(_) => ModelKind::Ols,
            Fitted::Gbt(_) => ModelKind::Gbt,
        }
    }

    pub fn subset(&self) -> &[usize] {
        &self.subset
    }

    pub fn ols(&self) -> Option<&OlsModel> {
        match &self.fitted {
            Fitted::Ols(m) => Some(m),
            Fitted::Gbt(_) => None,
        }
    }

    /// `row` holds the subset's values, in subset order.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match &self.fitted {
            Fitted::Ols(m) => m.predict_row(row),
            Fitted::Gbt(m) => m.predict_row(row),
        }
    }

    /// Predicts every row of the full `columns` matrix.
    pub fn predict(&self, columns: &[Vec<f64>]) -> Vec<f64> {
        let n = columns.first().map_or(0, Vec::len);
        let mut row = vec![0.0; self.subset.len()];
        (0..n)
            .map(|i| {
                for (slot, &j) in row.iter_mut().zip(&self.subset) {
                    *slot = columns[j][i];
                }
                self.predict_row(&row)
            })
            .collect()
    }
}

/// Residuals `y - ŷ`, in input order. OLS residuals are in-sample; GBT residuals
/// are out-of-fold over contiguous blocks of a seeded shuffle.
pub fn residuals_cv(x: &[&[f64]], y: &[f64], kind: ModelKind, config: &GbtConfig, seed: u64) -> Result<Vec<f64>> {
    match kind {
        ModelKind::Ols => Ok(fit_ols(x, y)?.residuals(x, y)),
        ModelKind::Gbt => gbt_out_of_fold(x, y, config, seed),
    }
}

fn gbt_out_of_fold(x: &[&[f64]], y: &[f64], config: &GbtConfig, seed: u64) -> Result<Vec<f64>> {
    config.validate()?;
    let n = y.len();
    let folds = config.folds_for(n);
    if n < 2 * folds {
        return Err(Error::Fit(format!(
            "{n} samples are too few for {folds}-fold cross-validation"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(seed));
    let mut residuals = vec![0.0; n];
    let mut in_fold = vec![false; n];
    for f in 0..folds {
        let block = &order[f * n / folds..(f + 1) * n / folds];
        in_fold.iter_mut().for_each(|v| *v = false);
        for &i in block {
            in_fold[i] = true;
        }
        let train: Vec<usize> = (0..n).filter(|&i| !in_fold[i]).collect();
        let train_x: Vec<Vec<f64>> = x.iter().map(|c| train.iter().map(|&i| c[i]).collect()).collect();
        let train_cols: Vec<&[f64]> = train_x.iter().map(Vec::as_slice).collect();
        let train_y: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let model = fit_gbt(&train_cols, &train_y, config)?;
        let mut row = vec![0.0; x.len()];
        for &i in block {
            for (slot, c) in row.iter_mut().zip(x) {
                *slot = c[i];
            }
            residuals[i] = y[i] - model.predict_row(&row);
        }
    }
    Ok(residuals)
}
