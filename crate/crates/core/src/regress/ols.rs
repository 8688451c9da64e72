use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scm::symmetric_pinv;

/// Least-squares fit with intercept.
#[derive(Clone, Debug, PartialEq)]
pub struct OlsModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl OlsModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(row).map(|(b, x)| b * x).sum::<f64>()
    }

    /// `y - ŷ` for column-major `x`.
    pub fn residuals(&self, x: &[&[f64]], y: &[f64]) -> Vec<f64> {
        let mut r: Vec<f64> = y.iter().map(|v| v - self.intercept).collect();
        for (col, b) in x.iter().zip(&self.coefficients) {
            for (ri, xi) in r.iter_mut().zip(col.iter()) {
                *ri -= b * xi;
            }
        }
        r
    }
}

/// Fits `y ~ 1 + x`. Rank-deficient designs get the minimum-norm solution.
pub fn fit_ols(x: &[&[f64]], y: &[f64]) -> Result<OlsModel> {
    CrossProducts::new(x, y)?.fit(&(0..x.len()).collect::<Vec<_>>())
}

/// Centered cross products of a full design, so that OLS on any column subset
/// costs `O(k^3)` instead of a pass over the data.
#[derive(Clone, Debug)]
pub struct CrossProducts {
    n: usize,
    means: Vec<f64>,
    y_mean: f64,
    gram: DMatrix<f64>,
    xty: DVector<f64>,
}

impl CrossProducts {
    pub fn new(x: &[&[f64]], y: &[f64]) -> Result<Self> {
        let n = y.len();
        let k = x.len();
        if x.iter().any(|c| c.len() != n) {
            return Err(Error::Fit("design columns and target differ in length".into()));
        }
        if n == 0 {
            return Err(Error::Fit("no samples".into()));
        }
        let nf = n as f64;
        let means: Vec<f64> = x.iter().map(|c| c.iter().sum::<f64>() / nf).collect();
        let y_mean = y.iter().sum::<f64>() / nf;
        let centered: Vec<Vec<f64>> = x
            .iter()
            .zip(&means)
            .map(|(c, m)| c.iter().map(|v| v - m).collect())
            .collect();
        let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
        let mut gram = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in 0..=i {
                let s: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum();
                gram[(i, j)] = s;
                gram[(j, i)] = s;
            }
        }
        let xty = DVector::from_iterator(k, centered.iter().map(|c| c.iter().zip(&yc).map(|(a, b)| a * b).sum()));
        Ok(CrossProducts {
            n,
            means,
            y_mean,
            gram,
            xty,
        })
    }

    /// OLS on the listed columns; coefficients follow the order of `subset`.
    pub fn fit(&self, subset: &[usize]) -> Result<OlsModel> {
        let k = subset.len();
        if self.n < k + 1 {
            return Err(Error::Fit(format!(
                "{} samples cannot fit {} coefficients and an intercept",
                self.n, k
            )));
        }
        if k == 0 {
            return Ok(OlsModel {
                intercept: self.y_mean,
                coefficients: Vec::new(),
            });
        }
        let g = DMatrix::from_fn(k, k, |i, j| self.gram[(subset[i], subset[j])]);
        let c = DVector::from_fn(k, |i, _| self.xty[subset[i]]);
        let (pinv, _) = symmetric_pinv(g);
        let beta = pinv * c;
        let intercept = self.y_mean
            - subset
                .iter()
                .zip(beta.iter())
                .map(|(&j, b)| b * self.means[j])
                .sum::<f64>();
        Ok(OlsModel {
            intercept,
            coefficients: beta.iter().copied().collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_line() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.3 - 1.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 3.0).collect();
        let m = fit_ols(&[&x], &y).unwrap();
        assert!((m.coefficients[0] - 2.0).abs() < 1e-10);
        assert!((m.intercept - 3.0).abs() < 1e-10);
    }

    #[test]
    fn intercept_only_is_mean() {
        let y = [1.0, 2.0, 6.0];
        let m = fit_ols(&[], &y).unwrap();
        assert!((m.intercept - 3.0).abs() < 1e-15);
        assert!((m.predict_row(&[]) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn too_few_samples() {
        let x = [1.0, 2.0];
        assert!(fit_ols(&[&x, &x], &[1.0, 2.0]).is_err());
    }

    /// Normal equations `[1 X]ᵀ[1 X] θ = [1 X]ᵀ y` solved by Gaussian elimination
    /// with partial pivoting.
    fn normal_equation_oracle(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
        let n = y.len();
        let p = x.len() + 1;
        let design = |i: usize, j: usize| if j == 0 { 1.0 } else { x[j - 1][i] };
        let mut a = vec![vec![0.0; p + 1]; p];
        for r in 0..p {
            for c in 0..p {
                a[r][c] = (0..n).map(|i| design(i, r) * design(i, c)).sum();
            }
            a[r][p] = (0..n).map(|i| design(i, r) * y[i]).sum();
        }
        for col in 0..p {
            let piv = (col..p)
                .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
                .unwrap();
            a.swap(col, piv);
            for r in 0..p {
                if r != col {
                    let f = a[r][col] / a[col][col];
                    for c in col..=p {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
        (0..p).map(|r| a[r][p] / a[r][r]).collect()
    }

    #[test]
    fn matches_normal_equations_on_small_system() {
        let x = vec![
            vec![0.3, -1.2, 2.2, 0.7, -0.4],
            vec![1.5, 0.1, -0.8, 0.9, 2.0],
            vec![-0.6, 0.4, 1.1, -1.9, 0.2],
        ];
        let y = vec![1.0, -0.5, 2.5, 0.3, 1.7];
        // 5 samples, 3 slopes plus intercept: one residual degree of freedom.
        let cols: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
        let m = fit_ols(&cols, &y).unwrap();
        let oracle = normal_equation_oracle(&x, &y);
        assert!((m.intercept - oracle[0]).abs() < 1e-8);
        for j in 0..3 {
            assert!((m.coefficients[j] - oracle[j + 1]).abs() < 1e-8);
        }
    }

    #[test]
    fn collinear_columns_get_minimum_norm() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 4.0 * v).collect();
        let m = fit_ols(&[&x, &x], &y).unwrap();
        assert!((m.coefficients[0] - 2.0).abs() < 1e-9);
        assert!((m.coefficients[1] - 2.0).abs() < 1e-9);
    }

    fn design() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
        (2usize..5, 12usize..40).prop_flat_map(|(k, n)| {
            (
                prop::collection::vec(prop::collection::vec(-1.0f64..1.0, n), k),
                prop::collection::vec(-1.0f64..1.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn residuals_satisfy_normal_equations((x, y) in design()) {
            let cols: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
            let r = fit_ols(&cols, &y).unwrap().residuals(&cols, &y);
            prop_assert!(r.iter().sum::<f64>().abs() < 1e-8);
            for c in &cols {
                let dot: f64 = c.iter().zip(&r).map(|(a, b)| a * b).sum();
                prop_assert!(dot.abs() < 1e-8);
            }
        }

        #[test]
        fn adding_a_column_never_increases_sse((x, y) in design()) {
            let cols: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
            let sse = |k: usize| -> f64 {
                fit_ols(&cols[..k], &y).unwrap().residuals(&cols[..k], &y).iter().map(|v| v * v).sum()
            };
            for k in 1..cols.len() {
                prop_assert!(sse(k + 1) <= sse(k) + 1e-10);
            }
        }
    }
}
