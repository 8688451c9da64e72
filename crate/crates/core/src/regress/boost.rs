/// Shrinkage applied to each componentwise fit.
pub const BOOST_STEP: f64 = 0.1;
pub const BOOST_ITERATIONS: usize = 500;

/// Componentwise L2-boosting on standardized columns. Returns up to `k` distinct
/// covariate ids in the order they were first selected; all ids when `d <= k`.
pub fn l2_boost_select(x: &[&[f64]], y: &[f64], k: usize) -> Vec<usize> {
    let d = x.len();
    if d <= k {
        return (0..d).collect();
    }
    let n = y.len();
    if n == 0 || k == 0 {
        return Vec::new();
    }
    let nf = n as f64;
    // Standardized copies; constant columns are never selectable.
    let z: Vec<Option<Vec<f64>>> = x
        .iter()
        .map(|c| {
            let m = c.iter().sum::<f64>() / nf;
            let sd = (c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / nf).sqrt();
            (sd > 0.0).then(|| c.iter().map(|v| (v - m) / sd).collect())
        })
        .collect();
    let y_mean = y.iter().sum::<f64>() / nf;
    let residual: Vec<f64> = y.iter().map(|v| v - y_mean).collect();

    // corr[j] = <z_j, r> / n, updated through cached inner products with picked columns.
    let mut corr: Vec<f64> = z
        .iter()
        .map(|c| c.as_ref().map_or(0.0, |c| dot(c, &residual) / nf))
        .collect();
    let mut gram_cols: Vec<Option<Vec<f64>>> = vec![None; d];
    let mut selected = Vec::new();
    for _ in 0..BOOST_ITERATIONS {
        let mut best: Option<usize> = None;
        for j in 0..d {
            if z[j].is_some() && best.is_none_or(|b| corr[j].abs() > corr[b].abs()) {
                best = Some(j);
            }
        }
        let Some(j) = best else { break };
        if corr[j].abs() <= 1e-14 {
            break;
        }
        if !selected.contains(&j) {
            selected.push(j);
            if selected.len() == k {
                break;
            }
        }
        let step = BOOST_STEP * corr[j];
        let zj = z[j].as_ref().expect("selectable column");
        let g =
            gram_cols[j].get_or_insert_with(|| z.iter().map(|c| c.as_ref().map_or(0.0, |c| dot(c, zj) / nf)).collect());
        for (c, gj) in corr.iter_mut().zip(g.iter()) {
            *c -= step * gj;
        }
    }
    selected
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
