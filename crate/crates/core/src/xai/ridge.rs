//! Weighted ridge regression through the normal equations.

use super::XaiError;

/// Pivots below this fraction of the largest diagonal entry count as zero.
const PIVOT_TOLERANCE: f64 = 1e-12;
/// Bound on the normal-equation residual, relative to the problem scale.
const RESIDUAL_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeSolution {
    /// Zero when fitted without an intercept.
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    /// The λ actually used (after a possible boost).
    pub lambda: f64,
}

/// Minimizes `Σ w_i (y_i − b − a·z_i)² + λ‖a‖²`; the intercept `b` is fitted
/// only when `fit_intercept` and is never penalized. On a failed
/// factorization the solve is retried once with `λ·10`.
pub fn solve_weighted_ridge(
    design: &[Vec<f64>],
    targets: &[f64],
    weights: &[f64],
    lambda: f64,
    fit_intercept: bool,
) -> Result<RidgeSolution, XaiError> {
    let n = design.len();
    let p = design.first().map_or(0, Vec::len);
    if n != targets.len() || n != weights.len() {
        return Err(XaiError::InvalidParameter(format!(
            "{n} design rows, {} targets, {} weights",
            targets.len(),
            weights.len()
        )));
    }
    if design.iter().any(|r| r.len() != p) {
        return Err(XaiError::InvalidParameter("ragged design matrix".into()));
    }
    let cols = p + usize::from(fit_intercept);
    if cols == 0 || n < cols {
        return Err(XaiError::InvalidParameter(format!("{n} rows for {cols} unknowns")));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || !weights.iter().any(|&w| w > 0.0) {
        return Err(XaiError::InvalidParameter("weights must be nonnegative and not all zero".into()));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(XaiError::InvalidParameter("lambda must be finite and nonnegative".into()));
    }

    // Normal equations over the augmented design [1 | Z] (or just Z).
    let row = |i: usize| -> Vec<f64> {
        let mut r = Vec::with_capacity(cols);
        if fit_intercept {
            r.push(1.0);
        }
        r.extend_from_slice(&design[i]);
        r
    };
    let mut gram = vec![vec![0.0; cols]; cols];
    let mut rhs = vec![0.0; cols];
    for i in 0..n {
        let w = weights[i];
        if w == 0.0 {
            continue;
        }
        let r = row(i);
        for a in 0..cols {
            let wa = w * r[a];
            rhs[a] += wa * targets[i];
            for b in a..cols {
                gram[a][b] += wa * r[b];
            }
        }
    }
    for a in 0..cols {
        for b in 0..a {
            gram[a][b] = gram[b][a];
        }
    }
    let first_penalized = usize::from(fit_intercept);

    let attempt = |lambda: f64| -> Option<Vec<f64>> {
        let mut m = gram.clone();
        for (j, row) in m.iter_mut().enumerate().skip(first_penalized) {
            row[j] += lambda;
        }
        let chol = cholesky(&m)?;
        let mut x = chol_solve(&chol, &rhs);
        // One step of iterative refinement.
        let r = residual(&m, &x, &rhs);
        let dx = chol_solve(&chol, &r);
        for (xi, d) in x.iter_mut().zip(dx) {
            *xi += d;
        }
        let r = residual(&m, &x, &rhs);
        let scale = 1.0_f64
            .max(inf_norm(&rhs))
            .max(m.iter().map(|row| inf_norm(row)).fold(0.0, f64::max) * inf_norm(&x));
        (x.iter().all(|v| v.is_finite()) && inf_norm(&r) < RESIDUAL_TOLERANCE * scale).then_some(x)
    };

    let (x, used) = match attempt(lambda) {
        Some(x) => (x, lambda),
        None => {
            let boosted = lambda * 10.0;
            (attempt(boosted).ok_or(XaiError::SingularSystem)?, boosted)
        }
    };
    let (intercept, coefficients) = if fit_intercept {
        (x[0], x[1..].to_vec())
    } else {
        (0.0, x)
    };
    Ok(RidgeSolution {
        intercept,
        coefficients,
        lambda: used,
    })
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn residual(m: &[Vec<f64>], x: &[f64], b: &[f64]) -> Vec<f64> {
    m.iter()
        .zip(b)
        .map(|(row, bi)| bi - row.iter().zip(x).map(|(a, xi)| a * xi).sum::<f64>())
        .collect()
}

/// Lower-triangular factor `L` with `L Lᵀ = m`, or `None` when a pivot is
/// not safely positive.
fn cholesky(m: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = m.len();
    let max_diag = (0..n).map(|i| m[i][i].abs()).fold(0.0, f64::max);
    if max_diag == 0.0 {
        return None;
    }
    let mut l = vec![vec![0.0; n]; n];
    for j in 0..n {
        let mut d = m[j][j];
        for k in 0..j {
            d -= l[j][k] * l[j][k];
        }
        if !(d > PIVOT_TOLERANCE * max_diag) {
            return None;
        }
        let djj = d.sqrt();
        l[j][j] = djj;
        for i in j + 1..n {
            let mut s = m[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            l[i][j] = s / djj;
        }
    }
    Some(l)
}

fn chol_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = l.len();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i][k] * y[k]).sum();
        y[i] = (b[i] - s) / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k][i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i][i];
    }
    x
}
