//! LIME for tabular data: a proximity-weighted linear surrogate fitted on
//! Gaussian perturbations around the instance.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::ridge::solve_weighted_ridge;
use super::{attributions, BackgroundSet, Explanation, Fidelity, Method, ValueFn, XaiError};
use crate::payload::FeatureVector;

pub const DEFAULT_LIME_SAMPLES: usize = 1000;
pub const DEFAULT_RIDGE_LAMBDA: f64 = 1e-3;
const NEGLIGIBLE_WEIGHT: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LimeParams {
    /// Perturbations including the instance itself; default 1000.
    #[serde(default)]
    pub n_samples: Option<usize>,
    /// Default `0.75·√d`.
    #[serde(default)]
    pub kernel_width: Option<f64>,
    /// Default `1e-3`.
    #[serde(default)]
    pub ridge_lambda: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

/// Perturbation scale per feature: the background std, or 1 where the
/// background does not vary.
fn perturbation_scale(bg: &BackgroundSet) -> Vec<f64> {
    bg.stds().iter().map(|&s| if s > 0.0 { s } else { 1.0 }).collect()
}

pub fn lime_explain(
    f: &ValueFn<'_>,
    x: &FeatureVector,
    bg: &BackgroundSet,
    target_class: &str,
    params: &LimeParams,
) -> Result<Explanation, XaiError> {
    let d = x.len();
    if bg.is_empty() {
        return Err(XaiError::EmptyBackground);
    }
    bg.check_instance(x)?;
    let n = params.n_samples.unwrap_or(DEFAULT_LIME_SAMPLES);
    if n < 2 * d || n < d + 2 {
        return Err(XaiError::InvalidParameter(format!("n_samples must be at least {}", (2 * d).max(d + 2))));
    }
    let width = params.kernel_width.unwrap_or(0.75 * (d as f64).sqrt());
    if !(width.is_finite() && width > 0.0) {
        return Err(XaiError::InvalidParameter("kernel_width must be positive".into()));
    }
    let lambda = params.ridge_lambda.unwrap_or(DEFAULT_RIDGE_LAMBDA);
    let sigma = perturbation_scale(bg);
    let xs = x.values();

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut design = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    let mut z = vec![0.0; d];
    for k in 0..n {
        // Sample 0 is the instance itself.
        let u: Vec<f64> = if k == 0 {
            vec![0.0; d]
        } else {
            (0..d).map(|_| StandardNormal.sample(&mut rng)).collect()
        };
        for j in 0..d {
            z[j] = xs[j] + sigma[j] * u[j];
        }
        let dist2: f64 = u.iter().map(|v| v * v).sum();
        weights.push((-dist2 / (width * width)).exp());
        targets.push(f(&z)?);
        design.push(u);
    }
    if weights[1..].iter().all(|&w| w < NEGLIGIBLE_WEIGHT) {
        return Err(XaiError::DegenerateKernel);
    }
    let sol = solve_weighted_ridge(&design, &targets, &weights, lambda, true)?;
    let r_squared = weighted_r_squared(&design, &targets, &weights, sol.intercept, &sol.coefficients);
    Ok(Explanation {
        method: Method::Lime,
        target_class: target_class.to_string(),
        base_value: sol.intercept,
        phi: attributions(x.names(), &sol.coefficients),
        fidelity: Fidelity {
            r_squared: Some(r_squared),
            efficiency_residual: None,
        },
        sample_count: n,
        seed: params.seed,
    })
}

/// Weighted coefficient of determination, clamped to [0, 1]; a target
/// without variance counts as perfectly explained.
fn weighted_r_squared(design: &[Vec<f64>], y: &[f64], w: &[f64], intercept: f64, coef: &[f64]) -> f64 {
    let wsum: f64 = w.iter().sum();
    let mean = y.iter().zip(w).map(|(y, w)| y * w).sum::<f64>() / wsum;
    let ss_tot: f64 = y.iter().zip(w).map(|(y, w)| w * (y - mean).powi(2)).sum();
    let ss_res: f64 = design
        .iter()
        .zip(y)
        .zip(w)
        .map(|((row, y), w)| {
            let pred = intercept + row.iter().zip(coef).map(|(a, b)| a * b).sum::<f64>();
            w * (y - pred).powi(2)
        })
        .sum();
    let scale = y.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
    if ss_tot <= 1e-24 * scale * scale * wsum {
        return 1.0;
    }
    (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(d: usize) -> (FeatureVector, BackgroundSet) {
        let names: Vec<String> = (0..d).map(|i| format!("f{i}")).collect();
        let x = FeatureVector::from_pairs("t", names.iter().cloned().zip((0..d).map(|i| i as f64))).unwrap();
        let rows: Vec<Vec<f64>> = (0..50).map(|r| (0..d).map(|j| ((r * (j + 3)) % 11) as f64 * (j + 1) as f64).collect()).collect();
        (x, BackgroundSet::from_values(names, rows).unwrap())
    }

    #[test]
    fn constant_model_has_zero_attribution() {
        let (x, bg) = setup(4);
        let f = |_: &[f64]| Ok(0.42);
        let e = lime_explain(&f, &x, &bg, "A", &LimeParams::default()).unwrap();
        assert!(e.values().iter().all(|p| p.abs() < 1e-6));
        assert_eq!(e.fidelity.r_squared, Some(1.0));
        assert!((e.base_value - 0.42).abs() < 1e-9);
    }

    #[test]
    fn linear_model_recovered_in_standardized_units() {
        let (x, bg) = setup(3);
        let w = [2.0, -1.0, 0.5];
        let sigma = perturbation_scale(&bg);
        let s = sigma.clone();
        let f = move |z: &[f64]| Ok((0..3).map(|j| w[j] * z[j] / s[j]).sum());
        let params = LimeParams {
            n_samples: Some(2000),
            ridge_lambda: Some(0.0),
            ..Default::default()
        };
        let e = lime_explain(&f, &x, &bg, "A", &params).unwrap();
        for (p, wi) in e.values().iter().zip(w) {
            assert!((p - wi).abs() < 1e-8, "{p} vs {wi}");
        }
        assert!(e.fidelity.r_squared.unwrap() > 0.999_999);
    }

    #[test]
    fn deterministic_for_seed() {
        let (x, bg) = setup(3);
        let f = |z: &[f64]| Ok((z[0] * z[1]).tanh());
        let p = LimeParams {
            seed: 5,
            ..Default::default()
        };
        assert_eq!(lime_explain(&f, &x, &bg, "A", &p).unwrap(), lime_explain(&f, &x, &bg, "A", &p).unwrap());
    }

    #[test]
    fn tiny_kernel_is_degenerate() {
        let (x, bg) = setup(3);
        let f = |z: &[f64]| Ok(z[0]);
        let p = LimeParams {
            kernel_width: Some(1e-4),
            ..Default::default()
        };
        assert_eq!(lime_explain(&f, &x, &bg, "A", &p).unwrap_err(), XaiError::DegenerateKernel);
    }

    #[test]
    fn parameter_checks() {
        let (x, bg) = setup(3);
        let f = |_: &[f64]| Ok(0.0);
        let few = LimeParams {
            n_samples: Some(5),
            ..Default::default()
        };
        assert!(matches!(lime_explain(&f, &x, &bg, "A", &few), Err(XaiError::InvalidParameter(_))));
        let bad = LimeParams {
            kernel_width: Some(0.0),
            ..Default::default()
        };
        assert!(matches!(lime_explain(&f, &x, &bg, "A", &bad), Err(XaiError::InvalidParameter(_))));
    }
}
