//! KernelSHAP: Shapley values as the solution of a weighted regression over
//! coalitions, with both endpoint constraints imposed exactly.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ridge::solve_weighted_ridge;
use super::shapley::MAX_EXACT_FEATURES;
use super::{attributions, coalition_value, BackgroundSet, Explanation, Fidelity, Method, ValueFn, XaiError};
use crate::payload::FeatureVector;

/// Largest sample budget used by default.
pub const DEFAULT_MAX_SAMPLES: usize = 2048;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct KernelShapParams {
    /// Coalitions to sample; defaults to `min(2^d, 2048)`. A budget of at
    /// least `2^d − 2` enumerates every proper coalition.
    #[serde(default)]
    pub n_samples: Option<usize>,
    /// Enumerate every proper coalition regardless of `n_samples`.
    #[serde(default)]
    pub exhaustive: bool,
    #[serde(default)]
    pub seed: u64,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Shapley kernel `(d−1) / (C(d,s) · s · (d−s))` for `0 < s < d`.
pub fn shapley_kernel_weight(d: usize, s: usize) -> Result<f64, XaiError> {
    if s == 0 || s >= d {
        return Err(XaiError::OutOfRange { d, s });
    }
    Ok((d - 1) as f64 / (binomial(d, s) * s as f64 * (d - s) as f64))
}

pub fn kernel_shap(
    f: &ValueFn<'_>,
    x: &FeatureVector,
    bg: &BackgroundSet,
    target_class: &str,
    params: &KernelShapParams,
) -> Result<Explanation, XaiError> {
    let d = x.len();
    if d < 2 {
        return Err(XaiError::InvalidParameter("KernelSHAP needs at least 2 features".into()));
    }
    if bg.is_empty() {
        return Err(XaiError::EmptyBackground);
    }
    bg.check_instance(x)?;
    let proper = if d < usize::BITS as usize - 1 { Some((1usize << d) - 2) } else { None };
    let budget = params
        .n_samples
        .unwrap_or_else(|| proper.map_or(DEFAULT_MAX_SAMPLES, |p| (p + 2).min(DEFAULT_MAX_SAMPLES)));
    let exhaustive = params.exhaustive || proper.is_some_and(|p| budget >= p);
    if exhaustive && d > MAX_EXACT_FEATURES {
        return Err(XaiError::TooManyFeatures(d));
    }
    if !exhaustive && budget < d + 2 {
        return Err(XaiError::InvalidParameter(format!("n_samples must be at least d + 2 = {}", d + 2)));
    }

    let xs = x.values();
    let mut scratch = Vec::with_capacity(d);
    let base = coalition_value(f, xs, bg, |_| false, &mut scratch)?;
    let fx = coalition_value(f, xs, bg, |_| true, &mut scratch)?;

    let solve = |seed: u64| -> Result<(Vec<f64>, usize), XaiError> {
        let (coalitions, weights) = if exhaustive {
            enumerate(d)?
        } else {
            sample(d, budget, seed)
        };
        let mut scratch = Vec::with_capacity(d);
        let delta = fx - base;
        let mut design = Vec::with_capacity(coalitions.len());
        let mut targets = Vec::with_capacity(coalitions.len());
        for z in &coalitions {
            let v = coalition_value(f, xs, bg, |j| z[j], &mut scratch)?;
            let zd = f64::from(u8::from(z[d - 1]));
            // Eliminate φ_d = Δ − Σ_{i<d} φ_i.
            targets.push(v - base - zd * delta);
            design.push((0..d - 1).map(|i| f64::from(u8::from(z[i])) - zd).collect::<Vec<f64>>());
        }
        let sol = solve_weighted_ridge(&design, &targets, &weights, 0.0, false)?;
        let mut phi = sol.coefficients;
        let last = delta - phi.iter().sum::<f64>();
        phi.push(last);
        Ok((phi, coalitions.len()))
    };

    let (phi, count, seed) = match solve(params.seed) {
        Ok((phi, n)) => (phi, n, params.seed),
        Err(XaiError::SingularSystem) if !exhaustive => {
            let retry = params.seed.wrapping_add(1);
            let (phi, n) = solve(retry)?;
            (phi, n, retry)
        }
        Err(e) => return Err(e),
    };
    let residual = base + phi.iter().sum::<f64>() - fx;
    Ok(Explanation {
        method: Method::KernelShap,
        target_class: target_class.to_string(),
        base_value: base,
        phi: attributions(x.names(), &phi),
        fidelity: Fidelity {
            r_squared: None,
            efficiency_residual: Some(residual),
        },
        sample_count: count,
        seed,
    })
}

type Coalitions = (Vec<Vec<bool>>, Vec<f64>);

/// Every proper, nonempty coalition with its kernel weight.
fn enumerate(d: usize) -> Result<Coalitions, XaiError> {
    let full = (1usize << d) - 1;
    let mut zs = Vec::with_capacity(full - 1);
    let mut ws = Vec::with_capacity(full - 1);
    for mask in 1..full {
        zs.push((0..d).map(|j| mask >> j & 1 == 1).collect());
        ws.push(shapley_kernel_weight(d, mask.count_ones() as usize)?);
    }
    Ok((zs, ws))
}

/// Draws coalition sizes in proportion to their total kernel mass
/// `(d−1)/(s(d−s))`, then a uniform subset of that size; the draws then
/// carry unit weight.
fn sample(d: usize, n: usize, seed: u64) -> Coalitions {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mass: Vec<f64> = (1..d).map(|s| 1.0 / (s * (d - s)) as f64).collect();
    let total: f64 = mass.iter().sum();
    let mut zs = Vec::with_capacity(n);
    for _ in 0..n {
        let mut u = rng.random::<f64>() * total;
        let mut s = d - 1;
        for (k, m) in mass.iter().enumerate() {
            if u < *m {
                s = k + 1;
                break;
            }
            u -= m;
        }
        let mut z = vec![false; d];
        for j in index::sample(&mut rng, d, s) {
            z[j] = true;
        }
        zs.push(z);
    }
    (zs, vec![1.0; n])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::xai::exact_shapley;

    fn xv(values: &[f64]) -> FeatureVector {
        FeatureVector::from_pairs("t", values.iter().enumerate().map(|(i, v)| (format!("x{}", i + 1), *v))).unwrap()
    }

    fn bg(rows: Vec<Vec<f64>>) -> BackgroundSet {
        let d = rows[0].len();
        BackgroundSet::from_values((1..=d).map(|i| format!("x{i}")).collect(), rows).unwrap()
    }

    #[test]
    fn kernel_weights() {
        assert!((shapley_kernel_weight(3, 1).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((shapley_kernel_weight(4, 2).unwrap() - 0.125).abs() < 1e-15);
        assert!((shapley_kernel_weight(2, 1).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(shapley_kernel_weight(3, 0), Err(XaiError::OutOfRange { d: 3, s: 0 }));
        assert_eq!(shapley_kernel_weight(3, 3), Err(XaiError::OutOfRange { d: 3, s: 3 }));
    }

    #[test]
    fn exhaustive_product() {
        let f = |z: &[f64]| Ok(z[0] * z[1]);
        let params = KernelShapParams {
            exhaustive: true,
            ..Default::default()
        };
        let e = kernel_shap(&f, &xv(&[1.0, 1.0]), &bg(vec![vec![0.0, 0.0]]), "A", &params).unwrap();
        for p in e.values() {
            assert!((p - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn exhaustive_matches_exact_on_a_nonlinear_function() {
        let f = |z: &[f64]| Ok((z[0] * z[1]).sin() + z[2] * z[2] - z[3] * z[0] + if z[4] > 0.5 { z[1] } else { 0.0 });
        let x = xv(&[0.9, -1.3, 2.0, 0.4, 1.0]);
        let background = bg(vec![
            vec![0.0, 0.0, 0.0, 0.0, 0.0],
            vec![1.0, 2.0, -1.0, 0.5, 0.0],
            vec![-0.5, 0.3, 0.7, 1.5, 1.0],
        ]);
        let exact = exact_shapley(&f, &x, &background, "A").unwrap();
        let kern = kernel_shap(&f, &x, &background, "A", &KernelShapParams::default()).unwrap();
        assert_eq!(kern.sample_count, 30);
        for (a, b) in exact.values().iter().zip(kern.values()) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn sampled_is_deterministic_and_constant_is_zero() {
        let f = |_: &[f64]| Ok(0.3);
        let x = xv(&[1.0; 12]);
        let background = bg(vec![vec![0.0; 12]]);
        let params = KernelShapParams {
            n_samples: Some(200),
            exhaustive: false,
            seed: 9,
        };
        let a = kernel_shap(&f, &x, &background, "A", &params).unwrap();
        let b = kernel_shap(&f, &x, &background, "A", &params).unwrap();
        assert_eq!(a, b);
        assert!(a.values().iter().all(|p| p.abs() < 1e-9));
    }

    #[test]
    fn sampled_additive_function_is_recovered() {
        // For an additive f every coalition regression is exact, so even a
        // sampled design recovers φ_i = w_i (x_i − b_i).
        let w = [0.5, -1.0, 2.0, 0.25, 1.5, -0.75, 0.1, 3.0, -2.0, 1.0, 0.6, -0.4];
        let f = move |z: &[f64]| Ok(z.iter().zip(w).map(|(a, b)| a * b).sum());
        let x = xv(&[1.0; 12]);
        let background = bg(vec![vec![0.0; 12]]);
        let params = KernelShapParams {
            n_samples: Some(400),
            exhaustive: false,
            seed: 3,
        };
        let e = kernel_shap(&f, &x, &background, "A", &params).unwrap();
        for (p, wi) in e.values().iter().zip(w) {
            assert!((p - wi).abs() < 1e-9);
        }
    }

    #[test]
    fn too_few_samples() {
        let f = |_: &[f64]| Ok(0.0);
        let params = KernelShapParams {
            n_samples: Some(5),
            exhaustive: false,
            seed: 0,
        };
        assert!(matches!(
            kernel_shap(&f, &xv(&[0.0; 12]), &bg(vec![vec![0.0; 12]]), "A", &params),
            Err(XaiError::InvalidParameter(_))
        ));
    }
}
