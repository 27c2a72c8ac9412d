//! Exact Shapley values by full coalition enumeration.

use super::{attributions, coalition_value, BackgroundSet, Explanation, Fidelity, Method, ValueFn, XaiError};
use crate::payload::FeatureVector;

/// Enumeration guard: 2^14 coalitions.
pub const MAX_EXACT_FEATURES: usize = 14;

/// `v[mask]` for every coalition bitmask (bit `j` set = feature `j` from x).
pub(crate) fn all_coalition_values(f: &ValueFn<'_>, x: &[f64], bg: &BackgroundSet) -> Result<Vec<f64>, XaiError> {
    let d = x.len();
    let mut scratch = Vec::with_capacity(d);
    (0..1usize << d)
        .map(|mask| coalition_value(f, x, bg, |j| mask >> j & 1 == 1, &mut scratch))
        .collect()
}

/// `|S|! (d−|S|−1)! / d!` for each coalition size `|S|` in `0..d`.
fn shapley_weights(d: usize) -> Vec<f64> {
    let fact = |n: usize| (1..=n).map(|k| k as f64).product::<f64>();
    (0..d).map(|s| fact(s) * fact(d - s - 1) / fact(d)).collect()
}

pub fn exact_shapley(
    f: &ValueFn<'_>,
    x: &FeatureVector,
    bg: &BackgroundSet,
    target_class: &str,
) -> Result<Explanation, XaiError> {
    let d = x.len();
    if d > MAX_EXACT_FEATURES {
        return Err(XaiError::TooManyFeatures(d));
    }
    if bg.is_empty() {
        return Err(XaiError::EmptyBackground);
    }
    bg.check_instance(x)?;
    let v = all_coalition_values(f, x.values(), bg)?;
    let weights = shapley_weights(d);
    let full = (1usize << d) - 1;
    let phi: Vec<f64> = (0..d)
        .map(|i| {
            let bit = 1usize << i;
            (0..=full)
                .filter(|s| s & bit == 0)
                .map(|s| weights[s.count_ones() as usize] * (v[s | bit] - v[s]))
                .sum()
        })
        .collect();
    let base = v[0];
    let residual = base + phi.iter().sum::<f64>() - v[full];
    Ok(Explanation {
        method: Method::ExactShapley,
        target_class: target_class.to_string(),
        base_value: base,
        phi: attributions(x.names(), &phi),
        fidelity: Fidelity {
            r_squared: None,
            efficiency_residual: Some(residual),
        },
        sample_count: 1 << d,
        seed: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xv(values: &[f64]) -> FeatureVector {
        FeatureVector::from_pairs("t", values.iter().enumerate().map(|(i, v)| (format!("x{}", i + 1), *v))).unwrap()
    }

    fn bg(rows: Vec<Vec<f64>>) -> BackgroundSet {
        let d = rows[0].len();
        BackgroundSet::from_values((1..=d).map(|i| format!("x{i}")).collect(), rows).unwrap()
    }

    #[test]
    fn constant_model() {
        let f = |_: &[f64]| Ok(0.7);
        let e = exact_shapley(&f, &xv(&[1.0, 2.0, 3.0]), &bg(vec![vec![0.0; 3]]), "A").unwrap();
        assert!(e.values().iter().all(|p| p.abs() < 1e-12));
        assert!((e.base_value - 0.7).abs() < 1e-12);
    }

    #[test]
    fn identity_on_first_feature() {
        let f = |z: &[f64]| Ok(z[0]);
        let e = exact_shapley(&f, &xv(&[5.0, 7.0]), &bg(vec![vec![0.0, 0.0]]), "A").unwrap();
        assert_eq!(e.values(), vec![5.0, 0.0]);
        assert_eq!(e.base_value, 0.0);
    }

    #[test]
    fn product_splits_evenly() {
        let f = |z: &[f64]| Ok(z[0] * z[1]);
        let e = exact_shapley(&f, &xv(&[1.0, 1.0]), &bg(vec![vec![0.0, 0.0]]), "A").unwrap();
        assert_eq!(e.values(), vec![0.5, 0.5]);
        assert_eq!(e.base_value, 0.0);
    }

    #[test]
    fn guards() {
        let f = |_: &[f64]| Ok(0.0);
        let wide = xv(&[0.0; 15]);
        assert_eq!(
            exact_shapley(&f, &wide, &bg(vec![vec![0.0; 15]]), "A").unwrap_err(),
            XaiError::TooManyFeatures(15)
        );
        assert_eq!(BackgroundSet::from_values(vec!["x1".into()], vec![]).unwrap_err(), XaiError::EmptyBackground);
    }

    #[test]
    fn weights_sum_over_subsets_to_one() {
        // Σ_s C(d−1, s) · s!(d−s−1)!/d! = 1 for each feature.
        for d in 1..=10usize {
            let w = shapley_weights(d);
            let binom = |n: usize, k: usize| (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64);
            let total: f64 = (0..d).map(|s| binom(d - 1, s) * w[s]).sum();
            assert!((total - 1.0).abs() < 1e-12, "d={d}");
        }
    }
}
