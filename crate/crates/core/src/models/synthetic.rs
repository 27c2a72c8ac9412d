//! Seeded stand-in for a heart-disease table.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::dataset::{Dataset, DatasetSchema};
use super::ModelError;
use crate::payload::{labels, FeatureSchema, FeatureVector};

pub const HEART_SCHEMA_ID: &str = "heart_v1";
pub const HEART_FEATURES: [&str; 8] = [
    "age",
    "sex",
    "chest_pain",
    "resting_bp",
    "cholesterol",
    "max_hr",
    "exercise_angina",
    "oldpeak",
];
/// Lexicographic class order.
pub const HEART_CLASSES: [&str; 2] = ["disease", "no_disease"];
pub const LABEL_NOISE: f64 = 0.05;

pub fn heart_schema() -> DatasetSchema {
    let features = FeatureSchema::new(
        HEART_SCHEMA_ID,
        HEART_FEATURES.iter().map(|s| s.to_string()).collect(),
    )
    .expect("static feature names are unique");
    DatasetSchema {
        features,
        classes: labels(&HEART_CLASSES),
    }
}

/// Noiseless ground-truth score; positive means disease. A points-style
/// risk score: a sum of thresholded clinical criteria.
pub fn risk_score(values: &[f64]) -> f64 {
    let [age, _sex, chest_pain, _bp, chol, max_hr, angina, oldpeak] = values else {
        return f64::NAN;
    };
    let step = |c: bool| f64::from(u8::from(c));
    1.5 * step(*oldpeak >= 1.0) + 1.2 * angina + 1.0 * step(*chest_pain == 0.0) + 1.0 * step(*age >= 58.0)
        + 0.8 * step(*chol >= 240.0)
        - 1.0 * step(*max_hr >= 165.0)
        - 1.1
}

pub fn noiseless_label(values: &[f64]) -> &'static str {
    if risk_score(values) > 0.0 {
        HEART_CLASSES[0]
    } else {
        HEART_CLASSES[1]
    }
}

fn clipped(rng: &mut ChaCha8Rng, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    Normal::new(mean, sd)
        .expect("positive sd")
        .sample(rng)
        .round()
        .clamp(lo, hi)
}

/// Generates `n_rows` labeled rows; identical output for identical seeds.
pub fn gen_synthetic(n_rows: usize, seed: u64) -> Result<Dataset, ModelError> {
    if n_rows == 0 {
        return Err(ModelError::InvalidParameter("n_rows must be at least 1".into()));
    }
    let schema = heart_schema();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rows = Vec::with_capacity(n_rows);
    let mut labels = Vec::with_capacity(n_rows);
    for _ in 0..n_rows {
        let age = clipped(&mut rng, 48.0, 9.0, 29.0, 77.0);
        let sex = f64::from(u8::from(rng.random_bool(0.68)));
        let chest_pain = {
            let u: f64 = rng.random();
            if u < 0.47 {
                0.0
            } else if u < 0.64 {
                1.0
            } else if u < 0.92 {
                2.0
            } else {
                3.0
            }
        };
        let resting_bp = clipped(&mut rng, 131.0, 17.0, 94.0, 200.0);
        let cholesterol = clipped(&mut rng, 185.0, 40.0, 110.0, 420.0);
        let max_hr = clipped(&mut rng, 160.0, 22.0, 71.0, 202.0);
        let exercise_angina = f64::from(u8::from(rng.random_bool(0.33)));
        let oldpeak = if rng.random_bool(0.5) {
            0.0
        } else {
            let z: f64 = unit.sample(&mut rng);
            ((z.abs() * 0.9) * 10.0).round().min(62.0) / 10.0
        };
        let values = vec![
            age,
            sex,
            chest_pain,
            resting_bp,
            cholesterol,
            max_hr,
            exercise_angina,
            oldpeak,
        ];
        let mut label = usize::from(risk_score(&values) <= 0.0);
        if rng.random_bool(LABEL_NOISE) {
            label = 1 - label;
        }
        rows.push(FeatureVector::new(schema.features.clone(), values)?);
        labels.push(label);
    }
    Dataset::from_indices(schema, rows, labels, format!("synthetic(n={n_rows}, seed={seed})"))
}
