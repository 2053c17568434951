//! Shared helpers for unit tests.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::model::{LabeledBatch, ModelSpec, ParamVector};

pub fn random_params(spec: &ModelSpec, rng: &mut ChaCha8Rng) -> ParamVector {
    ParamVector::from_vec(
        (0..spec.param_count())
            .map(|_| 0.5 * rng.sample::<f64, _>(StandardNormal))
            .collect(),
    )
}

pub fn random_batch(spec: &ModelSpec, size: usize, rng: &mut ChaCha8Rng) -> LabeledBatch {
    let d = spec.input_dim();
    let c = spec.num_classes();
    let features: Vec<f64> = (0..size * d).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let labels: Vec<usize> = (0..size).map(|_| rng.gen_range(0..c)).collect();
    LabeledBatch::new(Array2::from_shape_vec((size, d), features).unwrap(), labels).unwrap()
}

/// Relative error with an absolute floor for near-zero references.
pub fn rel_err(a: f64, b: f64, abs_floor: f64) -> f64 {
    let diff = (a - b).abs();
    if diff < abs_floor {
        0.0
    } else {
        diff / a.abs().max(b.abs()).max(abs_floor)
    }
}
