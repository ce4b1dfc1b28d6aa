//! Test-only oracles shared by the integration suites.
#![allow(dead_code)]

use chrono::NaiveDate;
use deepdeff::features::{Sample, DERIVED_FEATURES};
use deepdeff::model::{loss_and_gradient, DeepDeffModel, LossKind, ModelSpec};
use deepdeff::numerics::{Matrix, SeededRng};

pub const FD_STEP: f64 = 1e-5;

/// Central difference of `f` with respect to every entry of every matrix
/// reachable through `params`.
pub fn central_differences<P, F>(params: &mut P, matrices: impl Fn(&mut P) -> Vec<&mut Matrix>, f: F) -> Vec<f64>
where
    F: Fn(&P) -> f64,
{
    let shapes: Vec<usize> = matrices(params).iter().map(|m| m.as_slice().len()).collect();
    let mut out = Vec::new();
    for (mi, &len) in shapes.iter().enumerate() {
        for i in 0..len {
            let original = matrices(params)[mi].as_slice()[i];
            matrices(params)[mi].as_mut_slice()[i] = original + FD_STEP;
            let plus = f(params);
            matrices(params)[mi].as_mut_slice()[i] = original - FD_STEP;
            let minus = f(params);
            matrices(params)[mi].as_mut_slice()[i] = original;
            out.push((plus - minus) / (2.0 * FD_STEP));
        }
    }
    out
}

/// `|a − n| / max(|a|, |n|)`, with pairs where both are below `floor` treated as agreeing
/// up to their absolute difference over `floor`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n, floor))
        .fold(0.0, f64::max)
}

pub fn random_vectors(count: usize, len: usize, rng: &mut SeededRng) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| (0..len).map(|_| rng.uniform(-1.0, 1.0)).collect())
        .collect()
}

pub fn fill_uniform(m: &mut Matrix, rng: &mut SeededRng, bound: f64) {
    m.as_mut_slice().iter_mut().for_each(|v| *v = rng.uniform(-bound, bound));
}

pub fn random_sample(k: usize, f: usize, rng: &mut SeededRng) -> Sample {
    let mut basic = Matrix::zeros(k, f);
    let mut derived = Matrix::zeros(k, DERIVED_FEATURES);
    fill_uniform(&mut basic, rng, 1.0);
    fill_uniform(&mut derived, rng, 1.0);
    Sample {
        basic,
        derived,
        target: rng.uniform(0.5, 1.5),
        target_slot: 0,
        target_time: NaiveDate::from_ymd_opt(2020, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap(),
    }
}

/// Round-off in a central difference is about `ε·|loss|/h`, so gradient entries
/// smaller than `NETWORK_FLOOR·max(1, |loss|)` are compared on an absolute scale.
pub const NETWORK_FLOOR: f64 = 1e-6;

/// Largest relative error between the analytic network gradient and central
/// differences of the batch loss. Dropout masks are reproduced by reseeding.
pub fn network_gradient_error(spec: ModelSpec, loss: LossKind, dropout: f64, seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed);
    let mut model = DeepDeffModel::new(spec, &mut rng).unwrap();
    for m in model.params_mut() {
        fill_uniform(m, &mut rng, 0.5);
    }
    let samples: Vec<Sample> = (0..3)
        .map(|_| random_sample(spec.timesteps, spec.basic_features, &mut rng))
        .collect();
    let batch: Vec<&Sample> = samples.iter().collect();
    let training = dropout > 0.0;
    let mask_seed = seed ^ 0x5eed;
    let (value, grads) =
        loss_and_gradient(&model, &batch, loss, training, dropout, &mut SeededRng::new(mask_seed)).unwrap();
    let numeric = central_differences(&mut model, |m| m.params_mut(), |m| {
        loss_and_gradient(m, &batch, loss, training, dropout, &mut SeededRng::new(mask_seed))
            .unwrap()
            .0
    });
    max_relative_error(&grads.flat_params(), &numeric, NETWORK_FLOOR * value.abs().max(1.0))
}
