//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Three operations are exposed: a synthetic load profile with its derived
//! feature curves, a side-by-side training race between the dual-stream model
//! and the baseline, and hidden-state traces of a single recurrent cell.
//! Everything crosses the boundary as JSON strings or `Float64Array`s.

use deepdeff::cells::{forward_sequence, CellKind, CellParams, Direction};
use deepdeff::data::synthetic::SyntheticLoad;
use deepdeff::data::{SplitSpec, TimeSeries};
use deepdeff::features::{basic_feature_count, build_samples, split_samples, window_stats, Sample, SampleSplit};
use deepdeff::model::{evaluate, predict, DeepDeffModel, Method, ModelSpec, TrainConfig, Trainer};
use deepdeff::numerics::SeededRng;
use serde_json::json;
use wasm_bindgen::prelude::*;

type Result<T> = std::result::Result<T, String>;

fn js(e: String) -> JsError {
    JsError::new(&e)
}

fn series(days: u32, interval_minutes: u32, noise: f64, seed: u32) -> Result<TimeSeries> {
    SyntheticLoad {
        days,
        interval_minutes,
        noise_std: noise,
        seed: u64::from(seed),
        ..SyntheticLoad::default()
    }
    .generate()
    .map_err(|e| e.to_string())
}

/// Load plus the rolling window mean and std over the last `window` readings
/// (NaN until the window fills), as JSON.
pub fn profile_json(days: u32, interval_minutes: u32, noise: f64, seed: u32, window: usize) -> Result<String> {
    let s = series(days, interval_minutes, noise, seed)?;
    let loads = s.loads();
    let (mut mean, mut std) = (Vec::with_capacity(loads.len()), Vec::with_capacity(loads.len()));
    for i in 0..loads.len() {
        let (m, d) = window_stats(&loads, i, window).unwrap_or((f64::NAN, f64::NAN));
        mean.push(m);
        std.push(d);
    }
    let labels: Vec<String> = s.records.iter().map(|r| r.timestamp.format("%a %d %b %H:%M").to_string()).collect();
    let holiday: Vec<bool> = s.records.iter().map(|r| r.holiday).collect();
    // NaN is not valid JSON; the page treats null as a gap
    let nullable = |v: Vec<f64>| v.into_iter().map(|x| x.is_finite().then_some(x)).collect::<Vec<_>>();
    Ok(json!({
        "labels": labels,
        "load": loads,
        "window_mean": nullable(mean),
        "window_std": nullable(std),
        "holiday": holiday,
    })
    .to_string())
}

#[wasm_bindgen]
pub fn load_profile(days: u32, interval_minutes: u32, noise: f64, seed: u32, window: usize) -> std::result::Result<String, JsError> {
    profile_json(days, interval_minutes, noise, seed, window).map_err(js)
}

/// Hidden-state trajectory of one cell with random weights driven by a unit
/// step that switches on at `steps / 4`. Row-major `steps × hidden`.
pub fn cell_trace_values(kind: &str, hidden: usize, steps: usize, seed: u32) -> Result<Vec<f64>> {
    let kind = match kind.to_ascii_lowercase().as_str() {
        "rnn" => CellKind::Rnn,
        "gru" => CellKind::Gru,
        "lstm" => CellKind::Lstm,
        other => return Err(format!("unknown cell type {other:?}")),
    };
    if hidden == 0 || steps == 0 {
        return Err("hidden size and steps must be positive".into());
    }
    let params = CellParams::glorot(kind, 1, hidden, &mut SeededRng::new(u64::from(seed)));
    let inputs: Vec<[f64; 1]> = (0..steps).map(|t| [if t >= steps / 4 { 1.0 } else { 0.0 }]).collect();
    let slices: Vec<&[f64]> = inputs.iter().map(|x| x.as_slice()).collect();
    let (_, tape) = forward_sequence(&params, &slices, Direction::Forward).map_err(|e| e.to_string())?;
    Ok(tape.hidden_in_time_order().concat())
}

#[wasm_bindgen]
pub fn cell_trace(kind: &str, hidden: usize, steps: usize, seed: u32) -> std::result::Result<Vec<f64>, JsError> {
    cell_trace_values(kind, hidden, steps, seed).map_err(js)
}

/// The dual-stream model and the baseline trained on the same synthetic
/// household, one epoch at a time.
#[wasm_bindgen]
pub struct TrainingRace {
    parts: SampleSplit,
    deep: Trainer,
    basic: Trainer,
}

impl TrainingRace {
    pub fn create(method: &str, timesteps: usize, interval_minutes: u32, noise: f64, seed: u32) -> Result<Self> {
        let method: Method = method.parse().map_err(|e: deepdeff::Error| e.to_string())?;
        let s = series(60, interval_minutes, noise, seed)?;
        let samples = build_samples(&s, timesteps).map_err(|e| e.to_string())?;
        let parts = split_samples(samples, &SplitSpec::month_wise()).map_err(|e| e.to_string())?;
        let features = basic_feature_count(s.slots_per_day());
        let mut rng = SeededRng::new(u64::from(seed));
        let deep = DeepDeffModel::new(ModelSpec::deepdeff(method, timesteps, features), &mut rng);
        let basic = DeepDeffModel::new(ModelSpec::basic(method, timesteps, features), &mut rng);
        let config = TrainConfig {
            seed: u64::from(seed),
            ..TrainConfig::default()
        };
        let trainer = |m: deepdeff::Result<DeepDeffModel>| {
            m.and_then(|m| Trainer::new(m, config)).map_err(|e| e.to_string())
        };
        Ok(Self {
            deep: trainer(deep)?,
            basic: trainer(basic)?,
            parts,
        })
    }

    /// One epoch for each model that has not stopped; returns the latest records as JSON.
    pub fn advance(&mut self) -> Result<String> {
        let mut status = serde_json::Map::new();
        for (name, trainer) in [("deepdeff", &mut self.deep), ("basic", &mut self.basic)] {
            if !trainer.is_done() {
                trainer
                    .run_epoch(&self.parts.train, &self.parts.validation)
                    .map_err(|e| e.to_string())?;
            }
            let report = trainer.report();
            let last = report.epochs.last();
            status.insert(
                name.into(),
                json!({
                    "epoch": last.map(|e| e.epoch),
                    "train_loss": last.map(|e| e.train_loss),
                    "validation_mape": last.map(|e| e.validation_mape),
                    "best_validation_mape": report.best_validation_mape,
                    "done": trainer.is_done(),
                }),
            );
        }
        Ok(serde_json::Value::Object(status).to_string())
    }

    /// Test-period actual load and both models' predictions, with test MAPE.
    pub fn test_curves(&self) -> Result<String> {
        let test: &[Sample] = &self.parts.test;
        let labels: Vec<String> = test.iter().map(|s| s.target_time.format("%d %b %H:%M").to_string()).collect();
        let actual: Vec<f64> = test.iter().map(|s| s.target).collect();
        let run = |t: &Trainer| -> Result<(Vec<f64>, f64)> {
            let p = predict(t.model(), test).map_err(|e| e.to_string())?;
            let m = evaluate(t.model(), test).map_err(|e| e.to_string())?;
            Ok((p, m))
        };
        let (deep, deep_mape) = run(&self.deep)?;
        let (basic, basic_mape) = run(&self.basic)?;
        Ok(json!({
            "labels": labels,
            "actual": actual,
            "deepdeff": deep,
            "basic": basic,
            "deepdeff_mape": deep_mape,
            "basic_mape": basic_mape,
        })
        .to_string())
    }

    pub fn sample_counts(&self) -> [usize; 3] {
        [self.parts.train.len(), self.parts.validation.len(), self.parts.test.len()]
    }
}

#[wasm_bindgen]
impl TrainingRace {
    #[wasm_bindgen(constructor)]
    pub fn new(method: &str, timesteps: usize, interval_minutes: u32, noise: f64, seed: u32) -> std::result::Result<TrainingRace, JsError> {
        Self::create(method, timesteps, interval_minutes, noise, seed).map_err(js)
    }

    pub fn step(&mut self) -> std::result::Result<String, JsError> {
        self.advance().map_err(js)
    }

    pub fn curves(&self) -> std::result::Result<String, JsError> {
        self.test_curves().map_err(js)
    }

    #[wasm_bindgen(getter)]
    pub fn finished(&self) -> bool {
        self.deep.is_done() && self.basic.is_done()
    }
}
