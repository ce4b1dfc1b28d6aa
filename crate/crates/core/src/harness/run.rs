use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use super::config::{DatasetConfig, ExperimentConfig, FileDataset};
use super::file_safe;
use super::report::{
    emit_plot_data, emit_report, write_plot_data, write_train_reports, EntityMape, PlotRow, ReportFormat,
    ResultRow, ResultTable,
};
use crate::data::{apply_offset, load_csv, load_csv_entities, resample_average, write_canonical, TimeSeries};
use crate::error::{Error, Result};
use crate::features::{basic_feature_count, build_samples_with, split_samples, FeatureConfig, SampleSplit};
use crate::model::{evaluate, save_weights, train, DeepDeffModel, Method, ModelKind, ModelSpec, TrainReport};
use crate::numerics::SeededRng;

/// Stable across platforms and releases, unlike `std`'s hasher.
fn fnv1a(bytes: &[u8], mut hash: u64) -> u64 {
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Seed for one (entity, method, time-steps) cell, derived from the master seed.
pub fn entity_seed(master: u64, entity: &str, method: Method, timesteps: usize) -> u64 {
    let mut h = fnv1a(&master.to_le_bytes(), 0xcbf2_9ce4_8422_2325);
    h = fnv1a(entity.as_bytes(), h);
    h = fnv1a(&[0xff], h);
    h = fnv1a(method.to_string().as_bytes(), h);
    fnv1a(&(timesteps as u64).to_le_bytes(), h)
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct JobKey {
    pub entity: String,
    pub method: Method,
    pub timesteps: usize,
    pub model: ModelKind,
}

#[derive(Clone, Debug)]
pub struct JobSuccess {
    pub test_mape: f64,
    pub report: TrainReport,
    pub plot: Vec<PlotRow>,
    pub model: DeepDeffModel,
}

#[derive(Clone, Debug)]
pub struct JobOutcome {
    pub key: JobKey,
    pub result: std::result::Result<JobSuccess, String>,
}

#[derive(Clone, Debug)]
pub struct ExperimentRun {
    pub table: ResultTable,
    /// Sorted by entity, method, time-steps, model kind.
    pub jobs: Vec<JobOutcome>,
}

fn preprocess(series: TimeSeries, files: &FileDataset) -> Result<TimeSeries> {
    let series = match files.target_interval_minutes {
        Some(target) if target != series.interval_minutes => resample_average(&series, target)?,
        _ => series,
    };
    Ok(match files.offset {
        Some(offset) => apply_offset(&series, offset),
        None => series,
    })
}

/// Loads and preprocesses every selected entity. A failure for one entity is
/// returned in its slot; only a run with no usable entity is an error.
pub fn load_entities(config: &ExperimentConfig) -> Result<Vec<(String, Result<TimeSeries>)>> {
    let wanted = |all: Vec<String>| -> Vec<String> {
        if config.entities.is_empty() {
            all
        } else {
            config.entities.clone()
        }
    };
    let loaded: Vec<(String, Result<TimeSeries>)> = match (&config.dataset, config.dataset.files()?) {
        (DatasetConfig::Synthetic { series, .. }, _) => wanted(series.keys().cloned().collect())
            .into_iter()
            .map(|id| {
                let result = match series.get(&id) {
                    Some(generator) => generator.generate().map(|mut s| {
                        s.source_id = id.clone();
                        s
                    }),
                    None => Err(Error::Input(format!("entity {id:?} is not defined"))),
                };
                (id, result)
            })
            .collect(),
        (_, Some(files)) if files.schema.entity_column.is_some() => {
            let filter: Option<BTreeSet<String>> =
                (!config.entities.is_empty()).then(|| config.entities.iter().cloned().collect());
            let mut found: BTreeMap<String, Result<TimeSeries>> = BTreeMap::new();
            for file in &config.files {
                for (id, series) in load_csv_entities(file, &files.schema, filter.as_ref())? {
                    found.entry(id).or_insert(series);
                }
            }
            let mut found: BTreeMap<String, Result<TimeSeries>> = found
                .into_iter()
                .map(|(id, s)| (id, s.and_then(|s| preprocess(s, &files))))
                .collect();
            wanted(found.keys().cloned().collect())
                .into_iter()
                .map(|id| {
                    let result = found
                        .remove(&id)
                        .unwrap_or_else(|| Err(Error::Input(format!("entity {id:?} not found in the input files"))));
                    (id, result)
                })
                .collect()
        }
        (_, Some(files)) => {
            let by_stem: BTreeMap<String, &PathBuf> = config
                .files
                .iter()
                .map(|f| (f.file_stem().unwrap_or_default().to_string_lossy().into_owned(), f))
                .collect();
            wanted(by_stem.keys().cloned().collect())
                .into_iter()
                .map(|id| {
                    let result = match by_stem.get(&id) {
                        Some(file) => load_csv(file, &files.schema).and_then(|s| preprocess(s, &files)),
                        None => Err(Error::Input(format!("no input file named {id:?}"))),
                    };
                    (id, result)
                })
                .collect()
        }
        (_, None) => return Err(Error::Consistency("file dataset without a schema".into())),
    };
    if loaded.iter().all(|(_, r)| r.is_err()) {
        let reasons: Vec<String> = loaded
            .iter()
            .filter_map(|(id, r)| r.as_ref().err().map(|e| format!("{id}: {e}")))
            .collect();
        return Err(Error::Run(format!("no valid entities ({})", reasons.join("; "))));
    }
    Ok(loaded)
}

fn sample_split(config: &ExperimentConfig, series: &TimeSeries, timesteps: usize) -> Result<SampleSplit> {
    let features = FeatureConfig {
        timesteps,
        derived_mode: config.derived_mode,
    };
    let samples = build_samples_with(series, &features)?;
    let parts = split_samples(samples, &config.dataset.split()?)?;
    for (name, part) in [("training", &parts.train), ("validation", &parts.validation), ("test", &parts.test)] {
        if part.is_empty() {
            return Err(Error::Input(format!("{name} partition has no samples")));
        }
    }
    Ok(parts)
}

fn run_job(config: &ExperimentConfig, series: &TimeSeries, key: &JobKey) -> Result<JobSuccess> {
    let parts = sample_split(config, series, key.timesteps)?;
    let basic_features = basic_feature_count(series.slots_per_day());
    let spec = match key.model {
        ModelKind::DeepDeff => ModelSpec::deepdeff(key.method, key.timesteps, basic_features),
        ModelKind::Basic => ModelSpec::basic(key.method, key.timesteps, basic_features),
    };
    let mut rng = SeededRng::new(entity_seed(config.seed, &key.entity, key.method, key.timesteps));
    let model = DeepDeffModel::new(spec, &mut rng)?;
    let train_config = crate::model::TrainConfig {
        seed: rng.next_u64(),
        ..config.train
    };
    let (model, mut report) = train(model, &parts.train, &parts.validation, &train_config)?;
    let test_mape = evaluate(&model, &parts.test)?;
    report.test_mape = Some(test_mape);
    let plot = emit_plot_data(&model, &parts.test)?;
    Ok(JobSuccess {
        test_mape,
        report,
        plot,
        model,
    })
}

/// Runs `f` over `items` on up to `jobs` threads; results keep item order.
fn run_pool<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    if jobs <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    thread::scope(|scope| {
        for _ in 0..jobs.min(items.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(item) = items.get(i) else { break };
                let result = f(item);
                *slots[i].lock().expect("result slot poisoned") = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("result slot poisoned").expect("every job ran"))
        .collect()
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "job panicked".into())
}

/// Trains and scores every (entity, method, time-steps, model kind) combination.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentRun> {
    config.validate()?;
    let entities = load_entities(config)?;
    let mut keys = Vec::new();
    for (entity, _) in &entities {
        for &method in &config.methods {
            for &timesteps in &config.timesteps {
                for &model in config.model.kinds() {
                    keys.push(JobKey {
                        entity: entity.clone(),
                        method,
                        timesteps,
                        model,
                    });
                }
            }
        }
    }
    keys.sort();
    keys.dedup();
    let series: BTreeMap<&str, &Result<TimeSeries>> = entities.iter().map(|(id, s)| (id.as_str(), s)).collect();

    let outcomes = run_pool(&keys, config.jobs, |key| {
        let result = match series[key.entity.as_str()] {
            Err(e) => Err(e.to_string()),
            Ok(s) => catch_unwind(AssertUnwindSafe(|| run_job(config, s, key)))
                .map_err(panic_message)
                .and_then(|r| r.map_err(|e| e.to_string())),
        };
        match &result {
            Ok(r) => log::info!(
                "{} {} K={} {}: test MAPE {:.3}",
                key.entity,
                key.method,
                key.timesteps,
                key.model,
                r.test_mape
            ),
            Err(e) => log::warn!("{} {} K={} {}: {e}", key.entity, key.method, key.timesteps, key.model),
        }
        JobOutcome {
            key: key.clone(),
            result,
        }
    });

    let mut grouped: BTreeMap<(Method, usize, ModelKind), Vec<EntityMape>> = BTreeMap::new();
    for o in &outcomes {
        let (mape, error) = match &o.result {
            Ok(s) => (Some(s.test_mape), None),
            Err(e) => (None, Some(e.clone())),
        };
        grouped
            .entry((o.key.method, o.key.timesteps, o.key.model))
            .or_default()
            .push(EntityMape {
                entity: o.key.entity.clone(),
                mape,
                error,
            });
    }
    let rows = grouped
        .into_iter()
        .map(|((method, timesteps, model), entities)| ResultRow::new(method, timesteps, model, entities))
        .collect();
    Ok(ExperimentRun {
        table: ResultTable::new(rows),
        jobs: outcomes,
    })
}

/// Writes `results.(csv|json)`, `predictions_<entity>.csv`, `train_report_<entity>.csv`
/// and, when enabled, `weights/<entity>_<method>_k<K>_<model>.json`.
/// The table format writes `results.csv` and returns the rendered table.
pub fn write_outputs(run: &ExperimentRun, dir: &Path, format: ReportFormat, save_models: bool) -> Result<String> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let rendered = match format {
        ReportFormat::Table => {
            emit_report(&run.table, ReportFormat::Csv, Some(dir))?;
            emit_report(&run.table, ReportFormat::Table, None)?
        }
        other => emit_report(&run.table, other, Some(dir))?,
    };
    let mut by_entity: BTreeMap<&str, Vec<(&JobKey, &JobSuccess)>> = BTreeMap::new();
    for o in &run.jobs {
        if let Ok(s) = &o.result {
            by_entity.entry(o.key.entity.as_str()).or_default().push((&o.key, s));
        }
    }
    if save_models && !by_entity.is_empty() {
        fs::create_dir_all(dir.join("weights")).map_err(|e| Error::io(dir.join("weights"), e))?;
    }
    for (entity, jobs) in by_entity {
        let name = file_safe(entity);
        let plots: Vec<_> = jobs
            .iter()
            .map(|(k, s)| (k.method, k.timesteps, k.model, s.plot.as_slice()))
            .collect();
        write_plot_data(&dir.join(format!("predictions_{name}.csv")), &plots)?;
        let reports: Vec<_> = jobs.iter().map(|(k, s)| (k.method, k.timesteps, k.model, &s.report)).collect();
        write_train_reports(&dir.join(format!("train_report_{name}.csv")), &reports)?;
        if save_models {
            for (k, s) in &jobs {
                let file = format!("{name}_{}_k{}_{}.json", k.method, k.timesteps, k.model);
                save_weights(&s.model, &dir.join("weights").join(file))?;
            }
        }
    }
    Ok(rendered)
}

/// Writes each entity's preprocessed series as `<entity>.csv` in the canonical layout.
pub fn ingest(config: &ExperimentConfig, dir: &Path) -> Result<Vec<(String, Result<PathBuf>)>> {
    let entities = load_entities(config)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(entities
        .into_iter()
        .map(|(id, series)| {
            let path = dir.join(format!("{}.csv", file_safe(&id)));
            let result = series.and_then(|s| write_canonical(&s, &path).map(|_| path));
            (id, result)
        })
        .collect())
}

/// Scores saved weights on one entity's test partition.
pub fn predict_entity(config: &ExperimentConfig, entity: &str, model: &DeepDeffModel) -> Result<(Vec<PlotRow>, f64)> {
    let scoped = ExperimentConfig {
        entities: vec![entity.to_string()],
        ..config.clone()
    };
    let (_, series) = load_entities(&scoped)?
        .into_iter()
        .next()
        .ok_or_else(|| Error::Input(format!("entity {entity:?} not found")))?;
    let series = series?;
    let expected = basic_feature_count(series.slots_per_day());
    if model.spec.basic_features != expected {
        return Err(Error::Shape(format!(
            "weights expect {} basic features, the series yields {expected}",
            model.spec.basic_features
        )));
    }
    let parts = sample_split(config, &series, model.spec.timesteps)?;
    let plot = emit_plot_data(model, &parts.test)?;
    let mape = evaluate(model, &parts.test)?;
    Ok((plot, mape))
}
