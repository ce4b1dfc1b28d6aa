//! Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Data-dependent checks read dataset paths from the environment:
//! `DEEPDEFF_AMPDS`, `DEEPDEFF_RTE`, `DEEPDEFF_ERCOT`, `DEEPDEFF_SGSC`
//! (optionally `DEEPDEFF_SGSC_CUSTOMERS`, comma separated) and `DEEPDEFF_PRECON`
//! (a house file or a directory of them).

mod common;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use chrono::{Datelike, Duration as Span, NaiveDate, NaiveDateTime, Timelike};
use common::*;
use deepdeff::cells::{CellKind, RecurrentLayer};
use deepdeff::data::presets::DatasetPreset;
use deepdeff::data::synthetic::SyntheticLoad;
use deepdeff::data::{load_csv, resample_average, SplitSpec, TimeSeries};
use deepdeff::features::{build_samples, split_samples, Sample, DERIVED_FEATURES};
use deepdeff::harness::{
    load_entities, run_experiment, write_outputs, DatasetConfig, ExperimentConfig, ModelSelection, ReportFormat,
};
use deepdeff::model::{
    evaluate, mae, mape, DeepDeffModel, LossKind, Method, ModelKind, ModelSpec, TrainConfig, Trainer,
};
use deepdeff::numerics::{Matrix, SeededRng};
use proptest::prelude::*;
use proptest::test_runner::{Config as ProptestConfig, RngAlgorithm, TestRng, TestRunner};

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

struct Line {
    id: &'static str,
    title: &'static str,
    verdict: Verdict,
    elapsed: Duration,
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        ProptestConfig {
            cases,
            failure_persistence: None,
            ..ProptestConfig::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

fn check(ok: bool, pass: String, fail: String) -> Verdict {
    if ok {
        Verdict::Pass(pass)
    } else {
        Verdict::Fail(fail)
    }
}

fn within_budget(verdict: Verdict, elapsed: Duration, budget: Duration) -> Verdict {
    match verdict {
        Verdict::Pass(msg) if elapsed > budget => {
            Verdict::Fail(format!("{msg}; took {elapsed:.1?}, budget {budget:?}"))
        }
        v => v,
    }
}

// ---------------------------------------------------------------- criterion 1

fn layer_gradient_error(kind: CellKind, bidirectional: bool, seed: u64) -> f64 {
    const F: usize = 3;
    const H: usize = 4;
    const K: usize = 5;
    let mut rng = SeededRng::new(seed);
    let mut layer = RecurrentLayer::zeros(kind, bidirectional, F, H);
    for cell in layer.cells_mut() {
        for m in cell.matrices_mut() {
            fill_uniform(m, &mut rng, 0.5);
        }
    }
    let inputs = random_vectors(K, F, &mut rng);
    let width = layer.output_size();
    let d_last: Vec<f64> = (0..width).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let d_steps = random_vectors(K, width, &mut rng);
    let loss = |l: &RecurrentLayer| {
        let slices: Vec<&[f64]> = inputs.iter().map(Vec::as_slice).collect();
        let (last, steps, _) = l.forward(&slices).unwrap();
        let mut total: f64 = last.iter().zip(&d_last).map(|(a, b)| a * b).sum();
        for (s, d) in steps.iter().zip(&d_steps) {
            total += s.iter().zip(d).map(|(a, b)| a * b).sum::<f64>();
        }
        total
    };
    let slices: Vec<&[f64]> = inputs.iter().map(Vec::as_slice).collect();
    let (_, _, tape) = layer.forward(&slices).unwrap();
    let (grads, _) = layer.backward(&tape, &d_last, Some(&d_steps)).unwrap();
    let analytic: Vec<f64> = grads
        .cells()
        .flat_map(|c| c.matrices().into_iter().flat_map(|m| m.as_slice().to_vec()).collect::<Vec<_>>())
        .collect();
    let numeric = central_differences(
        &mut layer,
        |l| l.cells_mut().flat_map(|c| c.matrices_mut()).collect(),
        loss,
    );
    max_relative_error(&analytic, &numeric, 1e-8)
}

fn criterion_gradients() -> Verdict {
    let mut worst: (f64, String) = (0.0, String::new());
    let mut note = |err: f64, what: String| {
        if err > worst.0 || worst.1.is_empty() {
            worst = (err, what);
        }
    };
    for (i, kind) in [CellKind::Rnn, CellKind::Gru, CellKind::Lstm].into_iter().enumerate() {
        for bidirectional in [false, true] {
            let err = layer_gradient_error(kind, bidirectional, 10 + i as u64);
            note(err, format!("{} cell", Method::new(kind, bidirectional)));
        }
    }
    for (i, method) in Method::ALL.into_iter().enumerate() {
        for (kind, loss, dropout) in [
            (ModelKind::DeepDeff, LossKind::Mape, 0.0),
            (ModelKind::DeepDeff, LossKind::Mape, 0.2),
            (ModelKind::Basic, LossKind::Mae, 0.2),
        ] {
            let spec = ModelSpec {
                kind,
                method,
                timesteps: 2,
                basic_features: 3,
                hidden: 4,
                dense: 3,
            };
            let err = network_gradient_error(spec, loss, dropout, 50 + i as u64);
            note(err, format!("{method} {kind} network, dropout {dropout}"));
        }
    }
    check(
        worst.0 < 1e-4,
        format!("max relative error {:.2e} ({})", worst.0, worst.1),
        format!("relative error {:.2e} in {} exceeds 1e-4", worst.0, worst.1),
    )
}

// ---------------------------------------------------------------- criterion 2

/// Independent recomputation of every sample from the raw readings of a
/// gap-free series.
/// (basic rows, derived rows, target) for one sample.
type OracleSample = (Vec<Vec<f64>>, Vec<Vec<f64>>, f64);

fn oracle_samples(times: &[NaiveDateTime], loads: &[f64], k: usize, slots: usize) -> Vec<OracleSample> {
    let interval = 24 * 60 / slots as u32;
    let first = (2 * k - 1).max(k * slots);
    let mut out = Vec::new();
    for t in first..loads.len() {
        let mut basic = Vec::new();
        let mut derived = Vec::new();
        let mut slot_vals = Vec::new();
        for d in 1..=k {
            slot_vals.push(loads[t - d * slots]);
        }
        let n = k as f64;
        let slot_mean = slot_vals.iter().sum::<f64>() / n;
        let slot_std = (slot_vals.iter().map(|v| (v - slot_mean).powi(2)).sum::<f64>() / n).sqrt();
        for j in t - k..t {
            let ts = times[j];
            let slot = ((ts.hour() * 60 + ts.minute()) / interval) as usize;
            let weekday = ts.weekday().num_days_from_monday() as usize;
            let mut row = vec![loads[j]];
            row.extend((0..slots).map(|s| if s == slot { 1.0 } else { 0.0 }));
            row.extend((0..7).map(|d| if d == weekday { 1.0 } else { 0.0 }));
            row.push(if weekday >= 5 { 1.0 } else { 0.0 });
            basic.push(row);

            let window = &loads[j + 1 - k..=j];
            let mean = window.iter().sum::<f64>() / n;
            let std = (window.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            derived.push(vec![mean, std, slot_mean, slot_std]);
        }
        out.push((basic, derived, loads[t]));
    }
    out
}

fn criterion_feature_oracle() -> Verdict {
    let series = SyntheticLoad {
        days: 10,
        interval_minutes: 30,
        seed: 4,
        ..SyntheticLoad::default()
    }
    .generate()
    .unwrap();
    let times: Vec<NaiveDateTime> = series.records.iter().map(|r| r.timestamp).collect();
    let loads = series.loads();
    let slots = 48;
    let mut compared = 0usize;
    let mut worst_stat = 0.0f64;
    for k in [1, 2, 3, 6] {
        let samples = build_samples(&series, k).unwrap();
        let expected = oracle_samples(&times, &loads, k, slots);
        if samples.len() != expected.len() {
            return Verdict::Fail(format!("K={k}: {} samples, oracle {}", samples.len(), expected.len()));
        }
        for (s, (basic, derived, target)) in samples.iter().zip(&expected) {
            if s.target.to_bits() != target.to_bits() {
                return Verdict::Fail(format!("K={k}: target mismatch at {}", s.target_time));
            }
            for (r, row) in basic.iter().enumerate() {
                if s.basic.row(r)[0].to_bits() != row[0].to_bits() {
                    return Verdict::Fail(format!("K={k}: load mismatch at {}", s.target_time));
                }
                let got: Vec<u64> = s.basic.row(r)[1..].iter().map(|v| v.to_bits()).collect();
                let want: Vec<u64> = row[1..].iter().map(|v| v.to_bits()).collect();
                if got != want {
                    return Verdict::Fail(format!("K={k}: one-hot block differs at {} row {r}", s.target_time));
                }
            }
            for (r, row) in derived.iter().enumerate() {
                for (c, want) in row.iter().enumerate() {
                    worst_stat = worst_stat.max((s.derived.get(r, c) - want).abs());
                }
            }
            compared += 1;
        }
    }
    check(
        worst_stat < 1e-12,
        format!("{compared} samples, one-hots bitwise equal, max statistic diff {worst_stat:.1e}"),
        format!("statistic differs by {worst_stat:.1e}"),
    )
}

// ---------------------------------------------------------------- criterion 3

fn criterion_metrics() -> Verdict {
    let exact = [
        ("mape([110],[100])", mape(&[110.0], &[100.0]).unwrap(), 10.0),
        ("mape([1,3],[2,2])", mape(&[1.0, 3.0], &[2.0, 2.0]).unwrap(), 50.0),
        ("mae([1,3],[2,2])", mae(&[1.0, 3.0], &[2.0, 2.0]).unwrap(), 1.0),
    ];
    for (name, got, want) in exact {
        if (got - want).abs() > 1e-12 {
            return Verdict::Fail(format!("{name} = {got}, expected {want}"));
        }
    }
    let strategy = (
        prop::collection::vec((0.1f64..100.0, 0.1f64..100.0), 1..50),
        0.01f64..1000.0,
    );
    let result = runner(100).run(&strategy, |(pairs, scale)| {
        let (p, a): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let base = mape(&p, &a).unwrap();
        let ps: Vec<f64> = p.iter().map(|v| v * scale).collect();
        let as_: Vec<f64> = a.iter().map(|v| v * scale).collect();
        let scaled = mape(&ps, &as_).unwrap();
        prop_assert!((base - scaled).abs() <= 1e-9 * base.max(1.0), "{base} vs {scaled}");
        Ok(())
    });
    match result {
        Ok(()) => Verdict::Pass("exact values hold; scale invariance over 100 random cases".into()),
        Err(e) => Verdict::Fail(format!("scale property: {e}")),
    }
}

// ---------------------------------------------------------------- criterion 4

/// 100 samples whose target is a fixed linear function of the inputs.
fn linear_toy_set() -> Vec<Sample> {
    const K: usize = 2;
    const F: usize = 5;
    let mut rng = SeededRng::new(77);
    let basic_w: Vec<f64> = (0..K * F).map(|_| rng.uniform(-0.5, 0.5)).collect();
    let derived_w: Vec<f64> = (0..K * DERIVED_FEATURES).map(|_| rng.uniform(-0.5, 0.5)).collect();
    let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
    (0..100)
        .map(|i| {
            let b: Vec<f64> = (0..K * F).map(|_| rng.uniform(0.0, 1.0)).collect();
            let d: Vec<f64> = (0..K * DERIVED_FEATURES).map(|_| rng.uniform(0.0, 1.0)).collect();
            let dot = |x: &[f64], w: &[f64]| x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
            let target = 2.0 + dot(&b, &basic_w) + dot(&d, &derived_w);
            Sample {
                basic: Matrix::new(K, F, b).unwrap(),
                derived: Matrix::new(K, DERIVED_FEATURES, d).unwrap(),
                target,
                target_slot: 0,
                target_time: start + Span::minutes(30 * i),
            }
        })
        .collect()
}

fn criterion_overfit() -> Verdict {
    let samples = linear_toy_set();
    let config = TrainConfig {
        max_epochs: 500,
        patience: 500,
        seed: 1,
        ..TrainConfig::default()
    };
    let results: Vec<(Method, Option<usize>, f64, f64, f64)> = std::thread::scope(|scope| {
        let handles: Vec<_> = Method::ALL
            .into_iter()
            .map(|method| {
                let samples = &samples;
                scope.spawn(move || {
                    let spec = ModelSpec::deepdeff(method, 2, 5);
                    let model = DeepDeffModel::new(spec, &mut SeededRng::new(3)).unwrap();
                    let mut trainer = Trainer::new(model, config).unwrap();
                    let mut reached = None;
                    while !trainer.is_done() {
                        let record = trainer.run_epoch(samples, samples).unwrap();
                        if reached.is_none() && record.validation_mape < 5.0 {
                            reached = Some(record.epoch);
                        }
                    }
                    let epochs = trainer.report().epochs.clone();
                    let (model, _) = trainer.finish();
                    let final_mape = evaluate(&model, samples).unwrap();
                    (method, reached, final_mape, epochs[0].train_loss, epochs[epochs.len() - 1].train_loss)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut summary = String::new();
    let mut failures = Vec::new();
    for (method, reached, final_mape, first, last) in &results {
        let _ = write!(summary, "{method} {final_mape:.2}% ");
        if reached.is_none() || *final_mape >= 5.0 {
            failures.push(format!("{method} training MAPE {final_mape:.2}%"));
        }
        if last >= first {
            failures.push(format!("{method} loss did not decrease ({first:.3} -> {last:.3})"));
        }
    }
    let worst_epoch = results.iter().filter_map(|r| r.1).max().unwrap_or(0);
    check(
        failures.is_empty(),
        format!("{}(all below 5% by epoch {worst_epoch}; loss at epoch 500 < epoch 1)", summary),
        failures.join("; "),
    )
}

// ---------------------------------------------------------------- criterion 5

fn synthetic_config(series: BTreeMap<String, SyntheticLoad>, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        dataset: DatasetConfig::Synthetic {
            series,
            split: SplitSpec::month_wise(),
        },
        files: vec![],
        entities: vec![],
        methods: vec![Method::new(CellKind::Gru, true)],
        timesteps: vec![2],
        model: ModelSelection::Both,
        train: TrainConfig::default(),
        derived_mode: Default::default(),
        output_dir: PathBuf::from("out"),
        seed,
        jobs: 2,
        save_weights: false,
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn criterion_small_data() -> Verdict {
    let series: BTreeMap<String, SyntheticLoad> = [("household".to_string(), SyntheticLoad::default())].into();
    let runs: Vec<_> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..3u64)
            .map(|seed| {
                let config = synthetic_config(series.clone(), seed);
                scope.spawn(move || run_experiment(&config))
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut by_kind: BTreeMap<ModelKind, Vec<f64>> = BTreeMap::new();
    for run in runs {
        let run = match run {
            Ok(r) => r,
            Err(e) => return Verdict::Fail(format!("run failed: {e}")),
        };
        for row in &run.table.rows {
            match row.average {
                Some(v) => by_kind.entry(row.model).or_default().push(v),
                None => return Verdict::Fail(format!("{} produced no MAPE: {:?}", row.model, row.entities)),
            }
        }
    }
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join("/");
    let deep = by_kind[&ModelKind::DeepDeff].clone();
    let basic = by_kind[&ModelKind::Basic].clone();
    let (md, mb) = (median(deep.clone()), median(basic.clone()));
    let detail = format!(
        "median test MAPE DeepDeFF {md:.2}% ({}) vs basic {mb:.2}% ({})",
        fmt(&deep),
        fmt(&basic)
    );
    check(md <= mb, detail.clone(), detail)
}

// ---------------------------------------------------------------- criterion 6

fn write_sgsc_file(path: &Path, customers: usize) {
    let mut text = String::from("CUSTOMER_ID,READING_DATETIME,CALENDAR_KEY,EVENT_KEY,GENERAL_SUPPLY_KWH\n");
    let start = NaiveDate::from_ymd_opt(2013, 6, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
    let end = NaiveDate::from_ymd_opt(2013, 9, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
    for c in 0..customers {
        let mut ts = start;
        let mut i = 0u64;
        while ts < end {
            let load = 0.2 + ((c as u64 * 31 + i * 7) % 97) as f64 / 50.0;
            let _ = writeln!(text, "{},{},0,0,{load}", 8_100_000 + c, ts.format("%Y-%m-%d %H:%M:%S"));
            ts += Span::minutes(30);
            i += 1;
        }
    }
    fs::write(path, text).unwrap();
}

fn sgsc_test_points(dir: &Path) -> Result<String, String> {
    let file = dir.join("sgsc.csv");
    write_sgsc_file(&file, 69);
    let config = ExperimentConfig {
        dataset: DatasetConfig::Preset {
            name: "sgsc".into(),
            split: None,
            schema: None,
        },
        files: vec![file],
        ..synthetic_config(BTreeMap::new(), 0)
    };
    let entities = load_entities(&config).map_err(|e| e.to_string())?;
    let split = config.dataset.split().unwrap();
    let mut counts = Vec::new();
    for k in [2, 6, 12] {
        let mut total = 0;
        for (id, series) in &entities {
            let series = series.as_ref().map_err(|e| format!("{id}: {e}"))?;
            let parts = split_samples(build_samples(series, k).unwrap(), &split).unwrap();
            total += parts.test.len();
        }
        if total != 29_808 {
            return Err(format!("K={k}: {total} test points across {} customers, expected 29808", entities.len()));
        }
        counts.push(total);
    }
    Ok(format!("SGSC test points {} for K=2/6/12", counts[0]))
}

fn random_series(days: u32, interval: u32, seed: u64, drop_every: usize) -> TimeSeries {
    let s = SyntheticLoad {
        days,
        interval_minutes: interval,
        seed,
        ..SyntheticLoad::default()
    }
    .generate()
    .unwrap();
    if drop_every == 0 {
        return s;
    }
    let readings: Vec<_> = s
        .records
        .iter()
        .enumerate()
        .filter(|(i, _)| i % drop_every != drop_every - 1)
        .map(|(_, r)| (r.timestamp, r.load))
        .collect();
    TimeSeries::from_readings(interval, s.unit, "gappy", readings).unwrap()
}

fn partition_property() -> Result<(), String> {
    let strategy = (5u32..20, 1u64..1000, 0usize..30, 1u32..10, 0u32..5, 1usize..4);
    runner(40)
        .run(&strategy, |(days, seed, drop_every, train_days, val_days, k)| {
            let series = random_series(days, 240, seed, drop_every);
            let samples = match build_samples(&series, k) {
                Ok(s) => s,
                Err(_) => return Ok(()),
            };
            let first = series.first_date().unwrap();
            let d = |n: u32| first + Span::days(n as i64);
            let spec = SplitSpec::DateRanges {
                train: deepdeff::data::DateRange::new(first, d(train_days)),
                validation: deepdeff::data::DateRange::new(d(train_days + 1), d(train_days + 1 + val_days)),
                test: deepdeff::data::DateRange::new(d(train_days + 2 + val_days), d(days + 5)),
            };
            let expected: Vec<usize> = samples
                .iter()
                .map(|s| {
                    let date = s.target_time.date();
                    if date <= d(train_days) {
                        0
                    } else if date <= d(train_days + 1 + val_days) {
                        1
                    } else {
                        2
                    }
                })
                .collect();
            let Ok(parts) = split_samples(samples.clone(), &spec) else {
                // only legitimate when some partition receives no sample
                prop_assert!((0..3).any(|p| !expected.contains(&p)), "split failed with all partitions populated");
                return Ok(());
            };
            prop_assert_eq!(parts.train.len() + parts.validation.len() + parts.test.len(), samples.len());
            let mut assigned: Vec<(NaiveDateTime, usize)> = Vec::new();
            for (p, part) in [&parts.train, &parts.validation, &parts.test].into_iter().enumerate() {
                assigned.extend(part.iter().map(|s| (s.target_time, p)));
            }
            assigned.sort();
            let want: Vec<(NaiveDateTime, usize)> =
                samples.iter().map(|s| s.target_time).zip(expected.iter().copied()).collect();
            prop_assert_eq!(assigned, want);
            Ok(())
        })
        .map_err(|e| format!("partition property: {e}"))
}

fn leakage_property() -> Result<(), String> {
    let strategy = (4u32..9, 1u64..1000, 0usize..25, 1usize..4, 0.0f64..1.0, -5.0f64..5.0);
    runner(40)
        .run(&strategy, |(days, seed, drop_every, k, cut_frac, bump)| {
            let series = random_series(days, 180, seed, drop_every);
            let Ok(before) = build_samples(&series, k) else { return Ok(()) };
            let cut = ((series.len() - 1) as f64 * cut_frac) as usize;
            let cut_time = series.records[cut].timestamp;
            let mut changed = series.clone();
            for r in &mut changed.records[cut..] {
                r.load += bump;
            }
            let after = build_samples(&changed, k).unwrap();
            prop_assert_eq!(before.len(), after.len());
            for (a, b) in before.iter().zip(&after) {
                if a.target_time <= cut_time {
                    // nothing at or after the target's time may reach its inputs
                    prop_assert_eq!(&a.basic, &b.basic);
                    prop_assert_eq!(&a.derived, &b.derived);
                }
                if a.target_time < cut_time {
                    prop_assert_eq!(a.target, b.target);
                }
            }
            Ok(())
        })
        .map_err(|e| format!("no-leakage property: {e}"))
}

fn precon_offset(dir: &Path) -> Result<String, String> {
    let path = dir.join("house7.csv");
    let mut text = String::from("Date_Time,Usage_kW\n");
    let start = NaiveDate::from_ymd_opt(2018, 6, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
    let mut zero_blocks = 0;
    for m in 0..(30 * 24 * 60) {
        let ts = start + Span::minutes(m);
        let block = m / 30;
        // every fifth half-hour is a full outage
        let load = if block % 5 == 0 { 0.0 } else { 0.5 + (m % 17) as f64 / 40.0 };
        if block % 5 == 0 && m % 30 == 0 {
            zero_blocks += 1;
        }
        let _ = writeln!(text, "{},{load}", ts.format("%Y-%m-%d %H:%M:%S"));
    }
    fs::write(&path, text).unwrap();

    let preset = DatasetPreset::precon();
    let raw = resample_average(&load_csv(&path, &preset.schema).map_err(|e| e.to_string())?, 30)
        .map_err(|e| e.to_string())?;
    let raw_zero = raw.records.iter().filter(|r| r.load == 0.0).count();
    if raw_zero != zero_blocks {
        return Err(format!("expected {zero_blocks} zero half-hours before the offset, found {raw_zero}"));
    }
    let config = ExperimentConfig {
        dataset: DatasetConfig::Preset {
            name: "precon".into(),
            split: None,
            schema: None,
        },
        files: vec![path],
        ..synthetic_config(BTreeMap::new(), 0)
    };
    let (_, series) = load_entities(&config).map_err(|e| e.to_string())?.remove(0);
    let series = series.map_err(|e| e.to_string())?;
    let samples = build_samples(&series, 2).map_err(|e| e.to_string())?;
    let targets: Vec<f64> = samples.iter().map(|s| s.target).collect();
    if let Some(t) = targets.iter().find(|t| **t < 0.1 - 1e-12) {
        return Err(format!("target {t} below the offset"));
    }
    mape(&targets, &targets).map_err(|e| e.to_string())?;
    Ok(format!("PRECON {raw_zero} zero targets removed by offset"))
}

fn determinism(dir: &Path) -> Result<String, String> {
    let series: BTreeMap<String, SyntheticLoad> = [1u64, 2]
        .into_iter()
        .map(|s| {
            (
                format!("h{s}"),
                SyntheticLoad {
                    days: 31,
                    interval_minutes: 60,
                    seed: s,
                    ..SyntheticLoad::default()
                },
            )
        })
        .collect();
    let mut config = synthetic_config(series, 11);
    config.methods = vec![Method::new(CellKind::Lstm, true), Method::new(CellKind::Rnn, false)];
    config.train.max_epochs = 4;
    let mut outputs = Vec::new();
    for (i, jobs) in [1usize, 4].into_iter().enumerate() {
        config.jobs = jobs;
        let out = dir.join(format!("run{i}"));
        let run = run_experiment(&config).map_err(|e| e.to_string())?;
        write_outputs(&run, &out, ReportFormat::Csv, false).map_err(|e| e.to_string())?;
        outputs.push(out);
    }
    for name in ["results.csv", "predictions_h1.csv", "train_report_h2.csv"] {
        let a = fs::read(outputs[0].join(name)).map_err(|e| e.to_string())?;
        let b = fs::read(outputs[1].join(name)).map_err(|e| e.to_string())?;
        if a != b {
            return Err(format!("{name} differs between identical runs"));
        }
    }
    Ok("two runs byte-identical (1 and 4 workers)".into())
}

fn criterion_pipeline() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let mut notes = Vec::new();
    let steps: Vec<Result<String, String>> = vec![
        partition_property().map(|_| "partition property (40 cases)".into()),
        leakage_property().map(|_| "no-leakage property (40 cases)".into()),
        sgsc_test_points(dir.path()),
        precon_offset(dir.path()),
        determinism(dir.path()),
    ];
    for step in steps {
        match step {
            Ok(n) => notes.push(n),
            Err(e) => return Verdict::Fail(e),
        }
    }
    Verdict::Pass(notes.join("; "))
}

fn criterion_ampds_count() -> Verdict {
    let Some(path) = std::env::var_os("DEEPDEFF_AMPDS") else {
        return Verdict::Skip("set DEEPDEFF_AMPDS to the whole-house current CSV".into());
    };
    let preset = DatasetPreset::ampds();
    let series = match load_csv(&path, &preset.schema).and_then(|s| resample_average(&s, 30)) {
        Ok(s) => s,
        Err(e) => return Verdict::Fail(e.to_string()),
    };
    let SplitSpec::DateRanges { train, test, .. } = preset.split else {
        unreachable!("AMPds uses date ranges")
    };
    let count = series
        .records
        .iter()
        .filter(|r| (train.start..=test.end).contains(&r.timestamp.date()))
        .count();
    check(
        count == 17_483,
        format!("{count} half-hour points"),
        format!("{count} half-hour points, expected 17483"),
    )
}

// ---------------------------------------------------------------- criterion 7

struct Reproduction {
    env: &'static str,
    preset: &'static str,
    method: &'static str,
    timesteps: usize,
    accept: fn(f64) -> bool,
    range: &'static str,
}

fn dataset_files(path: &Path) -> Vec<PathBuf> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map(|d| d.filter_map(|e| e.ok().map(|e| e.path())).collect())
            .unwrap_or_default();
        files.retain(|p| p.extension().is_some_and(|e| e == "csv"));
        files.sort();
        files
    } else {
        vec![path.to_path_buf()]
    }
}

fn criterion_reproductions() -> Vec<(String, Verdict)> {
    let cases = [
        Reproduction {
            env: "DEEPDEFF_RTE",
            preset: "rte",
            method: "GRU",
            timesteps: 2,
            accept: |m| (0.81..=2.0).contains(&m),
            range: "[0.81, 2.0]",
        },
        Reproduction {
            env: "DEEPDEFF_ERCOT",
            preset: "ercot",
            method: "BGRU",
            timesteps: 2,
            accept: |m| (0.91..=2.0).contains(&m),
            range: "[0.91, 2.0]",
        },
        Reproduction {
            env: "DEEPDEFF_AMPDS",
            preset: "ampds",
            method: "BGRU",
            timesteps: 6,
            accept: |m| m <= 27.5,
            range: "<= 27.5",
        },
        Reproduction {
            env: "DEEPDEFF_SGSC",
            preset: "sgsc",
            method: "BGRU",
            timesteps: 2,
            accept: |m| (m - 34.87).abs() <= 5.0,
            range: "34.87 +/- 5",
        },
        Reproduction {
            env: "DEEPDEFF_PRECON",
            preset: "precon",
            method: "BRNN",
            timesteps: 2,
            accept: |m| (m - 21.67).abs() <= 4.0,
            range: "21.67 +/- 4",
        },
    ];
    cases
        .iter()
        .map(|c| {
            let label = format!("{} {} K={}", c.preset, c.method, c.timesteps);
            let Some(path) = std::env::var_os(c.env) else {
                return (label, Verdict::Skip(format!("set {} to run", c.env)));
            };
            let entities = match (c.preset, std::env::var("DEEPDEFF_SGSC_CUSTOMERS")) {
                ("sgsc", Ok(list)) => list.split(',').map(|s| s.trim().to_string()).collect(),
                _ => vec![],
            };
            let config = ExperimentConfig {
                dataset: DatasetConfig::Preset {
                    name: c.preset.into(),
                    split: None,
                    schema: None,
                },
                files: dataset_files(Path::new(&path)),
                entities,
                methods: vec![c.method.parse().unwrap()],
                timesteps: vec![c.timesteps],
                model: ModelSelection::DeepDeff,
                jobs: std::thread::available_parallelism().map_or(1, |n| n.get()),
                ..synthetic_config(BTreeMap::new(), 0)
            };
            let verdict = match run_experiment(&config) {
                Err(e) => Verdict::Fail(e.to_string()),
                Ok(run) => match run.table.rows[0].average {
                    None => Verdict::Fail("no entity produced a MAPE".into()),
                    Some(m) => check(
                        (c.accept)(m),
                        format!("average MAPE {m:.2}% within {}", c.range),
                        format!("average MAPE {m:.2}% outside {}", c.range),
                    ),
                },
            };
            (label, verdict)
        })
        .collect()
}

// ---------------------------------------------------------------- driver

fn timed(id: &'static str, title: &'static str, budget: Option<Duration>, f: impl FnOnce() -> Verdict) -> Line {
    let start = Instant::now();
    let verdict = f();
    let elapsed = start.elapsed();
    let verdict = match budget {
        Some(b) => within_budget(verdict, elapsed, b),
        None => verdict,
    };
    let line = Line {
        id,
        title,
        verdict,
        elapsed,
    };
    print_line(line.id, line.title, &line.verdict, line.elapsed);
    line
}

fn print_line(id: &str, title: &str, verdict: &Verdict, elapsed: Duration) {
    let (tag, msg) = match verdict {
        Verdict::Pass(m) => ("PASS", m),
        Verdict::Fail(m) => ("FAIL", m),
        Verdict::Skip(m) => ("SKIP", m),
    };
    println!("criterion {id} [{title}]: {tag} ({elapsed:.1?}) {msg}");
}

fn main() {
    // `cargo test -- --list` and filters are meaningless here; honour --list so
    // tooling that enumerates tests does not run the suite.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let secs = Duration::from_secs;
    let mut lines = vec![
        timed("1", "gradient correctness", Some(secs(10)), criterion_gradients),
        timed("2", "feature oracle", Some(secs(5)), criterion_feature_oracle),
        timed("3", "metric exactness", None, criterion_metrics),
        timed("4", "overfit convergence", Some(secs(300)), criterion_overfit),
        timed("5", "small-data advantage", Some(secs(600)), criterion_small_data),
        timed("6", "pipeline invariants", None, criterion_pipeline),
        timed("6", "AMPds point count", None, criterion_ampds_count),
    ];
    let start = Instant::now();
    for (label, verdict) in criterion_reproductions() {
        print_line("7", &label, &verdict, start.elapsed());
        lines.push(Line {
            id: "7",
            title: "reproduction",
            verdict,
            elapsed: start.elapsed(),
        });
    }
    let failed: Vec<String> = lines
        .iter()
        .filter(|l| matches!(l.verdict, Verdict::Fail(_)))
        .map(|l| format!("{} ({})", l.id, l.title))
        .collect();
    if failed.is_empty() {
        println!("acceptance: all criteria passed or skipped");
    } else {
        println!("acceptance: FAILED {}", failed.join(", "));
        std::process::exit(1);
    }
}
