//! Turns an annotated load series into training samples.
//!
//! Each sample carries two aligned `K`-row sequences:
//!
//! * basic: `[E, one-hot slot (S), one-hot weekday (7), holiday]` per record, so
//!   `1 + S + 8` columns;
//! * derived: `[window mean, window std, slot mean, slot std]` per record, where the
//!   window stats cover the `K` readings ending at that record and the slot stats
//!   cover the predicted slot on the `K` days before the target's day.
//!
//! Standard deviations are population (divide by `N`).

use chrono::{Duration, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::data::{RawRecord, SplitSpec, Partition, TimeSeries};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const DERIVED_FEATURES: usize = 4;

pub fn basic_feature_count(slots_per_day: usize) -> usize {
    1 + slots_per_day + 7 + 1
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// `K × (1 + S + 8)`.
    pub basic: Matrix,
    /// `K × 4`.
    pub derived: Matrix,
    pub target: f64,
    pub target_slot: usize,
    pub target_time: NaiveDateTime,
}

impl Sample {
    pub fn timesteps(&self) -> usize {
        self.basic.rows()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureStats {
    pub win_mean: f64,
    pub win_std: f64,
    pub slot_mean: f64,
    pub slot_std: f64,
}

impl FeatureStats {
    pub fn to_row(self) -> [f64; DERIVED_FEATURES] {
        [self.win_mean, self.win_std, self.slot_mean, self.slot_std]
    }
}

/// How the window statistics fill the derived sequence.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivedMode {
    /// Window stats recomputed for every row.
    #[default]
    PerRow,
    /// One 4-vector, computed over the window just before the target, repeated on every row.
    Constant,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub timesteps: usize,
    #[serde(default)]
    pub derived_mode: DerivedMode,
}

impl FeatureConfig {
    pub fn new(timesteps: usize) -> Self {
        Self {
            timesteps,
            derived_mode: DerivedMode::PerRow,
        }
    }

    /// Readings that must precede a target before it yields a sample.
    pub fn warm_up(&self, slots_per_day: usize) -> usize {
        let k = self.timesteps;
        let window = match self.derived_mode {
            DerivedMode::PerRow => 2 * k - 1,
            DerivedMode::Constant => k,
        };
        window.max(k * slots_per_day)
    }
}

pub fn one_hot(index: usize, size: usize) -> Result<Vec<f64>> {
    if index >= size {
        return Err(Error::Encoding { index, size });
    }
    let mut v = vec![0.0; size];
    v[index] = 1.0;
    Ok(v)
}

/// Population mean and standard deviation, two-pass.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mean and std of the `k` values ending at `end_index` inclusive.
pub fn window_stats(series: &[f64], end_index: usize, k: usize) -> Result<(f64, f64)> {
    if k == 0 {
        return Err(Error::Input("window length must be at least 1".into()));
    }
    if end_index >= series.len() {
        return Err(Error::Input(format!(
            "window end {end_index} beyond series of length {}",
            series.len()
        )));
    }
    if end_index + 1 < k {
        return Err(Error::History(format!(
            "window of {k} ending at {end_index} needs {} earlier readings",
            k - 1
        )));
    }
    Ok(mean_std(&series[end_index + 1 - k..=end_index]))
}

/// Mean and std of the readings at the target's slot on each of the `k` days
/// before the target's day.
pub fn slot_history_stats(series: &TimeSeries, target_index: usize, k: usize) -> Result<(f64, f64)> {
    if k == 0 {
        return Err(Error::Input("history length must be at least 1".into()));
    }
    let target = series
        .records
        .get(target_index)
        .ok_or_else(|| Error::Input(format!("target index {target_index} out of range")))?;
    let values = (1..=k as i64)
        .map(|d| {
            let ts = target.timestamp - Duration::days(d);
            series
                .position_of(ts)
                .map(|i| series.records[i].load)
                .ok_or_else(|| Error::History(format!("no reading at {ts} for slot history of {}", target.timestamp)))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(mean_std(&values))
}

pub fn basic_row(record: &RawRecord, slots_per_day: usize) -> Result<Vec<f64>> {
    let mut row = Vec::with_capacity(basic_feature_count(slots_per_day));
    row.push(record.load);
    row.extend(one_hot(record.slot, slots_per_day)?);
    row.extend(one_hot(record.weekday, 7)?);
    row.push(if record.holiday { 1.0 } else { 0.0 });
    Ok(row)
}

pub fn build_samples(series: &TimeSeries, timesteps: usize) -> Result<Vec<Sample>> {
    build_samples_with(series, &FeatureConfig::new(timesteps))
}

/// One sample per target whose full history is present; targets whose windows
/// cross a gap or lack `K` days of slot history are skipped.
pub fn build_samples_with(series: &TimeSeries, config: &FeatureConfig) -> Result<Vec<Sample>> {
    let k = config.timesteps;
    if k == 0 {
        return Err(Error::Input("timesteps must be at least 1".into()));
    }
    if series.is_empty() {
        return Err(Error::Input("empty series".into()));
    }
    let slots = series.slots_per_day();
    let lookback = match config.derived_mode {
        DerivedMode::PerRow => 2 * k - 1,
        DerivedMode::Constant => k,
    };

    // dense grid: grid offset -> record index
    let span = series.grid_offset(series.records.last().expect("non-empty").timestamp) as usize + 1;
    let mut grid: Vec<Option<usize>> = vec![None; span];
    for (i, r) in series.records.iter().enumerate() {
        grid[series.grid_offset(r.timestamp) as usize] = Some(i);
    }

    let mut samples = Vec::new();
    for (g, target_idx) in grid.iter().enumerate() {
        let Some(target_idx) = *target_idx else { continue };
        if g < lookback || g < k * slots {
            continue;
        }
        let history: Option<Vec<usize>> = grid[g - lookback..g].iter().copied().collect();
        let Some(history) = history else { continue };
        if (1..=k).any(|d| grid[g - d * slots].is_none()) {
            continue;
        }

        let loads: Vec<f64> = history.iter().map(|&i| series.records[i].load).collect();
        let window_rows = &history[lookback - k..];
        let (slot_mean, slot_std) = slot_history_stats(series, target_idx, k)?;

        let mut basic = Vec::with_capacity(k * basic_feature_count(slots));
        let mut derived = Vec::with_capacity(k * DERIVED_FEATURES);
        for (row, &rec_idx) in window_rows.iter().enumerate() {
            basic.extend(basic_row(&series.records[rec_idx], slots)?);
            let end = match config.derived_mode {
                DerivedMode::PerRow => lookback - k + row,
                DerivedMode::Constant => lookback - 1,
            };
            let (win_mean, win_std) = window_stats(&loads, end, k)?;
            let stats = FeatureStats {
                win_mean,
                win_std,
                slot_mean,
                slot_std,
            };
            derived.extend(stats.to_row());
        }
        let target = &series.records[target_idx];
        samples.push(Sample {
            basic: Matrix::new(k, basic_feature_count(slots), basic)?,
            derived: Matrix::new(k, DERIVED_FEATURES, derived)?,
            target: target.load,
            target_slot: target.slot,
            target_time: target.timestamp,
        });
    }
    if samples.is_empty() {
        return Err(Error::Input(format!(
            "series {} ({} readings) is too short for K={k}: needs {} readings of history before a target",
            series.source_id,
            series.len(),
            config.warm_up(slots)
        )));
    }
    Ok(samples)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SampleSplit {
    pub train: Vec<Sample>,
    pub validation: Vec<Sample>,
    pub test: Vec<Sample>,
}

/// Assigns samples by the date of their target. Feature windows may reach back
/// into an earlier partition; targets never cross one.
pub fn split_samples(samples: Vec<Sample>, spec: &SplitSpec) -> Result<SampleSplit> {
    spec.validate()?;
    let mut out = SampleSplit::default();
    for s in samples {
        match spec.partition_of(s.target_time.date()) {
            Some(Partition::Train) => out.train.push(s),
            Some(Partition::Validation) => out.validation.push(s),
            Some(Partition::Test) => out.test.push(s),
            None => {}
        }
    }
    for (name, part) in [("train", &out.train), ("validation", &out.validation), ("test", &out.test)] {
        if part.is_empty() {
            return Err(Error::Config(format!("no {name} samples fall inside the split")));
        }
    }
    Ok(out)
}
