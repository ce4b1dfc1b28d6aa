//! Load series, calendar annotation, resampling and dataset adapters.

mod csv_io;
pub mod presets;
mod split;
pub mod synthetic;

use std::collections::BTreeMap;
use std::fmt;

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use csv_io::{list_entities, load_csv, load_csv_entities, load_csv_entity, write_canonical, CsvSchema, TimestampFormat};
pub use split::{split, DateRange, Partition, SplitSpec};

const MINUTES_PER_DAY: u32 = 24 * 60;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LoadUnit {
    #[serde(rename = "kW")]
    Kilowatt,
    #[serde(rename = "A")]
    Ampere,
    #[serde(rename = "MW")]
    Megawatt,
}

impl fmt::Display for LoadUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LoadUnit::Kilowatt => "kW",
            LoadUnit::Ampere => "A",
            LoadUnit::Megawatt => "MW",
        })
    }
}

/// One reading with its calendar annotation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub timestamp: NaiveDateTime,
    pub load: f64,
    /// Intra-day interval index in `[0, slots_per_day)`.
    pub slot: usize,
    /// Monday = 0 … Sunday = 6.
    pub weekday: usize,
    pub holiday: bool,
}

impl RawRecord {
    fn annotated(timestamp: NaiveDateTime, load: f64, interval_minutes: u32) -> Self {
        let minute_of_day = timestamp.hour() * 60 + timestamp.minute();
        let weekday = timestamp.weekday().num_days_from_monday() as usize;
        Self {
            timestamp,
            load,
            slot: (minute_of_day / interval_minutes) as usize,
            weekday,
            // only weekends count as holidays
            holiday: weekday >= 5,
        }
    }
}

/// A stretch of missing readings: `missing` intervals absent after `after`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Gap {
    pub after: NaiveDateTime,
    pub missing: i64,
}

/// Time-ordered readings on a fixed grid.
///
/// Timestamps are strictly increasing, aligned to `interval_minutes`, and spaced
/// by whole multiples of it. Missing readings are absent records rather than
/// fabricated values; [`TimeSeries::gaps`] lists them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub interval_minutes: u32,
    pub unit: LoadUnit,
    pub source_id: String,
    pub records: Vec<RawRecord>,
}

impl TimeSeries {
    /// Builds an annotated series from readings in any order. Duplicate timestamps
    /// are averaged.
    pub fn from_readings(
        interval_minutes: u32,
        unit: LoadUnit,
        source_id: impl Into<String>,
        readings: impl IntoIterator<Item = (NaiveDateTime, f64)>,
    ) -> Result<Self> {
        validate_interval(interval_minutes)?;
        let mut buckets: BTreeMap<NaiveDateTime, (f64, usize)> = BTreeMap::new();
        for (ts, load) in readings {
            if !load.is_finite() {
                return Err(Error::Input(format!("non-finite reading at {ts}")));
            }
            let entry = buckets.entry(ts).or_insert((0.0, 0));
            entry.0 += load;
            entry.1 += 1;
        }
        let mut records = Vec::with_capacity(buckets.len());
        for (ts, (sum, n)) in buckets {
            check_alignment(ts, interval_minutes)?;
            records.push(RawRecord::annotated(ts, sum / n as f64, interval_minutes));
        }
        Ok(Self {
            interval_minutes,
            unit,
            source_id: source_id.into(),
            records,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn slots_per_day(&self) -> usize {
        (MINUTES_PER_DAY / self.interval_minutes) as usize
    }

    pub fn loads(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.load).collect()
    }

    pub fn first_date(&self) -> Option<NaiveDate> {
        self.records.first().map(|r| r.timestamp.date())
    }

    pub fn last_date(&self) -> Option<NaiveDate> {
        self.records.last().map(|r| r.timestamp.date())
    }

    /// Grid offset of `ts` from the first record, in intervals.
    pub fn grid_offset(&self, ts: NaiveDateTime) -> i64 {
        let first = self.records[0].timestamp;
        (ts - first).num_minutes() / self.interval_minutes as i64
    }

    pub fn position_of(&self, ts: NaiveDateTime) -> Option<usize> {
        self.records.binary_search_by_key(&ts, |r| r.timestamp).ok()
    }

    pub fn gaps(&self) -> Vec<Gap> {
        let step = self.interval_minutes as i64;
        self.records
            .windows(2)
            .filter_map(|w| {
                let delta = (w[1].timestamp - w[0].timestamp).num_minutes() / step;
                (delta > 1).then(|| Gap {
                    after: w[0].timestamp,
                    missing: delta - 1,
                })
            })
            .collect()
    }

    pub(crate) fn with_records(&self, records: Vec<RawRecord>) -> Self {
        Self {
            interval_minutes: self.interval_minutes,
            unit: self.unit,
            source_id: self.source_id.clone(),
            records,
        }
    }
}

fn validate_interval(interval_minutes: u32) -> Result<()> {
    if interval_minutes == 0 || !MINUTES_PER_DAY.is_multiple_of(interval_minutes) {
        return Err(Error::Config(format!(
            "interval of {interval_minutes} minutes does not divide a day"
        )));
    }
    Ok(())
}

fn check_alignment(ts: NaiveDateTime, interval_minutes: u32) -> Result<()> {
    let minute_of_day = ts.hour() * 60 + ts.minute();
    if ts.second() != 0 || ts.nanosecond() != 0 || !minute_of_day.is_multiple_of(interval_minutes) {
        return Err(Error::Input(format!(
            "timestamp {ts} is not aligned to a {interval_minutes}-minute grid"
        )));
    }
    Ok(())
}

/// Averages readings into clock-aligned buckets of `target_interval_minutes`.
/// Partially filled buckets average whatever readings they hold.
pub fn resample_average(series: &TimeSeries, target_interval_minutes: u32) -> Result<TimeSeries> {
    let source = series.interval_minutes;
    if target_interval_minutes < source || !target_interval_minutes.is_multiple_of(source) {
        return Err(Error::Config(format!(
            "cannot resample {source}-minute data to {target_interval_minutes} minutes: not an integer multiple"
        )));
    }
    validate_interval(target_interval_minutes)?;
    let bucket_seconds = target_interval_minutes as i64 * 60;
    let readings = series.records.iter().map(|r| {
        let secs = r.timestamp.and_utc().timestamp();
        let start = secs.div_euclid(bucket_seconds) * bucket_seconds;
        let ts = chrono::DateTime::from_timestamp(start, 0)
            .expect("bucket start within chrono range")
            .naive_utc();
        (ts, r.load)
    });
    TimeSeries::from_readings(target_interval_minutes, series.unit, series.source_id.clone(), readings)
}

/// Adds `offset` to every reading.
pub fn apply_offset(series: &TimeSeries, offset: f64) -> TimeSeries {
    let records = series
        .records
        .iter()
        .map(|r| RawRecord {
            load: r.load + offset,
            ..r.clone()
        })
        .collect();
    series.with_records(records)
}

/// Recomputes slot, weekday and holiday from each timestamp.
pub fn annotate_calendar(series: &TimeSeries) -> TimeSeries {
    let records = series
        .records
        .iter()
        .map(|r| RawRecord::annotated(r.timestamp, r.load, series.interval_minutes))
        .collect();
    series.with_records(records)
}

#[cfg(test)]
mod tests {
    use chrono::{Duration, NaiveDate};

    use super::*;

    fn at(y: i32, m: u32, d: u32, h: u32, min: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(y, m, d).unwrap().and_hms_opt(h, min, 0).unwrap()
    }

    #[test]
    fn calendar_annotation_facts() {
        let s = TimeSeries::from_readings(
            30,
            LoadUnit::Kilowatt,
            "t",
            [(at(2013, 8, 23, 0, 0), 1.0), (at(2013, 8, 24, 13, 30), 1.0)],
        )
        .unwrap();
        let fri = &s.records[0];
        assert_eq!((fri.slot, fri.weekday, fri.holiday), (0, 4, false));
        let sat = &s.records[1];
        assert_eq!((sat.slot, sat.weekday, sat.holiday), (27, 5, true));
    }

    #[test]
    fn annotate_is_idempotent() {
        let readings = (0..100).map(|i| (at(2020, 2, 27, 0, 0) + Duration::minutes(30 * i), i as f64));
        let s = TimeSeries::from_readings(30, LoadUnit::Kilowatt, "t", readings).unwrap();
        let once = annotate_calendar(&s);
        assert_eq!(once, s);
        assert_eq!(annotate_calendar(&once), once);
    }

    #[test]
    fn hourly_slots_are_zero_based() {
        let readings = (0..24).map(|h| (at(2014, 1, 1, h, 0), 1.0));
        let s = TimeSeries::from_readings(60, LoadUnit::Megawatt, "ercot", readings).unwrap();
        assert_eq!(s.records.iter().map(|r| r.slot).collect::<Vec<_>>(), (0..24).collect::<Vec<_>>());
        assert_eq!(s.slots_per_day(), 24);
    }

    #[test]
    fn misaligned_timestamp_rejected() {
        let err = TimeSeries::from_readings(30, LoadUnit::Kilowatt, "t", [(at(2020, 1, 1, 0, 15), 1.0)]);
        assert!(matches!(err, Err(Error::Input(_))));
    }

    #[test]
    fn resample_means() {
        let start = at(2012, 4, 1, 0, 0);
        let readings = (0..30).map(|i| (start + Duration::minutes(i), (i + 1) as f64));
        let s = TimeSeries::from_readings(1, LoadUnit::Ampere, "a", readings).unwrap();
        let r = resample_average(&s, 30).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r.records[0].load, 15.5);
        assert_eq!(r.interval_minutes, 30);
    }

    #[test]
    fn resample_constant_and_partial_buckets() {
        let start = at(2012, 4, 1, 0, 10);
        let readings = (0..95).map(|i| (start + Duration::minutes(i), 2.5));
        let s = TimeSeries::from_readings(1, LoadUnit::Ampere, "a", readings).unwrap();
        let r = resample_average(&s, 30).unwrap();
        assert_eq!(r.len(), 4);
        assert_eq!(r.records[0].timestamp, at(2012, 4, 1, 0, 0));
        assert!(r.records.iter().all(|x| x.load == 2.5));
    }

    #[test]
    fn resample_rejects_non_multiple() {
        let s = TimeSeries::from_readings(30, LoadUnit::Kilowatt, "t", [(at(2020, 1, 1, 0, 0), 1.0)]).unwrap();
        assert!(matches!(resample_average(&s, 45), Err(Error::Config(_))));
        assert!(matches!(resample_average(&s, 15), Err(Error::Config(_))));
    }

    #[test]
    fn resample_preserves_energy_with_full_buckets() {
        let start = at(2012, 4, 1, 0, 0);
        let readings: Vec<_> = (0..120).map(|i| (start + Duration::minutes(i), ((i * 37) % 11) as f64 * 0.25)).collect();
        let total: f64 = readings.iter().map(|r| r.1).sum();
        let s = TimeSeries::from_readings(1, LoadUnit::Ampere, "a", readings).unwrap();
        let r = resample_average(&s, 30).unwrap();
        assert!((r.loads().iter().sum::<f64>() * 30.0 - total).abs() < 1e-9);
    }

    #[test]
    fn offset_shifts_readings() {
        let s = TimeSeries::from_readings(
            30,
            LoadUnit::Kilowatt,
            "h",
            [(at(2018, 6, 1, 0, 0), 0.0), (at(2018, 6, 1, 0, 30), 2.5)],
        )
        .unwrap();
        let shifted = apply_offset(&s, 0.1);
        assert_eq!(shifted.loads(), vec![0.1, 2.6]);
        assert!(shifted.loads().iter().all(|&v| v >= 0.1));
    }

    #[test]
    fn gaps_are_reported() {
        let s = TimeSeries::from_readings(
            30,
            LoadUnit::Kilowatt,
            "t",
            [(at(2020, 1, 1, 0, 0), 1.0), (at(2020, 1, 1, 2, 0), 1.0), (at(2020, 1, 1, 2, 30), 1.0)],
        )
        .unwrap();
        assert_eq!(
            s.gaps(),
            vec![Gap {
                after: at(2020, 1, 1, 0, 0),
                missing: 3
            }]
        );
    }
}
