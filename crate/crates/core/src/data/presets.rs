//! Column mappings, resolutions and split dates for the five public load datasets.
//!
//! Column names follow the files as distributed; experiment configs can
//! override the schema when a local copy differs.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{CsvSchema, DateRange, LoadUnit, SplitSpec, TimestampFormat};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetPreset {
    pub name: String,
    pub schema: CsvSchema,
    /// Resolution the models train at; raw files at a finer resolution are averaged.
    pub target_interval_minutes: u32,
    /// Constant added to every reading before feature extraction.
    pub offset: Option<f64>,
    pub split: SplitSpec,
}

pub const PRESET_NAMES: [&str; 5] = ["sgsc", "ampds", "rte", "ercot", "precon"];

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid preset date")
}

fn ranges(train: (NaiveDate, NaiveDate), validation: (NaiveDate, NaiveDate), test: (NaiveDate, NaiveDate)) -> SplitSpec {
    SplitSpec::DateRanges {
        train: DateRange::new(train.0, train.1),
        validation: DateRange::new(validation.0, validation.1),
        test: DateRange::new(test.0, test.1),
    }
}

fn pattern(p: &str) -> TimestampFormat {
    TimestampFormat::Pattern(p.into())
}

impl DatasetPreset {
    pub fn by_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "sgsc" => Ok(Self::sgsc()),
            "ampds" => Ok(Self::ampds()),
            "rte" => Ok(Self::rte()),
            "ercot" => Ok(Self::ercot()),
            "precon" => Ok(Self::precon()),
            other => Err(Error::Config(format!(
                "unknown dataset preset {other:?}; expected one of {PRESET_NAMES:?}"
            ))),
        }
    }

    /// Smart Grid Smart City customer readings, one file with many customers.
    pub fn sgsc() -> Self {
        Self {
            name: "sgsc".into(),
            schema: CsvSchema {
                timestamp_column: "READING_DATETIME".into(),
                time_column: None,
                load_column: "GENERAL_SUPPLY_KWH".into(),
                timestamp_format: pattern("%Y-%m-%d %H:%M:%S"),
                delimiter: ',',
                unit: LoadUnit::Kilowatt,
                interval_minutes: 30,
                entity_column: Some("CUSTOMER_ID".into()),
                interval_ending: false,
            },
            target_interval_minutes: 30,
            offset: None,
            split: ranges(
                (date(2013, 6, 1), date(2013, 8, 5)),
                (date(2013, 8, 6), date(2013, 8, 22)),
                (date(2013, 8, 23), date(2013, 8, 31)),
            ),
        }
    }

    /// Whole-house current of a single household at one-minute resolution.
    pub fn ampds() -> Self {
        Self {
            name: "ampds".into(),
            schema: CsvSchema {
                timestamp_column: "TS".into(),
                time_column: None,
                load_column: "I".into(),
                timestamp_format: TimestampFormat::Unix,
                delimiter: ',',
                unit: LoadUnit::Ampere,
                interval_minutes: 1,
                entity_column: None,
                interval_ending: false,
            },
            target_interval_minutes: 30,
            offset: None,
            split: ranges(
                (date(2012, 4, 1), date(2012, 12, 17)),
                (date(2012, 12, 18), date(2013, 2, 23)),
                (date(2013, 2, 24), date(2013, 4, 1)),
            ),
        }
    }

    /// French national consumption, separate date and time columns.
    pub fn rte() -> Self {
        Self {
            name: "rte".into(),
            schema: CsvSchema {
                timestamp_column: "Date".into(),
                time_column: Some("Heures".into()),
                load_column: "Consommation".into(),
                timestamp_format: pattern("%Y-%m-%d %H:%M"),
                delimiter: ',',
                unit: LoadUnit::Megawatt,
                interval_minutes: 30,
                entity_column: None,
                interval_ending: false,
            },
            target_interval_minutes: 30,
            offset: None,
            split: ranges(
                (date(2013, 1, 1), date(2015, 11, 18)),
                (date(2015, 11, 19), date(2016, 8, 7)),
                (date(2016, 8, 8), date(2016, 12, 31)),
            ),
        }
    }

    /// Texas system load, hourly with hour-ending stamps 1–24.
    pub fn ercot() -> Self {
        Self {
            name: "ercot".into(),
            schema: CsvSchema {
                timestamp_column: "Hour_End".into(),
                time_column: None,
                load_column: "ERCOT".into(),
                timestamp_format: pattern("%m/%d/%Y %H:%M"),
                delimiter: ',',
                unit: LoadUnit::Megawatt,
                interval_minutes: 60,
                entity_column: None,
                interval_ending: true,
            },
            target_interval_minutes: 60,
            offset: None,
            split: ranges(
                (date(2011, 1, 1), date(2013, 5, 26)),
                (date(2013, 5, 27), date(2013, 12, 31)),
                (date(2014, 1, 1), date(2015, 12, 31)),
            ),
        }
    }

    /// Pakistani households, one file per house, with frequent outage zeros.
    pub fn precon() -> Self {
        Self {
            name: "precon".into(),
            schema: CsvSchema {
                timestamp_column: "Date_Time".into(),
                time_column: None,
                load_column: "Usage_kW".into(),
                timestamp_format: pattern("%Y-%m-%d %H:%M:%S"),
                delimiter: ',',
                unit: LoadUnit::Kilowatt,
                interval_minutes: 1,
                entity_column: None,
                interval_ending: false,
            },
            target_interval_minutes: 30,
            offset: Some(0.1),
            split: SplitSpec::month_wise(),
        }
    }
}
