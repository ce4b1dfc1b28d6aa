use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use super::TimeSeries;
use crate::error::{Error, Result};

/// Inclusive calendar date interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Train,
    Validation,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SplitSpec {
    DateRanges {
        train: DateRange,
        validation: DateRange,
        test: DateRange,
    },
    /// Per calendar month: days `1..=train_last_day` train, up to
    /// `validation_last_day` validate, the rest test.
    MonthWise {
        train_last_day: u32,
        validation_last_day: u32,
    },
}

impl SplitSpec {
    pub fn month_wise() -> Self {
        SplitSpec::MonthWise {
            train_last_day: 21,
            validation_last_day: 26,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SplitSpec::DateRanges {
                train,
                validation,
                test,
            } => {
                for (name, r) in [("train", train), ("validation", validation), ("test", test)] {
                    if r.start > r.end {
                        return Err(Error::Config(format!(
                            "{name} range {} .. {} is reversed",
                            r.start, r.end
                        )));
                    }
                }
                if train.end >= validation.start || validation.end >= test.start {
                    return Err(Error::Config(
                        "date ranges must be disjoint and ordered train < validation < test".into(),
                    ));
                }
                Ok(())
            }
            SplitSpec::MonthWise {
                train_last_day,
                validation_last_day,
            } => {
                if *train_last_day == 0 || train_last_day >= validation_last_day || *validation_last_day >= 28 {
                    return Err(Error::Config(format!(
                        "month-wise boundaries ({train_last_day}, {validation_last_day}) must satisfy 1 <= a < b < 28"
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn partition_of(&self, date: NaiveDate) -> Option<Partition> {
        match self {
            SplitSpec::DateRanges {
                train,
                validation,
                test,
            } => {
                if train.contains(date) {
                    Some(Partition::Train)
                } else if validation.contains(date) {
                    Some(Partition::Validation)
                } else if test.contains(date) {
                    Some(Partition::Test)
                } else {
                    None
                }
            }
            SplitSpec::MonthWise {
                train_last_day,
                validation_last_day,
            } => Some(match date.day() {
                d if d <= *train_last_day => Partition::Train,
                d if d <= *validation_last_day => Partition::Validation,
                _ => Partition::Test,
            }),
        }
    }
}

/// Partitions records by calendar date. Every partition must be non-empty.
pub fn split(series: &TimeSeries, spec: &SplitSpec) -> Result<(TimeSeries, TimeSeries, TimeSeries)> {
    spec.validate()?;
    let mut parts = [Vec::new(), Vec::new(), Vec::new()];
    for r in &series.records {
        match spec.partition_of(r.timestamp.date()) {
            Some(Partition::Train) => parts[0].push(r.clone()),
            Some(Partition::Validation) => parts[1].push(r.clone()),
            Some(Partition::Test) => parts[2].push(r.clone()),
            None => {}
        }
    }
    for (name, part) in ["train", "validation", "test"].iter().zip(&parts) {
        if part.is_empty() {
            return Err(Error::Config(format!(
                "{name} partition of {} is empty: split does not intersect the series",
                series.source_id
            )));
        }
    }
    let [train, val, test] = parts;
    Ok((
        series.with_records(train),
        series.with_records(val),
        series.with_records(test),
    ))
}
