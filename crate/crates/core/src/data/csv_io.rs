use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::{LoadUnit, TimeSeries};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimestampFormat {
    /// Seconds since the Unix epoch.
    Unix,
    /// A `chrono` strftime pattern.
    Pattern(String),
}

/// Column mapping for one CSV layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub timestamp_column: String,
    /// Separate time-of-day column, joined to the timestamp column with a space.
    #[serde(default)]
    pub time_column: Option<String>,
    pub load_column: String,
    pub timestamp_format: TimestampFormat,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    pub unit: LoadUnit,
    pub interval_minutes: u32,
    /// Column holding the entity (customer, house) id, for multi-entity files.
    #[serde(default)]
    pub entity_column: Option<String>,
    /// Timestamps mark the end of their interval (e.g. hour 1–24); shift back one interval.
    #[serde(default)]
    pub interval_ending: bool,
}

fn default_delimiter() -> char {
    ','
}

impl CsvSchema {
    /// Layout written by [`write_canonical`].
    pub fn canonical(interval_minutes: u32, unit: LoadUnit) -> Self {
        Self {
            timestamp_column: "timestamp".into(),
            time_column: None,
            load_column: "load".into(),
            timestamp_format: TimestampFormat::Pattern(CANONICAL_FORMAT.into()),
            delimiter: ',',
            unit,
            interval_minutes,
            entity_column: None,
            interval_ending: false,
        }
    }
}

const CANONICAL_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

struct Columns {
    timestamp: usize,
    time: Option<usize>,
    load: usize,
    entity: Option<usize>,
}

fn open_reader(path: &Path, schema: &CsvSchema) -> Result<(csv::Reader<File>, Columns)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let delimiter = u8::try_from(schema.delimiter)
        .map_err(|_| Error::Config(format!("delimiter {:?} is not a single byte", schema.delimiter)))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("missing column {name:?}"),
        })
    };
    let columns = Columns {
        timestamp: find(&schema.timestamp_column)?,
        time: schema.time_column.as_deref().map(find).transpose()?,
        load: find(&schema.load_column)?,
        entity: schema.entity_column.as_deref().map(find).transpose()?,
    };
    Ok((reader, columns))
}

fn parse_timestamp(raw: &str, format: &TimestampFormat) -> std::result::Result<NaiveDateTime, String> {
    match format {
        TimestampFormat::Unix => {
            let secs: i64 = raw.parse().map_err(|_| format!("invalid unix timestamp {raw:?}"))?;
            DateTime::from_timestamp(secs, 0)
                .map(|d| d.naive_utc())
                .ok_or_else(|| format!("unix timestamp {secs} out of range"))
        }
        TimestampFormat::Pattern(pattern) => {
            // hour-ending feeds write midnight as 24:00 of the previous day
            for suffix in ["24:00:00", "24:00"] {
                // only when 24 is the hour field, not a minute such as 00:24:00
                let head = raw
                    .strip_suffix(suffix)
                    .filter(|h| h.is_empty() || h.ends_with([' ', 'T']));
                if let Some(head) = head {
                    let midnight = format!("{head}{}", suffix.replacen("24", "00", 1));
                    return NaiveDateTime::parse_from_str(&midnight, pattern)
                        .map(|t| t + Duration::days(1))
                        .map_err(|e| format!("invalid timestamp {raw:?}: {e}"));
                }
            }
            NaiveDateTime::parse_from_str(raw, pattern).map_err(|e| format!("invalid timestamp {raw:?}: {e}"))
        }
    }
}

/// Reads raw `(timestamp, load)` pairs, grouped by entity id (`""` for
/// single-entity layouts). `keep` filters entity ids before any parsing.
fn read_grouped(
    path: &Path,
    schema: &CsvSchema,
    keep: &dyn Fn(&str) -> bool,
) -> Result<BTreeMap<String, Vec<(NaiveDateTime, f64)>>> {
    let (mut reader, cols) = open_reader(path, schema)?;
    let shift = if schema.interval_ending {
        Duration::minutes(schema.interval_minutes as i64)
    } else {
        Duration::zero()
    };
    let mut groups: BTreeMap<String, Vec<(NaiveDateTime, f64)>> = BTreeMap::new();
    let mut row = csv::StringRecord::new();
    while reader.read_record(&mut row)? {
        let line = row.position().map_or(0, |p| p.line());
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let entity = match cols.entity {
            Some(idx) => row.get(idx).unwrap_or(""),
            None => "",
        };
        if !keep(entity) {
            continue;
        }
        let field = |idx: usize| row.get(idx).ok_or_else(|| parse_err(format!("missing field {idx}")));
        let ts = match cols.time {
            Some(t) => {
                let stamp = format!("{} {}", field(cols.timestamp)?, field(t)?);
                parse_timestamp(&stamp, &schema.timestamp_format)
            }
            None => parse_timestamp(field(cols.timestamp)?, &schema.timestamp_format),
        }
        .map_err(parse_err)?
            - shift;
        let raw_load = field(cols.load)?;
        let load: f64 = raw_load
            .parse()
            .map_err(|_| parse_err(format!("invalid load value {raw_load:?}")))?;
        if !load.is_finite() {
            return Err(parse_err(format!("non-finite load value {raw_load:?}")));
        }
        match groups.get_mut(entity) {
            Some(v) => v.push((ts, load)),
            None => {
                groups.insert(entity.to_string(), vec![(ts, load)]);
            }
        }
    }
    Ok(groups)
}

fn read_series(path: &Path, schema: &CsvSchema, entity: Option<&str>) -> Result<TimeSeries> {
    if entity.is_some() && schema.entity_column.is_none() {
        return Err(Error::Config("entity filter given but schema has no entity column".into()));
    }
    let readings: Vec<(NaiveDateTime, f64)> = read_grouped(path, schema, &|e| entity.is_none_or(|want| e == want))?
        .into_values()
        .flatten()
        .collect();
    if readings.is_empty() {
        return Err(Error::Input(format!("{} contains no readings", path.display())));
    }
    let source_id = match entity {
        Some(e) => e.to_string(),
        None => path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned()),
    };
    TimeSeries::from_readings(schema.interval_minutes, schema.unit, source_id, readings)
}

/// Parses a whole file into a time-sorted series. Duplicate timestamps are averaged;
/// gaps are kept and listed by [`TimeSeries::gaps`].
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<TimeSeries> {
    read_series(path.as_ref(), schema, None)
}

/// Like [`load_csv`], keeping only rows whose entity column equals `entity`.
pub fn load_csv_entity(path: impl AsRef<Path>, schema: &CsvSchema, entity: &str) -> Result<TimeSeries> {
    read_series(path.as_ref(), schema, Some(entity))
}

/// Every entity of a multi-entity file in one pass, optionally restricted to
/// `wanted`. Each series is built independently, so one malformed entity does
/// not affect the others; parse errors still fail the whole read.
pub fn load_csv_entities(
    path: impl AsRef<Path>,
    schema: &CsvSchema,
    wanted: Option<&BTreeSet<String>>,
) -> Result<BTreeMap<String, Result<TimeSeries>>> {
    if schema.entity_column.is_none() {
        return Err(Error::Config("schema has no entity column".into()));
    }
    let groups = read_grouped(path.as_ref(), schema, &|e| wanted.is_none_or(|w| w.contains(e)))?;
    Ok(groups
        .into_iter()
        .map(|(id, readings)| {
            let series = TimeSeries::from_readings(schema.interval_minutes, schema.unit, id.clone(), readings);
            (id, series)
        })
        .collect())
}

/// Distinct entity ids in a multi-entity file, sorted.
pub fn list_entities(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Vec<String>> {
    let path = path.as_ref();
    let Some(_) = schema.entity_column else {
        return Err(Error::Config("schema has no entity column".into()));
    };
    let (mut reader, cols) = open_reader(path, schema)?;
    let idx = cols.entity.expect("entity column resolved");
    let mut ids = BTreeSet::new();
    for row in reader.records() {
        let row = row?;
        if let Some(id) = row.get(idx) {
            ids.insert(id.to_string());
        }
    }
    Ok(ids.into_iter().collect())
}

/// Writes `timestamp,load,slot,weekday,holiday` with ISO-8601 timestamps.
pub fn write_canonical(series: &TimeSeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["timestamp", "load", "slot", "weekday", "holiday"])?;
    for r in &series.records {
        w.write_record([
            r.timestamp.format(CANONICAL_FORMAT).to_string(),
            r.load.to_string(),
            r.slot.to_string(),
            r.weekday.to_string(),
            u8::from(r.holiday).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
