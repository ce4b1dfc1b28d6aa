use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Sample;
use crate::model::{predict, DeepDeffModel, Method, ModelKind, TrainReport};

/// Output rendering for `results.*` and the `report` verb.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
    Table,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            "table" => Ok(Self::Table),
            other => Err(Error::Config(format!("unknown report format {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntityMape {
    pub entity: String,
    /// Test MAPE in percent, absent when the pipeline failed.
    pub mape: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: Method,
    pub timesteps: usize,
    pub model: ModelKind,
    pub entities: Vec<EntityMape>,
    /// Mean over the entities that produced a MAPE.
    pub average: Option<f64>,
}

impl ResultRow {
    pub fn new(method: Method, timesteps: usize, model: ModelKind, mut entities: Vec<EntityMape>) -> Self {
        entities.sort_by(|a, b| a.entity.cmp(&b.entity));
        let average = mean_of(&entities);
        Self {
            method,
            timesteps,
            model,
            entities,
            average,
        }
    }

    fn sort_key(&self) -> (usize, usize, ModelKind) {
        (method_rank(self.method), self.timesteps, self.model)
    }
}

fn method_rank(m: Method) -> usize {
    Method::ALL.iter().position(|x| *x == m).unwrap_or(usize::MAX)
}

fn mean_of(entities: &[EntityMape]) -> Option<f64> {
    let values: Vec<f64> = entities.iter().filter_map(|e| e.mape).collect();
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    /// Rows ordered as in the published tables: method, then time-steps, then model kind.
    pub fn new(mut rows: Vec<ResultRow>) -> Self {
        rows.sort_by_key(ResultRow::sort_key);
        Self { rows }
    }

    /// Checks that every stored average recomputes from its own entity list.
    pub fn check_consistency(&self) -> Result<()> {
        for row in &self.rows {
            let expected = mean_of(&row.entities);
            let ok = match (row.average, expected) {
                (None, None) => true,
                (Some(a), Some(b)) => (a - b).abs() <= 1e-9 * b.abs().max(1.0),
                _ => false,
            };
            if !ok {
                return Err(Error::Consistency(format!(
                    "{} K={} {}: stored average {:?} but entities give {:?}",
                    row.method, row.timesteps, row.model, row.average, expected
                )));
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["method", "timesteps", "model", "scope", "entity", "mape", "error"])?;
        for row in &self.rows {
            let lead = [row.method.to_string(), row.timesteps.to_string(), row.model.to_string()];
            for e in &row.entities {
                w.write_record(lead.iter().cloned().chain([
                    "entity".into(),
                    e.entity.clone(),
                    fmt_opt(e.mape),
                    e.error.clone().unwrap_or_default(),
                ]))?;
            }
            w.write_record(lead.iter().cloned().chain([
                "average".into(),
                String::new(),
                fmt_opt(row.average),
                String::new(),
            ]))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let mut rows: Vec<ResultRow> = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record?;
            let line = i + 2;
            let field = |n: usize| record.get(n).unwrap_or("");
            let bad = |what: &str| Error::Format(format!("results line {line}: invalid {what}"));
            let method: Method = field(0).parse().map_err(|_| bad("method"))?;
            let timesteps: usize = field(1).parse().map_err(|_| bad("timesteps"))?;
            let model = match field(2) {
                "deepdeff" => ModelKind::DeepDeff,
                "basic" => ModelKind::Basic,
                _ => return Err(bad("model")),
            };
            let mape = match field(5) {
                "" => None,
                v => Some(v.parse::<f64>().map_err(|_| bad("mape"))?),
            };
            let same = |r: &ResultRow| r.method == method && r.timesteps == timesteps && r.model == model;
            let pos = match rows.iter().position(same) {
                Some(p) => p,
                None => {
                    rows.push(ResultRow {
                        method,
                        timesteps,
                        model,
                        entities: Vec::new(),
                        average: None,
                    });
                    rows.len() - 1
                }
            };
            match field(3) {
                "entity" => rows[pos].entities.push(EntityMape {
                    entity: field(4).to_string(),
                    mape,
                    error: Some(field(6).to_string()).filter(|e| !e.is_empty()),
                }),
                "average" => rows[pos].average = mape,
                _ => return Err(bad("scope")),
            }
        }
        let table = Self::new(rows);
        table.check_consistency()?;
        Ok(table)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let table: ResultTable = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        table.check_consistency()?;
        Ok(table)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Renders average MAPE with one column per model kind:
/// `Method | Time-steps | DeepDeFF | Basic`.
pub fn render_table(table: &ResultTable) -> String {
    let mut keys: Vec<(Method, usize)> = Vec::new();
    for r in &table.rows {
        if !keys.contains(&(r.method, r.timesteps)) {
            keys.push((r.method, r.timesteps));
        }
    }
    let cell = |m: Method, k: usize, kind: ModelKind| {
        table
            .rows
            .iter()
            .find(|r| r.method == m && r.timesteps == k && r.model == kind)
            .and_then(|r| r.average)
            .map(|v| format!("{v:.2}"))
            .unwrap_or_else(|| "-".into())
    };
    let header = ["Method", "Time-steps", "DeepDeFF", "Basic"];
    let body: Vec<[String; 4]> = keys
        .iter()
        .map(|&(m, k)| {
            [
                m.to_string(),
                k.to_string(),
                cell(m, k, ModelKind::DeepDeff),
                cell(m, k, ModelKind::Basic),
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..4)
        .map(|c| body.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let mut line = |cells: [&str; 4]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (v, w))| if c < 2 { format!("{v:<w$}") } else { format!("{v:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(header);
    for r in &body {
        line([&r[0], &r[1], &r[2], &r[3]]);
    }
    out
}

/// Writes `results.csv` / `results.json` into `dir`, or returns the text table.
/// The rendered text is returned in every case.
pub fn emit_report(table: &ResultTable, format: ReportFormat, dir: Option<&Path>) -> Result<String> {
    if table.rows.is_empty() {
        return Err(Error::Input("result table is empty".into()));
    }
    let (text, name) = match format {
        ReportFormat::Csv => (table.to_csv()?, Some("results.csv")),
        ReportFormat::Json => (table.to_json()?, Some("results.json")),
        ReportFormat::Table => (render_table(table), None),
    };
    if let (Some(dir), Some(name)) = (dir, name) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(name);
        fs::write(&path, &text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(text)
}

/// Reads a `results.json` or `results.csv`, or whichever exists inside a directory.
pub fn load_results(path: &Path) -> Result<ResultTable> {
    let file = if path.is_dir() {
        let json = path.join("results.json");
        if json.exists() {
            json
        } else {
            path.join("results.csv")
        }
    } else {
        path.to_path_buf()
    };
    let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
    if file.extension().is_some_and(|e| e == "json") {
        ResultTable::from_json(&text)
    } else {
        ResultTable::from_csv(&text)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub timestamp: NaiveDateTime,
    pub actual: f64,
    pub predicted: f64,
}

/// Actual versus predicted load for every sample, in time order.
pub fn emit_plot_data(model: &DeepDeffModel, samples: &[Sample]) -> Result<Vec<PlotRow>> {
    let predictions = predict(model, samples)?;
    let mut rows: Vec<PlotRow> = samples
        .iter()
        .zip(predictions)
        .map(|(s, p)| PlotRow {
            timestamp: s.target_time,
            actual: s.target,
            predicted: p,
        })
        .collect();
    rows.sort_by_key(|r| r.timestamp);
    Ok(rows)
}

const TIMESTAMP: &str = "%Y-%m-%dT%H:%M:%S";

/// `method,timesteps,model,timestamp,actual,predicted`, one block per model.
pub fn write_plot_data(path: &Path, blocks: &[(Method, usize, ModelKind, &[PlotRow])]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    w.write_record(["method", "timesteps", "model", "timestamp", "actual", "predicted"])?;
    for (method, k, kind, rows) in blocks {
        for r in rows.iter() {
            w.write_record([
                method.to_string(),
                k.to_string(),
                kind.to_string(),
                r.timestamp.format(TIMESTAMP).to_string(),
                r.actual.to_string(),
                r.predicted.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `method,timesteps,model,epoch,train_loss,validation_mape`, one block per model.
pub fn write_train_reports(path: &Path, blocks: &[(Method, usize, ModelKind, &TrainReport)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    w.write_record(["method", "timesteps", "model", "epoch", "train_loss", "validation_mape"])?;
    for (method, k, kind, report) in blocks {
        for e in &report.epochs {
            w.write_record([
                method.to_string(),
                k.to_string(),
                kind.to_string(),
                e.epoch.to_string(),
                e.train_loss.to_string(),
                e.validation_mape.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
