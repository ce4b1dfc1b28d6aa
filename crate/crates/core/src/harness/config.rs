use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::presets::DatasetPreset;
use crate::data::synthetic::SyntheticLoad;
use crate::data::{CsvSchema, LoadUnit, SplitSpec};
use crate::error::{Error, Result};
use crate::features::DerivedMode;
use crate::model::{Method, ModelKind, TrainConfig};

/// Where entity series come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetConfig {
    /// One of the built-in dataset layouts, optionally with its split or schema overridden.
    Preset {
        name: String,
        #[serde(default)]
        split: Option<SplitSpec>,
        #[serde(default)]
        schema: Option<CsvSchema>,
    },
    Custom {
        schema: CsvSchema,
        #[serde(default)]
        target_interval_minutes: Option<u32>,
        #[serde(default)]
        offset: Option<f64>,
        split: SplitSpec,
    },
    /// Files written by `ingest`, already resampled and offset.
    Canonical {
        interval_minutes: u32,
        unit: LoadUnit,
        split: SplitSpec,
    },
    /// Generated series keyed by entity id; no files needed.
    Synthetic {
        series: BTreeMap<String, SyntheticLoad>,
        split: SplitSpec,
    },
}

/// File-based dataset after preset resolution.
#[derive(Clone, Debug)]
pub(crate) struct FileDataset {
    pub schema: CsvSchema,
    pub target_interval_minutes: Option<u32>,
    pub offset: Option<f64>,
}

impl DatasetConfig {
    pub fn split(&self) -> Result<SplitSpec> {
        Ok(match self {
            DatasetConfig::Preset { name, split, .. } => match split {
                Some(s) => s.clone(),
                None => DatasetPreset::by_name(name)?.split,
            },
            DatasetConfig::Custom { split, .. }
            | DatasetConfig::Canonical { split, .. }
            | DatasetConfig::Synthetic { split, .. } => split.clone(),
        })
    }

    pub(crate) fn files(&self) -> Result<Option<FileDataset>> {
        Ok(match self {
            DatasetConfig::Preset { name, schema, .. } => {
                let preset = DatasetPreset::by_name(name)?;
                Some(FileDataset {
                    schema: schema.clone().unwrap_or(preset.schema),
                    target_interval_minutes: Some(preset.target_interval_minutes),
                    offset: preset.offset,
                })
            }
            DatasetConfig::Custom {
                schema,
                target_interval_minutes,
                offset,
                ..
            } => Some(FileDataset {
                schema: schema.clone(),
                target_interval_minutes: *target_interval_minutes,
                offset: *offset,
            }),
            DatasetConfig::Canonical { interval_minutes, unit, .. } => Some(FileDataset {
                schema: CsvSchema::canonical(*interval_minutes, *unit),
                target_interval_minutes: None,
                offset: None,
            }),
            DatasetConfig::Synthetic { .. } => None,
        })
    }
}

/// Which model kinds to train for every matrix cell.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelSelection {
    DeepDeff,
    Basic,
    #[default]
    Both,
}

impl ModelSelection {
    pub fn kinds(self) -> &'static [ModelKind] {
        match self {
            ModelSelection::DeepDeff => &[ModelKind::DeepDeff],
            ModelSelection::Basic => &[ModelKind::Basic],
            ModelSelection::Both => &[ModelKind::DeepDeff, ModelKind::Basic],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub files: Vec<PathBuf>,
    /// Empty means every entity found in the files.
    #[serde(default)]
    pub entities: Vec<String>,
    pub methods: Vec<Method>,
    pub timesteps: Vec<usize>,
    #[serde(default)]
    pub model: ModelSelection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub derived_mode: DerivedMode,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    #[serde(default = "default_true")]
    pub save_weights: bool,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_jobs() -> usize {
    1
}

fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    /// Reads a JSON config. Relative file paths resolve against the config's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for file in &mut config.files {
            if file.is_relative() {
                *file = base.join(&*file);
            }
        }
        if config.output_dir.is_relative() {
            config.output_dir = base.join(&config.output_dir);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        if self.timesteps.is_empty() || self.timesteps.contains(&0) {
            return Err(Error::Config("timesteps must be a non-empty list of positive counts".into()));
        }
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        match &self.dataset {
            DatasetConfig::Synthetic { series, .. } if series.is_empty() => {
                return Err(Error::Config("synthetic dataset needs at least one series".into()));
            }
            DatasetConfig::Synthetic { .. } => {}
            _ if self.files.is_empty() => {
                return Err(Error::Config("at least one input file is required".into()));
            }
            _ => {}
        }
        self.dataset.split()?.validate()?;
        self.train.validate()
    }
}
