//! Versioned JSON weights file.
//!
//! ```json
//! {"format":"deepdeff-weights","version":1,"spec":{...},
//!  "parameters":[{"name":"basic.0.fwd.w_x","rows":57,"cols":60,"values":[...]}, ...]}
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DeepDeffModel, ModelSpec};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const WEIGHTS_FORMAT: &str = "deepdeff-weights";
pub const WEIGHTS_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct WeightsFile {
    format: String,
    version: u32,
    spec: ModelSpec,
    parameters: Vec<NamedMatrix>,
}

#[derive(Serialize, Deserialize)]
struct NamedMatrix {
    name: String,
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

pub fn save_weights(model: &DeepDeffModel, path: &Path) -> Result<()> {
    let file = WeightsFile {
        format: WEIGHTS_FORMAT.into(),
        version: WEIGHTS_VERSION,
        spec: model.spec,
        parameters: model
            .named_params()
            .into_iter()
            .map(|(name, m)| NamedMatrix {
                name,
                rows: m.rows(),
                cols: m.cols(),
                values: m.as_slice().to_vec(),
            })
            .collect(),
    };
    let mut text = serde_json::to_string(&file)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: &Path) -> Result<DeepDeffModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: WeightsFile =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if file.format != WEIGHTS_FORMAT {
        return Err(Error::Format(format!("unexpected format tag {:?}", file.format)));
    }
    if file.version != WEIGHTS_VERSION {
        return Err(Error::Format(format!(
            "weights version {} is not supported (expected {WEIGHTS_VERSION})",
            file.version
        )));
    }
    let mut model = DeepDeffModel::zeros(file.spec).map_err(|e| Error::Format(e.to_string()))?;
    let expected: Vec<(String, (usize, usize))> =
        model.named_params().into_iter().map(|(n, m)| (n, m.shape())).collect();
    if expected.len() != file.parameters.len() {
        return Err(Error::Format(format!(
            "expected {} parameter matrices, found {}",
            expected.len(),
            file.parameters.len()
        )));
    }
    for ((slot, (name, shape)), stored) in model.params_mut().into_iter().zip(expected).zip(file.parameters) {
        if stored.name != name || (stored.rows, stored.cols) != shape {
            return Err(Error::Format(format!(
                "parameter {} ({}x{}) does not match expected {name} {shape:?}",
                stored.name, stored.rows, stored.cols
            )));
        }
        *slot = Matrix::new(stored.rows, stored.cols, stored.values).map_err(|e| Error::Format(e.to_string()))?;
    }
    Ok(model)
}
