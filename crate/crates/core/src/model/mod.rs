//! The dual-stream forecaster and its single-stream baseline.
//!
//! ```text
//! basic_seq   (K × f) ─► recurrent branch ─► dropout ─┐
//!                                                     ├─ concat ─► dense + ReLU ─► linear head ─► ŷ
//! derived_seq (K × 4) ─► recurrent branch ─► dropout ─┘
//! ```
//!
//! The baseline drops the derived stream and stacks two recurrent layers over
//! the basic sequence instead.

mod metrics;
mod train;
mod weights;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cells::{dropout_mask, CellKind, LayerTape, RecurrentLayer};
use crate::error::{Error, Result};
use crate::features::{Sample, DERIVED_FEATURES};
use crate::numerics::{glorot_uniform, Matrix, SeededRng};

pub use metrics::{mae, mape, LossKind};
pub use train::{evaluate, predict, train, EpochRecord, TrainConfig, TrainReport, Trainer};
pub use weights::{load_weights, save_weights, WEIGHTS_FORMAT, WEIGHTS_VERSION};

pub const DEFAULT_HIDDEN: usize = 20;
pub const DEFAULT_DENSE: usize = 20;

/// Cell type plus directionality, e.g. `BGRU`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Method {
    pub cell: CellKind,
    pub bidirectional: bool,
}

impl Method {
    /// Row order of the published result tables.
    pub const ALL: [Method; 6] = [
        Method::new(CellKind::Gru, true),
        Method::new(CellKind::Gru, false),
        Method::new(CellKind::Lstm, true),
        Method::new(CellKind::Lstm, false),
        Method::new(CellKind::Rnn, false),
        Method::new(CellKind::Rnn, true),
    ];

    pub const fn new(cell: CellKind, bidirectional: bool) -> Self {
        Self { cell, bidirectional }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.bidirectional {
            f.write_str("B")?;
        }
        f.write_str(self.cell.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let upper = s.trim().to_ascii_uppercase();
        let (bidirectional, cell) = match upper.as_str() {
            "RNN" => (false, CellKind::Rnn),
            "BRNN" => (true, CellKind::Rnn),
            "GRU" => (false, CellKind::Gru),
            "BGRU" => (true, CellKind::Gru),
            "LSTM" => (false, CellKind::Lstm),
            "BLSTM" => (true, CellKind::Lstm),
            _ => return Err(Error::Config(format!("unknown method {s:?}"))),
        };
        Ok(Self { cell, bidirectional })
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.to_string()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Basic and derived streams, MAPE loss.
    DeepDeff,
    /// Two stacked recurrent layers over the basic stream, MAE loss.
    Basic,
}

impl ModelKind {
    pub fn default_loss(self) -> LossKind {
        match self {
            ModelKind::DeepDeff => LossKind::Mape,
            ModelKind::Basic => LossKind::Mae,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::DeepDeff => "deepdeff",
            ModelKind::Basic => "basic",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub method: Method,
    pub timesteps: usize,
    pub basic_features: usize,
    pub hidden: usize,
    pub dense: usize,
}

impl ModelSpec {
    pub fn deepdeff(method: Method, timesteps: usize, basic_features: usize) -> Self {
        Self {
            kind: ModelKind::DeepDeff,
            method,
            timesteps,
            basic_features,
            hidden: DEFAULT_HIDDEN,
            dense: DEFAULT_DENSE,
        }
    }

    pub fn basic(method: Method, timesteps: usize, basic_features: usize) -> Self {
        Self {
            kind: ModelKind::Basic,
            ..Self::deepdeff(method, timesteps, basic_features)
        }
    }

    fn branch_width(&self) -> usize {
        self.hidden * if self.method.bidirectional { 2 } else { 1 }
    }

    pub fn merge_width(&self) -> usize {
        match self.kind {
            ModelKind::DeepDeff => 2 * self.branch_width(),
            ModelKind::Basic => self.branch_width(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.timesteps == 0 || self.basic_features == 0 || self.hidden == 0 || self.dense == 0 {
            return Err(Error::Config(format!("model dimensions must be positive: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeepDeffModel {
    pub spec: ModelSpec,
    /// One layer for the dual-stream model, two stacked for the baseline.
    pub basic_layers: Vec<RecurrentLayer>,
    pub derived_layer: Option<RecurrentLayer>,
    /// `merge_width × D`.
    pub dense_w: Matrix,
    pub dense_b: Matrix,
    /// `D × 1`.
    pub head_w: Matrix,
    pub head_b: Matrix,
}

/// Dropout multipliers for the two branch outputs.
#[derive(Clone, Debug)]
pub(crate) struct Masks {
    basic: Vec<f64>,
    derived: Vec<f64>,
}

pub(crate) struct ForwardCache {
    basic_tapes: Vec<LayerTape>,
    derived_tape: Option<LayerTape>,
    masks: Masks,
    merged: Vec<f64>,
    dense_pre: Vec<f64>,
    dense_out: Vec<f64>,
}

impl DeepDeffModel {
    pub fn new(spec: ModelSpec, rng: &mut SeededRng) -> Result<Self> {
        spec.validate()?;
        let Method { cell, bidirectional } = spec.method;
        let mut basic_layers = vec![RecurrentLayer::new(cell, bidirectional, spec.basic_features, spec.hidden, rng)];
        let derived_layer = match spec.kind {
            ModelKind::DeepDeff => Some(RecurrentLayer::new(cell, bidirectional, DERIVED_FEATURES, spec.hidden, rng)),
            ModelKind::Basic => {
                basic_layers.push(RecurrentLayer::new(cell, bidirectional, spec.branch_width(), spec.hidden, rng));
                None
            }
        };
        Ok(Self {
            spec,
            basic_layers,
            derived_layer,
            dense_w: glorot_uniform(spec.merge_width(), spec.dense, rng),
            dense_b: Matrix::zeros(1, spec.dense),
            head_w: glorot_uniform(spec.dense, 1, rng),
            head_b: Matrix::zeros(1, 1),
        })
    }

    /// Same architecture with every parameter zero.
    pub fn zeros(spec: ModelSpec) -> Result<Self> {
        spec.validate()?;
        let Method { cell, bidirectional } = spec.method;
        let mut basic_layers = vec![RecurrentLayer::zeros(cell, bidirectional, spec.basic_features, spec.hidden)];
        let derived_layer = match spec.kind {
            ModelKind::DeepDeff => Some(RecurrentLayer::zeros(cell, bidirectional, DERIVED_FEATURES, spec.hidden)),
            ModelKind::Basic => {
                basic_layers.push(RecurrentLayer::zeros(cell, bidirectional, spec.branch_width(), spec.hidden));
                None
            }
        };
        Ok(Self {
            spec,
            basic_layers,
            derived_layer,
            dense_w: Matrix::zeros(spec.merge_width(), spec.dense),
            dense_b: Matrix::zeros(1, spec.dense),
            head_w: Matrix::zeros(spec.dense, 1),
            head_b: Matrix::zeros(1, 1),
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.spec).expect("spec already validated")
    }

    /// Every parameter matrix with a stable name, in a fixed order.
    pub fn named_params(&self) -> Vec<(String, &Matrix)> {
        fn push_layer<'a>(out: &mut Vec<(String, &'a Matrix)>, prefix: &str, layer: &'a RecurrentLayer) {
            for (dir, cell) in ["fwd", "rev"].iter().zip(layer.cells()) {
                for (name, m) in ["w_x", "w_h", "b"].iter().zip(cell.matrices()) {
                    out.push((format!("{prefix}.{dir}.{name}"), m));
                }
            }
        }
        let mut out = Vec::new();
        for (i, layer) in self.basic_layers.iter().enumerate() {
            push_layer(&mut out, &format!("basic.{i}"), layer);
        }
        if let Some(layer) = &self.derived_layer {
            push_layer(&mut out, "derived", layer);
        }
        out.push(("dense.w".into(), &self.dense_w));
        out.push(("dense.b".into(), &self.dense_b));
        out.push(("head.w".into(), &self.head_w));
        out.push(("head.b".into(), &self.head_b));
        out
    }

    /// Mutable parameters in the same order as [`named_params`](Self::named_params).
    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = Vec::new();
        for layer in self.basic_layers.iter_mut().chain(self.derived_layer.as_mut()) {
            for cell in layer.cells_mut() {
                out.extend(cell.matrices_mut());
            }
        }
        out.extend([&mut self.dense_w, &mut self.dense_b, &mut self.head_w, &mut self.head_b]);
        out
    }

    pub fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, m)| m.as_slice().len()).sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.named_params().iter().flat_map(|(_, m)| m.as_slice().to_vec()).collect()
    }

    pub fn check_sample(&self, sample: &Sample) -> Result<()> {
        let k = self.spec.timesteps;
        if sample.basic.shape() != (k, self.spec.basic_features) {
            return Err(Error::Shape(format!(
                "basic sequence is {}x{}, model expects {k}x{}",
                sample.basic.rows(),
                sample.basic.cols(),
                self.spec.basic_features
            )));
        }
        if self.derived_layer.is_some() && sample.derived.shape() != (k, DERIVED_FEATURES) {
            return Err(Error::Shape(format!(
                "derived sequence is {}x{}, model expects {k}x{DERIVED_FEATURES}",
                sample.derived.rows(),
                sample.derived.cols()
            )));
        }
        Ok(())
    }

    pub(crate) fn draw_masks(&self, rate: f64, rng: &mut SeededRng, training: bool) -> Result<Masks> {
        let width = self.spec.branch_width();
        let basic = dropout_mask(width, rate, rng, training)?;
        let derived = if self.derived_layer.is_some() {
            dropout_mask(width, rate, rng, training)?
        } else {
            Vec::new()
        };
        Ok(Masks { basic, derived })
    }

    pub(crate) fn forward_cached(&self, sample: &Sample, masks: Masks) -> Result<(f64, ForwardCache)> {
        self.check_sample(sample)?;
        let rows = |m: &Matrix| (0..m.rows()).map(|r| m.row(r).to_vec()).collect::<Vec<_>>();

        let mut inputs = rows(&sample.basic);
        let mut basic_tapes = Vec::with_capacity(self.basic_layers.len());
        let mut basic_out = Vec::new();
        for layer in &self.basic_layers {
            let slices: Vec<&[f64]> = inputs.iter().map(Vec::as_slice).collect();
            let (last, per_step, tape) = layer.forward(&slices)?;
            basic_tapes.push(tape);
            basic_out = last;
            inputs = per_step;
        }
        let mut merged: Vec<f64> = basic_out.iter().zip(&masks.basic).map(|(v, m)| v * m).collect();

        let derived_tape = match &self.derived_layer {
            Some(layer) => {
                let derived_rows = rows(&sample.derived);
                let slices: Vec<&[f64]> = derived_rows.iter().map(Vec::as_slice).collect();
                let (last, _, tape) = layer.forward(&slices)?;
                merged.extend(last.iter().zip(&masks.derived).map(|(v, m)| v * m));
                Some(tape)
            }
            None => None,
        };

        let mut dense_pre = self.dense_w.left_mul(&merged);
        for (z, b) in dense_pre.iter_mut().zip(self.dense_b.as_slice()) {
            *z += b;
        }
        let dense_out: Vec<f64> = dense_pre.iter().map(|&z| z.max(0.0)).collect();
        let prediction = self.head_w.left_mul(&dense_out)[0] + self.head_b.get(0, 0);

        Ok((
            prediction,
            ForwardCache {
                basic_tapes,
                derived_tape,
                masks,
                merged,
                dense_pre,
                dense_out,
            },
        ))
    }

    /// Adds `d_prediction · ∂ŷ/∂θ` into `grads`, which must share this model's spec.
    pub(crate) fn accumulate_gradients(
        &self,
        cache: &ForwardCache,
        d_prediction: f64,
        grads: &mut DeepDeffModel,
    ) -> Result<()> {
        grads.head_b.as_mut_slice()[0] += d_prediction;
        grads.head_w.add_outer(&cache.dense_out, &[d_prediction]);
        let d_dense: Vec<f64> = (0..self.spec.dense)
            .map(|j| {
                if cache.dense_pre[j] > 0.0 {
                    self.head_w.get(j, 0) * d_prediction
                } else {
                    0.0
                }
            })
            .collect();
        grads.dense_w.add_outer(&cache.merged, &d_dense);
        for (b, d) in grads.dense_b.as_mut_slice().iter_mut().zip(&d_dense) {
            *b += d;
        }
        let d_merged = self.dense_w.mul_vec(&d_dense);

        let width = self.spec.branch_width();
        let d_basic: Vec<f64> = d_merged[..width].iter().zip(&cache.masks.basic).map(|(d, m)| d * m).collect();

        // stacked layers: the top layer receives the branch gradient on its final
        // output, lower layers receive per-step gradients from the layer above
        let mut d_steps: Option<Vec<Vec<f64>>> = None;
        for (i, (layer, tape)) in self.basic_layers.iter().zip(&cache.basic_tapes).enumerate().rev() {
            let is_top = i + 1 == self.basic_layers.len();
            let zeros = vec![0.0; layer.output_size()];
            let d_last = if is_top { &d_basic } else { &zeros };
            let (layer_grads, d_inputs) = layer.backward(tape, d_last, d_steps.as_deref())?;
            add_layer(&mut grads.basic_layers[i], &layer_grads)?;
            d_steps = Some(d_inputs);
        }

        if let (Some(layer), Some(tape)) = (&self.derived_layer, &cache.derived_tape) {
            let d_derived: Vec<f64> = d_merged[width..]
                .iter()
                .zip(&cache.masks.derived)
                .map(|(d, m)| d * m)
                .collect();
            let (layer_grads, _) = layer.backward(tape, &d_derived, None)?;
            let target = grads
                .derived_layer
                .as_mut()
                .ok_or_else(|| Error::Consistency("gradient buffer lacks a derived branch".into()))?;
            add_layer(target, &layer_grads)?;
        }
        Ok(())
    }

    /// Point prediction. Dropout is drawn from `rng` only when `training`.
    pub fn forward(&self, sample: &Sample, training: bool, dropout: f64, rng: &mut SeededRng) -> Result<f64> {
        let masks = self.draw_masks(dropout, rng, training)?;
        Ok(self.forward_cached(sample, masks)?.0)
    }

    /// Inference-mode prediction.
    pub fn predict_one(&self, sample: &Sample) -> Result<f64> {
        let masks = Masks {
            basic: vec![1.0; self.spec.branch_width()],
            derived: if self.derived_layer.is_some() {
                vec![1.0; self.spec.branch_width()]
            } else {
                Vec::new()
            },
        };
        Ok(self.forward_cached(sample, masks)?.0)
    }
}

fn add_layer(into: &mut RecurrentLayer, from: &RecurrentLayer) -> Result<()> {
    for (a, b) in into.cells_mut().zip(from.cells()) {
        for (ma, mb) in a.matrices_mut().into_iter().zip(b.matrices()) {
            ma.add_assign(mb)?;
        }
    }
    Ok(())
}

/// Builds the single-stream baseline: two stacked recurrent layers over the
/// basic sequence, then the same dense layer and head.
pub fn build_baseline(method: Method, timesteps: usize, basic_features: usize, rng: &mut SeededRng) -> Result<DeepDeffModel> {
    DeepDeffModel::new(ModelSpec::basic(method, timesteps, basic_features), rng)
}

/// Mean batch loss and its gradient. Dropout masks come from `rng` when `training`.
pub fn loss_and_gradient(
    model: &DeepDeffModel,
    batch: &[&Sample],
    loss: LossKind,
    training: bool,
    dropout: f64,
    rng: &mut SeededRng,
) -> Result<(f64, DeepDeffModel)> {
    if batch.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    let n = batch.len() as f64;
    let mut grads = model.zeros_like();
    let mut total = 0.0;
    for sample in batch {
        let masks = model.draw_masks(dropout, rng, training)?;
        let (pred, cache) = model.forward_cached(sample, masks)?;
        let (value, d_pred) = loss.point(pred, sample.target)?;
        total += value;
        model.accumulate_gradients(&cache, d_pred / n, &mut grads)?;
    }
    Ok((total / n, grads))
}
