//! Recurrent cells, sequence unrolling, backpropagation through time and
//! bidirectional composition.
//!
//! Gate weights are packed column-wise: `w_x` is `f × G·H`, `w_h` is `H × G·H`
//! and `b` is `1 × G·H`, where `G` is the number of gate blocks.
//!
//! ```text
//! RNN   h' = tanh(x·Wx + h·Wh + b)
//! GRU   z  = σ(x·Wx_z + h·Wh_z + b_z)
//!       r  = σ(x·Wx_r + h·Wh_r + b_r)
//!       n  = tanh(x·Wx_n + (r ⊙ h)·Wh_n + b_n)
//!       h' = (1 − z) ⊙ h + z ⊙ n
//! LSTM  i, f, o = σ(…), g = tanh(…)      (no peepholes)
//!       c' = f ⊙ c + i ⊙ g
//!       h' = o ⊙ tanh(c')
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{glorot_uniform, Matrix, SeededRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Rnn,
    Gru,
    Lstm,
}

impl CellKind {
    /// Gate blocks: GRU `[z, r, n]`, LSTM `[i, f, g, o]`.
    pub fn gate_count(self) -> usize {
        match self {
            CellKind::Rnn => 1,
            CellKind::Gru => 3,
            CellKind::Lstm => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CellKind::Rnn => "RNN",
            CellKind::Gru => "GRU",
            CellKind::Lstm => "LSTM",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Reverse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    pub kind: CellKind,
    pub input_size: usize,
    pub hidden_size: usize,
    pub w_x: Matrix,
    pub w_h: Matrix,
    pub b: Matrix,
}

const LSTM_FORGET_GATE: usize = 1;

impl CellParams {
    pub fn zeros(kind: CellKind, input_size: usize, hidden_size: usize) -> Self {
        let width = kind.gate_count() * hidden_size;
        Self {
            kind,
            input_size,
            hidden_size,
            w_x: Matrix::zeros(input_size, width),
            w_h: Matrix::zeros(hidden_size, width),
            b: Matrix::zeros(1, width),
        }
    }

    /// Glorot-uniform weights per gate block, zero biases, LSTM forget bias 1.
    pub fn glorot(kind: CellKind, input_size: usize, hidden_size: usize, rng: &mut SeededRng) -> Self {
        let mut params = Self::zeros(kind, input_size, hidden_size);
        for gate in 0..kind.gate_count() {
            let wx = glorot_uniform(input_size, hidden_size, rng);
            let wh = glorot_uniform(hidden_size, hidden_size, rng);
            params.set_gate_block(gate, &wx, &wh);
        }
        if kind == CellKind::Lstm {
            let h = hidden_size;
            params.b.as_mut_slice()[LSTM_FORGET_GATE * h..(LSTM_FORGET_GATE + 1) * h].fill(1.0);
        }
        params
    }

    fn set_gate_block(&mut self, gate: usize, wx: &Matrix, wh: &Matrix) {
        let h = self.hidden_size;
        for r in 0..self.input_size {
            for c in 0..h {
                self.w_x.set(r, gate * h + c, wx.get(r, c));
            }
        }
        for r in 0..h {
            for c in 0..h {
                self.w_h.set(r, gate * h + c, wh.get(r, c));
            }
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.kind, self.input_size, self.hidden_size)
    }

    pub fn matrices(&self) -> [&Matrix; 3] {
        [&self.w_x, &self.w_h, &self.b]
    }

    pub fn matrices_mut(&mut self) -> [&mut Matrix; 3] {
        [&mut self.w_x, &mut self.w_h, &mut self.b]
    }

    pub fn param_count(&self) -> usize {
        self.matrices().iter().map(|m| m.rows() * m.cols()).sum()
    }

    fn same_shape(&self, other: &CellParams) -> bool {
        self.kind == other.kind
            && self.input_size == other.input_size
            && self.hidden_size == other.hidden_size
    }

    /// Packed pre-activations `x·Wx + h·Wh + b`.
    fn pre_activation(&self, x: &[f64], h: &[f64]) -> Vec<f64> {
        let mut pre = self.w_x.left_mul(x);
        for (p, (a, b)) in pre.iter_mut().zip(self.w_h.left_mul(h).iter().zip(self.b.as_slice())) {
            *p += a + b;
        }
        pre
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellState {
    pub h: Vec<f64>,
    /// Cell memory; empty for RNN and GRU.
    pub c: Vec<f64>,
}

impl CellState {
    pub fn zeros(kind: CellKind, hidden_size: usize) -> Self {
        let c = if kind == CellKind::Lstm {
            vec![0.0; hidden_size]
        } else {
            Vec::new()
        };
        Self {
            h: vec![0.0; hidden_size],
            c,
        }
    }
}

/// Everything one timestep needs for its backward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    /// Post-activation gate values, packed like the weights.
    pub gates: Vec<f64>,
    pub c: Vec<f64>,
    pub h: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceTape {
    pub kind: CellKind,
    pub input_size: usize,
    pub hidden_size: usize,
    pub direction: Direction,
    /// In processing order: for `Reverse`, `steps[0]` consumed the last input.
    pub steps: Vec<StepRecord>,
}

impl SequenceTape {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Hidden state emitted at each original time index.
    pub fn hidden_in_time_order(&self) -> Vec<Vec<f64>> {
        let mut hs: Vec<Vec<f64>> = self.steps.iter().map(|s| s.h.clone()).collect();
        if self.direction == Direction::Reverse {
            hs.reverse();
        }
        hs
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_step_shapes(params: &CellParams, x: &[f64], state: &CellState) -> Result<()> {
    if x.len() != params.input_size {
        return Err(Error::Shape(format!(
            "input has length {}, cell expects {}",
            x.len(),
            params.input_size
        )));
    }
    if state.h.len() != params.hidden_size {
        return Err(Error::Shape(format!(
            "hidden state has length {}, cell expects {}",
            state.h.len(),
            params.hidden_size
        )));
    }
    if params.kind == CellKind::Lstm && state.c.len() != params.hidden_size {
        return Err(Error::Shape(format!(
            "cell state has length {}, cell expects {}",
            state.c.len(),
            params.hidden_size
        )));
    }
    Ok(())
}

fn step_unchecked(params: &CellParams, x: &[f64], state: &CellState) -> StepRecord {
    let hs = params.hidden_size;
    let (gates, c, h) = match params.kind {
        CellKind::Rnn => {
            let h: Vec<f64> = params.pre_activation(x, &state.h).into_iter().map(f64::tanh).collect();
            (h.clone(), Vec::new(), h)
        }
        CellKind::Gru => {
            // z and r see the raw hidden state, the candidate sees r ⊙ h.
            let mut pre = params.w_x.left_mul(x);
            for (p, b) in pre.iter_mut().zip(params.b.as_slice()) {
                *p += b;
            }
            let mut gates = vec![0.0; 3 * hs];
            let mut hidden_zr = vec![0.0; 2 * hs];
            for (i, &hi) in state.h.iter().enumerate() {
                if hi == 0.0 {
                    continue;
                }
                for (acc, w) in hidden_zr.iter_mut().zip(&params.w_h.row(i)[..2 * hs]) {
                    *acc += hi * w;
                }
            }
            for j in 0..2 * hs {
                gates[j] = sigmoid(pre[j] + hidden_zr[j]);
            }
            let mut candidate = pre[2 * hs..].to_vec();
            for (i, &hi) in state.h.iter().enumerate() {
                let rh = gates[hs + i] * hi;
                if rh == 0.0 {
                    continue;
                }
                for (acc, w) in candidate.iter_mut().zip(&params.w_h.row(i)[2 * hs..]) {
                    *acc += rh * w;
                }
            }
            for j in 0..hs {
                gates[2 * hs + j] = candidate[j].tanh();
            }
            let h = (0..hs)
                .map(|j| {
                    let z = gates[j];
                    (1.0 - z) * state.h[j] + z * gates[2 * hs + j]
                })
                .collect();
            (gates, Vec::new(), h)
        }
        CellKind::Lstm => {
            let pre = params.pre_activation(x, &state.h);
            let mut gates = vec![0.0; 4 * hs];
            for j in 0..hs {
                gates[j] = sigmoid(pre[j]);
                gates[hs + j] = sigmoid(pre[hs + j]);
                gates[2 * hs + j] = pre[2 * hs + j].tanh();
                gates[3 * hs + j] = sigmoid(pre[3 * hs + j]);
            }
            let c: Vec<f64> = (0..hs)
                .map(|j| gates[hs + j] * state.c[j] + gates[j] * gates[2 * hs + j])
                .collect();
            let h = (0..hs).map(|j| gates[3 * hs + j] * c[j].tanh()).collect();
            (gates, c, h)
        }
    };
    StepRecord {
        x: x.to_vec(),
        h_prev: state.h.clone(),
        c_prev: state.c.clone(),
        gates,
        c,
        h,
    }
}

/// Advance one timestep.
pub fn cell_step(params: &CellParams, x: &[f64], state: &CellState) -> Result<CellState> {
    check_step_shapes(params, x, state)?;
    let record = step_unchecked(params, x, state);
    Ok(CellState {
        h: record.h,
        c: record.c,
    })
}

/// Unroll over `inputs` from a zero state. Returns the final hidden state of the
/// processing order (for `Reverse`, the state after consuming `inputs[0]`).
pub fn forward_sequence(
    params: &CellParams,
    inputs: &[&[f64]],
    direction: Direction,
) -> Result<(Vec<f64>, SequenceTape)> {
    if inputs.is_empty() {
        return Err(Error::Input("cannot unroll an empty sequence".into()));
    }
    let mut state = CellState::zeros(params.kind, params.hidden_size);
    let order: Box<dyn Iterator<Item = &&[f64]>> = match direction {
        Direction::Forward => Box::new(inputs.iter()),
        Direction::Reverse => Box::new(inputs.iter().rev()),
    };
    let mut steps = Vec::with_capacity(inputs.len());
    for x in order {
        check_step_shapes(params, x, &state)?;
        let record = step_unchecked(params, x, &state);
        state = CellState {
            h: record.h.clone(),
            c: record.c.clone(),
        };
        steps.push(record);
    }
    let tape = SequenceTape {
        kind: params.kind,
        input_size: params.input_size,
        hidden_size: params.hidden_size,
        direction,
        steps,
    };
    Ok((state.h, tape))
}

fn check_tape(params: &CellParams, tape: &SequenceTape) -> Result<()> {
    if tape.kind != params.kind
        || tape.input_size != params.input_size
        || tape.hidden_size != params.hidden_size
    {
        return Err(Error::Consistency(format!(
            "tape is {} {}→{}, params are {} {}→{}",
            tape.kind.name(),
            tape.input_size,
            tape.hidden_size,
            params.kind.name(),
            params.input_size,
            params.hidden_size
        )));
    }
    if tape.is_empty() {
        return Err(Error::Consistency("tape is empty".into()));
    }
    Ok(())
}

/// Gradients from an upstream gradient on the final hidden state only.
///
/// Returns parameter gradients and input gradients in original time order.
pub fn backprop_sequence(
    params: &CellParams,
    tape: &SequenceTape,
    d_last_state: &[f64],
) -> Result<(CellParams, Vec<Vec<f64>>)> {
    check_tape(params, tape)?;
    if d_last_state.len() != params.hidden_size {
        return Err(Error::Shape(format!(
            "upstream gradient has length {}, hidden size is {}",
            d_last_state.len(),
            params.hidden_size
        )));
    }
    let k = tape.len();
    let mut upstream = vec![vec![0.0; params.hidden_size]; k];
    upstream[k - 1] = d_last_state.to_vec();
    backprop_processing_order(params, tape, &upstream)
}

/// Gradients from upstream gradients on every emitted hidden state, given in
/// original time order (as produced by [`SequenceTape::hidden_in_time_order`]).
pub fn backprop_sequence_full(
    params: &CellParams,
    tape: &SequenceTape,
    d_hidden: &[Vec<f64>],
) -> Result<(CellParams, Vec<Vec<f64>>)> {
    check_tape(params, tape)?;
    if d_hidden.len() != tape.len() || d_hidden.iter().any(|d| d.len() != params.hidden_size) {
        return Err(Error::Shape(format!(
            "expected {} upstream gradients of length {}",
            tape.len(),
            params.hidden_size
        )));
    }
    let mut upstream = d_hidden.to_vec();
    if tape.direction == Direction::Reverse {
        upstream.reverse();
    }
    backprop_processing_order(params, tape, &upstream)
}

fn backprop_processing_order(
    params: &CellParams,
    tape: &SequenceTape,
    upstream: &[Vec<f64>],
) -> Result<(CellParams, Vec<Vec<f64>>)> {
    let hs = params.hidden_size;
    let mut grads = params.zeros_like();
    let mut d_inputs = vec![Vec::new(); tape.len()];
    let mut dh_next = vec![0.0; hs];
    let mut dc_next = vec![0.0; hs];

    for (j, step) in tape.steps.iter().enumerate().rev() {
        let dh: Vec<f64> = dh_next.iter().zip(&upstream[j]).map(|(a, b)| a + b).collect();
        let mut da = vec![0.0; params.kind.gate_count() * hs];
        let mut dh_prev = vec![0.0; hs];

        match params.kind {
            CellKind::Rnn => {
                for i in 0..hs {
                    da[i] = dh[i] * (1.0 - step.h[i] * step.h[i]);
                }
                grads.w_h.add_outer(&step.h_prev, &da);
                for (d, v) in dh_prev.iter_mut().zip(params.w_h.mul_vec(&da)) {
                    *d += v;
                }
            }
            CellKind::Gru => {
                let (z, rest) = step.gates.split_at(hs);
                let (r, n) = rest.split_at(hs);
                for i in 0..hs {
                    let dn = dh[i] * z[i];
                    let dz = dh[i] * (n[i] - step.h_prev[i]);
                    dh_prev[i] += dh[i] * (1.0 - z[i]);
                    da[i] = dz * z[i] * (1.0 - z[i]);
                    da[2 * hs + i] = dn * (1.0 - n[i] * n[i]);
                }
                let da_n = &da[2 * hs..].to_vec();
                // d(r ⊙ h) = Wh_n · da_n
                let mut d_rh = vec![0.0; hs];
                for (i, d) in d_rh.iter_mut().enumerate() {
                    *d = params.w_h.row(i)[2 * hs..].iter().zip(da_n).map(|(w, g)| w * g).sum();
                }
                for i in 0..hs {
                    let dr = d_rh[i] * step.h_prev[i];
                    dh_prev[i] += d_rh[i] * r[i];
                    da[hs + i] = dr * r[i] * (1.0 - r[i]);
                }
                let rh: Vec<f64> = r.iter().zip(&step.h_prev).map(|(a, b)| a * b).collect();
                // hidden-weight gradients: z, r blocks see h_prev, n block sees r ⊙ h_prev
                let width = 3 * hs;
                for i in 0..hs {
                    let row = &mut grads.w_h.as_mut_slice()[i * width..(i + 1) * width];
                    let hp = step.h_prev[i];
                    for c in 0..2 * hs {
                        row[c] += hp * da[c];
                    }
                    for c in 0..hs {
                        row[2 * hs + c] += rh[i] * da[2 * hs + c];
                    }
                }
                for (i, d) in dh_prev.iter_mut().enumerate() {
                    *d += params.w_h.row(i)[..2 * hs].iter().zip(&da[..2 * hs]).map(|(w, g)| w * g).sum::<f64>();
                }
            }
            CellKind::Lstm => {
                let (gi, rest) = step.gates.split_at(hs);
                let (gf, rest) = rest.split_at(hs);
                let (gg, go) = rest.split_at(hs);
                for i in 0..hs {
                    let tc = step.c[i].tanh();
                    let d_o = dh[i] * tc;
                    let dc = dc_next[i] + dh[i] * go[i] * (1.0 - tc * tc);
                    let d_f = dc * step.c_prev[i];
                    let d_i = dc * gg[i];
                    let d_g = dc * gi[i];
                    dc_next[i] = dc * gf[i];
                    da[i] = d_i * gi[i] * (1.0 - gi[i]);
                    da[hs + i] = d_f * gf[i] * (1.0 - gf[i]);
                    da[2 * hs + i] = d_g * (1.0 - gg[i] * gg[i]);
                    da[3 * hs + i] = d_o * go[i] * (1.0 - go[i]);
                }
                grads.w_h.add_outer(&step.h_prev, &da);
                for (d, v) in dh_prev.iter_mut().zip(params.w_h.mul_vec(&da)) {
                    *d += v;
                }
            }
        }

        grads.w_x.add_outer(&step.x, &da);
        for (b, g) in grads.b.as_mut_slice().iter_mut().zip(&da) {
            *b += g;
        }
        d_inputs[j] = params.w_x.mul_vec(&da);
        dh_next = dh_prev;
    }

    if tape.direction == Direction::Reverse {
        d_inputs.reverse();
    }
    Ok((grads, d_inputs))
}

/// Concatenation `[forward final ‖ reverse final]` of two independent passes.
pub fn bidirectional_forward(
    fwd_params: &CellParams,
    rev_params: &CellParams,
    inputs: &[&[f64]],
) -> Result<Vec<f64>> {
    if !fwd_params.same_shape(rev_params) {
        return Err(Error::Shape(format!(
            "forward cell is {} {}→{}, reverse cell is {} {}→{}",
            fwd_params.kind.name(),
            fwd_params.input_size,
            fwd_params.hidden_size,
            rev_params.kind.name(),
            rev_params.input_size,
            rev_params.hidden_size
        )));
    }
    let (mut out, _) = forward_sequence(fwd_params, inputs, Direction::Forward)?;
    let (rev, _) = forward_sequence(rev_params, inputs, Direction::Reverse)?;
    out.extend(rev);
    Ok(out)
}

/// One recurrent layer, optionally bidirectional.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecurrentLayer {
    pub forward: CellParams,
    pub reverse: Option<CellParams>,
}

#[derive(Clone, Debug)]
pub struct LayerTape {
    forward: SequenceTape,
    reverse: Option<SequenceTape>,
}

impl RecurrentLayer {
    pub fn new(
        kind: CellKind,
        bidirectional: bool,
        input_size: usize,
        hidden_size: usize,
        rng: &mut SeededRng,
    ) -> Self {
        let forward = CellParams::glorot(kind, input_size, hidden_size, rng);
        let reverse = bidirectional.then(|| CellParams::glorot(kind, input_size, hidden_size, rng));
        Self { forward, reverse }
    }

    pub fn zeros(kind: CellKind, bidirectional: bool, input_size: usize, hidden_size: usize) -> Self {
        Self {
            forward: CellParams::zeros(kind, input_size, hidden_size),
            reverse: bidirectional.then(|| CellParams::zeros(kind, input_size, hidden_size)),
        }
    }

    pub fn input_size(&self) -> usize {
        self.forward.input_size
    }

    pub fn output_size(&self) -> usize {
        self.forward.hidden_size * if self.reverse.is_some() { 2 } else { 1 }
    }

    pub fn cells(&self) -> impl Iterator<Item = &CellParams> {
        std::iter::once(&self.forward).chain(self.reverse.as_ref())
    }

    pub fn cells_mut(&mut self) -> impl Iterator<Item = &mut CellParams> {
        std::iter::once(&mut self.forward).chain(self.reverse.as_mut())
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            forward: self.forward.zeros_like(),
            reverse: self.reverse.as_ref().map(CellParams::zeros_like),
        }
    }

    /// Final output (`H` or `2H`) plus the per-timestep outputs in time order.
    pub fn forward(&self, inputs: &[&[f64]]) -> Result<(Vec<f64>, Vec<Vec<f64>>, LayerTape)> {
        let (mut last, fwd_tape) = forward_sequence(&self.forward, inputs, Direction::Forward)?;
        let mut per_step = fwd_tape.hidden_in_time_order();
        let reverse = match &self.reverse {
            Some(rev) => {
                let (rev_last, rev_tape) = forward_sequence(rev, inputs, Direction::Reverse)?;
                last.extend(rev_last);
                for (out, h) in per_step.iter_mut().zip(rev_tape.hidden_in_time_order()) {
                    out.extend(h);
                }
                Some(rev_tape)
            }
            None => None,
        };
        let tape = LayerTape {
            forward: fwd_tape,
            reverse,
        };
        Ok((last, per_step, tape))
    }

    /// Backward pass. `d_last` is the gradient on the final output, `d_steps`
    /// optional gradients on every per-timestep output.
    pub fn backward(
        &self,
        tape: &LayerTape,
        d_last: &[f64],
        d_steps: Option<&[Vec<f64>]>,
    ) -> Result<(RecurrentLayer, Vec<Vec<f64>>)> {
        let hs = self.forward.hidden_size;
        let k = tape.forward.len();
        if d_last.len() != self.output_size() {
            return Err(Error::Shape(format!(
                "layer output gradient has length {}, expected {}",
                d_last.len(),
                self.output_size()
            )));
        }
        let split = |range: std::ops::Range<usize>, final_time: usize| -> Vec<Vec<f64>> {
            let mut out: Vec<Vec<f64>> = match d_steps {
                Some(ds) => ds.iter().map(|d| d[range.clone()].to_vec()).collect(),
                None => vec![vec![0.0; hs]; k],
            };
            for (o, g) in out[final_time].iter_mut().zip(&d_last[range]) {
                *o += g;
            }
            out
        };
        if let Some(ds) = d_steps {
            if ds.len() != k || ds.iter().any(|d| d.len() != self.output_size()) {
                return Err(Error::Shape("per-step gradients do not match layer output".into()));
            }
        }

        let (fwd_grads, mut d_inputs) =
            backprop_sequence_full(&self.forward, &tape.forward, &split(0..hs, k - 1))?;
        let reverse = match (&self.reverse, &tape.reverse) {
            (Some(rev), Some(rev_tape)) => {
                let (rev_grads, rev_inputs) = backprop_sequence_full(rev, rev_tape, &split(hs..2 * hs, 0))?;
                for (d, r) in d_inputs.iter_mut().zip(rev_inputs) {
                    d.iter_mut().zip(r).for_each(|(a, b)| *a += b);
                }
                Some(rev_grads)
            }
            (None, None) => None,
            _ => return Err(Error::Consistency("layer tape directionality differs".into())),
        };
        Ok((
            RecurrentLayer {
                forward: fwd_grads,
                reverse,
            },
            d_inputs,
        ))
    }
}

/// Inverted-dropout multipliers: 0 with probability `rate`, else `1/(1−rate)`.
/// All ones when not training.
pub fn dropout_mask(len: usize, rate: f64, rng: &mut SeededRng, training: bool) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate must lie in [0, 1), got {rate}")));
    }
    if !training || rate == 0.0 {
        return Ok(vec![1.0; len]);
    }
    let keep = 1.0 / (1.0 - rate);
    Ok((0..len)
        .map(|_| if rng.next_f64() < rate { 0.0 } else { keep })
        .collect())
}

pub fn dropout(values: &[f64], rate: f64, rng: &mut SeededRng, training: bool) -> Result<Vec<f64>> {
    let mask = dropout_mask(values.len(), rate, rng, training)?;
    Ok(values.iter().zip(mask).map(|(v, m)| v * m).collect())
}
