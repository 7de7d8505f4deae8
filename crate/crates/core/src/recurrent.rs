//! Elman RNN and LSTM forecasters with direct multi-horizon heads.
//!
//! Both read the `C x K` window one time step (column) at a time and map the
//! final hidden state through a linear head of width `C·P`, reshaped row-major
//! to `C x P`. Nothing predicted is fed back as input.

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::diff::{affine, affine_backward, Differentiable, Forward, Grads, ParamId, ParamSet};
use crate::error::{Error, Result};
use crate::numerics::{ensure_finite, glorot_uniform, sigmoid, RealMatrix, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Rnn,
    Lstm,
}

impl CellKind {
    pub fn name(self) -> &'static str {
        match self {
            CellKind::Rnn => "rnn",
            CellKind::Lstm => "lstm",
        }
    }

    fn gates(self) -> usize {
        match self {
            CellKind::Rnn => 1,
            CellKind::Lstm => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecurrentConfig {
    pub n_nodes: usize,
    pub window: usize,
    pub horizon: usize,
    pub hidden_dim: usize,
    pub cell: CellKind,
}

impl RecurrentConfig {
    pub fn new(cell: CellKind, n_nodes: usize, window: usize, horizon: usize) -> Self {
        Self {
            n_nodes,
            window,
            horizon,
            hidden_dim: 64,
            cell,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("n_nodes", self.n_nodes),
            ("window", self.window),
            ("horizon", self.horizon),
            ("hidden_dim", self.hidden_dim),
        ] {
            if v == 0 {
                return Err(Error::config(format!("recurrent.{key}"), "must be at least 1"));
            }
        }
        Ok(())
    }
}

/// `h_t = tanh(x_t·W_x + h_prev·W_h + b)` on row vectors.
pub fn rnn_step(w_x: &RealMatrix, w_h: &RealMatrix, b: &RealMatrix, x: ArrayView2<'_, f64>, h_prev: &RealMatrix) -> RealMatrix {
    (x.dot(w_x) + h_prev.dot(w_h) + b).mapv(f64::tanh)
}

/// Activated LSTM gates, laid out `[i | f | g | o]`.
#[derive(Debug, Clone)]
struct LstmGates {
    i: RealMatrix,
    f: RealMatrix,
    g: RealMatrix,
    o: RealMatrix,
}

impl LstmGates {
    /// Splits pre-activations `z` (`1 x 4H`) and applies the gate functions.
    fn activate(z: &RealMatrix, h: usize) -> Self {
        let part = |k: usize| z.slice(s![.., k * h..(k + 1) * h]).to_owned();
        LstmGates {
            i: part(0).mapv(sigmoid),
            f: part(1).mapv(sigmoid),
            g: part(2).mapv(f64::tanh),
            o: part(3).mapv(sigmoid),
        }
    }
}

/// One LSTM step on row vectors; returns `(h_t, c_t)`.
pub fn lstm_step(
    w_x: &RealMatrix,
    w_h: &RealMatrix,
    b: &RealMatrix,
    x: ArrayView2<'_, f64>,
    h_prev: &RealMatrix,
    c_prev: &RealMatrix,
) -> (RealMatrix, RealMatrix) {
    let gates = LstmGates::activate(&(x.dot(w_x) + h_prev.dot(w_h) + b), w_h.nrows());
    let c = &gates.f * c_prev + &gates.i * &gates.g;
    let h = &gates.o * &c.mapv(f64::tanh);
    (h, c)
}

#[derive(Debug, Clone)]
pub struct RecurrentModel {
    config: RecurrentConfig,
    params: ParamSet,
    w_x: ParamId,
    w_h: ParamId,
    b: ParamId,
    head_w: ParamId,
    head_b: ParamId,
}

#[derive(Debug, Clone)]
enum StepTape {
    Rnn,
    Lstm { gates: LstmGates, cell: RealMatrix },
}

#[derive(Debug, Clone)]
pub struct RecurrentTape {
    /// `K x C`, one row per step
    steps_in: RealMatrix,
    /// hidden states `h_0 … h_K` (row vectors; `h_0 = 0`)
    hidden: Vec<RealMatrix>,
    steps: Vec<StepTape>,
}

impl RecurrentModel {
    pub fn new(config: RecurrentConfig, rng: &mut RngStream) -> Result<Self> {
        config.validate()?;
        let (c, h) = (config.n_nodes, config.hidden_dim);
        let width = config.cell.gates() * h;
        let out = c * config.horizon;
        let mut params = ParamSet::new();
        let w_x = params.add("cell.w_x", glorot_uniform(c, width, c, width, rng))?;
        let w_h = params.add("cell.w_h", glorot_uniform(h, width, h, width, rng))?;
        let b = params.add("cell.b", Array2::zeros((1, width)))?;
        let head_w = params.add("head.w", glorot_uniform(h, out, h, out, rng))?;
        let head_b = params.add("head.b", Array2::zeros((1, out)))?;
        Ok(Self {
            config,
            params,
            w_x,
            w_h,
            b,
            head_w,
            head_b,
        })
    }

    pub fn config(&self) -> &RecurrentConfig {
        &self.config
    }

    /// Overwrites the cell bias, e.g. to saturate gates.
    pub fn cell_bias_mut(&mut self) -> &mut RealMatrix {
        self.params.value_mut(self.b)
    }

    fn run(&self, x: &RealMatrix, retain: bool) -> Result<Forward<RecurrentTape>> {
        let want = (self.config.n_nodes, self.config.window);
        if x.dim() != want {
            return Err(Error::InvalidDimension(format!(
                "{} expects a {want:?} window, got {:?}",
                self.config.cell.name(),
                x.dim()
            )));
        }
        let w_h = self.params.get(self.w_h);
        let steps_in = x.t().as_standard_layout().into_owned();
        // input projections of every step at once
        let projected = steps_in.dot(self.params.get(self.w_x)) + self.params.get(self.b);
        let hd = self.config.hidden_dim;
        let mut h = Array2::zeros((1, hd));
        let mut c = Array2::zeros((1, hd));
        let mut hidden = Vec::with_capacity(if retain { self.config.window + 1 } else { 0 });
        let mut steps = Vec::new();
        for t in 0..self.config.window {
            let z = h.dot(w_h) + projected.slice(s![t..t + 1, ..]);
            if retain {
                hidden.push(h.clone());
            }
            match self.config.cell {
                CellKind::Rnn => {
                    h = z.mapv(f64::tanh);
                    if retain {
                        steps.push(StepTape::Rnn);
                    }
                }
                CellKind::Lstm => {
                    let gates = LstmGates::activate(&z, hd);
                    c = &gates.f * &c + &gates.i * &gates.g;
                    h = &gates.o * &c.mapv(f64::tanh);
                    if retain {
                        steps.push(StepTape::Lstm { gates, cell: c.clone() });
                    }
                }
            }
        }
        ensure_finite(&h, self.config.cell.name())?;
        let flat = affine(&h, self.params.get(self.head_w), self.params.get(self.head_b));
        let output = flat
            .into_shape_with_order((self.config.n_nodes, self.config.horizon))
            .map_err(|e| Error::InvalidDimension(e.to_string()))?;
        ensure_finite(&output, "recurrent head")?;
        if retain {
            hidden.push(h);
        }
        let tape = retain.then_some(RecurrentTape { steps_in, hidden, steps });
        Ok(Forward::new(output, tape))
    }
}

impl Differentiable for RecurrentModel {
    type Tape = RecurrentTape;

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn forward(&self, input: &RealMatrix, retain: bool) -> Result<Forward<RecurrentTape>> {
        self.run(input, retain)
    }

    fn backward(&self, fwd: &Forward<RecurrentTape>, output_grad: &RealMatrix, grads: &mut Grads) -> Result<RealMatrix> {
        self.backward_tape(fwd.tape()?, output_grad, grads)
    }
}

impl RecurrentModel {
    pub(crate) fn backward_tape(&self, tape: &RecurrentTape, output_grad: &RealMatrix, grads: &mut Grads) -> Result<RealMatrix> {
        let k = self.config.window;
        let d_flat = output_grad
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((1, self.config.n_nodes * self.config.horizon))
            .map_err(|e| Error::InvalidDimension(e.to_string()))?;
        let mut dh = affine_backward(&tape.hidden[k], self.params.get(self.head_w), &d_flat, grads, self.head_w, self.head_b);
        let w_h = self.params.get(self.w_h);
        let hd = self.config.hidden_dim;
        let mut dc: RealMatrix = Array2::zeros((1, hd));
        // pre-activation gradients of every step, one row each
        let mut dz_all = Array2::zeros((k, self.config.cell.gates() * hd));
        for t in (0..k).rev() {
            let mut dz = dz_all.row_mut(t);
            match &tape.steps[t] {
                StepTape::Rnn => {
                    let h = &tape.hidden[t + 1];
                    for j in 0..hd {
                        dz[j] = dh[[0, j]] * (1.0 - h[[0, j]] * h[[0, j]]);
                    }
                }
                StepTape::Lstm { gates, cell } => {
                    let c_prev = match t {
                        0 => None,
                        _ => match &tape.steps[t - 1] {
                            StepTape::Lstm { cell, .. } => Some(cell),
                            StepTape::Rnn => unreachable!("mixed cell tape"),
                        },
                    };
                    for j in 0..hd {
                        let (i, f, g, o) = (gates.i[[0, j]], gates.f[[0, j]], gates.g[[0, j]], gates.o[[0, j]]);
                        let tc = cell[[0, j]].tanh();
                        let cp = c_prev.map_or(0.0, |c| c[[0, j]]);
                        let dcj = dc[[0, j]] + dh[[0, j]] * o * (1.0 - tc * tc);
                        dz[j] = dcj * g * i * (1.0 - i);
                        dz[hd + j] = dcj * cp * f * (1.0 - f);
                        dz[2 * hd + j] = dcj * i * (1.0 - g * g);
                        dz[3 * hd + j] = dh[[0, j]] * tc * o * (1.0 - o);
                        dc[[0, j]] = dcj * f;
                    }
                }
            }
            dh = dz_all.slice(s![t..t + 1, ..]).dot(&w_h.t());
        }
        let mut h_prev = Array2::zeros((k, hd));
        for (t, h) in tape.hidden[..k].iter().enumerate() {
            h_prev.row_mut(t).assign(&h.row(0));
        }
        *grads.get_mut(self.w_x) += &tape.steps_in.t().dot(&dz_all);
        *grads.get_mut(self.w_h) += &h_prev.t().dot(&dz_all);
        *grads.get_mut(self.b) += &dz_all.sum_axis(ndarray::Axis(0)).insert_axis(ndarray::Axis(0));
        let d_steps = dz_all.dot(&self.params.get(self.w_x).t());
        Ok(d_steps.t().as_standard_layout().into_owned())
    }
}
