//! Shared training and prediction interface for every forecaster.
//!
//! All architectures consume a normalised `C x K` window and emit a `C x P`
//! forecast, so training, early stopping and evaluation never branch on the
//! model kind.

use std::str::FromStr;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::dataset::{stack_rows, window_count, NormStats, SplitBounds, WindowSet};
use crate::diff::{adam_step, AdamConfig, Differentiable, Forward, Grads, OptimizerState, ParamSet};
use crate::error::{Error, Result};
use crate::numerics::{RealMatrix, RngStream};
use crate::recurrent::{CellKind, RecurrentConfig, RecurrentModel, RecurrentTape};
use crate::stemgnn::{StemGnn, StemGnnConfig, StemGnnTape};
use crate::tensor_io::CompressedSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    StemGnn,
    Rnn,
    Lstm,
}

impl Arch {
    pub const ALL: [Arch; 3] = [Arch::StemGnn, Arch::Rnn, Arch::Lstm];

    pub fn name(self) -> &'static str {
        match self {
            Arch::StemGnn => "stemgnn",
            Arch::Rnn => "rnn",
            Arch::Lstm => "lstm",
        }
    }
}

impl std::fmt::Display for Arch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stemgnn" => Ok(Arch::StemGnn),
            "rnn" => Ok(Arch::Rnn),
            "lstm" => Ok(Arch::Lstm),
            other => Err(Error::config("arch", format!("unknown model '{other}' (expected stemgnn, rnn or lstm)"))),
        }
    }
}

/// Architecture knobs that do not depend on the data shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelOptions {
    pub attn_dim: usize,
    pub cheb_order: usize,
    pub conv_kernel: usize,
    pub n_blocks: usize,
    pub static_graph: bool,
    pub hidden_dim: usize,
}

impl Default for ModelOptions {
    fn default() -> Self {
        let s = StemGnnConfig::new(1, 1, 1);
        Self {
            attn_dim: s.attn_dim,
            cheb_order: s.cheb_order,
            conv_kernel: s.conv_kernel,
            n_blocks: s.n_blocks,
            static_graph: s.static_graph,
            hidden_dim: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelConfig {
    StemGnn(StemGnnConfig),
    Recurrent(RecurrentConfig),
}

impl ModelConfig {
    pub fn new(arch: Arch, n_nodes: usize, window: usize, horizon: usize, opts: &ModelOptions) -> Self {
        match arch {
            Arch::StemGnn => ModelConfig::StemGnn(StemGnnConfig {
                n_nodes,
                window,
                horizon,
                attn_dim: opts.attn_dim,
                cheb_order: opts.cheb_order,
                conv_kernel: opts.conv_kernel,
                n_blocks: opts.n_blocks,
                static_graph: opts.static_graph,
            }),
            Arch::Rnn | Arch::Lstm => {
                let cell = if arch == Arch::Rnn { CellKind::Rnn } else { CellKind::Lstm };
                let mut cfg = RecurrentConfig::new(cell, n_nodes, window, horizon);
                cfg.hidden_dim = opts.hidden_dim;
                ModelConfig::Recurrent(cfg)
            }
        }
    }

    pub fn arch(&self) -> Arch {
        match self {
            ModelConfig::StemGnn(_) => Arch::StemGnn,
            ModelConfig::Recurrent(c) => match c.cell {
                CellKind::Rnn => Arch::Rnn,
                CellKind::Lstm => Arch::Lstm,
            },
        }
    }

    /// `(C, K, P)`
    pub fn shape(&self) -> (usize, usize, usize) {
        match self {
            ModelConfig::StemGnn(c) => (c.n_nodes, c.window, c.horizon),
            ModelConfig::Recurrent(c) => (c.n_nodes, c.window, c.horizon),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Forecaster {
    StemGnn(StemGnn),
    Recurrent(RecurrentModel),
}

#[derive(Debug, Clone)]
pub enum ForecasterTape {
    StemGnn(StemGnnTape),
    Recurrent(RecurrentTape),
}

impl Forecaster {
    pub fn new(config: &ModelConfig, rng: &mut RngStream) -> Result<Self> {
        Ok(match config {
            ModelConfig::StemGnn(c) => Forecaster::StemGnn(StemGnn::new(c.clone(), rng)?),
            ModelConfig::Recurrent(c) => Forecaster::Recurrent(RecurrentModel::new(c.clone(), rng)?),
        })
    }

    pub fn config(&self) -> ModelConfig {
        match self {
            Forecaster::StemGnn(m) => ModelConfig::StemGnn(m.config().clone()),
            Forecaster::Recurrent(m) => ModelConfig::Recurrent(m.config().clone()),
        }
    }

    pub fn arch(&self) -> Arch {
        self.config().arch()
    }
}

impl Differentiable for Forecaster {
    type Tape = ForecasterTape;

    fn params(&self) -> &ParamSet {
        match self {
            Forecaster::StemGnn(m) => m.params(),
            Forecaster::Recurrent(m) => m.params(),
        }
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        match self {
            Forecaster::StemGnn(m) => m.params_mut(),
            Forecaster::Recurrent(m) => m.params_mut(),
        }
    }

    fn forward(&self, input: &RealMatrix, retain: bool) -> Result<Forward<ForecasterTape>> {
        match self {
            Forecaster::StemGnn(m) => Ok(m.forward(input, retain)?.map_tape(ForecasterTape::StemGnn)),
            Forecaster::Recurrent(m) => Ok(m.forward(input, retain)?.map_tape(ForecasterTape::Recurrent)),
        }
    }

    fn backward(&self, fwd: &Forward<ForecasterTape>, output_grad: &RealMatrix, grads: &mut Grads) -> Result<RealMatrix> {
        match (self, fwd.tape()?) {
            (Forecaster::StemGnn(m), ForecasterTape::StemGnn(t)) => m.backward_tape(t, output_grad, grads),
            (Forecaster::Recurrent(m), ForecasterTape::Recurrent(t)) => m.backward_tape(t, output_grad, grads),
            _ => Err(Error::ContractViolation("tape belongs to a different architecture".into())),
        }
    }
}

/// Anything that maps the last `K` compressed vectors to the next `P`.
pub trait Predictor {
    fn n_nodes(&self) -> usize;
    fn window(&self) -> usize;
    fn horizon(&self) -> usize;
    /// `history` is `K x C` in the original (de-normalised) domain; the result
    /// is `P x C` in the same domain.
    fn predict(&self, history: ArrayView2<'_, f64>) -> Result<RealMatrix>;
}

/// A forecaster together with the normalisation it was trained under.
#[derive(Debug, Clone)]
pub struct TrainedForecaster {
    pub model: Forecaster,
    pub norm: NormStats,
}

impl Predictor for TrainedForecaster {
    fn n_nodes(&self) -> usize {
        self.model.config().shape().0
    }

    fn window(&self) -> usize {
        self.model.config().shape().1
    }

    fn horizon(&self) -> usize {
        self.model.config().shape().2
    }

    fn predict(&self, history: ArrayView2<'_, f64>) -> Result<RealMatrix> {
        let (c, k, _) = self.model.config().shape();
        if history.dim() != (k, c) {
            return Err(Error::InvalidDimension(format!("history is {:?}, expected ({k}, {c})", history.dim())));
        }
        let mut x = history.to_owned();
        self.norm.normalize_rows(&mut x);
        let out = self.model.forward(&x.t().as_standard_layout().into_owned(), false)?.output;
        let mut y = out.t().as_standard_layout().into_owned();
        self.norm.denormalize_rows(&mut y);
        Ok(y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainHyper {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub clip_norm: f64,
    pub patience: usize,
    /// Worker threads for per-window gradients; results do not depend on it.
    pub threads: usize,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            max_epochs: 60,
            batch_size: 32,
            adam: AdamConfig::default(),
            clip_norm: 5.0,
            patience: 8,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_rmse: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TrainedForecaster,
    pub trace: Vec<EpochRecord>,
    /// validation RMSE of the freshly initialised model
    pub init_val_rmse: f64,
    pub best_val_rmse: f64,
    /// 0 when no epoch improved on the initial model
    pub best_epoch: usize,
}

/// Normalised train / validation / test windows pooled over several series.
#[derive(Debug, Clone)]
pub struct ForecastData {
    pub norm: NormStats,
    pub train: WindowSet,
    pub val: WindowSet,
    pub test: WindowSet,
}

impl ForecastData {
    pub fn build(series: &[CompressedSeries], window: usize, horizon: usize) -> Result<Self> {
        let first = series
            .first()
            .ok_or_else(|| Error::InvalidDimension("no compressed series given".into()))?;
        let c = first.n_nodes();
        for s in series {
            if s.n_nodes() != c {
                return Err(Error::InvalidDimension(format!("series have {} and {c} nodes", s.n_nodes())));
            }
            if s.len() < window + horizon {
                return Err(Error::InvalidDimension(format!(
                    "series of length {} is shorter than window + horizon = {}",
                    s.len(),
                    window + horizon
                )));
            }
        }
        let views: Vec<_> = series.iter().map(|s| s.values.view()).collect();
        let norm = NormStats::fit(stack_rows(&views, |len| SplitBounds::new(len).train()).view())?;
        let (mut train, mut val, mut test) = (WindowSet::default(), WindowSet::default(), WindowSet::default());
        for s in series {
            let mut z = s.values.clone();
            norm.normalize_rows(&mut z);
            let b = SplitBounds::new(s.len());
            train.extend_from(z.view(), b.train(), window, horizon);
            val.extend_from(z.view(), b.val(), window, horizon);
            test.extend_from(z.view(), b.test(), window, horizon);
        }
        if train.is_empty() || val.is_empty() {
            let len = first.len();
            let b = SplitBounds::new(len);
            return Err(Error::InvalidDimension(format!(
                "need at least one train and one validation window; got {} and {}",
                window_count(b.train().len(), window, horizon),
                window_count(b.val().len(), window, horizon)
            )));
        }
        Ok(Self { norm, train, val, test })
    }

    /// RMSE in the de-normalised domain over a window set.
    pub fn rmse<M: Differentiable>(&self, model: &M, set: &WindowSet) -> Result<f64> {
        let mut total = 0.0;
        let mut count = 0usize;
        for (x, y) in set.inputs.iter().zip(&set.targets) {
            let out = model.forward(x, false)?.output;
            for (((node, _), o), t) in out.indexed_iter().zip(y.iter()) {
                let d = (o - t) * self.norm.std[node];
                total += d * d;
            }
            count += out.len();
        }
        Ok((total / count.max(1) as f64).sqrt())
    }
}

/// Loss and gradient of one window; `scale` is `1 / batch`.
fn window_grads<M: Differentiable>(model: &M, x: &RealMatrix, y: &RealMatrix, scale: f64) -> Result<(f64, Grads)> {
    let fwd = model.forward(x, true)?;
    let diff = &fwd.output - y;
    let n = diff.len() as f64;
    let loss = diff.iter().map(|v| v * v).sum::<f64>() / n;
    let dout = diff.mapv(|v| 2.0 * v * scale / n);
    let mut grads = model.params().zero_grads();
    model.backward(&fwd, &dout, &mut grads)?;
    Ok((loss, grads))
}

/// Per-window results of a minibatch, in window order.
fn batch_grads<M: Differentiable + Sync>(
    model: &M,
    data: &WindowSet,
    batch: &[usize],
    threads: usize,
) -> Result<Vec<(f64, Grads)>> {
    let scale = 1.0 / batch.len() as f64;
    let one = |&i: &usize| window_grads(model, &data.inputs[i], &data.targets[i], scale);
    if threads <= 1 || batch.len() < 2 {
        return batch.iter().map(one).collect();
    }
    let per = batch.len().div_ceil(threads);
    std::thread::scope(|scope| {
        let handles: Vec<_> = batch
            .chunks(per)
            .map(|part| scope.spawn(move || part.iter().map(one).collect::<Result<Vec<_>>>()))
            .collect();
        let mut out = Vec::with_capacity(batch.len());
        for h in handles {
            out.extend(h.join().map_err(|_| Error::State("training worker panicked".into()))??);
        }
        Ok(out)
    })
}

/// Trains a fresh model of shape `config` on pooled windows of `series`.
///
/// Minibatch Adam on the mean squared error in the normalised domain, global
/// gradient-norm clipping, and early stopping on de-normalised validation
/// RMSE. The returned model holds the best validation parameters seen,
/// including the initial ones.
pub fn train_forecaster(
    config: &ModelConfig,
    series: &[CompressedSeries],
    hyper: &TrainHyper,
    rng: &mut RngStream,
) -> Result<TrainOutcome> {
    let (c, k, p) = config.shape();
    if series.first().is_some_and(|s| s.n_nodes() != c) {
        return Err(Error::InvalidDimension(format!("model expects {c} nodes, series has {}", series[0].n_nodes())));
    }
    let data = ForecastData::build(series, k, p)?;
    let mut model = Forecaster::new(config, rng)?;
    let mut opt = OptimizerState::new(model.params());
    let init_val_rmse = data.rmse(&model, &data.val)?;
    let mut best = (init_val_rmse, model.params().clone(), 0usize);
    let mut stale = 0usize;
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut trace = Vec::with_capacity(hyper.max_epochs);
    let batch_size = hyper.batch_size.max(1);

    for epoch in 1..=hyper.max_epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for batch in order.chunks(batch_size) {
            let results = batch_grads(&model, &data.train, batch, hyper.threads)?;
            let mut total = model.params().zero_grads();
            for (loss, g) in &results {
                loss_sum += loss;
                total.add_assign(g);
            }
            let params = model.params_mut();
            params.accumulate(&total, 1.0);
            if hyper.clip_norm > 0.0 {
                params.clip_grad_norm(hyper.clip_norm);
            }
            adam_step(params, &mut opt, &hyper.adam);
        }
        let train_loss = loss_sum / data.train.len() as f64;
        if !train_loss.is_finite() {
            return Err(Error::numeric(
                format!("{} training", config.arch()),
                format!("non-finite loss at epoch {epoch}"),
            ));
        }
        let val_rmse = data.rmse(&model, &data.val)?;
        log::debug!("{} epoch {epoch}: train {train_loss:.6e}, val rmse {val_rmse:.6e}", config.arch());
        trace.push(EpochRecord {
            epoch,
            train_loss,
            val_rmse,
        });
        if val_rmse < best.0 {
            best = (val_rmse, model.params().clone(), epoch);
            stale = 0;
        } else {
            stale += 1;
            if stale >= hyper.patience {
                break;
            }
        }
    }
    model.params_mut().copy_values_from(&best.1)?;
    model.params_mut().clear_grads();
    Ok(TrainOutcome {
        model: TrainedForecaster { model, norm: data.norm },
        trace,
        init_val_rmse,
        best_val_rmse: best.0,
        best_epoch: best.2,
    })
}

/// Predicts the test windows of `series` and returns `(predictions, truths)`,
/// each a list of `C x P` matrices in the de-normalised domain.
pub fn test_predictions(model: &TrainedForecaster, series: &[CompressedSeries]) -> Result<(Vec<RealMatrix>, Vec<RealMatrix>)> {
    let (c, k, p) = model.model.config().shape();
    let mut preds = Vec::new();
    let mut truths = Vec::new();
    for s in series {
        if s.n_nodes() != c {
            return Err(Error::InvalidDimension(format!("series has {} nodes, model expects {c}", s.n_nodes())));
        }
        let range = SplitBounds::new(s.len()).test();
        for i in 0..window_count(range.len(), k, p) {
            let t0 = range.start + i;
            let hist = s.values.slice(ndarray::s![t0..t0 + k, ..]);
            preds.push(model.predict(hist)?.t().as_standard_layout().into_owned());
            truths.push(s.values.slice(ndarray::s![t0 + k..t0 + k + p, ..]).t().as_standard_layout().into_owned());
        }
    }
    Ok((preds, truths))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_io::CompressedMeta;
    use ndarray::Array2;

    fn series_from(values: RealMatrix) -> CompressedSeries {
        CompressedSeries {
            values,
            meta: CompressedMeta {
                config_hash: "test".into(),
                user: 0,
                gamma: 0.25,
            },
        }
    }

    fn sinusoids(t: usize, c: usize, seed: u64) -> RealMatrix {
        let mut rng = RngStream::new(seed);
        let phases: Vec<f64> = (0..c).map(|_| rng.uniform_range(0.0, 6.28)).collect();
        Array2::from_shape_fn((t, c), |(i, j)| (0.07 * (j + 1) as f64 * i as f64 + phases[j]).sin() + 0.5 * j as f64)
    }

    fn small_opts() -> ModelOptions {
        ModelOptions {
            hidden_dim: 12,
            ..ModelOptions::default()
        }
    }

    #[test]
    fn arch_names_round_trip() {
        for a in Arch::ALL {
            assert_eq!(a.name().parse::<Arch>().unwrap(), a);
        }
        assert!("cnn".parse::<Arch>().is_err());
    }

    #[test]
    fn window_counts_per_split() {
        let data = ForecastData::build(&[series_from(sinusoids(100, 3, 1))], 12, 3).unwrap();
        let total = window_count(100, 12, 3);
        assert_eq!(total, 86);
        // windows never straddle split boundaries
        assert_eq!(data.train.len(), window_count(70, 12, 3));
        assert_eq!(data.val.len(), window_count(15, 12, 3));
        assert_eq!(data.test.len(), window_count(15, 12, 3));
    }

    #[test]
    fn too_short_series_rejected() {
        assert!(ForecastData::build(&[series_from(sinusoids(14, 3, 1))], 12, 3).is_err());
    }

    #[test]
    fn constant_series_predicted_by_every_model() {
        let constants = [1.5, -0.25, 3.0, 0.0];
        let values = Array2::from_shape_fn((120, 4), |(_, j)| constants[j]);
        let s = series_from(values);
        let hyper = TrainHyper {
            max_epochs: 3,
            ..TrainHyper::default()
        };
        for arch in Arch::ALL {
            let cfg = ModelConfig::new(arch, 4, 12, 3, &small_opts());
            let out = train_forecaster(&cfg, std::slice::from_ref(&s), &hyper, &mut RngStream::new(3)).unwrap();
            let hist = s.values.slice(ndarray::s![0..12, ..]);
            let pred = out.model.predict(hist).unwrap();
            for row in pred.rows() {
                for (v, c) in row.iter().zip(constants) {
                    assert!((v - c).abs() < 1e-3, "{arch}: {v} vs {c}");
                }
            }
        }
    }

    #[test]
    fn training_is_deterministic_and_thread_invariant() {
        let s = series_from(sinusoids(150, 3, 2));
        let cfg = ModelConfig::new(Arch::StemGnn, 3, 8, 2, &small_opts());
        let run = |threads| {
            let hyper = TrainHyper {
                max_epochs: 2,
                threads,
                ..TrainHyper::default()
            };
            train_forecaster(&cfg, std::slice::from_ref(&s), &hyper, &mut RngStream::new(5)).unwrap()
        };
        let a = run(1);
        let b = run(1);
        let c = run(3);
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.trace, c.trace);
        for (x, y) in a.model.model.params().iter().zip(c.model.model.params().iter()) {
            assert_eq!(x.value, y.value);
        }
    }

    #[test]
    fn training_reduces_validation_error() {
        let s = series_from(sinusoids(400, 3, 4));
        let hyper = TrainHyper {
            max_epochs: 15,
            batch_size: 8,
            ..TrainHyper::default()
        };
        for arch in Arch::ALL {
            let cfg = ModelConfig::new(arch, 3, 12, 3, &small_opts());
            let out = train_forecaster(&cfg, std::slice::from_ref(&s), &hyper, &mut RngStream::new(6)).unwrap();
            assert!(out.best_val_rmse < 0.5 * out.init_val_rmse, "{arch}: {} vs {}", out.best_val_rmse, out.init_val_rmse);
            assert!(out.trace.iter().all(|r| r.train_loss.is_finite()));
        }
    }

    #[test]
    fn predictions_do_not_depend_on_future_truth() {
        let mut values = sinusoids(200, 3, 7);
        let s = series_from(values.clone());
        let hyper = TrainHyper {
            max_epochs: 1,
            ..TrainHyper::default()
        };
        let cfg = ModelConfig::new(Arch::Lstm, 3, 12, 3, &small_opts());
        let out = train_forecaster(&cfg, std::slice::from_ref(&s), &hyper, &mut RngStream::new(8)).unwrap();
        let (before, _) = test_predictions(&out.model, std::slice::from_ref(&s)).unwrap();
        // perturb the value one step after the first test window's history
        let t = SplitBounds::new(200).test().start + 12 + 1;
        values[[t, 1]] += 10.0;
        let (after, truths) = test_predictions(&out.model, &[series_from(values)]).unwrap();
        assert_eq!(before[0], after[0]);
        assert_eq!(truths[0][[1, 1]], s.values[[t, 1]] + 10.0);
    }
}
