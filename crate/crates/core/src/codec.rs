//! Learned linear autoencoder standing in for the CSI feedback network.
//!
//! `f_e(H) = W_enc·z + b_enc` with `z` the z-scored flattened channel and
//! `f_d(e) = unflatten(denorm(W_dec·e + b_dec))`.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSeries;
use crate::dataset::{stack_rows, NormStats, SplitBounds};
use crate::diff::{adam_step, AdamConfig, Differentiable, Forward, Grads, OptimizerState, ParamId, ParamSet};
use crate::error::{Error, Result};
use crate::numerics::{ensure_finite, glorot_uniform, Complex64, ComplexMatrix, RealMatrix, RngStream};
use crate::tensor_io::{CompressedMeta, CompressedSeries};

/// `[vec(Re H); vec(Im H)]`, both halves row-major.
pub fn flatten(h: &ComplexMatrix) -> Array1<f64> {
    let n = h.len();
    let mut out = Array1::zeros(2 * n);
    for (i, z) in h.iter().enumerate() {
        out[i] = z.re;
        out[n + i] = z.im;
    }
    out
}

pub fn unflatten(v: ArrayView1<'_, f64>, n_subcarriers: usize, n_tx: usize) -> Result<ComplexMatrix> {
    let n = n_subcarriers * n_tx;
    if v.len() != 2 * n {
        return Err(Error::InvalidDimension(format!(
            "flattened channel has length {}, expected {}",
            v.len(),
            2 * n
        )));
    }
    Ok(Array2::from_shape_fn((n_subcarriers, n_tx), |(r, c)| {
        let i = r * n_tx + c;
        Complex64::new(v[i], v[n + i])
    }))
}

/// Flattened frames stacked as rows.
pub fn flatten_frames(frames: &[ComplexMatrix]) -> RealMatrix {
    let d = frames.first().map(|h| 2 * h.len()).unwrap_or(0);
    let mut out = Array2::zeros((frames.len(), d));
    for (mut row, h) in out.rows_mut().into_iter().zip(frames) {
        row.assign(&flatten(h));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CodecHyper {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for CodecHyper {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            lr: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodecShape {
    pub n_subcarriers: usize,
    pub n_tx: usize,
    pub n_latent: usize,
}

impl CodecShape {
    pub fn flat_len(&self) -> usize {
        2 * self.n_subcarriers * self.n_tx
    }

    /// Compression ratio `C / (2·N_c·N_t)`.
    pub fn gamma(&self) -> f64 {
        self.n_latent as f64 / self.flat_len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct CodecModel {
    shape: CodecShape,
    params: ParamSet,
    enc_w: ParamId,
    enc_b: ParamId,
    dec_w: ParamId,
    dec_b: ParamId,
    norm: Option<NormStats>,
}

/// Retained activations: normalised input and code.
#[derive(Debug, Clone)]
pub struct CodecTape {
    input: RealMatrix,
    code: RealMatrix,
}

impl CodecModel {
    /// Fresh, untrained codec with Glorot-initialised weights.
    pub fn new(n_subcarriers: usize, n_tx: usize, n_latent: usize, rng: &mut RngStream) -> Result<Self> {
        let shape = CodecShape {
            n_subcarriers,
            n_tx,
            n_latent,
        };
        let d = shape.flat_len();
        if n_latent == 0 || n_latent > d {
            return Err(Error::InvalidDimension(format!("latent size {n_latent} must be in 1..={d}")));
        }
        let mut params = ParamSet::new();
        let enc_w = params.add("enc.w", glorot_uniform(n_latent, d, d, n_latent, rng))?;
        let enc_b = params.add("enc.b", Array2::zeros((1, n_latent)))?;
        let dec_w = params.add("dec.w", glorot_uniform(d, n_latent, n_latent, d, rng))?;
        let dec_b = params.add("dec.b", Array2::zeros((1, d)))?;
        Ok(Self {
            shape,
            params,
            enc_w,
            enc_b,
            dec_w,
            dec_b,
            norm: None,
        })
    }

    pub fn shape(&self) -> &CodecShape {
        &self.shape
    }

    pub fn n_latent(&self) -> usize {
        self.shape.n_latent
    }

    pub fn gamma(&self) -> f64 {
        self.shape.gamma()
    }

    pub fn norm_stats(&self) -> Option<&NormStats> {
        self.norm.as_ref()
    }

    pub fn is_trained(&self) -> bool {
        self.norm.is_some()
    }

    pub(crate) fn set_norm_stats(&mut self, norm: NormStats) -> Result<()> {
        if norm.dim() != self.shape.flat_len() {
            return Err(Error::InvalidDimension("normalisation stats do not match codec".into()));
        }
        self.norm = Some(norm);
        Ok(())
    }

    fn stats(&self) -> Result<&NormStats> {
        self.norm
            .as_ref()
            .ok_or_else(|| Error::State("codec has not been trained".into()))
    }

    fn check_frame(&self, h: &ComplexMatrix) -> Result<()> {
        if h.dim() != (self.shape.n_subcarriers, self.shape.n_tx) {
            return Err(Error::InvalidDimension(format!(
                "channel is {:?}, codec expects {}x{}",
                h.dim(),
                self.shape.n_subcarriers,
                self.shape.n_tx
            )));
        }
        Ok(())
    }

    /// Codes for normalised rows `z` (`B x D`).
    fn encode_normalized(&self, z: &RealMatrix) -> RealMatrix {
        let mut s = z.dot(&self.params.get(self.enc_w).t());
        s += self.params.get(self.enc_b);
        s
    }

    fn decode_normalized(&self, e: &RealMatrix) -> RealMatrix {
        let mut x = e.dot(&self.params.get(self.dec_w).t());
        x += self.params.get(self.dec_b);
        x
    }

    pub fn encode(&self, h: &ComplexMatrix) -> Result<Array1<f64>> {
        Ok(self.encode_frames(std::slice::from_ref(h))?.row(0).to_owned())
    }

    /// Encodes frames into a `T x C` matrix.
    pub fn encode_frames(&self, frames: &[ComplexMatrix]) -> Result<RealMatrix> {
        let stats = self.stats()?;
        for h in frames {
            self.check_frame(h)?;
        }
        let mut z = flatten_frames(frames);
        stats.normalize_rows(&mut z);
        Ok(self.encode_normalized(&z))
    }

    pub fn decode(&self, e: ArrayView1<'_, f64>) -> Result<ComplexMatrix> {
        Ok(self.decode_rows(&e.insert_axis(Axis(0)).to_owned())?.remove(0))
    }

    /// Decodes each row of `codes` (`B x C`) into a channel matrix.
    pub fn decode_rows(&self, codes: &RealMatrix) -> Result<Vec<ComplexMatrix>> {
        let stats = self.stats()?;
        if codes.ncols() != self.shape.n_latent {
            return Err(Error::InvalidDimension(format!(
                "code has length {}, codec expects {}",
                codes.ncols(),
                self.shape.n_latent
            )));
        }
        let mut x = self.decode_normalized(codes);
        stats.denormalize_rows(&mut x);
        x.rows()
            .into_iter()
            .map(|r| unflatten(r, self.shape.n_subcarriers, self.shape.n_tx))
            .collect()
    }

    pub fn encode_series(&self, series: &ChannelSeries, config_hash: &str, user: usize) -> Result<CompressedSeries> {
        Ok(CompressedSeries {
            values: self.encode_frames(&series.frames)?,
            meta: CompressedMeta {
                config_hash: config_hash.to_string(),
                user,
                gamma: self.gamma(),
            },
        })
    }

    /// Mean squared reconstruction error in the normalised domain.
    pub fn reconstruction_mse(&self, frames: &[ComplexMatrix]) -> Result<f64> {
        let stats = self.stats()?;
        let mut z = flatten_frames(frames);
        stats.normalize_rows(&mut z);
        let rec = self.decode_normalized(&self.encode_normalized(&z));
        Ok((&rec - &z).mapv(|v| v * v).mean().unwrap_or(0.0))
    }
}

impl Differentiable for CodecModel {
    type Tape = CodecTape;

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Input: normalised flattened frames (`B x D`); output: reconstruction.
    fn forward(&self, input: &RealMatrix, retain: bool) -> Result<Forward<CodecTape>> {
        if input.ncols() != self.shape.flat_len() {
            return Err(Error::InvalidDimension(format!(
                "codec input has {} columns, expected {}",
                input.ncols(),
                self.shape.flat_len()
            )));
        }
        let code = self.encode_normalized(input);
        let out = self.decode_normalized(&code);
        ensure_finite(&out, "codec")?;
        let tape = retain.then(|| CodecTape {
            input: input.clone(),
            code,
        });
        Ok(Forward::new(out, tape))
    }

    fn backward(&self, fwd: &Forward<CodecTape>, output_grad: &RealMatrix, grads: &mut Grads) -> Result<RealMatrix> {
        let tape = fwd.tape()?;
        // out = code·Wdᵀ + bd ; code = x·Weᵀ + be
        *grads.get_mut(self.dec_w) += &output_grad.t().dot(&tape.code);
        *grads.get_mut(self.dec_b) += &output_grad.sum_axis(Axis(0)).insert_axis(Axis(0));
        let dcode = output_grad.dot(self.params.get(self.dec_w));
        *grads.get_mut(self.enc_w) += &dcode.t().dot(&tape.input);
        *grads.get_mut(self.enc_b) += &dcode.sum_axis(Axis(0)).insert_axis(Axis(0));
        Ok(dcode.dot(self.params.get(self.enc_w)))
    }
}

#[derive(Debug, Clone)]
pub struct CodecTraining {
    pub model: CodecModel,
    /// Mean normalised training MSE per epoch.
    pub loss_trace: Vec<f64>,
}

/// Trains a codec with `n_latent` code dimensions on the training split
/// (first 70% of each series), pooling all series.
pub fn train_codec(series: &[ChannelSeries], n_latent: usize, hyper: &CodecHyper, rng: &mut RngStream) -> Result<CodecTraining> {
    let first = series
        .first()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| Error::InvalidDimension("codec training needs a non-empty series".into()))?;
    let (nc, nt) = (first.config.n_subcarriers, first.config.n_tx());
    let flat: Vec<RealMatrix> = series.iter().map(|s| flatten_frames(&s.frames)).collect();
    let views: Vec<_> = flat.iter().map(|m| m.view()).collect();
    let mut train = stack_rows(&views, |len| SplitBounds::new(len).train());
    if train.nrows() == 0 {
        return Err(Error::InvalidDimension("training split is empty".into()));
    }
    let stats = NormStats::fit(train.view())?;
    stats.normalize_rows(&mut train);

    let mut model = CodecModel::new(nc, nt, n_latent, rng)?;
    let adam = AdamConfig {
        lr: hyper.lr,
        ..AdamConfig::default()
    };
    let mut opt = OptimizerState::new(model.params());
    let batch = hyper.batch_size.max(1);
    let mut order: Vec<usize> = (0..train.nrows()).collect();
    let mut loss_trace = Vec::with_capacity(hyper.epochs);
    for epoch in 0..hyper.epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for chunk in order.chunks(batch) {
            let x = train.select(Axis(0), chunk);
            let fwd = model.forward(&x, true)?;
            let diff = &fwd.output - &x;
            total += diff.iter().map(|v| v * v).sum::<f64>();
            let dout = diff.mapv(|v| 2.0 * v / diff.len() as f64);
            model.backward_into_params(&fwd, &dout)?;
            adam_step(&mut model.params, &mut opt, &adam);
        }
        let loss = total / train.len() as f64;
        if !loss.is_finite() {
            return Err(Error::numeric("codec training", format!("non-finite loss at epoch {epoch}")));
        }
        loss_trace.push(loss);
    }
    model.norm = Some(stats);
    Ok(CodecTraining { model, loss_trace })
}

/// Frames in the given split of every series, concatenated.
pub fn split_frames(series: &[ChannelSeries], pick: impl Fn(&SplitBounds) -> std::ops::Range<usize>) -> Vec<ComplexMatrix> {
    series
        .iter()
        .flat_map(|s| {
            let r = pick(&SplitBounds::new(s.len()));
            s.frames[r].to_vec()
        })
        .collect()
}
