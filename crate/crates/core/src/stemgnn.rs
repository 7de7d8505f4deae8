//! Spectral-temporal graph forecaster.
//!
//! ```text
//! X (C×K) ─▶ latent correlation layer ─▶ W ─▶ L̂
//!   │
//!   ├─▶ block 1: Spe-Seq cell ─▶ H₁ ─▶ forecast F₁, backcast B₁
//!   ├─▶ block 2 on X − B₁      ─▶ H₂ ─▶ forecast F₂
//!   └─▶ output layer (F₁ + F₂)·W_o + b_o ─▶ E (C×P)
//! ```
//!
//! The Spe-Seq cell filters the node signals with Chebyshev polynomials of
//! the rescaled Laplacian, moves every filtered series into the frequency
//! domain with a unitary DFT, applies a gated 1-D convolution to the real and
//! imaginary spectra, returns to time, and mixes each order with a learned
//! `K x K` map.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::diff::{affine, affine_backward, Differentiable, Forward, Grads, ParamId, ParamSet};
use crate::error::{Error, Result};
use crate::graph::{attention_adjacency, attention_adjacency_backward, normalized_laplacian, AttentionTape, LatentGraph};
use crate::numerics::{ensure_finite, glorot_uniform, sigmoid, DftBasis, RealMatrix, RngStream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StemGnnConfig {
    pub n_nodes: usize,
    pub window: usize,
    pub horizon: usize,
    pub attn_dim: usize,
    pub cheb_order: usize,
    pub conv_kernel: usize,
    pub n_blocks: usize,
    /// Learn one node embedding per dataset instead of recomputing the
    /// graph from every input window.
    #[serde(default)]
    pub static_graph: bool,
}

impl StemGnnConfig {
    pub fn new(n_nodes: usize, window: usize, horizon: usize) -> Self {
        Self {
            n_nodes,
            window,
            horizon,
            attn_dim: 16,
            cheb_order: 3,
            conv_kernel: 3,
            n_blocks: 2,
            static_graph: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_nodes", self.n_nodes),
            ("window", self.window),
            ("horizon", self.horizon),
            ("attn_dim", self.attn_dim),
            ("n_blocks", self.n_blocks),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(Error::config(format!("stemgnn.{key}"), "must be at least 1"));
            }
        }
        if self.conv_kernel.is_multiple_of(2) {
            return Err(Error::config("stemgnn.conv_kernel", "must be odd"));
        }
        Ok(())
    }
}

/// Real/imaginary channel, gate branch a / b.
const CONV_ROWS: usize = 4;

#[derive(Debug, Clone)]
struct OrderIds {
    /// rows: re·a, re·b, im·a, im·b
    conv_w: ParamId,
    conv_b: ParamId,
    theta: ParamId,
}

#[derive(Debug, Clone)]
struct BlockIds {
    orders: Vec<OrderIds>,
    forecast_w: ParamId,
    forecast_b: ParamId,
    backcast: Option<(ParamId, ParamId)>,
}

#[derive(Debug, Clone)]
pub struct StemGnn {
    config: StemGnnConfig,
    params: ParamSet,
    /// `K x d` temporal summary, or `C x d` node embedding for a static graph.
    node_repr: ParamId,
    w_q: ParamId,
    w_k: ParamId,
    blocks: Vec<BlockIds>,
    out_w: ParamId,
    out_b: ParamId,
    dft: DftBasis,
}

#[derive(Debug, Clone)]
struct OrderTape {
    spec_re: RealMatrix,
    spec_im: RealMatrix,
    /// a-branch outputs and b-branch sigmoids for the real and imaginary channel
    gate_a: [RealMatrix; 2],
    gate_s: [RealMatrix; 2],
    mixed_in: RealMatrix,
}

#[derive(Debug, Clone)]
struct CellTape {
    filtered: Vec<RealMatrix>,
    orders: Vec<OrderTape>,
}

#[derive(Debug, Clone)]
struct BlockTape {
    cell: CellTape,
    hidden: RealMatrix,
}

#[derive(Debug, Clone)]
pub struct StemGnnTape {
    input: RealMatrix,
    repr: RealMatrix,
    attention: AttentionTape,
    graph: LatentGraph,
    blocks: Vec<BlockTape>,
    forecast_sum: RealMatrix,
}

/// "Same"-padded cross-correlation of every row with `kernel`, plus `bias`.
fn conv_rows(input: &RealMatrix, kernel: ArrayView1<'_, f64>, bias: f64) -> RealMatrix {
    let (rows, cols) = input.dim();
    let half = kernel.len() / 2;
    Array2::from_shape_fn((rows, cols), |(r, j)| {
        let mut acc = bias;
        for (t, w) in kernel.iter().enumerate() {
            let src = j + t;
            if src >= half && src - half < cols {
                acc += w * input[[r, src - half]];
            }
        }
        acc
    })
}

/// Reverse of [`conv_rows`]: returns `(d_input, d_kernel, d_bias)`.
fn conv_rows_backward(input: &RealMatrix, kernel: ArrayView1<'_, f64>, d_out: &RealMatrix) -> (RealMatrix, Array1<f64>, f64) {
    let (rows, cols) = input.dim();
    let half = kernel.len() / 2;
    let mut d_in = Array2::zeros((rows, cols));
    let mut d_k = Array1::zeros(kernel.len());
    for r in 0..rows {
        for j in 0..cols {
            let g = d_out[[r, j]];
            if g == 0.0 {
                continue;
            }
            for (t, w) in kernel.iter().enumerate() {
                let src = j + t;
                if src >= half && src - half < cols {
                    d_in[[r, src - half]] += w * g;
                    d_k[t] += g * input[[r, src - half]];
                }
            }
        }
    }
    (d_in, d_k, d_out.sum())
}

impl StemGnn {
    pub fn new(config: StemGnnConfig, rng: &mut RngStream) -> Result<Self> {
        config.validate()?;
        let (c, k, p, d) = (config.n_nodes, config.window, config.horizon, config.attn_dim);
        let ks = config.conv_kernel;
        let mut params = ParamSet::new();
        let node_repr = if config.static_graph {
            params.add("attn.node_embedding", glorot_uniform(c, d, c, d, rng))?
        } else {
            params.add("attn.w_time", glorot_uniform(k, d, k, d, rng))?
        };
        let w_q = params.add("attn.w_q", glorot_uniform(d, d, d, d, rng))?;
        let w_k = params.add("attn.w_k", glorot_uniform(d, d, d, d, rng))?;
        let mut blocks = Vec::with_capacity(config.n_blocks);
        for b in 0..config.n_blocks {
            let orders = (0..=config.cheb_order)
                .map(|o| {
                    Ok(OrderIds {
                        conv_w: params.add(format!("block{b}.order{o}.conv_w"), glorot_uniform(CONV_ROWS, ks, ks, ks, rng))?,
                        conv_b: params.add(format!("block{b}.order{o}.conv_b"), Array2::zeros((1, CONV_ROWS)))?,
                        theta: params.add(format!("block{b}.order{o}.theta"), glorot_uniform(k, k, k, k, rng))?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let forecast_w = params.add(format!("block{b}.forecast.w"), glorot_uniform(k, p, k, p, rng))?;
            let forecast_b = params.add(format!("block{b}.forecast.b"), Array2::zeros((1, p)))?;
            let backcast = if b + 1 < config.n_blocks {
                Some((
                    params.add(format!("block{b}.backcast.w"), glorot_uniform(k, k, k, k, rng))?,
                    params.add(format!("block{b}.backcast.b"), Array2::zeros((1, k)))?,
                ))
            } else {
                None
            };
            blocks.push(BlockIds {
                orders,
                forecast_w,
                forecast_b,
                backcast,
            });
        }
        let out_w = params.add("output.w", glorot_uniform(p, p, p, p, rng))?;
        let out_b = params.add("output.b", Array2::zeros((1, p)))?;
        Ok(Self {
            dft: DftBasis::new(k)?,
            config,
            params,
            node_repr,
            w_q,
            w_k,
            blocks,
            out_w,
            out_b,
        })
    }

    pub fn config(&self) -> &StemGnnConfig {
        &self.config
    }

    fn check_input(&self, x: &RealMatrix) -> Result<()> {
        let want = (self.config.n_nodes, self.config.window);
        if x.dim() != want {
            return Err(Error::InvalidDimension(format!("stemgnn expects a {want:?} window, got {:?}", x.dim())));
        }
        Ok(())
    }

    fn node_representation(&self, x: &RealMatrix) -> RealMatrix {
        if self.config.static_graph {
            self.params.get(self.node_repr).clone()
        } else {
            x.dot(self.params.get(self.node_repr))
        }
    }

    /// Symmetric attention adjacency for a normalised input window (`C x K`).
    pub fn latent_adjacency(&self, x: &RealMatrix) -> Result<RealMatrix> {
        self.check_input(x)?;
        let r = self.node_representation(x);
        Ok(attention_adjacency(&r, self.params.get(self.w_q), self.params.get(self.w_k)).0)
    }

    /// Latent graph for a normalised input window.
    pub fn latent_graph(&self, x: &RealMatrix) -> Result<LatentGraph> {
        normalized_laplacian(&self.latent_adjacency(x)?)
    }

    /// One Spe-Seq cell of block `block` applied to `x` on `graph`.
    pub fn spe_seq_cell(&self, block: usize, x: &RealMatrix, graph: &LatentGraph) -> Result<RealMatrix> {
        let ids = self
            .blocks
            .get(block)
            .ok_or_else(|| Error::InvalidDimension(format!("no block {block}")))?;
        Ok(self.cell_forward(ids, x, graph).0)
    }

    fn cell_forward(&self, ids: &BlockIds, x: &RealMatrix, graph: &LatentGraph) -> (RealMatrix, CellTape) {
        let filtered = graph.chebyshev_filter(x, self.config.cheb_order);
        let (fr, fi) = (&self.dft.re, &self.dft.im);
        let mut hidden = Array2::zeros(x.dim());
        let mut orders = Vec::with_capacity(filtered.len());
        for (xk, oid) in filtered.iter().zip(&ids.orders) {
            let kernels = self.params.get(oid.conv_w);
            let biases = self.params.get(oid.conv_b);
            let spec_re = xk.dot(fr);
            let spec_im = xk.dot(fi);
            let mut gate_a: [RealMatrix; 2] = Default::default();
            let mut gate_s: [RealMatrix; 2] = Default::default();
            for (ch, spec) in [&spec_re, &spec_im].into_iter().enumerate() {
                gate_a[ch] = conv_rows(spec, kernels.row(2 * ch), biases[[0, 2 * ch]]);
                gate_s[ch] = conv_rows(spec, kernels.row(2 * ch + 1), biases[[0, 2 * ch + 1]]).mapv(sigmoid);
            }
            let g_re = &gate_a[0] * &gate_s[0];
            let g_im = &gate_a[1] * &gate_s[1];
            // real part of the inverse DFT: Re((G_re + iG_im)·conj(F))
            let mixed_in = g_re.dot(fr) + g_im.dot(fi);
            hidden += &mixed_in.dot(self.params.get(oid.theta));
            orders.push(OrderTape {
                spec_re,
                spec_im,
                gate_a,
                gate_s,
                mixed_in,
            });
        }
        (hidden, CellTape { filtered, orders })
    }

    /// Returns `(d_x, d_rescaled_laplacian)` and accumulates parameter grads.
    fn cell_backward(
        &self,
        ids: &BlockIds,
        graph: &LatentGraph,
        tape: &CellTape,
        d_hidden: &RealMatrix,
        grads: &mut Grads,
    ) -> (RealMatrix, RealMatrix) {
        let (fr, fi) = (&self.dft.re, &self.dft.im);
        let mut d_filtered = Vec::with_capacity(tape.orders.len());
        for (ot, oid) in tape.orders.iter().zip(&ids.orders) {
            let theta = self.params.get(oid.theta);
            *grads.get_mut(oid.theta) += &ot.mixed_in.t().dot(d_hidden);
            let d_mixed = d_hidden.dot(&theta.t());
            let d_g = [d_mixed.dot(&fr.t()), d_mixed.dot(&fi.t())];
            let kernels = self.params.get(oid.conv_w);
            let specs = [&ot.spec_re, &ot.spec_im];
            let mut d_spec = [Array2::zeros(d_hidden.dim()), Array2::zeros(d_hidden.dim())];
            for ch in 0..2 {
                let a = &ot.gate_a[ch];
                let s = &ot.gate_s[ch];
                let d_a = &d_g[ch] * s;
                let d_pre_b = Array2::from_shape_fn(a.dim(), |ix| d_g[ch][ix] * a[ix] * s[ix] * (1.0 - s[ix]));
                for (branch, d_branch) in [(2 * ch, &d_a), (2 * ch + 1, &d_pre_b)] {
                    let (d_in, d_k, d_b) = conv_rows_backward(specs[ch], kernels.row(branch), d_branch);
                    d_spec[ch] += &d_in;
                    let gw = grads.get_mut(oid.conv_w);
                    for (t, v) in d_k.iter().enumerate() {
                        gw[[branch, t]] += v;
                    }
                    grads.get_mut(oid.conv_b)[[0, branch]] += d_b;
                }
            }
            d_filtered.push(d_spec[0].dot(&fr.t()) + d_spec[1].dot(&fi.t()));
        }
        graph.chebyshev_filter_backward(&tape.filtered, d_filtered)
    }

    fn run(&self, x: &RealMatrix, retain: bool) -> Result<Forward<StemGnnTape>> {
        self.check_input(x)?;
        let repr = self.node_representation(x);
        let (adjacency, attention) = attention_adjacency(&repr, self.params.get(self.w_q), self.params.get(self.w_k));
        ensure_finite(&adjacency, "latent correlation layer")?;
        let graph = normalized_laplacian(&adjacency)?;

        let mut block_input = x.clone();
        let mut forecast_sum = Array2::zeros((self.config.n_nodes, self.config.horizon));
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for (b, ids) in self.blocks.iter().enumerate() {
            let (hidden, cell) = self.cell_forward(ids, &block_input, &graph);
            ensure_finite(&hidden, &format!("stemgnn block {b}"))?;
            forecast_sum += &affine(&hidden, self.params.get(ids.forecast_w), self.params.get(ids.forecast_b));
            if let Some((bw, bb)) = ids.backcast {
                let backcast = affine(&hidden, self.params.get(bw), self.params.get(bb));
                block_input = &block_input - &backcast;
            }
            if retain {
                blocks.push(BlockTape { cell, hidden });
            }
        }
        let output = affine(&forecast_sum, self.params.get(self.out_w), self.params.get(self.out_b));
        ensure_finite(&output, "stemgnn output layer")?;
        let tape = retain.then(|| StemGnnTape {
            input: x.clone(),
            repr,
            attention,
            graph,
            blocks,
            forecast_sum,
        });
        Ok(Forward::new(output, tape))
    }
}

impl Differentiable for StemGnn {
    type Tape = StemGnnTape;

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn forward(&self, input: &RealMatrix, retain: bool) -> Result<Forward<StemGnnTape>> {
        self.run(input, retain)
    }

    fn backward(&self, fwd: &Forward<StemGnnTape>, output_grad: &RealMatrix, grads: &mut Grads) -> Result<RealMatrix> {
        self.backward_tape(fwd.tape()?, output_grad, grads)
    }
}

impl StemGnn {
    pub(crate) fn backward_tape(&self, tape: &StemGnnTape, output_grad: &RealMatrix, grads: &mut Grads) -> Result<RealMatrix> {
        let d_forecast = affine_backward(&tape.forecast_sum, self.params.get(self.out_w), output_grad, grads, self.out_w, self.out_b);

        let n = self.config.n_nodes;
        let mut d_lhat = Array2::zeros((n, n));
        // gradient flowing into the input of the block after the current one
        let mut d_next: RealMatrix = Array2::zeros((n, self.config.window));
        for (ids, bt) in self.blocks.iter().zip(&tape.blocks).rev() {
            let mut d_hidden = affine_backward(
                &bt.hidden,
                self.params.get(ids.forecast_w),
                &d_forecast,
                grads,
                ids.forecast_w,
                ids.forecast_b,
            );
            if let Some((bw, bb)) = ids.backcast {
                // next input = input - backcast
                let d_backcast = d_next.mapv(|v| -v);
                d_hidden += &affine_backward(&bt.hidden, self.params.get(bw), &d_backcast, grads, bw, bb);
            }
            let (d_in, d_l) = self.cell_backward(ids, &tape.graph, &bt.cell, &d_hidden, grads);
            d_lhat += &d_l;
            d_next += &d_in;
        }

        let d_adj = tape.graph.rescaled_backward(&d_lhat);
        let (d_repr, d_wq, d_wk) = attention_adjacency_backward(
            &tape.repr,
            self.params.get(self.w_q),
            self.params.get(self.w_k),
            &tape.attention,
            &d_adj,
        );
        *grads.get_mut(self.w_q) += &d_wq;
        *grads.get_mut(self.w_k) += &d_wk;
        let mut d_x = d_next;
        if self.config.static_graph {
            *grads.get_mut(self.node_repr) += &d_repr;
        } else {
            *grads.get_mut(self.node_repr) += &tape.input.t().dot(&d_repr);
            d_x += &d_repr.dot(&self.params.get(self.node_repr).t());
        }
        Ok(d_x)
    }
}
