//! Latent correlation graph: self-attention adjacency, normalised Laplacian,
//! Chebyshev graph filtering and the explicit graph Fourier basis.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::numerics::{softmax_rows, symmetric_eigh, RealMatrix, DEFAULT_EIGH_TOL};

/// Intermediates of the attention adjacency `W = (A + Aᵀ)/2`.
#[derive(Debug, Clone)]
pub struct AttentionTape {
    pub query: RealMatrix,
    pub key: RealMatrix,
    pub attention: RealMatrix,
}

/// Symmetrised self-attention over node representations `r` (`C x d`):
/// `A = softmax_rows(R·W_Q·(R·W_K)ᵀ / √d)`, `W = (A + Aᵀ)/2`.
pub fn attention_adjacency(r: &RealMatrix, w_q: &RealMatrix, w_k: &RealMatrix) -> (RealMatrix, AttentionTape) {
    let d = w_q.ncols() as f64;
    let query = r.dot(w_q);
    let key = r.dot(w_k);
    let logits = query.dot(&key.t()) / d.sqrt();
    let attention = softmax_rows(&logits);
    let adjacency = (&attention + &attention.t()) * 0.5;
    (
        adjacency,
        AttentionTape {
            query,
            key,
            attention,
        },
    )
}

/// Gradients of [`attention_adjacency`] with respect to `r`, `W_Q` and `W_K`.
pub fn attention_adjacency_backward(
    r: &RealMatrix,
    w_q: &RealMatrix,
    w_k: &RealMatrix,
    tape: &AttentionTape,
    d_adjacency: &RealMatrix,
) -> (RealMatrix, RealMatrix, RealMatrix) {
    let scale = 1.0 / (w_q.ncols() as f64).sqrt();
    let d_att = (d_adjacency + &d_adjacency.t()) * 0.5;
    let a = &tape.attention;
    let mut d_logits = Array2::zeros(a.dim());
    for i in 0..a.nrows() {
        let dot: f64 = a.row(i).iter().zip(d_att.row(i).iter()).map(|(p, g)| p * g).sum();
        for j in 0..a.ncols() {
            d_logits[[i, j]] = a[[i, j]] * (d_att[[i, j]] - dot);
        }
    }
    let d_query = d_logits.dot(&tape.key) * scale;
    let d_key = d_logits.t().dot(&tape.query) * scale;
    let d_wq = r.t().dot(&d_query);
    let d_wk = r.t().dot(&d_key);
    let d_r = d_query.dot(&w_q.t()) + d_key.dot(&w_k.t());
    (d_r, d_wq, d_wk)
}

/// Graph built from a symmetric non-negative adjacency.
#[derive(Debug, Clone)]
pub struct LatentGraph {
    pub adjacency: RealMatrix,
    pub degree: Array1<f64>,
    /// `D^{-1/2}` diagonal.
    pub inv_sqrt_degree: Array1<f64>,
    /// `L̃ = I - D^{-1/2} W D^{-1/2}`
    pub laplacian: RealMatrix,
    /// `L̂ = L̃ - I` (eigenvalues rescaled into [-1, 1] with λ_max = 2).
    pub rescaled: RealMatrix,
}

pub fn normalized_laplacian(w: &RealMatrix) -> Result<LatentGraph> {
    let n = w.nrows();
    if w.ncols() != n {
        return Err(Error::InvalidDimension(format!("adjacency is {}x{}", n, w.ncols())));
    }
    let degree: Array1<f64> = w.rows().into_iter().map(|r| r.sum()).collect();
    if let Some(node) = degree.iter().position(|&d| d <= 0.0) {
        return Err(Error::DegenerateGraph { node });
    }
    let inv_sqrt_degree = degree.mapv(|d| 1.0 / d.sqrt());
    let rescaled = Array2::from_shape_fn((n, n), |(i, j)| -inv_sqrt_degree[i] * w[[i, j]] * inv_sqrt_degree[j]);
    let mut laplacian = rescaled.clone();
    for i in 0..n {
        laplacian[[i, i]] += 1.0;
    }
    Ok(LatentGraph {
        adjacency: w.clone(),
        degree,
        inv_sqrt_degree,
        laplacian,
        rescaled,
    })
}

impl LatentGraph {
    pub fn n_nodes(&self) -> usize {
        self.adjacency.nrows()
    }

    /// Chebyshev polynomials `T_0 … T_order` of `L̂`.
    pub fn chebyshev_basis(&self, order: usize) -> Vec<RealMatrix> {
        let n = self.n_nodes();
        let mut basis = vec![Array2::eye(n)];
        if order >= 1 {
            basis.push(self.rescaled.clone());
        }
        for k in 2..=order {
            let next = self.rescaled.dot(&basis[k - 1]) * 2.0 - &basis[k - 2];
            basis.push(next);
        }
        basis
    }

    /// `T_k(L̂)·x` for `k = 0..=order`, via the three-term recurrence on `x`.
    pub fn chebyshev_filter(&self, x: &RealMatrix, order: usize) -> Vec<RealMatrix> {
        let mut out = vec![x.clone()];
        if order >= 1 {
            out.push(self.rescaled.dot(x));
        }
        for k in 2..=order {
            let next = self.rescaled.dot(&out[k - 1]) * 2.0 - &out[k - 2];
            out.push(next);
        }
        out
    }

    /// Reverse of [`LatentGraph::chebyshev_filter`]. Given gradients on every
    /// filtered signal, returns `(d_x, d_rescaled)`.
    pub fn chebyshev_filter_backward(&self, filtered: &[RealMatrix], mut d_filtered: Vec<RealMatrix>) -> (RealMatrix, RealMatrix) {
        let order = filtered.len() - 1;
        let n = self.n_nodes();
        let mut d_lhat = Array2::zeros((n, n));
        for k in (2..=order).rev() {
            let dk = std::mem::replace(&mut d_filtered[k], Array2::zeros((0, 0)));
            d_lhat.scaled_add(2.0, &dk.dot(&filtered[k - 1].t()));
            let back = self.rescaled.t().dot(&dk) * 2.0;
            d_filtered[k - 1] += &back;
            d_filtered[k - 2] -= &dk;
        }
        if order >= 1 {
            let d1 = &d_filtered[1];
            d_lhat += &d1.dot(&filtered[0].t());
            let back = self.rescaled.t().dot(d1);
            d_filtered[0] += &back;
        }
        (d_filtered.swap_remove(0), d_lhat)
    }

    /// Maps a gradient on `L̂` back to the adjacency `W`.
    pub fn rescaled_backward(&self, d_rescaled: &RealMatrix) -> RealMatrix {
        let n = self.n_nodes();
        let s = &self.inv_sqrt_degree;
        let w = &self.adjacency;
        // L̂_ij = -s_i W_ij s_j
        let d_norm = d_rescaled.mapv(|v| -v);
        let mut d_w = Array2::from_shape_fn((n, n), |(i, j)| d_norm[[i, j]] * s[i] * s[j]);
        let mut d_s = Array1::<f64>::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let g = d_norm[[i, j]] * w[[i, j]];
                d_s[i] += g * s[j];
                d_s[j] += g * s[i];
            }
        }
        for i in 0..n {
            // s = deg^{-1/2}
            let d_deg = d_s[i] * -0.5 * s[i].powi(3);
            for j in 0..n {
                d_w[[i, j]] += d_deg;
            }
        }
        d_w
    }
}

/// Explicit graph Fourier basis of a [`LatentGraph`].
#[derive(Debug, Clone)]
pub struct SpectralDiagnostics {
    /// Eigenvalues of `L̃`, ascending.
    pub eigenvalues: Array1<f64>,
    /// Orthonormal eigenvectors (columns); the GFT is `Uᵀx`.
    pub basis: RealMatrix,
    /// `max |UᵀU - I|`.
    pub orthonormality_error: f64,
}

pub fn spectral_diagnostics(graph: &LatentGraph) -> Result<SpectralDiagnostics> {
    let eig = symmetric_eigh(&graph.laplacian, DEFAULT_EIGH_TOL)?;
    let n = graph.n_nodes();
    let utu = eig.vectors.t().dot(&eig.vectors);
    let eye: RealMatrix = Array2::eye(n);
    let orthonormality_error = crate::numerics::max_abs_diff(&utu, &eye);
    if orthonormality_error > 1e-8 {
        return Err(Error::numeric(
            "spectral_diagnostics",
            format!("eigenvectors not orthonormal ({orthonormality_error:e})"),
        ));
    }
    Ok(SpectralDiagnostics {
        eigenvalues: eig.values,
        basis: eig.vectors,
        orthonormality_error,
    })
}

impl SpectralDiagnostics {
    /// `U·g(Λ̂)·Uᵀ·x` with `g(λ) = Σ_k c_k T_k(λ)` and `Λ̂ = Λ - 1`.
    pub fn spectral_filter(&self, x: &RealMatrix, coeffs: &[f64]) -> RealMatrix {
        let response = self.eigenvalues.mapv(|lam| chebyshev_series(lam - 1.0, coeffs));
        let spectrum = self.basis.t().dot(x);
        let scaled = Array2::from_shape_fn(spectrum.dim(), |(i, j)| response[i] * spectrum[[i, j]]);
        self.basis.dot(&scaled)
    }

    /// Max deviation between the explicit GFT filter and the Chebyshev path.
    pub fn filter_agreement(&self, graph: &LatentGraph, x: &RealMatrix, coeffs: &[f64]) -> f64 {
        let order = coeffs.len().saturating_sub(1);
        let terms = graph.chebyshev_filter(x, order);
        let mut poly = Array2::zeros(x.dim());
        for (c, t) in coeffs.iter().zip(&terms) {
            poly.scaled_add(*c, t);
        }
        crate::numerics::max_abs_diff(&poly, &self.spectral_filter(x, coeffs))
    }
}

fn chebyshev_series(x: f64, coeffs: &[f64]) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    let mut acc = 0.0;
    for (k, c) in coeffs.iter().enumerate() {
        let t = match k {
            0 => 1.0,
            1 => x,
            _ => {
                let next = 2.0 * x * cur - prev;
                prev = cur;
                cur = next;
                next
            }
        };
        acc += c * t;
    }
    acc
}
