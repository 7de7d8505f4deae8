use ndarray::{Array1, Array2};

use super::{ComplexMatrix, RealMatrix};
use crate::error::{Error, Result};

pub const DEFAULT_EIGH_TOL: f64 = 1e-11;
const MAX_SWEEPS: usize = 100;

/// Eigen-decomposition `A = U·diag(values)·Uᵀ` with ascending eigenvalues
/// and eigenvectors stored as the columns of `vectors`.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Array1<f64>,
    pub vectors: RealMatrix,
}

impl SymmetricEigen {
    pub fn reconstruct(&self) -> RealMatrix {
        let scaled = &self.vectors * &self.values.view().insert_axis(ndarray::Axis(0));
        scaled.dot(&self.vectors.t())
    }
}

/// Cyclic Jacobi eigensolver for real symmetric matrices.
///
/// Sweeps over every `(p, q)` pair, annihilating `a[p][q]` with a plane
/// rotation, until the largest off-diagonal magnitude drops below `tol`.
pub fn symmetric_eigh(a: &RealMatrix, tol: f64) -> Result<SymmetricEigen> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::InvalidDimension(format!("eigh of non-square {}x{} matrix", n, a.ncols())));
    }
    let scale = a.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    for i in 0..n {
        for j in (i + 1)..n {
            if (a[[i, j]] - a[[j, i]]).abs() > 1e-12 * scale {
                return Err(Error::ContractViolation(format!(
                    "eigh input not symmetric at ({i},{j}): {} vs {}",
                    a[[i, j]],
                    a[[j, i]]
                )));
            }
        }
    }

    let mut m: Vec<f64> = a.iter().copied().collect();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    // symmetrise exactly so rotations act on a truly symmetric matrix
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[i * n + j] + m[j * n + i]);
            m[i * n + j] = avg;
            m[j * n + i] = avg;
        }
    }

    let off_max = |m: &[f64]| {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                off = off.max(m[i * n + j].abs());
            }
        }
        off
    };

    let mut sweeps = 0;
    loop {
        let off = off_max(&m);
        if off < tol {
            break;
        }
        if sweeps == MAX_SWEEPS {
            return Err(Error::NotConverged { sweeps, off });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau.is_infinite() {
                    0.0
                } else {
                    tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[i * n + i].total_cmp(&m[j * n + j]));
    let values = Array1::from_iter(order.iter().map(|&i| m[i * n + i]));
    let vectors = Array2::from_shape_fn((n, n), |(r, c)| v[r * n + order[c]]);
    Ok(SymmetricEigen { values, vectors })
}

/// Eigenvalues of a Hermitian matrix, ascending.
///
/// Uses the real symmetric embedding `[[Re, -Im], [Im, Re]]`, whose spectrum
/// is the Hermitian spectrum with every value repeated twice.
pub fn hermitian_eigenvalues(a: &ComplexMatrix) -> Result<Array1<f64>> {
    let n = a.nrows();
    let emb = Array2::from_shape_fn((2 * n, 2 * n), |(i, j)| {
        let z = a[[i % n, j % n]];
        match (i < n, j < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    let eig = symmetric_eigh(&emb, DEFAULT_EIGH_TOL * emb.iter().fold(1.0f64, |m, v| m.max(v.abs())))?;
    Ok(eig.values.iter().step_by(2).copied().collect())
}
