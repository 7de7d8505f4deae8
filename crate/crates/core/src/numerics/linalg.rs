use ndarray::Array2;
use num_complex::Complex64;

use super::{ComplexMatrix, RealMatrix};
use crate::error::{Error, Result};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise softmax with per-row max subtraction.
pub fn softmax_rows(a: &RealMatrix) -> RealMatrix {
    let mut out = a.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum: f64 = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

pub fn max_abs_diff(a: &RealMatrix, b: &RealMatrix) -> f64 {
    assert_eq!(a.dim(), b.dim(), "max_abs_diff shape mismatch");
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Inverse of a square complex matrix by Gauss-Jordan elimination with
/// partial pivoting.
pub fn complex_inverse(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::InvalidDimension(format!("inverse of non-square {}x{} matrix", n, a.ncols())));
    }
    let mut work = a.clone();
    let mut inv: ComplexMatrix = Array2::from_shape_fn((n, n), |(i, j)| {
        if i == j {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| work[[i, col]].norm().total_cmp(&work[[j, col]].norm()))
            .unwrap();
        if work[[pivot, col]].norm() == 0.0 {
            return Err(Error::numeric("complex_inverse", "singular matrix"));
        }
        if pivot != col {
            for j in 0..n {
                work.swap([pivot, j], [col, j]);
                inv.swap([pivot, j], [col, j]);
            }
        }
        let p = work[[col, col]];
        for j in 0..n {
            work[[col, j]] /= p;
            inv[[col, j]] /= p;
        }
        for i in 0..n {
            if i == col {
                continue;
            }
            let factor = work[[i, col]];
            if factor == Complex64::new(0.0, 0.0) {
                continue;
            }
            for j in 0..n {
                let w = work[[col, j]];
                let v = inv[[col, j]];
                work[[i, j]] -= factor * w;
                inv[[i, j]] -= factor * v;
            }
        }
    }
    Ok(inv)
}
