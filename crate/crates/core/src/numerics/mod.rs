//! Dense real and complex numerics shared by every other module.
//!
//! Real matrices are row-major `ndarray` arrays of `f64`; complex matrices
//! store `Complex64`, which lays out as interleaved `(re, im)` pairs.

mod dft;
mod eigen;
mod linalg;
mod rng;

pub use dft::{unitary_dft_matrix, DftBasis};
pub use eigen::{hermitian_eigenvalues, symmetric_eigh, SymmetricEigen, DEFAULT_EIGH_TOL};
pub use linalg::{complex_inverse, max_abs_diff, sigmoid, softmax_rows};
pub use rng::RngStream;

use ndarray::Array2;
pub use num_complex::Complex64;

pub type RealMatrix = Array2<f64>;
pub type ComplexMatrix = Array2<Complex64>;

use crate::error::{Error, Result};

/// Fails with a numeric error naming `context` if any entry is NaN or infinite.
pub fn ensure_finite(m: &RealMatrix, context: &str) -> Result<()> {
    if let Some(bad) = m.iter().find(|v| !v.is_finite()) {
        return Err(Error::numeric(context, format!("non-finite value {bad}")));
    }
    Ok(())
}

/// Glorot-uniform initialised `rows x cols` matrix.
pub fn glorot_uniform(rows: usize, cols: usize, fan_in: usize, fan_out: usize, rng: &mut RngStream) -> RealMatrix {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.uniform_range(-limit, limit))
}
