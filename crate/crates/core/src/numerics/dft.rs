use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;

use super::{ComplexMatrix, RealMatrix};
use crate::error::{Error, Result};

/// Unitary DFT matrix `F[j, k] = exp(-2πi·jk/K) / √K`.
///
/// `F` is symmetric, so for a row signal `x` the forward transform is `x·F`
/// and the inverse is `y·conj(F)`.
pub fn unitary_dft_matrix(k: usize) -> Result<ComplexMatrix> {
    if k == 0 {
        return Err(Error::InvalidDimension("DFT size must be at least 1".into()));
    }
    let scale = 1.0 / (k as f64).sqrt();
    Ok(Array2::from_shape_fn((k, k), |(j, l)| {
        // reduce jl mod K before scaling so large products keep full precision
        let phase = -2.0 * PI * ((j * l) % k) as f64 / k as f64;
        Complex64::from_polar(scale, phase)
    }))
}

/// Real and imaginary parts of the unitary DFT, for real-arithmetic pipelines.
#[derive(Debug, Clone)]
pub struct DftBasis {
    pub re: RealMatrix,
    pub im: RealMatrix,
}

impl DftBasis {
    pub fn new(k: usize) -> Result<Self> {
        let f = unitary_dft_matrix(k)?;
        Ok(Self {
            re: f.mapv(|z| z.re),
            im: f.mapv(|z| z.im),
        })
    }

    pub fn len(&self) -> usize {
        self.re.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;

    fn identity_error(f: &ComplexMatrix) -> f64 {
        let fh = f.t().mapv(|z| z.conj());
        let prod = f.dot(&fh);
        prod.indexed_iter()
            .map(|((i, j), z)| {
                let target = if i == j { 1.0 } else { 0.0 };
                (z - Complex64::new(target, 0.0)).norm()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn zero_size_rejected() {
        assert!(matches!(unitary_dft_matrix(0), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn size_one_is_identity() {
        let f = unitary_dft_matrix(1).unwrap();
        assert_eq!(f[[0, 0]], Complex64::new(1.0, 0.0));
    }

    #[test]
    fn size_two_closed_form() {
        let f = unitary_dft_matrix(2).unwrap();
        let h = 1.0 / 2f64.sqrt();
        let expected = [[h, h], [h, -h]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((f[[i, j]].re - expected[i][j]).abs() < 1e-15);
                assert!(f[[i, j]].im.abs() < 1e-15);
            }
        }
    }

    #[test]
    fn impulse_has_flat_spectrum() {
        let f = unitary_dft_matrix(12).unwrap();
        // direct summation of x·F with x = e_0
        for k in 0..12 {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..12 {
                let xj = if j == 0 { 1.0 } else { 0.0 };
                acc += f[[j, k]] * xj;
            }
            assert!((acc.re - 1.0 / 12f64.sqrt()).abs() < 1e-15);
            assert!(acc.im.abs() < 1e-15);
        }
    }

    #[test]
    fn unitary_for_all_small_sizes() {
        for k in 1..=64 {
            let f = unitary_dft_matrix(k).unwrap();
            assert!(identity_error(&f) < 1e-12, "K={k}");
        }
    }

    #[test]
    fn parseval_on_random_rows() {
        let mut rng = RngStream::new(11);
        for k in [1usize, 2, 7, 12, 16, 33] {
            let b = DftBasis::new(k).unwrap();
            let x = Array2::from_shape_fn((1, k), |_| rng.normal());
            let yr = x.dot(&b.re);
            let yi = x.dot(&b.im);
            let ex: f64 = x.iter().map(|v| v * v).sum();
            let ey: f64 = yr.iter().chain(yi.iter()).map(|v| v * v).sum();
            assert!((ex.sqrt() - ey.sqrt()).abs() < 1e-10);
        }
    }
}
