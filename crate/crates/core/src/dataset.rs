//! Time splits, per-node normalisation and sliding windows.

use ndarray::{s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::RealMatrix;

/// Floor applied to every standard deviation.
pub const STD_FLOOR: f64 = 1e-8;

/// Contiguous train / validation / test ranges along time (70 / 15 / 15).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitBounds {
    pub train_end: usize,
    pub val_end: usize,
    pub len: usize,
}

impl SplitBounds {
    pub fn new(len: usize) -> Self {
        Self {
            train_end: len * 70 / 100,
            val_end: len * 85 / 100,
            len,
        }
    }

    pub fn train(&self) -> std::ops::Range<usize> {
        0..self.train_end
    }

    pub fn val(&self) -> std::ops::Range<usize> {
        self.train_end..self.val_end
    }

    pub fn test(&self) -> std::ops::Range<usize> {
        self.val_end..self.len
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Number of stride-1 windows of `window + horizon` steps in a span of `len`.
pub fn window_count(len: usize, window: usize, horizon: usize) -> usize {
    (len + 1).saturating_sub(window + horizon)
}

/// Per-dimension z-score statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Fits column statistics of `rows` (one sample per row).
    pub fn fit(rows: ArrayView2<'_, f64>) -> Result<Self> {
        if rows.nrows() == 0 {
            return Err(Error::InvalidDimension("cannot fit normalisation on zero samples".into()));
        }
        let n = rows.nrows() as f64;
        let mean = rows.sum_axis(Axis(0)) / n;
        let mut var = vec![0.0; rows.ncols()];
        for row in rows.rows() {
            for (j, v) in row.iter().enumerate() {
                let d = v - mean[j];
                var[j] += d * d;
            }
        }
        Ok(Self {
            mean: mean.to_vec(),
            std: var.into_iter().map(|v| (v / n).sqrt().max(STD_FLOOR)).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Normalises every row of `rows` in place.
    pub fn normalize_rows(&self, rows: &mut RealMatrix) {
        for mut row in rows.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.std[j];
            }
        }
    }

    pub fn denormalize_rows(&self, rows: &mut RealMatrix) {
        for mut row in rows.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = *v * self.std[j] + self.mean[j];
            }
        }
    }
}

/// Normalised forecasting windows: inputs are `C x K`, targets `C x P`.
#[derive(Debug, Clone, Default)]
pub struct WindowSet {
    pub inputs: Vec<RealMatrix>,
    pub targets: Vec<RealMatrix>,
}

impl WindowSet {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Appends every window lying fully inside `range` of `series` (`T x C`,
    /// already normalised).
    pub fn extend_from(&mut self, series: ArrayView2<'_, f64>, range: std::ops::Range<usize>, window: usize, horizon: usize) {
        let span = range.end - range.start;
        for i in 0..window_count(span, window, horizon) {
            let t0 = range.start + i;
            let x = series.slice(s![t0..t0 + window, ..]).t().as_standard_layout().into_owned();
            let y = series
                .slice(s![t0 + window..t0 + window + horizon, ..])
                .t()
                .as_standard_layout()
                .into_owned();
            self.inputs.push(x);
            self.targets.push(y);
        }
    }
}

/// Stacks rows `range` of several `T x C` series into one sample matrix.
pub fn stack_rows(series: &[ArrayView2<'_, f64>], pick: impl Fn(usize) -> std::ops::Range<usize>) -> RealMatrix {
    let cols = series.first().map(|s| s.ncols()).unwrap_or(0);
    let total: usize = series.iter().map(|s| pick(s.nrows()).len()).sum();
    let mut out = Array2::zeros((total, cols));
    let mut r = 0;
    for s in series {
        let range = pick(s.nrows());
        let n = range.len();
        out.slice_mut(s![r..r + n, ..]).assign(&s.slice(s![range, ..]));
        r += n;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn window_enumeration() {
        assert_eq!(window_count(100, 12, 3), 86);
        assert_eq!(window_count(15, 12, 3), 1);
        assert_eq!(window_count(14, 12, 3), 0);
        // brute force
        for len in 0..40 {
            let brute = (0..len).filter(|&t0| t0 + 12 + 3 <= len).count();
            assert_eq!(window_count(len, 12, 3), brute);
        }
    }

    #[test]
    fn splits_are_contiguous() {
        let b = SplitBounds::new(2000);
        assert_eq!(b.train(), 0..1400);
        assert_eq!(b.val(), 1400..1700);
        assert_eq!(b.test(), 1700..2000);
    }

    #[test]
    fn norm_roundtrip_and_floor() {
        let data = array![[1.0, 5.0], [3.0, 5.0]];
        let stats = NormStats::fit(data.view()).unwrap();
        assert_eq!(stats.mean, vec![2.0, 5.0]);
        assert_eq!(stats.std, vec![1.0, STD_FLOOR]);
        let mut x = data.clone();
        stats.normalize_rows(&mut x);
        assert_eq!(x, array![[-1.0, 0.0], [1.0, 0.0]]);
        stats.denormalize_rows(&mut x);
        assert_eq!(x, data);
    }

    #[test]
    fn windows_are_transposed_slices() {
        let series = Array2::from_shape_fn((10, 2), |(t, c)| (t * 10 + c) as f64);
        let mut w = WindowSet::default();
        w.extend_from(series.view(), 2..10, 3, 2);
        assert_eq!(w.len(), 4);
        assert_eq!(w.inputs[0], array![[20.0, 30.0, 40.0], [21.0, 31.0, 41.0]]);
        assert_eq!(w.targets[0], array![[50.0, 60.0], [51.0, 61.0]]);
    }
}
