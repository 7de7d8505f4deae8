use super::{Differentiable, ParamSet};
use crate::error::Result;
use crate::numerics::RealMatrix;

pub const DEFAULT_FD_EPS: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_param: String,
    /// analytic and central-difference value at the worst entry
    pub worst_pair: (f64, f64),
    pub checked_scalars: usize,
}

/// `mean(plus²) - mean(minus²)` evaluated as `Σ (p - m)(p + m) / n`, which
/// avoids cancelling two nearly equal losses.
fn mean_square_delta(plus: &RealMatrix, minus: &RealMatrix) -> f64 {
    let sum: f64 = plus.iter().zip(minus.iter()).map(|(p, m)| (p - m) * (p + m)).sum();
    sum / plus.len() as f64
}

/// Compares analytic gradients of `mean(output²)` against central differences.
///
/// The relative error of one scalar is
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`; the report holds
/// the maximum over every parameter entry.
pub fn finite_diff_check<M: Differentiable>(model: &mut M, input: &RealMatrix, eps: f64) -> Result<GradCheckReport> {
    let fwd = model.forward(input, true)?;
    let n = fwd.output.len() as f64;
    let dout = fwd.output.mapv(|v| 2.0 * v / n);
    let mut grads = model.params().zero_grads();
    model.backward(&fwd, &dout, &mut grads)?;

    let ids: Vec<_> = model.params().ids().collect();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_param: String::new(),
        worst_pair: (0.0, 0.0),
        checked_scalars: 0,
    };
    for id in ids {
        let len = model.params().get(id).len();
        for k in 0..len {
            let original = flat_get(model.params(), id, k);
            let (hi, lo) = (original + eps, original - eps);
            flat_set(model.params_mut(), id, k, hi);
            let plus = model.forward(input, false)?.output;
            flat_set(model.params_mut(), id, k, lo);
            let minus = model.forward(input, false)?.output;
            flat_set(model.params_mut(), id, k, original);

            // divide by the representable step, not the nominal 2ε
            let numeric = mean_square_delta(&plus, &minus) / (hi - lo);
            let analytic = grads.get(id).as_slice().expect("standard layout")[k];
            let denom = analytic.abs().max(numeric.abs()).max(1e-8);
            let rel = (analytic - numeric).abs() / denom;
            report.checked_scalars += 1;
            if rel > report.max_relative_error {
                report.max_relative_error = rel;
                report.worst_param = format!("{}[{k}]", model.params().tensor(id).name);
                report.worst_pair = (analytic, numeric);
            }
        }
    }
    Ok(report)
}

fn flat_get(p: &ParamSet, id: super::ParamId, k: usize) -> f64 {
    p.get(id).as_slice().expect("standard layout")[k]
}

fn flat_set(p: &mut ParamSet, id: super::ParamId, k: usize, v: f64) {
    p.value_mut(id).as_slice_mut().expect("standard layout")[k] = v;
}
