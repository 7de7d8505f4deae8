//! Figures of merit: compressed-domain RMSE, channel NMSE and ZF sum rate.

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSeries;
use crate::codec::CodecModel;
use crate::dataset::{window_count, SplitBounds};
use crate::error::{Error, Result};
use crate::forecast::Predictor;
use crate::numerics::{complex_inverse, hermitian_eigenvalues, Complex64, ComplexMatrix, RealMatrix};

/// Condition number of `ĤĤᴴ` above which a ZF frame is skipped.
pub const MAX_ZF_CONDITION: f64 = 1e10;
/// Floor reported for a perfect reconstruction.
pub const NMSE_FLOOR_DB: f64 = -200.0;
/// Default SNR grid in `lo:hi:step` form.
pub const DEFAULT_SNR_GRID: &str = "-10:20:5";

/// Root mean squared error over every entry of paired matrices.
pub fn rmse(pred: &[RealMatrix], truth: &[RealMatrix]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::InvalidDimension(format!("{} predictions vs {} targets", pred.len(), truth.len())));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (p, t) in pred.iter().zip(truth) {
        if p.dim() != t.dim() {
            return Err(Error::InvalidDimension(format!("prediction {:?} vs target {:?}", p.dim(), t.dim())));
        }
        sum += p.iter().zip(t.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        count += p.len();
    }
    if count == 0 {
        return Err(Error::InvalidDimension("rmse of an empty set".into()));
    }
    Ok((sum / count as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Nmse {
    pub db: f64,
    /// frames skipped because the true channel had zero power
    pub skipped: usize,
}

fn to_db(ratio: f64) -> f64 {
    if ratio <= 0.0 {
        NMSE_FLOOR_DB
    } else {
        (10.0 * ratio.log10()).max(NMSE_FLOOR_DB)
    }
}

fn frobenius_sq(h: &ComplexMatrix) -> f64 {
    h.iter().map(|z| z.norm_sqr()).sum()
}

/// Running mean of per-frame error ratios `‖H − Ĥ‖² / ‖H‖²`.
#[derive(Debug, Clone, Copy, Default)]
struct NmseAccumulator {
    sum: f64,
    frames: usize,
    skipped: usize,
}

impl NmseAccumulator {
    fn push(&mut self, h: &ComplexMatrix, h_hat: &ComplexMatrix) {
        let power = frobenius_sq(h);
        if power == 0.0 {
            self.skipped += 1;
            return;
        }
        let err: f64 = h.iter().zip(h_hat.iter()).map(|(a, b)| (a - b).norm_sqr()).sum();
        self.sum += err / power;
        self.frames += 1;
    }

    fn finish(&self) -> Result<Nmse> {
        if self.frames == 0 {
            return Err(Error::numeric("nmse", "every frame has zero power"));
        }
        if self.skipped > 0 {
            log::warn!("nmse skipped {} zero-power frames", self.skipped);
        }
        Ok(Nmse {
            db: to_db(self.sum / self.frames as f64),
            skipped: self.skipped,
        })
    }
}

/// `10·log10(mean_t ‖H_t − Ĥ_t‖²_F / ‖H_t‖²_F)`, clamped at −200 dB.
pub fn nmse_db(h_true: &[ComplexMatrix], h_hat: &[ComplexMatrix]) -> Result<Nmse> {
    if h_true.len() != h_hat.len() {
        return Err(Error::InvalidDimension(format!("{} true frames vs {} estimates", h_true.len(), h_hat.len())));
    }
    let mut acc = NmseAccumulator::default();
    for (h, g) in h_true.iter().zip(h_hat) {
        if h.dim() != g.dim() {
            return Err(Error::InvalidDimension(format!("frame {:?} vs estimate {:?}", h.dim(), g.dim())));
        }
        acc.push(h, g);
    }
    acc.finish()
}

/// Zero-forcing precoder for estimated channels `Ĥ` (`U x N_t`, one row per
/// user): `V = Ĥᴴ(ĤĤᴴ)⁻¹` with unit-norm columns.
pub fn zf_precoder(h_hat: &ComplexMatrix) -> Result<ComplexMatrix> {
    let (u, nt) = h_hat.dim();
    if u == 0 || u > nt {
        return Err(Error::InvalidDimension(format!("zero-forcing needs 1 <= U <= N_t, got U={u}, N_t={nt}")));
    }
    let hh = h_hat.t().mapv(|z| z.conj());
    let gram = h_hat.dot(&hh);
    let eig = hermitian_eigenvalues(&gram)?;
    let lo = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().copied().fold(0.0, f64::max);
    let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if cond > MAX_ZF_CONDITION {
        return Err(Error::IllConditioned { cond });
    }
    let mut v = hh.dot(&complex_inverse(&gram)?);
    for mut col in v.columns_mut() {
        let norm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        col.mapv_inplace(|z| z / norm);
    }
    Ok(v)
}

/// `Σ_k log2(1 + SINR_k)` with power `ρ/U` per user and unit noise.
pub fn sum_rate(h_true: &ComplexMatrix, v: &ComplexMatrix, rho: f64) -> Result<f64> {
    let u = h_true.nrows();
    if v.dim() != (h_true.ncols(), u) {
        return Err(Error::InvalidDimension(format!("precoder {:?} does not fit channel {:?}", v.dim(), h_true.dim())));
    }
    let p = rho / u as f64;
    let gains = h_true.dot(v);
    let mut rate = 0.0;
    for k in 0..u {
        let signal = p * gains[[k, k]].norm_sqr();
        let interference: f64 = (0..u).filter(|&j| j != k).map(|j| gains[[k, j]].norm_sqr()).sum::<f64>() * p;
        rate += (1.0 + signal / (1.0 + interference)).log2();
    }
    Ok(rate)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Parses `lo:hi:step` (dB) into an inclusive grid.
pub fn parse_snr_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = |msg: &str| Error::config("snr", format!("'{spec}': {msg}"));
    let parts: Vec<f64> = spec
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad("expected lo:hi:step")))
        .collect::<Result<_>>()?;
    let [lo, hi, step] = parts[..] else {
        return Err(bad("expected lo:hi:step"));
    };
    if !(step > 0.0) || !lo.is_finite() || !hi.is_finite() || hi < lo {
        return Err(bad("need finite lo <= hi and step > 0"));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|i| lo + i as f64 * step).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmissionModel {
    pub snr_db: Vec<f64>,
    pub users: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub horizon: usize,
    pub gamma: f64,
    /// compressed domain, de-normalised
    pub rmse: f64,
    /// per complex channel entry
    pub rmse_channel: f64,
    pub nmse_db: f64,
    /// decoding the true future codes, i.e. a perfect forecaster
    pub codec_nmse_db: f64,
    pub snr_db: Vec<f64>,
    pub sum_rate: Vec<f64>,
    /// ZF on the true channel
    pub sum_rate_perfect: Vec<f64>,
    /// subcarrier frames dropped for an ill-conditioned ZF Gram matrix
    pub skipped_frames: usize,
    pub zero_power_frames: usize,
    pub windows: usize,
}

/// Runs every user's test windows through encode → predict → decode and
/// scores the result.
///
/// All users must share one time axis; sum rates precode the users jointly
/// per subcarrier with ZF on the predicted channels and measure SINR on the
/// true ones.
pub fn evaluate_pipeline(
    channels: &[ChannelSeries],
    codec: &CodecModel,
    predictor: &dyn Predictor,
    tx: &TransmissionModel,
) -> Result<EvalReport> {
    let users = channels.len();
    if users == 0 || users != tx.users {
        return Err(Error::config("eval.users", format!("{} channel series for {} users", users, tx.users)));
    }
    let len = channels[0].len();
    if channels.iter().any(|c| c.len() != len) {
        return Err(Error::InvalidDimension("user series differ in length".into()));
    }
    let nt = channels[0].config.n_tx();
    if users > nt {
        return Err(Error::config("eval.users", format!("{users} users exceed {nt} transmit antennas")));
    }
    let (k, p) = (predictor.window(), predictor.horizon());
    let range = SplitBounds::new(len).test();
    let n_windows = window_count(range.len(), k, p);
    if n_windows == 0 {
        return Err(Error::config(
            "forecaster.window",
            format!("test split of {} frames holds no window of {k}+{p}", range.len()),
        ));
    }
    let codes: Vec<RealMatrix> = channels.iter().map(|c| codec.encode_frames(&c.frames)).collect::<Result<_>>()?;
    let rhos: Vec<f64> = tx.snr_db.iter().map(|&d| db_to_linear(d)).collect();

    let mut sq_code = 0.0;
    let mut n_code = 0usize;
    let mut sq_chan = 0.0;
    let mut n_chan = 0usize;
    let mut nmse = NmseAccumulator::default();
    let mut nmse_codec = NmseAccumulator::default();
    let mut rate_sum = vec![0.0; rhos.len()];
    let mut rate_perfect = vec![0.0; rhos.len()];
    let mut rate_frames = 0usize;
    let mut skipped = 0usize;

    for i in 0..n_windows {
        let t0 = range.start + i;
        // per user: predicted and true-code reconstructions for the P steps
        let mut predicted: Vec<Vec<ComplexMatrix>> = Vec::with_capacity(users);
        for (u, code) in codes.iter().enumerate() {
            let pred = predictor.predict(code.slice(s![t0..t0 + k, ..]))?;
            let truth = code.slice(s![t0 + k..t0 + k + p, ..]).to_owned();
            if pred.dim() != truth.dim() {
                return Err(Error::InvalidDimension(format!("predictor returned {:?}, expected {:?}", pred.dim(), truth.dim())));
            }
            sq_code += pred.iter().zip(truth.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            n_code += pred.len();
            let h_pred = codec.decode_rows(&pred)?;
            let h_codec = codec.decode_rows(&truth)?;
            for (j, (hp, hc)) in h_pred.iter().zip(&h_codec).enumerate() {
                let h = &channels[u].frames[t0 + k + j];
                nmse.push(h, hp);
                nmse_codec.push(h, hc);
                sq_chan += h.iter().zip(hp.iter()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>();
                n_chan += h.len();
            }
            predicted.push(h_pred);
        }
        for j in 0..p {
            let t = t0 + k + j;
            for sc in 0..channels[0].config.n_subcarriers {
                let h_true = stack_users(users, nt, |u| channels[u].frames[t].row(sc).to_owned());
                let h_est = stack_users(users, nt, |u| predicted[u][j].row(sc).to_owned());
                let (v, v_true) = match (zf_precoder(&h_est), zf_precoder(&h_true)) {
                    (Ok(v), Ok(vt)) => (v, vt),
                    (Err(Error::IllConditioned { .. }), _) | (_, Err(Error::IllConditioned { .. })) => {
                        skipped += 1;
                        continue;
                    }
                    (Err(e), _) | (_, Err(e)) => return Err(e),
                };
                for (r, &rho) in rhos.iter().enumerate() {
                    rate_sum[r] += sum_rate(&h_true, &v, rho)?;
                    rate_perfect[r] += sum_rate(&h_true, &v_true, rho)?;
                }
                rate_frames += 1;
            }
        }
    }
    if skipped > 0 {
        log::warn!("zero-forcing skipped {skipped} ill-conditioned subcarrier frames");
    }
    let mean = |v: Vec<f64>| v.into_iter().map(|x| x / rate_frames.max(1) as f64).collect::<Vec<_>>();
    let nmse = nmse.finish()?;
    let codec_nmse = nmse_codec.finish()?;
    Ok(EvalReport {
        horizon: p,
        gamma: codec.gamma(),
        rmse: (sq_code / n_code as f64).sqrt(),
        rmse_channel: (sq_chan / n_chan as f64).sqrt(),
        nmse_db: nmse.db,
        codec_nmse_db: codec_nmse.db,
        snr_db: tx.snr_db.clone(),
        sum_rate: mean(rate_sum),
        sum_rate_perfect: mean(rate_perfect),
        skipped_frames: skipped,
        zero_power_frames: nmse.skipped,
        windows: n_windows * users,
    })
}

fn stack_users(users: usize, nt: usize, row: impl Fn(usize) -> ndarray::Array1<Complex64>) -> ComplexMatrix {
    let mut m = Array2::zeros((users, nt));
    for u in 0..users {
        m.row_mut(u).assign(&row(u));
    }
    m
}

/// Mean and standard error of the mean (zero for fewer than two values).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}
