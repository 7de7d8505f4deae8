//! Geometric multipath MIMO-OFDM channel with Doppler phase rotation.
//!
//! Each path contributes a rank-one term: a complex gain rotating at its
//! Doppler frequency, a per-subcarrier delay phase, and the conjugate
//! steering vector of a dual-polarised uniform rectangular panel.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Complex64, ComplexMatrix, RngStream};

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Upper bound on complex entries held by one generated series (2 GiB of f64 pairs).
pub const MAX_SERIES_ELEMENTS: usize = 1 << 27;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub panel_m: usize,
    pub panel_n: usize,
    pub dual_pol: bool,
    pub n_subcarriers: usize,
    pub bandwidth_hz: f64,
    pub carrier_hz: f64,
    pub user_speed_mps: f64,
    pub n_paths: usize,
    pub csi_interval_s: f64,
    pub n_timestamps: usize,
    pub seed: u64,
}

impl ChannelConfig {
    /// 8x2 dual-polarised panel, 32 subcarriers, 20 MHz, 3 km/h, 10 000 frames.
    pub fn full_scale() -> Self {
        Self {
            panel_m: 8,
            panel_n: 2,
            dual_pol: true,
            n_subcarriers: 32,
            bandwidth_hz: 20e6,
            carrier_hz: 3.5e9,
            user_speed_mps: 3.0 / 3.6,
            n_paths: 6,
            csi_interval_s: 5e-3,
            n_timestamps: 10_000,
            seed: 1,
        }
    }

    /// 2x2 dual-polarised panel (N_t = 8), 8 subcarriers, 2000 frames.
    pub fn desk_scale() -> Self {
        Self {
            panel_m: 2,
            panel_n: 2,
            n_subcarriers: 8,
            n_timestamps: 2000,
            ..Self::full_scale()
        }
    }

    pub fn n_pol(&self) -> usize {
        if self.dual_pol {
            2
        } else {
            1
        }
    }

    /// Number of transmit antennas `M·N·(1 or 2)`.
    pub fn n_tx(&self) -> usize {
        self.panel_m * self.panel_n * self.n_pol()
    }

    /// Real length of a flattened channel matrix, `2·N_c·N_t`.
    pub fn flat_len(&self) -> usize {
        2 * self.n_subcarriers * self.n_tx()
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    pub fn max_doppler_hz(&self) -> f64 {
        self.user_speed_mps / self.wavelength()
    }

    /// Baseband frequency offset of subcarrier `n`.
    pub fn subcarrier_offset_hz(&self, n: usize) -> f64 {
        (n as f64 - self.n_subcarriers as f64 / 2.0) * self.bandwidth_hz / self.n_subcarriers as f64
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("panel_m", self.panel_m),
            ("panel_n", self.panel_n),
            ("n_subcarriers", self.n_subcarriers),
            ("n_paths", self.n_paths),
            ("n_timestamps", self.n_timestamps),
        ];
        for (key, v) in counts {
            if v == 0 {
                return Err(Error::config(format!("channel.{key}"), "must be at least 1"));
            }
        }
        let positive = [
            ("bandwidth_hz", self.bandwidth_hz),
            ("carrier_hz", self.carrier_hz),
            ("csi_interval_s", self.csi_interval_s),
        ];
        for (key, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("channel.{key}"), "must be positive and finite"));
            }
        }
        if !(self.user_speed_mps.is_finite() && self.user_speed_mps >= 0.0) {
            return Err(Error::config("channel.user_speed_mps", "must be non-negative"));
        }
        Ok(())
    }

    /// Same configuration with an independent seed for user `user`.
    pub fn for_user(&self, user: usize) -> Self {
        Self {
            seed: RngStream::new(self.seed).derive(user as u64).seed(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub gain: Complex64,
    pub azimuth: f64,
    pub zenith: f64,
    pub delay_s: f64,
    pub doppler_hz: f64,
    pub pol_phase: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    pub paths: Vec<Path>,
}

impl PathSet {
    pub fn total_power(&self) -> f64 {
        self.paths.iter().map(|p| p.gain.norm_sqr()).sum()
    }
}

/// Array response for azimuth `theta`, zenith `phi` and polarisation phase `psi`.
///
/// Antenna index is `p·M·N + m·N + n`; element `(m, n, p)` has phase
/// `-π(m·sinθ·sinφ + n·cosφ) + p·ψ` (half-wavelength spacing).
pub fn steering_vector(cfg: &ChannelConfig, theta: f64, phi: f64, psi: f64) -> Array1<Complex64> {
    let (m_count, n_count) = (cfg.panel_m, cfg.panel_n);
    let mut a = Array1::from_elem(cfg.n_tx(), Complex64::new(0.0, 0.0));
    for p in 0..cfg.n_pol() {
        for m in 0..m_count {
            for n in 0..n_count {
                let phase = -PI * (m as f64 * theta.sin() * phi.sin() + n as f64 * phi.cos()) + p as f64 * psi;
                a[p * m_count * n_count + m * n_count + n] = Complex64::from_polar(1.0, phase);
            }
        }
    }
    a
}

/// Draws `n_paths` paths with unit total power.
pub fn sample_paths(cfg: &ChannelConfig, rng: &mut RngStream) -> PathSet {
    let f_max = cfg.max_doppler_hz();
    let delay_span = 0.8 * cfg.n_subcarriers as f64 / cfg.bandwidth_hz;
    let mut paths: Vec<Path> = (0..cfg.n_paths)
        .map(|_| {
            let gain = Complex64::new(rng.normal(), rng.normal()) / 2f64.sqrt();
            let azimuth = PI - 2.0 * PI * rng.uniform();
            let zenith = rng.uniform_range(PI / 3.0, 2.0 * PI / 3.0);
            let delay_s = delay_span * rng.uniform();
            let arrival = 2.0 * PI * rng.uniform();
            let pol_phase = 2.0 * PI * rng.uniform();
            Path {
                gain,
                azimuth,
                zenith,
                delay_s,
                doppler_hz: f_max * arrival.cos(),
                pol_phase,
            }
        })
        .collect();
    let norm = paths.iter().map(|p| p.gain.norm_sqr()).sum::<f64>().sqrt();
    for p in &mut paths {
        p.gain /= norm;
    }
    PathSet { paths }
}

/// Precomputed per-path spatial and frequency responses.
struct FrameSynth<'a> {
    cfg: &'a ChannelConfig,
    paths: &'a PathSet,
    /// conj(a_l) per path, length N_t
    spatial: Vec<Array1<Complex64>>,
    /// exp(-i2π f(n) τ_l) per path, length N_c
    spectral: Vec<Array1<Complex64>>,
}

impl<'a> FrameSynth<'a> {
    fn new(cfg: &'a ChannelConfig, paths: &'a PathSet) -> Self {
        let spatial = paths
            .paths
            .iter()
            .map(|p| steering_vector(cfg, p.azimuth, p.zenith, p.pol_phase).mapv(|z| z.conj()))
            .collect();
        let spectral = paths
            .paths
            .iter()
            .map(|p| {
                Array1::from_shape_fn(cfg.n_subcarriers, |n| {
                    Complex64::from_polar(1.0, -2.0 * PI * cfg.subcarrier_offset_hz(n) * p.delay_s)
                })
            })
            .collect();
        Self {
            cfg,
            paths,
            spatial,
            spectral,
        }
    }

    fn frame(&self, t: usize) -> ComplexMatrix {
        let (nc, nt) = (self.cfg.n_subcarriers, self.cfg.n_tx());
        let mut h = Array2::from_elem((nc, nt), Complex64::new(0.0, 0.0));
        let time = t as f64 * self.cfg.csi_interval_s;
        for (l, p) in self.paths.paths.iter().enumerate() {
            let rot = p.gain * Complex64::from_polar(1.0, 2.0 * PI * p.doppler_hz * time);
            for n in 0..nc {
                let coef = rot * self.spectral[l][n];
                for (dst, a) in h.row_mut(n).iter_mut().zip(self.spatial[l].iter()) {
                    *dst += coef * a;
                }
            }
        }
        h
    }
}

/// Channel matrix `H_t` (N_c x N_t) for a fixed path set.
pub fn channel_at(cfg: &ChannelConfig, paths: &PathSet, t: usize) -> Result<ComplexMatrix> {
    if t >= cfg.n_timestamps {
        return Err(Error::InvalidDimension(format!(
            "timestamp {t} outside series of length {}",
            cfg.n_timestamps
        )));
    }
    Ok(FrameSynth::new(cfg, paths).frame(t))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSeries {
    pub config: ChannelConfig,
    pub frames: Vec<ComplexMatrix>,
}

impl ChannelSeries {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Mean of `‖H_t‖²_F / (N_c·N_t)` over the series.
    pub fn mean_power(&self) -> f64 {
        let per = (self.config.n_subcarriers * self.config.n_tx()) as f64;
        self.frames
            .iter()
            .map(|h| h.iter().map(|z| z.norm_sqr()).sum::<f64>() / per)
            .sum::<f64>()
            / self.frames.len().max(1) as f64
    }

    /// Normalised lag-`lag` autocorrelation `Re Σ⟨H_t, H_{t+lag}⟩ / Σ‖H_t‖²`.
    pub fn autocorrelation(&self, lag: usize) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for t in 0..self.frames.len().saturating_sub(lag) {
            let (a, b) = (&self.frames[t], &self.frames[t + lag]);
            num += a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum::<f64>();
            den += a.iter().map(|x| x.norm_sqr()).sum::<f64>();
        }
        num / den
    }
}

/// Draws one path set from `cfg.seed` and emits frames `0..T`.
pub fn generate_series(cfg: &ChannelConfig) -> Result<ChannelSeries> {
    cfg.validate()?;
    let elements = cfg
        .n_timestamps
        .checked_mul(cfg.n_subcarriers)
        .and_then(|v| v.checked_mul(cfg.n_tx()))
        .unwrap_or(usize::MAX);
    if elements > MAX_SERIES_ELEMENTS {
        return Err(Error::Resource(format!(
            "series needs {elements} complex entries, limit is {MAX_SERIES_ELEMENTS}"
        )));
    }
    let mut rng = RngStream::new(cfg.seed);
    let paths = sample_paths(cfg, &mut rng);
    let synth = FrameSynth::new(cfg, &paths);
    let frames = (0..cfg.n_timestamps).map(|t| synth.frame(t)).collect();
    Ok(ChannelSeries {
        config: cfg.clone(),
        frames,
    })
}

/// Independent series for `users` users derived from `cfg.seed`.
pub fn generate_users(cfg: &ChannelConfig, users: usize) -> Result<Vec<ChannelSeries>> {
    (0..users).map(|u| generate_series(&cfg.for_user(u))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ChannelConfig {
        ChannelConfig {
            n_timestamps: 64,
            ..ChannelConfig::desk_scale()
        }
    }

    #[test]
    fn steering_broadside_is_polarisation_phase_only() {
        let cfg = small();
        let psi = 0.7;
        let a = steering_vector(&cfg, 0.0, PI / 2.0, psi);
        let half = cfg.n_tx() / 2;
        for (i, z) in a.iter().enumerate() {
            let expected = if i < half { 0.0 } else { psi };
            assert!((z.arg() - expected).abs() < 1e-12, "entry {i}");
        }
    }

    #[test]
    fn steering_entries_unit_modulus() {
        let cfg = ChannelConfig::full_scale();
        let mut rng = RngStream::new(2);
        for _ in 0..20 {
            let a = steering_vector(&cfg, rng.uniform_range(-PI, PI), rng.uniform_range(0.0, PI), rng.uniform());
            assert!(a.iter().all(|z| (z.norm() - 1.0).abs() < 1e-14));
        }
    }

    #[test]
    fn steering_two_element_endfire() {
        let cfg = ChannelConfig {
            panel_m: 2,
            panel_n: 1,
            dual_pol: false,
            ..small()
        };
        let a = steering_vector(&cfg, PI / 2.0, PI / 2.0, 0.0);
        assert!((a[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((a[1] - Complex64::new(-1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn path_gains_unit_power_and_doppler_bound() {
        let cfg = ChannelConfig::full_scale();
        let f_max = cfg.max_doppler_hz();
        // v/λ at 3 km/h and 3.5 GHz
        assert!(f_max <= 9.73 && f_max > 9.72);
        let mut rng = RngStream::new(3);
        for _ in 0..50 {
            let ps = sample_paths(&cfg, &mut rng);
            assert!((ps.total_power() - 1.0).abs() < 1e-12);
            for p in &ps.paths {
                assert!(p.doppler_hz.abs() <= f_max);
                assert!(p.delay_s >= 0.0 && p.delay_s < 0.8 * cfg.n_subcarriers as f64 / cfg.bandwidth_hz);
                assert!(p.zenith >= PI / 3.0 && p.zenith < 2.0 * PI / 3.0);
                assert!(p.azimuth > -PI && p.azimuth <= PI);
            }
        }
    }

    #[test]
    fn zero_speed_gives_zero_doppler_and_static_frames() {
        let cfg = ChannelConfig {
            user_speed_mps: 0.0,
            ..small()
        };
        let ps = sample_paths(&cfg, &mut RngStream::new(4));
        assert!(ps.paths.iter().all(|p| p.doppler_hz == 0.0));
        let series = generate_series(&cfg).unwrap();
        assert!(series.frames.iter().all(|f| f == &series.frames[0]));
    }

    #[test]
    fn single_stationary_path_is_rank_one_and_constant() {
        let cfg = ChannelConfig { n_paths: 1, ..small() };
        let mut ps = sample_paths(&cfg, &mut RngStream::new(5));
        ps.paths[0].doppler_hz = 0.0;
        let h0 = channel_at(&cfg, &ps, 0).unwrap();
        let h9 = channel_at(&cfg, &ps, 9).unwrap();
        assert_eq!(h0, h9);
        // rank one: every row is a multiple of row 0
        let r0 = h0.row(0).to_owned();
        for row in h0.rows() {
            let ratio = row[0] / r0[0];
            for (a, b) in row.iter().zip(r0.iter()) {
                assert!((a - ratio * b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn timestamp_out_of_range() {
        let cfg = small();
        let ps = sample_paths(&cfg, &mut RngStream::new(1));
        assert!(channel_at(&cfg, &ps, cfg.n_timestamps).is_err());
    }

    #[test]
    fn reproducible_given_seed() {
        let cfg = small();
        assert_eq!(generate_series(&cfg).unwrap(), generate_series(&cfg).unwrap());
        let other = ChannelConfig { seed: 99, ..small() };
        assert_ne!(generate_series(&cfg).unwrap(), generate_series(&other).unwrap());
    }

    #[test]
    fn oversized_series_is_resource_error() {
        let cfg = ChannelConfig {
            n_timestamps: MAX_SERIES_ELEMENTS,
            ..ChannelConfig::full_scale()
        };
        assert!(matches!(generate_series(&cfg), Err(Error::Resource(_))));
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = ChannelConfig { n_paths: 0, ..small() };
        assert!(matches!(generate_series(&cfg), Err(Error::Config { .. })));
    }
}
