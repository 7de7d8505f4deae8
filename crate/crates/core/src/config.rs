//! Experiment configuration (JSON) and its content hash.
//!
//! ```json
//! {
//!   "channel":    { …every ChannelConfig field… },
//!   "codec":      { "n_latent": 32, "hyper": { "epochs": 100 } },
//!   "forecaster": { "arch": "stemgnn", "window": 12, "horizon": 3,
//!                   "hyper": { "max_epochs": 60 }, "model": { "hidden_dim": 64 } },
//!   "eval":       { "users": 4, "snr": "-10:20:5", "seeds": [1, 2, 3] },
//!   "paths":      { "workdir": "runs/desk" }
//! }
//! ```
//!
//! The codec size may be given as `n_latent` (alias `C`), as `gamma`, or as
//! both if they agree. Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::ChannelConfig;
use crate::codec::CodecHyper;
use crate::error::{Error, Result};
use crate::eval::{parse_snr_grid, TransmissionModel, DEFAULT_SNR_GRID};
use crate::forecast::{Arch, ModelConfig, ModelOptions, TrainHyper};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodecSection {
    #[serde(default, alias = "C", skip_serializing_if = "Option::is_none")]
    pub n_latent: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub hyper: CodecHyper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecasterSection {
    pub arch: Arch,
    pub window: usize,
    pub horizon: usize,
    #[serde(default)]
    pub hyper: TrainHyper,
    #[serde(default)]
    pub model: ModelOptions,
}

fn default_users() -> usize {
    4
}

fn default_snr() -> String {
    DEFAULT_SNR_GRID.to_string()
}

fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    #[serde(default = "default_users")]
    pub users: usize,
    #[serde(default = "default_snr")]
    pub snr: String,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            users: default_users(),
            snr: default_snr(),
            seeds: default_seeds(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    #[serde(default)]
    pub workdir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub channel: ChannelConfig,
    pub codec: CodecSection,
    pub forecaster: ForecasterSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub paths: PathsSection,
}

/// Pulls the offending key out of a serde message such as
/// "unknown field `foo`, expected one of …".
fn key_from_message(msg: &str) -> String {
    msg.split('`').nth(1).unwrap_or("<document>").to_string()
}

impl ExperimentConfig {
    /// Desk-scale defaults: 8 antennas, 8 subcarriers, 2000 frames, `C = 32`.
    pub fn desk_scale() -> Self {
        Self {
            channel: ChannelConfig::desk_scale(),
            codec: CodecSection {
                n_latent: Some(32),
                gamma: None,
                hyper: CodecHyper::default(),
            },
            forecaster: ForecasterSection {
                arch: Arch::StemGnn,
                window: 12,
                horizon: 3,
                hyper: TrainHyper::default(),
                model: ModelOptions::default(),
            },
            eval: EvalSection::default(),
            paths: PathsSection::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| {
            let msg = e.to_string();
            Error::Config {
                key: key_from_message(&msg),
                msg,
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("--config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        self.n_latent()?;
        if self.forecaster.window == 0 {
            return Err(Error::config("forecaster.window", "must be at least 1"));
        }
        if self.forecaster.horizon == 0 {
            return Err(Error::config("forecaster.horizon", "must be at least 1"));
        }
        self.model_config().map(|_| ())?;
        if self.eval.users == 0 || self.eval.users > self.channel.n_tx() {
            return Err(Error::config(
                "eval.users",
                format!("must be in 1..={} (transmit antennas)", self.channel.n_tx()),
            ));
        }
        parse_snr_grid(&self.eval.snr)?;
        if self.eval.seeds.is_empty() {
            return Err(Error::config("eval.seeds", "need at least one seed"));
        }
        Ok(())
    }

    /// Codec width `C`, resolved from `n_latent` and/or `gamma = C/(2·N_c·N_t)`.
    pub fn n_latent(&self) -> Result<usize> {
        let flat = self.channel.flat_len();
        let from_gamma = |g: f64| -> Result<usize> {
            let c = g * flat as f64;
            let rounded = c.round();
            if !(g > 0.0 && g <= 1.0) || (c - rounded).abs() > 1e-9 * flat as f64 {
                return Err(Error::config(
                    "codec.gamma",
                    format!("{g} does not give an integer code length for 2·N_c·N_t = {flat}"),
                ));
            }
            Ok(rounded as usize)
        };
        match (self.codec.n_latent, self.codec.gamma) {
            (None, None) => Err(Error::config("codec.n_latent", "give n_latent (C) or gamma")),
            (Some(c), None) => {
                if c == 0 || c > flat {
                    return Err(Error::config("codec.n_latent", format!("must be in 1..={flat}")));
                }
                Ok(c)
            }
            (None, Some(g)) => from_gamma(g),
            (Some(c), Some(g)) => {
                if from_gamma(g)? != c {
                    return Err(Error::config(
                        "codec.gamma",
                        format!("gamma {g} disagrees with n_latent {c} (expected {})", c as f64 / flat as f64),
                    ));
                }
                Ok(c)
            }
        }
    }

    pub fn gamma(&self) -> Result<f64> {
        Ok(self.n_latent()? as f64 / self.channel.flat_len() as f64)
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        self.model_config_for(self.forecaster.arch, self.forecaster.window, self.forecaster.horizon)
    }

    pub fn model_config_for(&self, arch: Arch, window: usize, horizon: usize) -> Result<ModelConfig> {
        let cfg = ModelConfig::new(arch, self.n_latent()?, window, horizon, &self.forecaster.model);
        match &cfg {
            ModelConfig::StemGnn(c) => c.validate()?,
            ModelConfig::Recurrent(c) => c.validate()?,
        }
        Ok(cfg)
    }

    pub fn transmission(&self) -> Result<TransmissionModel> {
        Ok(TransmissionModel {
            snr_db: parse_snr_grid(&self.eval.snr)?,
            users: self.eval.users,
        })
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form,
    /// ignoring `paths`.
    pub fn hash(&self) -> Result<String> {
        let mut canonical = self.clone();
        canonical.paths = PathsSection::default();
        let digest = Sha256::digest(serde_json::to_vec(&canonical)?);
        Ok(digest.iter().take(8).map(|b| format!("{b:02x}")).collect())
    }
}
