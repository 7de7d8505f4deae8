//! `csipred-ckpt-v1` JSON checkpoints for the codec and the forecasters.
//!
//! ```json
//! {"format":"csipred-ckpt-v1","arch":"stemgnn",
//!  "config":{"config_hash":"…","model":{…}},
//!  "norm_stats":{"mean":[…],"std":[…]},
//!  "params":{"name":{"shape":[r,c],"data":[…]}}}
//! ```
//!
//! Floats are written with 17 significant digits, so a save/load cycle is
//! bit-exact. Parameters are keyed by name in sorted order, which makes the
//! bytes a pure function of the model.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use serde::ser::Error as _;
use serde::{Deserialize, Serialize, Serializer};
use serde_json::value::RawValue;
use serde_json::Value;

use crate::codec::{CodecModel, CodecShape};
use crate::dataset::NormStats;
use crate::diff::{Differentiable, ParamSet};
use crate::error::{Error, Result};
use crate::forecast::{Forecaster, ModelConfig, TrainedForecaster};
use crate::numerics::RngStream;

pub const FORMAT: &str = "csipred-ckpt-v1";
pub const CODEC_ARCH: &str = "linear-codec";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointConfig {
    pub config_hash: String,
    pub model: Value,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorData {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub arch: String,
    pub config: CheckpointConfig,
    pub norm_stats: Option<NormStats>,
    pub params: BTreeMap<String, TensorData>,
}

struct F17(f64);

impl Serialize for F17 {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return Err(S::Error::custom(format!("non-finite value {} in checkpoint", self.0)));
        }
        RawValue::from_string(format!("{:.16e}", self.0))
            .map_err(S::Error::custom)?
            .serialize(s)
    }
}

fn f17(v: &[f64]) -> Vec<F17> {
    v.iter().copied().map(F17).collect()
}

#[derive(Serialize)]
struct TensorOut<'a> {
    shape: &'a [usize],
    data: Vec<F17>,
}

#[derive(Serialize)]
struct NormOut {
    mean: Vec<F17>,
    std: Vec<F17>,
}

#[derive(Serialize)]
struct CheckpointOut<'a> {
    format: &'a str,
    arch: &'a str,
    config: &'a CheckpointConfig,
    norm_stats: Option<NormOut>,
    params: BTreeMap<&'a str, TensorOut<'a>>,
}

impl Checkpoint {
    pub fn from_params(
        arch: &str,
        config_hash: &str,
        model_config: &impl Serialize,
        norm: Option<&NormStats>,
        params: &ParamSet,
    ) -> Result<Self> {
        let params = params
            .iter()
            .map(|t| {
                let data: Vec<f64> = t.value.iter().copied().collect();
                (
                    t.name.clone(),
                    TensorData {
                        shape: t.value.shape().to_vec(),
                        data,
                    },
                )
            })
            .collect();
        Ok(Self {
            format: FORMAT.to_string(),
            arch: arch.to_string(),
            config: CheckpointConfig {
                config_hash: config_hash.to_string(),
                model: serde_json::to_value(model_config)?,
            },
            norm_stats: norm.cloned(),
            params,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let out = CheckpointOut {
            format: &self.format,
            arch: &self.arch,
            config: &self.config,
            norm_stats: self.norm_stats.as_ref().map(|n| NormOut {
                mean: f17(&n.mean),
                std: f17(&n.std),
            }),
            params: self
                .params
                .iter()
                .map(|(k, t)| {
                    (
                        k.as_str(),
                        TensorOut {
                            shape: &t.shape,
                            data: f17(&t.data),
                        },
                    )
                })
                .collect(),
        };
        let mut s = serde_json::to_string(&out)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(text)?;
        if ckpt.format != FORMAT {
            return Err(Error::Format(format!("checkpoint format '{}', expected '{FORMAT}'", ckpt.format)));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn expect_hash(&self, config_hash: &str) -> Result<()> {
        if self.config.config_hash != config_hash {
            return Err(Error::ArtifactMismatch(format!(
                "checkpoint was built under config {}, current config is {config_hash}",
                self.config.config_hash
            )));
        }
        Ok(())
    }

    /// Copies every stored tensor into `params`; names and shapes must match
    /// one to one.
    pub fn restore_params(&self, params: &mut ParamSet) -> Result<()> {
        if self.params.len() != params.len() {
            return Err(Error::Format(format!(
                "checkpoint holds {} tensors, model has {}",
                self.params.len(),
                params.len()
            )));
        }
        for t in params.iter_mut() {
            let stored = self
                .params
                .get(&t.name)
                .ok_or_else(|| Error::Format(format!("checkpoint lacks parameter '{}'", t.name)))?;
            if stored.shape != t.value.shape() {
                return Err(Error::Format(format!(
                    "parameter '{}' has shape {:?}, model expects {:?}",
                    t.name,
                    stored.shape,
                    t.value.shape()
                )));
            }
            t.value = Array2::from_shape_vec(t.value.dim(), stored.data.clone())
                .map_err(|e| Error::Format(format!("parameter '{}': {e}", t.name)))?;
        }
        Ok(())
    }
}

pub fn codec_checkpoint(codec: &CodecModel, config_hash: &str) -> Result<Checkpoint> {
    let norm = codec
        .norm_stats()
        .ok_or_else(|| Error::State("cannot checkpoint an untrained codec".into()))?;
    Checkpoint::from_params(CODEC_ARCH, config_hash, codec.shape(), Some(norm), codec.params())
}

pub fn codec_from_checkpoint(ckpt: &Checkpoint) -> Result<CodecModel> {
    if ckpt.arch != CODEC_ARCH {
        return Err(Error::ArtifactMismatch(format!("expected a {CODEC_ARCH} checkpoint, found '{}'", ckpt.arch)));
    }
    let shape: CodecShape = serde_json::from_value(ckpt.config.model.clone())?;
    let mut codec = CodecModel::new(shape.n_subcarriers, shape.n_tx, shape.n_latent, &mut RngStream::new(0))?;
    ckpt.restore_params(codec.params_mut())?;
    let norm = ckpt
        .norm_stats
        .clone()
        .ok_or_else(|| Error::Format("codec checkpoint lacks norm_stats".into()))?;
    codec.set_norm_stats(norm)?;
    Ok(codec)
}

pub fn forecaster_checkpoint(model: &TrainedForecaster, config_hash: &str) -> Result<Checkpoint> {
    let cfg = model.model.config();
    Checkpoint::from_params(cfg.arch().name(), config_hash, &cfg, Some(&model.norm), model.model.params())
}

pub fn forecaster_from_checkpoint(ckpt: &Checkpoint) -> Result<TrainedForecaster> {
    let cfg: ModelConfig = serde_json::from_value(ckpt.config.model.clone())?;
    if cfg.arch().name() != ckpt.arch {
        return Err(Error::Format(format!(
            "checkpoint arch '{}' disagrees with its config ({})",
            ckpt.arch,
            cfg.arch()
        )));
    }
    let mut model = Forecaster::new(&cfg, &mut RngStream::new(0))?;
    ckpt.restore_params(model.params_mut())?;
    let norm = ckpt
        .norm_stats
        .clone()
        .ok_or_else(|| Error::Format("forecaster checkpoint lacks norm_stats".into()))?;
    if norm.dim() != cfg.shape().0 {
        return Err(Error::Format("norm_stats size does not match the model".into()));
    }
    Ok(TrainedForecaster { model, norm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast::{Arch, ModelOptions};

    fn trained(arch: Arch) -> TrainedForecaster {
        let cfg = ModelConfig::new(arch, 3, 6, 2, &ModelOptions::default());
        let mut rng = RngStream::new(11);
        TrainedForecaster {
            model: Forecaster::new(&cfg, &mut rng).unwrap(),
            norm: NormStats {
                mean: vec![0.1, -1.0 / 3.0, 1e-300],
                std: vec![1.0, std::f64::consts::PI, 2.5e10],
            },
        }
    }

    #[test]
    fn forecaster_round_trip_is_bit_exact() {
        for arch in Arch::ALL {
            let m = trained(arch);
            let text = forecaster_checkpoint(&m, "abc").unwrap().to_json().unwrap();
            let back = forecaster_from_checkpoint(&Checkpoint::from_json(&text).unwrap()).unwrap();
            assert_eq!(back.norm, m.norm);
            for (a, b) in back.model.params().iter().zip(m.model.params().iter()) {
                assert_eq!(a.name, b.name);
                assert!(a.value.iter().zip(b.value.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
            }
            // re-serialising gives identical bytes
            assert_eq!(forecaster_checkpoint(&back, "abc").unwrap().to_json().unwrap(), text);
        }
    }

    #[test]
    fn layout_keys_present() {
        let text = forecaster_checkpoint(&trained(Arch::Lstm), "h1").unwrap().to_json().unwrap();
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["format"], FORMAT);
        assert_eq!(v["arch"], "lstm");
        assert_eq!(v["config"]["config_hash"], "h1");
        assert_eq!(v["params"]["cell.w_x"]["shape"], serde_json::json!([3, 256]));
        assert!(text.contains("3.1415926535897931e0"));
    }

    #[test]
    fn hash_and_arch_mismatch_rejected() {
        let ckpt = forecaster_checkpoint(&trained(Arch::Rnn), "one").unwrap();
        assert!(matches!(ckpt.expect_hash("two"), Err(Error::ArtifactMismatch(_))));
        assert!(codec_from_checkpoint(&ckpt).is_err());
        let mut bad = ckpt.clone();
        bad.arch = "lstm".into();
        assert!(forecaster_from_checkpoint(&bad).is_err());
        let mut missing = ckpt;
        missing.params.remove("head.b");
        assert!(matches!(forecaster_from_checkpoint(&missing), Err(Error::Format(_))));
    }

    #[test]
    fn wrong_format_rejected() {
        let text = forecaster_checkpoint(&trained(Arch::Rnn), "x").unwrap().to_json().unwrap();
        let text = text.replace(FORMAT, "csipred-ckpt-v0");
        assert!(matches!(Checkpoint::from_json(&text), Err(Error::Format(_))));
    }
}
