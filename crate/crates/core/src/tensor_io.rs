//! Little-endian binary tensor container.
//!
//! ```text
//! "CSIT" | u32 version=1 | u8 dtype=0 (f64) | u8 is_complex | u16 ndim
//!        | ndim x u64 dims | f64 payload (interleaved re,im if complex)
//!        | u32 json_len | json metadata
//! ```

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelConfig, ChannelSeries};
use crate::error::{Error, Result};
use crate::numerics::{Complex64, RealMatrix};

pub const MAGIC: &[u8; 4] = b"CSIT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<u64>,
    pub is_complex: bool,
    /// Row-major payload; complex tensors hold interleaved `(re, im)` pairs.
    pub data: Vec<f64>,
    /// Raw JSON metadata blob.
    pub meta: Vec<u8>,
}

impl Tensor {
    fn expected_len(&self) -> Option<usize> {
        let n = self.dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))?;
        n.checked_mul(if self.is_complex { 2 } else { 1 })
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        if self.expected_len() != Some(self.data.len()) {
            return Err(Error::InvalidDimension(format!(
                "payload of {} values does not match dims {:?}",
                self.data.len(),
                self.dims
            )));
        }
        let mut out = Vec::with_capacity(16 + 8 * self.dims.len() + 8 * self.data.len() + 4 + self.meta.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(0u8);
        out.push(u8::from(self.is_complex));
        out.extend_from_slice(&(self.dims.len() as u16).to_le_bytes());
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(self.meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.meta);
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Tensor> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("bad magic, expected CSIT".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                supported: VERSION,
            });
        }
        let dtype = r.take(1)?[0];
        if dtype != 0 {
            return Err(Error::Format(format!("unsupported dtype code {dtype}")));
        }
        let is_complex = match r.take(1)?[0] {
            0 => false,
            1 => true,
            other => return Err(Error::Format(format!("invalid is_complex flag {other}"))),
        };
        let ndim = r.u16()? as usize;
        let dims = (0..ndim).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
        let mut t = Tensor {
            dims,
            is_complex,
            data: Vec::new(),
            meta: Vec::new(),
        };
        let n = t
            .expected_len()
            .ok_or_else(|| Error::Format("tensor dimensions overflow".into()))?;
        if n > (bytes.len() - r.pos) / 8 {
            return Err(Error::Format("truncated payload".into()));
        }
        t.data = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let meta_len = r.u32()? as usize;
        t.meta = r.take(meta_len)?.to_vec();
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(t)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.encode()?)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Tensor> {
        Tensor::decode(&fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Format(format!("truncated file at byte {}", self.pos))),
        }
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Channel tensor metadata: the bare config, or the config plus the hash of
/// the experiment that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum ChannelMeta {
    Tagged { config_hash: String, channel: ChannelConfig },
    Plain(ChannelConfig),
}

impl ChannelSeries {
    pub fn to_tensor(&self) -> Result<Tensor> {
        self.to_tensor_with(None)
    }

    fn to_tensor_with(&self, config_hash: Option<&str>) -> Result<Tensor> {
        let cfg = &self.config;
        let mut data = Vec::with_capacity(self.frames.len() * cfg.flat_len());
        for f in &self.frames {
            for z in f.iter() {
                data.push(z.re);
                data.push(z.im);
            }
        }
        Ok(Tensor {
            dims: vec![self.frames.len() as u64, cfg.n_subcarriers as u64, cfg.n_tx() as u64],
            is_complex: true,
            data,
            meta: match config_hash {
                Some(h) => serde_json::to_vec(&ChannelMeta::Tagged {
                    config_hash: h.to_string(),
                    channel: cfg.clone(),
                })?,
                None => serde_json::to_vec(cfg)?,
            },
        })
    }

    pub fn from_tensor(t: &Tensor) -> Result<ChannelSeries> {
        Ok(Self::from_tensor_tagged(t)?.0)
    }

    /// Decodes a channel tensor and the config hash it was tagged with, if any.
    pub fn from_tensor_tagged(t: &Tensor) -> Result<(ChannelSeries, Option<String>)> {
        if !t.is_complex || t.dims.len() != 3 {
            return Err(Error::Format("channel series must be a complex 3-d tensor".into()));
        }
        let (config, hash) = match serde_json::from_slice(&t.meta)? {
            ChannelMeta::Tagged { config_hash, channel } => (channel, Some(config_hash)),
            ChannelMeta::Plain(c) => (c, None),
        };
        let (n_t, n_c, n_tx) = (t.dims[0] as usize, t.dims[1] as usize, t.dims[2] as usize);
        if n_c != config.n_subcarriers || n_tx != config.n_tx() {
            return Err(Error::Format("tensor dims disagree with embedded channel config".into()));
        }
        let per = 2 * n_c * n_tx;
        if t.data.len() != n_t * per {
            return Err(Error::Format("tensor payload does not match its dims".into()));
        }
        let frames = (0..n_t)
            .map(|i| {
                let chunk = &t.data[i * per..(i + 1) * per];
                Array2::from_shape_fn((n_c, n_tx), |(r, c)| {
                    let k = 2 * (r * n_tx + c);
                    Complex64::new(chunk[k], chunk[k + 1])
                })
            })
            .collect();
        Ok((ChannelSeries { config, frames }, hash))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_tensor()?.write(path)
    }

    pub fn save_tagged(&self, path: impl AsRef<Path>, config_hash: &str) -> Result<()> {
        self.to_tensor_with(Some(config_hash))?.write(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ChannelSeries> {
        ChannelSeries::from_tensor(&Tensor::read(path)?)
    }

    pub fn load_tagged(path: impl AsRef<Path>) -> Result<(ChannelSeries, Option<String>)> {
        ChannelSeries::from_tensor_tagged(&Tensor::read(path)?)
    }
}

/// Provenance stored alongside a compressed series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressedMeta {
    pub config_hash: String,
    pub user: usize,
    pub gamma: f64,
}

/// Encoded CSI `s_t` for `t = 0..T`, stored as a `T x C` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedSeries {
    pub values: RealMatrix,
    pub meta: CompressedMeta,
}

impl CompressedSeries {
    pub fn n_nodes(&self) -> usize {
        self.values.ncols()
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn to_tensor(&self) -> Result<Tensor> {
        Ok(Tensor {
            dims: vec![self.values.nrows() as u64, self.values.ncols() as u64],
            is_complex: false,
            data: self.values.iter().copied().collect(),
            meta: serde_json::to_vec(&self.meta)?,
        })
    }

    pub fn from_tensor(t: &Tensor) -> Result<CompressedSeries> {
        if t.is_complex || t.dims.len() != 2 {
            return Err(Error::Format("compressed series must be a real 2-d tensor".into()));
        }
        let values = Array2::from_shape_vec((t.dims[0] as usize, t.dims[1] as usize), t.data.clone())
            .map_err(|e| Error::Format(e.to_string()))?;
        Ok(CompressedSeries {
            values,
            meta: serde_json::from_slice(&t.meta)?,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_tensor()?.write(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<CompressedSeries> {
        CompressedSeries::from_tensor(&Tensor::read(path)?)
    }
}
