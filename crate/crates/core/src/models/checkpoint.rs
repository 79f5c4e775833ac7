//! Binary checkpoint format.
//!
//! ```text
//! magic      8 bytes  "HODECKPT"
//! version    u32
//! header     u64 length + JSON {"config": ..., "normalizer": ...}
//! tensors    u32 count, then per tensor:
//!              u32 name length + UTF-8 name, u32 ndim, ndim × u64 dims,
//!              numel × f64 data
//! checksum   u32 CRC-32 of every preceding byte
//! ```
//!
//! All integers and floats are little-endian.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ForecastModel, ModelConfig, ModelError, Normalizer};
use crate::autodiff::Tensor;
use crate::layers::ParamRegistry;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"HODECKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    normalizer: Normalizer,
}

pub fn encode_checkpoint(model: &ForecastModel) -> Vec<u8> {
    let header = serde_json::to_vec(&Header {
        config: model.config.clone(),
        normalizer: model.normalizer.clone(),
    })
    .expect("header serializes");
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&(model.params.len() as u32).to_le_bytes());
    for (name, t) in model.params.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.ndim() as u32).to_le_bytes());
        for d in t.shape() {
            out.extend_from_slice(&(*d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], ModelError> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(ModelError::Corrupt(format!("truncated while reading {what}"))),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn len(&mut self, what: &str) -> Result<usize, ModelError> {
        usize::try_from(self.u64(what)?).map_err(|_| ModelError::Corrupt(format!("{what} overflows")))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ForecastModel, ModelError> {
    if bytes.len() < CHECKPOINT_MAGIC.len() + 8 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(ModelError::Corrupt("missing magic bytes".into()));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(trailer.try_into().unwrap());
    let mut r = Reader { buf: body, pos: 8 };
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(ModelError::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    if crc32fast::hash(body) != stored {
        return Err(ModelError::Corrupt("checksum mismatch".into()));
    }
    let header_len = r.len("header length")?;
    let header: Header = serde_json::from_slice(r.take(header_len, "header")?)
        .map_err(|e| ModelError::Corrupt(format!("header: {e}")))?;
    let count = r.u32("tensor count")?;
    let mut params = ParamRegistry::new();
    for _ in 0..count {
        let name_len = r.u32("name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "name")?)
            .map_err(|_| ModelError::Corrupt("tensor name is not UTF-8".into()))?
            .to_string();
        let ndim = r.u32("ndim")? as usize;
        let shape: Vec<usize> = (0..ndim).map(|_| r.len("dimension")).collect::<Result<_, _>>()?;
        let numel = shape
            .iter()
            .try_fold(1usize, |a, d| a.checked_mul(*d))
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| ModelError::Corrupt(format!("{name}: shape overflows")))?;
        let data = r
            .take(numel, &name)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| ModelError::Corrupt(e.to_string()))?;
        params
            .insert(name, t)
            .map_err(|e| ModelError::Corrupt(e.to_string()))?;
    }
    if r.pos != body.len() {
        return Err(ModelError::Corrupt(format!("{} trailing bytes", body.len() - r.pos)));
    }
    ForecastModel::with_params(header.config, header.normalizer, params)
}

/// Writes atomically: a sibling temp file is renamed over `path`.
pub fn checkpoint_save(model: &ForecastModel, path: &Path) -> Result<(), ModelError> {
    let io = |e: std::io::Error| ModelError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, encode_checkpoint(model)).map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)
}

pub fn checkpoint_load(path: &Path) -> Result<ForecastModel, ModelError> {
    let bytes = std::fs::read(path).map_err(|e| ModelError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    decode_checkpoint(&bytes)
}
