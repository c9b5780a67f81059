//! Binary model checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "PAMNCKPT"
//! version      u32
//! config_len   u32      followed by that many bytes of config JSON
//! seed         u64
//! best_epoch   u32
//! tensor_count u32
//! per tensor:  name_len u32, name bytes (UTF-8),
//!              rank u32, dims (rank x u32),
//!              payload (product x f32, row-major)
//! ```
//!
//! Values are stored at 32-bit precision; loading reproduces them
//! bit-identically. The embedded config is authoritative: the loaded
//! tensor set must match the parameter layout that config implies.

use std::path::Path;

use crate::error::{PamError, Result};
use crate::model::{ModelConfig, ModelParams};
use crate::tensor::{Real, Tensor};

const MAGIC: &[u8; 8] = b"PAMNCKPT";

/// Current checkpoint format version.
pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything a checkpoint holds.
pub struct LoadedCheckpoint {
    pub params: ModelParams<f32>,
    pub config: ModelConfig,
    pub seed: u64,
    pub best_epoch: u32,
}

/// Serializes parameters and their config. Values are cast to `f32`;
/// a pipeline that trains at `f32` round-trips bit-identically.
pub fn save_checkpoint<T: Real>(
    path: &Path,
    params: &ModelParams<T>,
    config: &ModelConfig,
    seed: u64,
    best_epoch: u32,
) -> Result<()> {
    let bytes = encode(params, config, seed, best_epoch)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

pub(crate) fn encode<T: Real>(
    params: &ModelParams<T>,
    config: &ModelConfig,
    seed: u64,
    best_epoch: u32,
) -> Result<Vec<u8>> {
    let config_json = serde_json::to_vec(config)
        .map_err(|e| PamError::Config(format!("cannot serialize model config: {e}")))?;

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(config_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&config_json);
    out.extend_from_slice(&seed.to_le_bytes());
    out.extend_from_slice(&best_epoch.to_le_bytes());
    out.extend_from_slice(&(params.items().len() as u32).to_le_bytes());
    for p in params.items() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.extend_from_slice(&(p.value.rank() as u32).to_le_bytes());
        for &dim in p.value.shape() {
            out.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        for &v in p.value.data() {
            out.extend_from_slice(&(v.to_f64() as f32).to_le_bytes());
        }
    }
    Ok(out)
}

/// Loads and validates a checkpoint: magic bytes, format version, and
/// agreement between the stored tensors and the parameter layout the
/// embedded config implies.
pub fn load_checkpoint(path: &Path) -> Result<LoadedCheckpoint> {
    let bytes = std::fs::read(path)?;
    decode(&bytes)
}

pub(crate) fn decode(bytes: &[u8]) -> Result<LoadedCheckpoint> {
    let mut r = Reader { bytes, offset: 0 };

    let magic = r.take(8, "magic bytes")?;
    if magic != MAGIC {
        return Err(PamError::Format {
            offset: 0,
            reason: "bad magic bytes (not a checkpoint file)".into(),
        });
    }
    let version = r.u32("format version")?;
    if version != CHECKPOINT_VERSION {
        return Err(PamError::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }

    let config_len = r.u32("config length")? as usize;
    let config_offset = r.offset as u64;
    let config_bytes = r.take(config_len, "config JSON")?;
    let config: ModelConfig = serde_json::from_slice(config_bytes).map_err(|e| {
        PamError::Format {
            offset: config_offset,
            reason: format!("invalid config JSON: {e}"),
        }
    })?;
    let seed = r.u64("seed")?;
    let best_epoch = r.u32("best epoch")?;

    // Rebuild the parameter set the config implies, then overwrite each
    // value from the file. Initialization randomness is irrelevant —
    // every element is replaced — but names and shapes must agree.
    let mut params = ModelParams::<f32>::init(&config, 0)?;
    let tensor_count = r.u32("tensor count")? as usize;
    if tensor_count != params.items().len() {
        return Err(PamError::Format {
            offset: (r.offset - 4) as u64,
            reason: format!(
                "config implies {} tensors but the file holds {tensor_count}",
                params.items().len()
            ),
        });
    }
    let mut seen = Vec::with_capacity(tensor_count);
    for _ in 0..tensor_count {
        let entry_offset = r.offset as u64;
        let name_len = r.u32("tensor name length")? as usize;
        let name_bytes = r.take(name_len, "tensor name")?;
        let name = std::str::from_utf8(name_bytes)
            .map_err(|_| PamError::Format {
                offset: entry_offset,
                reason: "tensor name is not valid UTF-8".into(),
            })?
            .to_string();
        let rank = r.u32("tensor rank")? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32("tensor dimension")? as usize);
        }
        let len: usize = dims.iter().product();
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(r.f32("tensor payload")?);
        }
        let value = Tensor::new(dims, data)?;

        let param = params.by_name_mut(&name).ok_or_else(|| PamError::Format {
            offset: entry_offset,
            reason: format!("tensor `{name}` is not part of the stored config's layout"),
        })?;
        if param.value.shape() != value.shape() {
            return Err(PamError::Format {
                offset: entry_offset,
                reason: format!(
                    "tensor `{name}` has shape {:?} but the config implies {:?}",
                    value.shape(),
                    param.value.shape()
                ),
            });
        }
        param.value = value;
        seen.push(name);
    }
    seen.sort_unstable();
    seen.dedup();
    if seen.len() != tensor_count {
        return Err(PamError::Format {
            offset: r.offset as u64,
            reason: "duplicate tensor names in checkpoint".into(),
        });
    }
    if r.offset != bytes.len() {
        return Err(PamError::Format {
            offset: r.offset as u64,
            reason: format!("{} trailing bytes after the last tensor", bytes.len() - r.offset),
        });
    }

    params.check_finite()?;
    Ok(LoadedCheckpoint {
        params,
        config,
        seed,
        best_epoch,
    })
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.offset.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let slice = &self.bytes[self.offset..end];
                self.offset = end;
                Ok(slice)
            }
            None => Err(PamError::Format {
                offset: self.offset as u64,
                reason: format!("truncated while reading {what}"),
            }),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}
