//! Binary checkpoint files.
//!
//! Layout (little endian):
//!
//! ```text
//! "CLID" | u32 version | u64 step | u32 tensor count
//! per tensor: u32 name length | name (UTF-8) | u32 rank | u64 dims[rank] | f32 data
//! u64 JSON length | JSON text
//! u32 CRC32 of every preceding byte
//! ```
//!
//! Tensors are stored as `f32`, so a saved model reloads as its values
//! rounded to single precision. The JSON block carries the training
//! configuration, epoch counter and optional out-of-set thresholds.

use std::path::Path;

use capslid_core::capsnet::{ModelParams, ParamSlot};
use capslid_core::nonclass::ThresholdTable;
use capslid_core::optim::AdamState;
use capslid_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, CapslidError, Result};
use crate::train::TrainConfig;

pub const MAGIC: &[u8; 4] = b"CLID";
pub const FORMAT_VERSION: u32 = 1;

const FIRST_MOMENT_PREFIX: &str = "adam.m.";
const SECOND_MOMENT_PREFIX: &str = "adam.v.";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    /// Optimizer steps taken.
    pub step: u64,
    /// Epochs completed.
    pub epoch: usize,
    pub params: ModelParams,
    pub adam: Option<AdamState>,
    pub config: TrainConfig,
    pub thresholds: Option<ThresholdTable>,
}

/// Standalone JSON form of a threshold table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdJson {
    pub tau: Vec<f64>,
    pub counts: Vec<usize>,
}

impl From<&ThresholdTable> for ThresholdJson {
    fn from(t: &ThresholdTable) -> Self {
        Self { tau: t.tau().to_vec(), counts: t.counts().to_vec() }
    }
}

impl TryFrom<ThresholdJson> for ThresholdTable {
    type Error = capslid_core::Error;

    fn try_from(j: ThresholdJson) -> capslid_core::Result<Self> {
        ThresholdTable::new(j.tau, j.counts)
    }
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    config: TrainConfig,
    epoch: usize,
    thresholds: Option<ThresholdJson>,
}

impl Checkpoint {
    pub fn new(params: ModelParams, config: TrainConfig) -> Self {
        Self { step: 0, epoch: 0, params, adam: None, config, thresholds: None }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut tensors: Vec<(String, &Tensor)> =
            self.params.named().map(|(name, t)| (name.to_owned(), t)).collect();
        if let Some(adam) = &self.adam {
            for (prefix, moments) in [(FIRST_MOMENT_PREFIX, &adam.first), (SECOND_MOMENT_PREFIX, &adam.second)] {
                for (slot, t) in ParamSlot::ALL.iter().zip(moments) {
                    tensors.push((format!("{prefix}{}", slot.name()), t));
                }
            }
        }
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, t) in &tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        let meta = Metadata {
            config: self.config.clone(),
            epoch: self.epoch,
            thresholds: self.thresholds.as_ref().map(ThresholdJson::from),
        };
        let json = serde_json::to_vec(&meta)?;
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let malformed = |m: &str| CapslidError::MalformedCheckpoint(m.to_owned());
        if bytes.len() < 8 || &bytes[..4] != MAGIC {
            return Err(malformed("missing CLID magic"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(CapslidError::VersionMismatch { found: version, expected: FORMAT_VERSION });
        }
        if bytes.len() < 12 {
            return Err(malformed("truncated file"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(CapslidError::ChecksumMismatch { stored, computed });
        }

        let mut r = Reader { buf: body, pos: 8 };
        let step = r.u64()?;
        let count = r.u32()? as usize;
        let mut named = Vec::with_capacity(count);
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| malformed("tensor name is not UTF-8"))?
                .to_owned();
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).ok_or_else(|| malformed("tensor too large"))?;
            let raw = r.take(n.checked_mul(4).ok_or_else(|| malformed("tensor too large"))?)?;
            let data = raw.chunks_exact(4).map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap()))).collect();
            named.push((name, Tensor::new(&shape, data)?));
        }
        let json_len = r.u64()? as usize;
        let meta: Metadata = serde_json::from_slice(r.take(json_len)?)?;
        if r.pos != body.len() {
            return Err(malformed("trailing bytes before checksum"));
        }

        let mut take = |name: String| -> Result<Option<Tensor>> {
            Ok(named.iter().position(|(n, _)| *n == name).map(|i| named.swap_remove(i).1))
        };
        let mut params = Vec::with_capacity(ParamSlot::ALL.len());
        for slot in ParamSlot::ALL {
            params.push(take(slot.name().to_owned())?.ok_or_else(|| malformed(&format!("missing tensor {}", slot.name())))?);
        }
        let params = ModelParams::from_tensors(meta.config.model, params)?;
        let mut first = Vec::new();
        let mut second = Vec::new();
        for slot in ParamSlot::ALL {
            if let Some(m) = take(format!("{FIRST_MOMENT_PREFIX}{}", slot.name()))? {
                first.push(m);
            }
            if let Some(v) = take(format!("{SECOND_MOMENT_PREFIX}{}", slot.name()))? {
                second.push(v);
            }
        }
        let adam = match (first.len(), second.len()) {
            (0, 0) => None,
            (a, b) if a == ParamSlot::ALL.len() && b == a => Some(AdamState { first, second, step }),
            _ => return Err(malformed("incomplete optimizer moments")),
        };
        if let Some((name, _)) = named.first() {
            return Err(malformed(&format!("unknown tensor {name}")));
        }
        Ok(Self {
            step,
            epoch: meta.epoch,
            params,
            adam,
            config: meta.config,
            thresholds: meta.thresholds.map(ThresholdTable::try_from).transpose()?,
        })
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| CapslidError::MalformedCheckpoint("truncated file".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    let bytes = checkpoint.to_bytes()?;
    std::fs::write(path, bytes).map_err(io_err(path))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    Checkpoint::from_bytes(&bytes)
}
