//! Binary checkpoint: 8-byte magic, little-endian `u64` header length, a
//! JSON header, then the parameters as little-endian `f32` in header order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdamParams, Model, NetworkProfile, TensorSpec};
use crate::dataset::write_atomic;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"TOACNN01";

/// Number of trailing epoch losses stored in the header.
pub const LOSS_TAIL: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub epochs: usize,
    pub optimizer: AdamParams,
    pub loss_tail: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub meta: TrainingMeta,
}

#[derive(Serialize, Deserialize)]
struct Header {
    profile: NetworkProfile,
    tensors: Vec<TensorSpec>,
    #[serde(flatten)]
    meta: TrainingMeta,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            profile: self.model.profile().clone(),
            tensors: self.model.profile().tensor_specs(),
            meta: self.meta.clone(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let params = self.model.params();
        let mut out = Vec::with_capacity(16 + json.len() + 4 * params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for v in params {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
        let rest = &bytes[16..];
        let len = usize::try_from(len)
            .ok()
            .filter(|&l| l <= rest.len())
            .ok_or_else(|| Error::Format(format!("truncated checkpoint header ({len} bytes declared)")))?;
        let header: Header = serde_json::from_slice(&rest[..len])
            .map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
        header
            .profile
            .validate()
            .map_err(|e| Error::Format(format!("checkpoint profile: {e}")))?;
        if header.tensors != header.profile.tensor_specs() {
            return Err(Error::Format("checkpoint tensor list does not match its profile".into()));
        }
        let payload = &rest[len..];
        let count = header.profile.param_count();
        if payload.len() != 4 * count {
            return Err(Error::Format(format!(
                "checkpoint payload has {} bytes, expected {}",
                payload.len(),
                4 * count
            )));
        }
        let params: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        if let Some(i) = params.iter().position(|v| !v.is_finite()) {
            return Err(Error::Format(format!("non-finite parameter at index {i}")));
        }
        Ok(Self {
            model: Model::from_params(header.profile, params)?,
            meta: header.meta,
        })
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    write_atomic(path, &ckpt.to_bytes())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}
