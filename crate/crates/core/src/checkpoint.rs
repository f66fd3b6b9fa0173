//! Binary model checkpoints.
//!
//! Layout (integers little-endian):
//!
//! ```text
//! magic        8 bytes  "SPKCKPT\0"
//! version      u32      1
//! header_len   u64
//! header       header_len bytes of UTF-8 JSON:
//!              {"model": ModelConfig, "train": TrainConfig,
//!               "epoch": n, "val_metric": x, "vocab": [words...]}
//! n_tensors    u32
//! n_tensors x {
//!   name_len   u32
//!   name       name_len bytes, UTF-8
//!   ndim       u32      always 2
//!   dims       ndim x u64
//!   values     product(dims) x f64, row-major
//! }
//! ```

use std::fs;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::features::{read_u32, read_u64};
use crate::model::{ModelConfig, SkeModel, Vocab};
use crate::tensor::{ParamStore, Tensor};
use crate::train::TrainConfig;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SPKCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: SkeModel,
    pub train: TrainConfig,
    /// 1-based epoch the parameters come from.
    pub epoch: usize,
    pub val_metric: f64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    train: TrainConfig,
    epoch: usize,
    val_metric: f64,
    vocab: Vec<String>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            model: self.model.config.clone(),
            train: self.train.clone(),
            epoch: self.epoch,
            val_metric: self.val_metric,
            vocab: self.model.vocab.words().to_vec(),
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(self.model.params.len() as u32).to_le_bytes());
        for (name, t) in self.model.params.iter() {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&2u32.to_le_bytes());
            out.extend_from_slice(&(t.rows() as u64).to_le_bytes());
            out.extend_from_slice(&(t.cols() as u64).to_le_bytes());
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        let mut magic = [0u8; 8];
        bytes
            .read_exact(&mut magic)
            .map_err(|_| bad("truncated header"))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(bad("not a checkpoint file (bad magic)"));
        }
        let version = read_u32(&mut bytes).ok_or_else(|| bad("truncated header"))?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "checkpoint format version {version}, this build reads {CHECKPOINT_VERSION}"
            )));
        }
        let header_len = read_u64(&mut bytes).ok_or_else(|| bad("truncated header"))? as usize;
        if bytes.len() < header_len {
            return Err(bad("truncated header"));
        }
        let (header, rest) = bytes.split_at(header_len);
        bytes = rest;
        let header: Header = serde_json::from_slice(header)
            .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
        let count = read_u32(&mut bytes).ok_or_else(|| bad("truncated tensor table"))?;
        let mut params = ParamStore::new();
        for _ in 0..count {
            let name_len = read_u32(&mut bytes).ok_or_else(|| bad("truncated tensor"))? as usize;
            if bytes.len() < name_len {
                return Err(bad("truncated tensor name"));
            }
            let (name, rest) = bytes.split_at(name_len);
            let name = std::str::from_utf8(name)
                .map_err(|_| bad("tensor name is not UTF-8"))?
                .to_string();
            bytes = rest;
            let ndim = read_u32(&mut bytes).ok_or_else(|| bad("truncated tensor"))?;
            if ndim != 2 {
                return Err(Error::Checkpoint(format!(
                    "tensor {name} has {ndim} dims, expected 2"
                )));
            }
            let rows = read_u64(&mut bytes).ok_or_else(|| bad("truncated tensor"))? as usize;
            let cols = read_u64(&mut bytes).ok_or_else(|| bad("truncated tensor"))? as usize;
            let n = rows
                .checked_mul(cols)
                .ok_or_else(|| bad("tensor shape overflow"))?;
            if bytes.len() / 8 < n {
                return Err(Error::Checkpoint(format!("truncated values for {name}")));
            }
            let (vals, rest) = bytes.split_at(n * 8);
            bytes = rest;
            let data = vals
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            if params.find(&name).is_some() {
                return Err(Error::Checkpoint(format!("tensor {name} stored twice")));
            }
            params.add(name, Tensor::from_vec(rows, cols, data)?);
        }
        if !bytes.is_empty() {
            return Err(bad("trailing bytes after tensor table"));
        }
        let vocab = Vocab::from_words(header.vocab)?;
        let model = SkeModel::from_parts(header.model, vocab, params)?;
        Ok(Checkpoint {
            model,
            train: header.train,
            epoch: header.epoch,
            val_metric: header.val_metric,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
