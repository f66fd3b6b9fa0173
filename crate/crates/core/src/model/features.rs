//! External token representations: precomputed per-document feature
//! matrices and pretrained word vectors.
//!
//! Precomputed feature file layout (all integers little-endian):
//!
//! ```text
//! magic     8 bytes  "SPKFEAT\0"
//! version   u32      1
//! count     u32      number of documents
//! count x {
//!   id_len  u32
//!   id      id_len bytes, UTF-8
//!   rows    u64      document length L
//!   cols    u64      feature width d
//!   values  rows*cols f64, row-major
//! }
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const FEATURE_MAGIC: &[u8; 8] = b"SPKFEAT\0";
pub const FEATURE_VERSION: u32 = 1;

/// Precomputed `L x d` token features keyed by document id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureStore {
    docs: BTreeMap<String, Tensor>,
}

impl FeatureStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: impl Into<String>, features: Tensor) {
        self.docs.insert(id.into(), features);
    }

    pub fn get(&self, id: &str) -> Option<&Tensor> {
        self.docs.get(id)
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(FEATURE_MAGIC);
        out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.docs.len() as u32).to_le_bytes());
        for (id, t) in &self.docs {
            out.extend_from_slice(&(id.len() as u32).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
            out.extend_from_slice(&(t.rows() as u64).to_le_bytes());
            out.extend_from_slice(&(t.cols() as u64).to_le_bytes());
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Data(format!("feature file: {m}"));
        let mut magic = [0u8; 8];
        bytes
            .read_exact(&mut magic)
            .map_err(|_| bad("truncated header"))?;
        if &magic != FEATURE_MAGIC {
            return Err(bad("bad magic"));
        }
        let version = read_u32(&mut bytes).ok_or_else(|| bad("truncated header"))?;
        if version != FEATURE_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let count = read_u32(&mut bytes).ok_or_else(|| bad("truncated header"))?;
        let mut store = FeatureStore::new();
        for _ in 0..count {
            let id_len = read_u32(&mut bytes).ok_or_else(|| bad("truncated record"))? as usize;
            if bytes.len() < id_len {
                return Err(bad("truncated id"));
            }
            let (id, rest) = bytes.split_at(id_len);
            let id = std::str::from_utf8(id)
                .map_err(|_| bad("id is not UTF-8"))?
                .to_string();
            bytes = rest;
            let rows = read_u64(&mut bytes).ok_or_else(|| bad("truncated shape"))? as usize;
            let cols = read_u64(&mut bytes).ok_or_else(|| bad("truncated shape"))? as usize;
            let n = rows
                .checked_mul(cols)
                .ok_or_else(|| bad("shape overflow"))?;
            if bytes.len() < n * 8 {
                return Err(bad(&format!("truncated values for {id:?}")));
            }
            let (vals, rest) = bytes.split_at(n * 8);
            let data = vals
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            bytes = rest;
            store.insert(id, Tensor::from_vec(rows, cols, data)?);
        }
        Ok(store)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::File::create(path)
            .and_then(|mut f| f.write_all(&self.to_bytes()))
            .map_err(|e| Error::io(path, e))
    }
}

pub(crate) fn read_u32(bytes: &mut &[u8]) -> Option<u32> {
    let mut b = [0u8; 4];
    bytes.read_exact(&mut b).ok()?;
    Some(u32::from_le_bytes(b))
}

pub(crate) fn read_u64(bytes: &mut &[u8]) -> Option<u64> {
    let mut b = [0u8; 8];
    bytes.read_exact(&mut b).ok()?;
    Some(u64::from_le_bytes(b))
}

/// Reads word vectors in the text format `word v1 v2 ... vd`, one word per
/// line. A leading `count dim` header line is skipped. Every vector must
/// have exactly `dim` components.
pub fn load_word_vectors(path: impl AsRef<Path>, dim: usize) -> Result<HashMap<String, Vec<f64>>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = HashMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut fields = line.split_whitespace();
        let Some(word) = fields.next() else { continue };
        let values: std::result::Result<Vec<f64>, _> = fields.map(str::parse).collect();
        let schema = |message: String| Error::Schema {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let values = values.map_err(|e| schema(format!("bad number: {e}")))?;
        if i == 0 && values.len() == 1 && word.parse::<usize>().is_ok() {
            continue;
        }
        if values.len() != dim {
            return Err(schema(format!(
                "vector for {word:?} has {} components, expected {dim}",
                values.len()
            )));
        }
        out.insert(word.to_lowercase(), values);
    }
    Ok(out)
}
