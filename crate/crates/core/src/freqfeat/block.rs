use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{concatenate, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockKind {
    Vector,
    Sequence,
}

/// A named dense matrix with one row per instance.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBlock {
    pub name: String,
    pub matrix: Array2<f64>,
    pub kind: BlockKind,
    /// Column names, in column order. Empty when columns are anonymous.
    pub columns: Vec<String>,
}

impl FeatureBlock {
    pub fn new(name: impl Into<String>, matrix: Array2<f64>, kind: BlockKind) -> Result<Self> {
        let name = name.into();
        if let Some(bad) = matrix.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("block `{name}` contains non-finite value {bad}")));
        }
        Ok(FeatureBlock { name, matrix, kind, columns: Vec::new() })
    }

    pub fn with_columns(mut self, columns: Vec<String>) -> Result<Self> {
        if columns.len() != self.dims() {
            return Err(Error::DimensionMismatch { expected: self.dims(), actual: columns.len() });
        }
        self.columns = columns;
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn dims(&self) -> usize {
        self.matrix.ncols()
    }

    /// Column-wise concatenation of blocks with equal row counts.
    pub fn hstack(name: impl Into<String>, blocks: &[FeatureBlock]) -> Result<Self> {
        let first = blocks.first().ok_or_else(|| Error::EmptyInput("no blocks to stack".into()))?;
        for b in blocks {
            if b.rows() != first.rows() {
                return Err(Error::DimensionMismatch { expected: first.rows(), actual: b.rows() });
            }
        }
        let views: Vec<_> = blocks.iter().map(|b| b.matrix.view()).collect();
        let matrix = concatenate(Axis(1), &views).expect("row counts checked");
        let columns = if blocks.iter().all(|b| b.columns.len() == b.dims()) {
            blocks.iter().flat_map(|b| b.columns.iter().cloned()).collect()
        } else {
            Vec::new()
        };
        Ok(FeatureBlock { name: name.into(), matrix, kind: BlockKind::Vector, columns })
    }
}

const MAGIC: &[u8; 4] = b"SLMX";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Sidecar {
    name: String,
    dims: [usize; 2],
    kind: BlockKind,
    ordering: Vec<String>,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes `path` (little-endian f64 matrix) and `path.json` (name, dims,
/// column ordering).
pub fn save_block(block: &FeatureBlock, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (rows, cols) = block.matrix.dim();
    let mut bytes = Vec::with_capacity(24 + rows * cols * 8);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&(rows as u64).to_le_bytes());
    bytes.extend_from_slice(&(cols as u64).to_le_bytes());
    for v in block.matrix.iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let sidecar = Sidecar {
        name: block.name.clone(),
        dims: [rows, cols],
        kind: block.kind,
        ordering: block.columns.clone(),
    };
    let side = sidecar_path(path);
    fs::write(&side, serde_json::to_vec_pretty(&sidecar)?).map_err(|e| Error::io(&side, e))
}

pub fn load_block(path: impl AsRef<Path>) -> Result<FeatureBlock> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let sidecar: Sidecar = serde_json::from_slice(&fs::read(&side).map_err(|e| Error::io(&side, e))?)?;
    let bad = |reason: &str| Error::invalid(format!("{}: {reason}", path.display()));
    if bytes.len() < 24 || &bytes[..4] != MAGIC {
        return Err(bad("not a feature block container"));
    }
    let word = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"));
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(bad("unsupported container version"));
    }
    let (rows, cols) = (word(8) as usize, word(16) as usize);
    if [rows, cols] != sidecar.dims {
        return Err(bad("sidecar dims disagree with container"));
    }
    if bytes.len() != 24 + rows * cols * 8 {
        return Err(bad("truncated matrix payload"));
    }
    let data = bytes[24..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let matrix = Array2::from_shape_vec((rows, cols), data).expect("length checked");
    let block = FeatureBlock::new(sidecar.name, matrix, sidecar.kind)?;
    if sidecar.ordering.is_empty() {
        Ok(block)
    } else {
        block.with_columns(sidecar.ordering)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_non_finite() {
        assert!(FeatureBlock::new("x", array![[1.0, f64::NAN]], BlockKind::Vector).is_err());
        assert!(FeatureBlock::new("x", array![[f64::INFINITY]], BlockKind::Vector).is_err());
    }

    #[test]
    fn container_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("freq.bin");
        let block = FeatureBlock::new("freq", array![[1.5, -2.0], [0.0, 1e-300]], BlockKind::Vector)
            .unwrap()
            .with_columns(vec!["a".into(), "b".into()])
            .unwrap();
        save_block(&block, &path).unwrap();
        assert_eq!(load_block(&path).unwrap(), block);

        std::fs::write(&path, b"SLMXjunk").unwrap();
        assert!(load_block(&path).is_err());
    }
}
