use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::network::{Dense, ScorerWeights, HIDDEN_LAYERS};
use crate::error::{Error, Result};

pub const WEIGHTS_MAGIC: &[u8; 8] = b"6DGSWTS1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

/// JSON sidecar describing a weights file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightsManifest {
    pub width: usize,
    pub channels: usize,
    pub frequencies: usize,
    pub seed: u64,
    pub sections: Vec<Section>,
    /// Free-form record of the run that produced the weights.
    #[serde(default)]
    pub config: serde_json::Value,
}

pub fn manifest_path(weights: &Path) -> PathBuf {
    weights.with_extension("json")
}

pub fn weights_to_bytes(w: &ScorerWeights<f32>) -> Vec<u8> {
    let names = w.tensor_names();
    let mut out = Vec::new();
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.extend_from_slice(&(names.len() as u32).to_le_bytes());
    for (name, t) in names.iter().zip(w.tensors()) {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.nrows() as u32).to_le_bytes());
        out.extend_from_slice(&(t.ncols() as u32).to_le_bytes());
        for v in t.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.at.checked_add(n).filter(|e| *e <= self.bytes.len()).ok_or_else(|| {
            Error::Weights(format!(
                "weights truncated: need {} bytes at offset {}, file has {}",
                n,
                self.at,
                self.bytes.len()
            ))
        })?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
}

pub fn weights_from_bytes(bytes: &[u8], frequencies: usize) -> Result<ScorerWeights<f32>> {
    if bytes.len() < 12 || &bytes[..8] != WEIGHTS_MAGIC {
        return Err(Error::Weights("bad magic, not a weights file".into()));
    }
    let mut cur = Cursor { bytes, at: 8 };
    let count = cur.u32()?;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let len = cur.u32()?;
        let name = String::from_utf8(cur.take(len)?.to_vec()).map_err(|_| Error::Weights("section name is not UTF-8".into()))?;
        let (rows, cols) = (cur.u32()?, cur.u32()?);
        let data: Vec<f32> = cur
            .take(rows * cols * 4)?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        tensors.push((name, Array2::from_shape_vec((rows, cols), data).unwrap()));
    }
    if cur.at != bytes.len() {
        return Err(Error::Weights(format!("{} trailing bytes after last section", bytes.len() - cur.at)));
    }
    let expected = 2 * (HIDDEN_LAYERS + 1) + 2;
    if tensors.len() != expected {
        return Err(Error::Weights(format!("expected {expected} sections, found {}", tensors.len())));
    }
    let mut it = tensors.into_iter();
    let mut next = |want: &str| -> Result<Array2<f32>> {
        let (name, t) = it.next().unwrap();
        if name != want {
            return Err(Error::Weights(format!("expected section {want}, found {name}")));
        }
        Ok(t)
    };
    let mut layers = Vec::new();
    for i in 0..=HIDDEN_LAYERS {
        let weight = next(&format!("layer{i}.weight"))?;
        let bias = next(&format!("layer{i}.bias"))?;
        layers.push(Dense {
            weight,
            bias: Array1::from_iter(bias.iter().copied()),
        });
    }
    let query = next("query")?;
    let key = next("key")?;
    let w = ScorerWeights {
        layers,
        query,
        key,
        frequencies,
    };
    w.validate()?;
    Ok(w)
}

pub fn manifest_for(w: &ScorerWeights<f32>, seed: u64, config: serde_json::Value) -> WeightsManifest {
    WeightsManifest {
        width: w.width(),
        channels: w.channels(),
        frequencies: w.frequencies,
        seed,
        sections: w
            .tensor_names()
            .into_iter()
            .zip(w.tensors())
            .map(|(name, t)| Section {
                name,
                rows: t.nrows(),
                cols: t.ncols(),
            })
            .collect(),
        config,
    }
}

/// Writes `path` and its JSON manifest next to it.
pub fn save_weights(path: &Path, w: &ScorerWeights<f32>, manifest: &WeightsManifest) -> Result<()> {
    std::fs::write(path, weights_to_bytes(w)).map_err(|e| Error::io(path, e))?;
    let mp = manifest_path(path);
    let json = serde_json::to_vec_pretty(manifest).expect("manifest serializes");
    std::fs::write(&mp, json).map_err(|e| Error::io(&mp, e))
}

pub fn load_weights(path: &Path) -> Result<(ScorerWeights<f32>, WeightsManifest)> {
    let mp = manifest_path(path);
    let text = std::fs::read(&mp).map_err(|e| Error::io(&mp, e))?;
    let manifest: WeightsManifest =
        serde_json::from_slice(&text).map_err(|e| Error::Weights(format!("{}: {e}", mp.display())))?;
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let w = weights_from_bytes(&bytes, manifest.frequencies)?;
    if w.width() != manifest.width || w.channels() != manifest.channels {
        return Err(Error::Weights(format!(
            "manifest says width {} channels {}, file holds {} and {}",
            manifest.width,
            manifest.channels,
            w.width(),
            w.channels()
        )));
    }
    Ok((w, manifest))
}
