//! Per-model ray and query tables stored next to the weights, so that
//! estimation only has to run the attention step.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sixdgs_core::ellicell::{read_rays, write_rays, CellConfig, RaySet};
use sixdgs_core::pipeline::{model_rays, ray_queries, Estimator, DEFAULT_NEIGHBORS};
use sixdgs_core::scoring::ScorerWeights;
use sixdgs_core::{Error, GaussianCloud};

const QUERIES_MAGIC: &[u8; 8] = b"6DGSQRY1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheKey {
    pub model_sha256: String,
    pub weights_sha256: String,
    pub g_cells: usize,
    pub neighbors: usize,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

struct CachePaths {
    key: PathBuf,
    rays: PathBuf,
    queries: PathBuf,
}

fn paths(weights: &Path) -> CachePaths {
    let stem = weights.file_stem().and_then(|s| s.to_str()).unwrap_or("weights");
    let dir = weights.parent().unwrap_or(Path::new("."));
    CachePaths {
        key: dir.join(format!("{stem}.cache.json")),
        rays: dir.join(format!("{stem}.rays")),
        queries: dir.join(format!("{stem}.queries")),
    }
}

/// Rays exactly as stored on disk (f32), so cached and fresh runs agree.
pub fn stored_rays(cloud: &GaussianCloud, g_cells: usize) -> Result<(RaySet, Vec<u8>)> {
    let cells = CellConfig {
        cells: g_cells,
        ..Default::default()
    };
    let set = model_rays(cloud, &cells, DEFAULT_NEIGHBORS)?;
    let mut bytes = Vec::new();
    write_rays(&mut bytes, &set.rays)?;
    let set = RaySet::new(read_rays(&bytes)?, cloud.len())?;
    Ok((set, bytes))
}

fn queries_to_bytes(q: &Array2<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * q.len());
    out.extend_from_slice(QUERIES_MAGIC);
    out.extend_from_slice(&(q.nrows() as u32).to_le_bytes());
    out.extend_from_slice(&(q.ncols() as u32).to_le_bytes());
    for v in q.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn queries_from_bytes(b: &[u8]) -> Option<Array2<f32>> {
    if b.len() < 16 || &b[..8] != QUERIES_MAGIC {
        return None;
    }
    let n = u32::from_le_bytes(b[8..12].try_into().ok()?) as usize;
    let c = u32::from_le_bytes(b[12..16].try_into().ok()?) as usize;
    if b.len() != 16 + 4 * n * c {
        return None;
    }
    let data = b[16..].chunks_exact(4).map(|x| f32::from_le_bytes(x.try_into().unwrap())).collect();
    Array2::from_shape_vec((n, c), data).ok()
}

fn try_load(p: &CachePaths, key: &CacheKey, sources: usize) -> Option<(RaySet, Array2<f32>)> {
    let stored: CacheKey = serde_json::from_slice(&std::fs::read(&p.key).ok()?).ok()?;
    if &stored != key {
        return None;
    }
    let rays = RaySet::new(read_rays(&std::fs::read(&p.rays).ok()?).ok()?, sources).ok()?;
    let queries = queries_from_bytes(&std::fs::read(&p.queries).ok()?)?;
    (queries.nrows() == rays.len()).then_some((rays, queries))
}

/// Loads the cached tables for this model and weights, rebuilding and
/// rewriting them when missing or stale.
pub fn estimator(
    cloud: &GaussianCloud,
    model_sha256: &str,
    weights_path: &Path,
    weights: ScorerWeights<f32>,
    g_cells: usize,
) -> Result<Estimator> {
    let key = CacheKey {
        model_sha256: model_sha256.to_string(),
        weights_sha256: sha256_file(weights_path)?,
        g_cells,
        neighbors: DEFAULT_NEIGHBORS,
    };
    let p = paths(weights_path);
    if let Some((rays, queries)) = try_load(&p, &key, cloud.len()) {
        log::debug!("using ray cache {}", p.rays.display());
        return Ok(Estimator::from_parts(weights, rays, queries)?);
    }
    log::info!("building ray cache for {} ellipsoids", cloud.len());
    let (rays, ray_bytes) = stored_rays(cloud, g_cells)?;
    let queries = ray_queries(&weights, &rays)?;
    let write = || -> std::io::Result<()> {
        std::fs::write(&p.rays, &ray_bytes)?;
        std::fs::write(&p.queries, queries_to_bytes(&queries))?;
        std::fs::write(&p.key, serde_json::to_vec_pretty(&key)?)
    };
    if let Err(e) = write() {
        log::warn!("could not write ray cache next to {}: {e}", weights_path.display());
    }
    Estimator::from_parts(weights, rays, queries).context("assembling estimator")
}
