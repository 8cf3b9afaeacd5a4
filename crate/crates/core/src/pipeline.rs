//! End-to-end estimation against one model: learned scorer or oracle.

use nalgebra::Vector2;
use ndarray::Array2;

use crate::camera::{CameraIntrinsics, Pose};
use crate::ellicell::{estimate_normals, CellConfig, RaySet};
use crate::error::{Error, Result};
use crate::gaussian::GaussianCloud;
use crate::scoring::{encode_rays, fast_attention, oracle_pixel, oracle_scorer, FeatureMap, ScoreVector, ScorerWeights};
use crate::solver::{estimate_pose, PoseEstimate};

/// Neighbors used for normal estimation unless configured otherwise.
pub const DEFAULT_NEIGHBORS: usize = 16;
/// Rays featurized per batch when precomputing queries.
const QUERY_BATCH: usize = 16_384;

/// Normals from at most `k` neighbors, fewer on tiny models.
pub fn model_rays(cloud: &GaussianCloud, cells: &CellConfig, k: usize) -> Result<RaySet> {
    let k = k.min(cloud.len().saturating_sub(1)).max(3);
    let normals = estimate_normals(cloud, k)?;
    RaySet::build(cloud, cells, &normals)
}

/// Projected ray queries `ψ(v)·W_q`, one row per ray.
pub fn ray_queries(weights: &ScorerWeights<f32>, rays: &RaySet) -> Result<Array2<f32>> {
    weights.validate()?;
    let c = weights.channels();
    let mut out = Array2::zeros((rays.len(), c));
    for (start, chunk) in (0..rays.len()).step_by(QUERY_BATCH).zip(rays.rays.chunks(QUERY_BATCH)) {
        let v = weights.featurize(encode_rays(chunk.iter(), weights.frequencies));
        out.slice_mut(ndarray::s![start..start + chunk.len(), ..]).assign(&v.dot(&weights.query));
    }
    Ok(out)
}

/// Everything image-independent about estimating poses with trained weights.
pub struct Estimator {
    pub rays: RaySet,
    pub queries: Array2<f32>,
    pub weights: ScorerWeights<f32>,
}

impl Estimator {
    pub fn new(weights: ScorerWeights<f32>, rays: RaySet) -> Result<Self> {
        let queries = ray_queries(&weights, &rays)?;
        Self::from_parts(weights, rays, queries)
    }

    pub fn from_parts(weights: ScorerWeights<f32>, rays: RaySet, queries: Array2<f32>) -> Result<Self> {
        if queries.dim() != (rays.len(), weights.channels()) {
            return Err(Error::Weights(format!(
                "query table is {:?}, expected ({}, {})",
                queries.dim(),
                rays.len(),
                weights.channels()
            )));
        }
        Ok(Estimator { rays, queries, weights })
    }

    /// Scores all rays against `features` and solves for the pose.
    pub fn estimate(&self, features: &FeatureMap, k: &CameraIntrinsics, n_top: usize) -> Result<PoseEstimate> {
        check_features(features, k)?;
        if features.channels != self.weights.channels() {
            return Err(Error::Weights(format!(
                "features have {} channels, weights expect {}",
                features.channels,
                self.weights.channels()
            )));
        }
        let keys = features.matrix().dot(&self.weights.key);
        let att = fast_attention(&keys.view(), &self.queries.view());
        let scores = ScoreVector::new(att.scores.iter().map(|v| *v as f64).collect());
        let pixel_of = |j: usize| {
            let q = self.queries.row(j).to_vec();
            let (x, y) = features.cell_center(att.argmax_pixel(&keys.view(), &q));
            Vector2::new(x, y)
        };
        estimate_pose(&self.rays.rays, &scores, pixel_of, k, n_top)
    }
}

fn check_features(features: &FeatureMap, k: &CameraIntrinsics) -> Result<()> {
    if features.image_width != k.width || features.image_height != k.height {
        return Err(Error::Config(format!(
            "features describe a {}x{} image, camera is {}x{}",
            features.image_width, features.image_height, k.width, k.height
        )));
    }
    Ok(())
}

/// Pose from oracle scores and oracle pixel bindings for the known camera.
pub fn oracle_estimate(
    rays: &RaySet,
    gt_pose: &Pose,
    grid: &FeatureMap,
    k: &CameraIntrinsics,
    lambda: f64,
    n_top: usize,
) -> Result<PoseEstimate> {
    check_features(grid, k)?;
    let scores = oracle_scorer(&rays.rays, gt_pose, lambda, grid.pixels())?;
    estimate_pose(
        &rays.rays,
        &scores,
        |j| oracle_pixel(&rays.rays[j], gt_pose, k, grid),
        k,
        n_top,
    )
}
