use nalgebra::{Vector2, Vector3};

use super::{FeatureMap, ScoreVector};
use crate::camera::{CameraIntrinsics, Pose};
use crate::ellicell::Ray;
use crate::error::{Error, Result};

/// Distance from `center` to the ray's forward half-line.
pub fn ray_distance(ray: &Ray, center: &Vector3<f64>) -> f64 {
    let l = (center - ray.origin).dot(&ray.direction).max(0.0);
    (ray.origin + l * ray.direction - center).norm()
}

/// Supervision targets: `δ_j = 1 − tanh(h_j/λ)` normalized so the scores
/// sum to `pixels`. Falls back to uniform scores, flagged, when every `δ`
/// underflows.
pub fn gt_scores(rays: &[Ray], center: &Vector3<f64>, lambda: f64, pixels: usize) -> Result<ScoreVector> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!("λ must be positive, got {lambda}")));
    }
    if rays.is_empty() {
        return Err(Error::InsufficientBundle("no rays to score".into()));
    }
    let delta: Vec<f64> = rays
        .iter()
        .map(|r| 1.0 - (ray_distance(r, center) / lambda).tanh())
        .collect();
    let total: f64 = delta.iter().sum();
    let m = pixels as f64;
    if !(total > 0.0) || !total.is_finite() {
        let mut s = ScoreVector::new(vec![m / rays.len() as f64; rays.len()]);
        s.uniform_fallback = true;
        return Ok(s);
    }
    Ok(ScoreVector::new(delta.iter().map(|d| d * m / total).collect()))
}

/// Test-time stand-in for the learned scorer: the supervision targets for
/// the known pose.
pub fn oracle_scorer(rays: &[Ray], gt_pose: &Pose, lambda: f64, pixels: usize) -> Result<ScoreVector> {
    gt_scores(rays, &gt_pose.center, lambda, pixels)
}

/// Image position the oracle binds a ray to: the projection of its origin
/// under the true pose, snapped to the center of its feature cell. Origins
/// behind the camera map to the principal point.
pub fn oracle_pixel(ray: &Ray, gt_pose: &Pose, k: &CameraIntrinsics, grid: &FeatureMap) -> Vector2<f64> {
    let p = k
        .project(&gt_pose.world_to_camera(&ray.origin))
        .unwrap_or_else(|| Vector2::new(k.cx, k.cy));
    let (x, y) = grid.cell_center(grid.cell_index(&p));
    Vector2::new(x, y)
}

/// `Σ_j (pred_j − gt_j)² / (M·N)`.
///
/// # Panics
/// If the lengths differ.
pub fn score_loss(pred: &[f64], gt: &[f64], pixels: usize) -> f64 {
    assert_eq!(pred.len(), gt.len(), "score vectors must have equal length");
    let sum: f64 = pred.iter().zip(gt).map(|(p, g)| (p - g).powi(2)).sum();
    sum / (pixels as f64 * pred.len() as f64)
}
