//! Camera pose from a scored ray bundle: top-ray selection, weighted
//! least-squares center, Procrustes rotation, and error metrics.

mod bundle;
mod rotation;
mod wls;

pub use bundle::{select_top_rays, SelectedBundle};
pub use rotation::{estimate_rotation, rotation_angle_deg};
pub use wls::{intersect_rays_wls, WlsSolution, MIN_EIGENVALUE};

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::{CameraIntrinsics, Pose};
use crate::ellicell::Ray;
use crate::error::Result;
use crate::scoring::ScoreVector;

pub const DEFAULT_N_TOP: usize = 100;
/// Estimates whose bundle residual exceeds this many scene units are flagged.
pub const RESIDUAL_FLAG: f64 = 0.05;
/// Bundle rays closer than this to the estimated center count as inliers.
pub const INLIER_DISTANCE: f64 = 0.05;

#[derive(Clone, Debug, PartialEq)]
pub struct PoseEstimate {
    pub pose: Pose,
    /// RMS weighted perpendicular distance of the bundle to the center.
    pub residual: f64,
    pub inliers: usize,
    pub bundle_size: usize,
    /// Set when the residual is above [`RESIDUAL_FLAG`] or the scores were
    /// an uninformative fallback.
    pub flagged: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseError {
    /// Geodesic rotation error, degrees.
    pub mae: f64,
    /// Center distance, scene units.
    pub mte: f64,
}

/// Serialized form of a pose estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub rotation: [f64; 9],
    pub center: [f64; 3],
    pub residual: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mae: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mte: Option<f64>,
}

impl PoseEstimate {
    pub fn record(&self, error: Option<PoseError>) -> PoseRecord {
        let r = self.pose.rotation.matrix();
        PoseRecord {
            rotation: std::array::from_fn(|i| r[(i / 3, i % 3)]),
            center: self.pose.center.into(),
            residual: self.residual,
            mae: error.map(|e| e.mae),
            mte: error.map(|e| e.mte),
        }
    }
}

impl PoseRecord {
    pub fn pose(&self) -> Result<Pose> {
        let r = Matrix3::from_row_slice(&self.rotation);
        Pose::new(r, Vector3::from(self.center))
    }
}

/// Full solve: select the bundle, intersect it, then align the rotation.
/// `pixel_of(j)` gives the matched image position of ray `j`; it is only
/// evaluated for selected rays.
pub fn estimate_pose(
    rays: &[Ray],
    scores: &ScoreVector,
    pixel_of: impl Fn(usize) -> Vector2<f64>,
    k: &CameraIntrinsics,
    n_top: usize,
) -> Result<PoseEstimate> {
    let bundle = select_top_rays(rays, &scores.values, pixel_of, n_top)?;
    let wls = intersect_rays_wls(&bundle)?;
    let rotation = estimate_rotation(&wls.center, &bundle, k)?;
    let inliers = bundle
        .rays
        .iter()
        .zip(&wls.distances)
        .filter(|(_, d)| **d < INLIER_DISTANCE)
        .count();
    Ok(PoseEstimate {
        pose: Pose::from_rotation(rotation, wls.center),
        residual: wls.residual,
        inliers,
        bundle_size: bundle.len(),
        flagged: scores.uniform_fallback || wls.residual > RESIDUAL_FLAG,
    })
}

pub fn pose_error(est: &Pose, gt: &Pose) -> PoseError {
    let relative = est.rotation.matrix() * gt.rotation.matrix().transpose();
    PoseError {
        mae: rotation_angle_deg(&relative),
        mte: (est.center - gt.center).norm(),
    }
}
