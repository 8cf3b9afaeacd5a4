use nalgebra::{Matrix3, Rotation3, Vector3};

use super::SelectedBundle;
use crate::camera::CameraIntrinsics;
use crate::error::{Error, Result};

/// Geodesic angle of a rotation matrix, degrees.
pub fn rotation_angle_deg(r: &Matrix3<f64>) -> f64 {
    let s = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]).norm() * 0.5;
    let c = (r.trace() - 1.0) * 0.5;
    s.atan2(c).to_degrees()
}

/// World-to-camera rotation aligning world bearings from `center` to the
/// ray origins with camera bearings through the matched pixels, by weighted
/// orthogonal Procrustes.
pub fn estimate_rotation(center: &Vector3<f64>, bundle: &SelectedBundle, k: &CameraIntrinsics) -> Result<Rotation3<f64>> {
    if bundle.len() < 3 {
        return Err(Error::RotationDegenerate(format!("{} bearing pairs, need 3", bundle.len())));
    }
    let mut h = Matrix3::zeros();
    for ((r, w), px) in bundle.rays.iter().zip(&bundle.weights).zip(&bundle.matched_pixels) {
        let world = r.origin - center;
        let norm = world.norm();
        if norm < 1e-12 {
            continue;
        }
        let cam = k.bearing(px).into_inner();
        h += *w * cam * (world / norm).transpose();
    }
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if !(sv[1] > 1e-9 * sv[0].max(f64::MIN_POSITIVE)) {
        return Err(Error::RotationDegenerate(format!(
            "bearing cross-covariance has rank < 2 (singular values {sv:?})"
        )));
    }
    let d = (u * v_t).determinant().signum();
    let r = u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * v_t;
    Ok(Rotation3::from_matrix_unchecked(r))
}
