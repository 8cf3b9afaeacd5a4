//! Pinhole intrinsics and camera extrinsics.
//!
//! Camera frame convention: +x right, +y down, +z along the optical axis.
//! Pixel coordinates are continuous with pixel `(u, v)` centered at `(u, v)`.

use nalgebra::{Matrix3, Matrix4, Rotation3, Unit, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let k = CameraIntrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    /// Square-pixel camera with the principal point at the image center.
    pub fn from_fov(width: u32, height: u32, fov_x_rad: f64) -> Result<Self> {
        if !(fov_x_rad > 0.0 && fov_x_rad < std::f64::consts::PI) {
            return Err(Error::Config(format!("horizontal fov {fov_x_rad} rad out of (0, pi)")));
        }
        let f = 0.5 * width as f64 / (0.5 * fov_x_rad).tan();
        Self::new(f, f, 0.5 * width as f64, 0.5 * height as f64, width, height)
    }

    pub fn validate(&self) -> Result<()> {
        let (w, h) = (self.width as f64, self.height as f64);
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::Config(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if !(self.cx > 0.0 && self.cx < w && self.cy > 0.0 && self.cy < h) {
            return Err(Error::Config(format!(
                "principal point ({}, {}) outside the {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Projects a camera-frame point; `None` when it is not in front of the camera.
    pub fn project(&self, p_cam: &Vector3<f64>) -> Option<Vector2<f64>> {
        if p_cam.z <= 1e-6 {
            return None;
        }
        Some(Vector2::new(
            self.fx * p_cam.x / p_cam.z + self.cx,
            self.fy * p_cam.y / p_cam.z + self.cy,
        ))
    }

    /// Unit camera-frame bearing through a pixel, `normalize(K⁻¹ (p, 1))`.
    pub fn bearing(&self, pixel: &Vector2<f64>) -> Unit<Vector3<f64>> {
        Unit::new_normalize(Vector3::new(
            (pixel.x - self.cx) / self.fx,
            (pixel.y - self.cy) / self.fy,
            1.0,
        ))
    }

    /// Same camera for an image resized by `factor` in both directions.
    pub fn scaled(&self, factor: f64) -> Self {
        CameraIntrinsics {
            fx: self.fx * factor,
            fy: self.fy * factor,
            cx: self.cx * factor,
            cy: self.cy * factor,
            width: (self.width as f64 * factor).round() as u32,
            height: (self.height as f64 * factor).round() as u32,
        }
    }
}

/// Camera extrinsics: world→camera rotation and the camera center in world
/// coordinates, so `p_cam = R (p_world − center)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: Rotation3<f64>,
    pub center: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, center: Vector3<f64>) -> Result<Self> {
        let orth = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        let det = rotation.determinant();
        if orth > 1e-6 || (det - 1.0).abs() > 1e-6 {
            return Err(Error::Domain(format!(
                "rotation is not a proper orthonormal matrix (|RᵀR − I| = {orth:.2e}, det = {det})"
            )));
        }
        Ok(Pose {
            rotation: Rotation3::from_matrix_unchecked(rotation),
            center,
        })
    }

    pub fn from_rotation(rotation: Rotation3<f64>, center: Vector3<f64>) -> Self {
        Pose { rotation, center }
    }

    /// Camera at `eye` looking at `target`; `up` fixes the roll (image −y
    /// points as close to `up` as possible).
    pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>) -> Result<Self> {
        let forward = target - eye;
        if forward.norm() < 1e-12 {
            return Err(Error::Domain("look_at: eye coincides with target".into()));
        }
        let z = forward.normalize();
        let x = z.cross(&up);
        if x.norm() < 1e-9 {
            return Err(Error::Domain("look_at: up vector parallel to view direction".into()));
        }
        let x = x.normalize();
        let y = z.cross(&x);
        let r = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        Ok(Pose {
            rotation: Rotation3::from_matrix_unchecked(r),
            center: eye,
        })
    }

    pub fn world_to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * (p - self.center)
    }

    /// Translation `t = −R·center` of the `[R | t]` form.
    pub fn translation(&self) -> Vector3<f64> {
        -(self.rotation * self.center)
    }

    /// 4×4 camera-to-world matrix in this crate's camera convention.
    pub fn camera_to_world(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        let rt = self.rotation.inverse();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(rt.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.center);
        m
    }

    pub fn from_camera_to_world(m: &Matrix4<f64>) -> Result<Self> {
        let r_cw: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
        let center: Vector3<f64> = m.fixed_view::<3, 1>(0, 3).into_owned();
        Pose::new(r_cw.transpose(), center)
    }

    /// Unit optical axis in world coordinates.
    pub fn optical_axis(&self) -> Vector3<f64> {
        self.rotation.inverse() * Vector3::z()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn intrinsics_reject_bad_principal_point() {
        assert!(CameraIntrinsics::new(100.0, 100.0, 0.0, 10.0, 64, 64).is_err());
        assert!(CameraIntrinsics::new(100.0, 100.0, 32.0, 70.0, 64, 64).is_err());
        assert!(CameraIntrinsics::new(-1.0, 100.0, 32.0, 32.0, 64, 64).is_err());
    }

    #[test]
    fn look_at_puts_target_on_axis() {
        let pose = Pose::look_at(
            Vector3::new(1.0, 2.0, 3.0),
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::z(),
        )
        .unwrap();
        let p = pose.world_to_camera(&Vector3::zeros());
        assert_relative_eq!(p.x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(p.y, 0.0, epsilon = 1e-12);
        assert!(p.z > 0.0);
        let k = CameraIntrinsics::from_fov(64, 48, 1.0).unwrap();
        let y = k.project(&p).unwrap();
        assert_relative_eq!(y, Vector2::new(32.0, 24.0), epsilon = 1e-12);
    }

    #[test]
    fn camera_to_world_round_trip() {
        let pose = Pose::look_at(
            Vector3::new(-0.3, 1.2, 0.4),
            Vector3::new(0.1, 0.0, 0.0),
            Vector3::z(),
        )
        .unwrap();
        let back = Pose::from_camera_to_world(&pose.camera_to_world()).unwrap();
        assert_relative_eq!(back.rotation.matrix(), pose.rotation.matrix(), epsilon = 1e-12);
        assert_relative_eq!(back.center, pose.center, epsilon = 1e-12);
    }

    #[test]
    fn pose_rejects_reflection() {
        let r = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(Pose::new(r, Vector3::zeros()).is_err());
    }

    #[test]
    fn bearing_inverts_projection() {
        let k = CameraIntrinsics::new(120.0, 110.0, 40.0, 30.0, 80, 60).unwrap();
        let p = Vector3::new(0.3, -0.2, 2.0);
        let px = k.project(&p).unwrap();
        assert_relative_eq!(k.bearing(&px).into_inner(), p.normalize(), epsilon = 1e-12);
    }
}
