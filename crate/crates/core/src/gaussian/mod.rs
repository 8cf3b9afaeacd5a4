//! 3D Gaussian Splatting model: ellipsoid primitives, scene normalization,
//! the splatting renderer and single-ray color synthesis.

mod ply;
mod raycolor;
mod splat;

pub use ply::{load_ply, read_ply, write_ply, save_ply, SH_C0};
pub use raycolor::{ray_color, RayColorizer, Scratch as RayScratch};
pub use splat::{
    project_ellipsoid, render_image, render_pixel, tau, Ellipse, Image,
    EARLY_EXIT_TRANSMITTANCE, FOOTPRINT_SIGMA,
};

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::Pose;
use crate::error::{Error, Result};
use crate::Rgb;

/// One Gaussian primitive, approximated as an ellipsoid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid {
    pub center: Vector3<f64>,
    pub rotation: UnitQuaternion<f64>,
    /// Positive semi-axis lengths along the rotated local x, y, z axes.
    pub scale: Vector3<f64>,
    pub opacity: f64,
    /// Degree-0 (view independent) color.
    pub color: Rgb,
}

impl Ellipsoid {
    pub fn new(
        center: Vector3<f64>,
        rotation: UnitQuaternion<f64>,
        scale: Vector3<f64>,
        opacity: f64,
        color: Rgb,
    ) -> Result<Self> {
        let e = Ellipsoid {
            center,
            rotation,
            scale,
            opacity,
            color,
        };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        let qn = self.rotation.quaternion().norm();
        if (qn - 1.0).abs() > 1e-6 {
            return Err(Error::Domain(format!("quaternion norm {qn} is not 1")));
        }
        if !self.scale.iter().all(|s| *s > 0.0 && s.is_finite()) {
            return Err(Error::Domain(format!("non-positive scale {:?}", self.scale.as_slice())));
        }
        if !(0.0..=1.0).contains(&self.opacity) {
            return Err(Error::Domain(format!("opacity {} outside [0, 1]", self.opacity)));
        }
        if !self.center.iter().all(|c| c.is_finite()) {
            return Err(Error::Domain("non-finite center".into()));
        }
        Ok(())
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    /// Σ = R·U·Uᵀ·Rᵀ with U = diag(scale).
    pub fn covariance(&self) -> Matrix3<f64> {
        covariance(self)
    }

    /// Σ⁻¹ = R·U⁻²·Rᵀ, formed from the factors rather than by inversion.
    pub fn inverse_covariance(&self) -> Matrix3<f64> {
        let r = self.rotation_matrix();
        let inv = Matrix3::from_diagonal(&self.scale.map(|s| 1.0 / (s * s)));
        r * inv * r.transpose()
    }
}

/// Σ = R·U·Uᵀ·Rᵀ.
pub fn covariance(e: &Ellipsoid) -> Matrix3<f64> {
    let r = e.rotation_matrix();
    let u = Matrix3::from_diagonal(&e.scale);
    let m = r * u;
    let s = m * m.transpose();
    // exact symmetry
    (s + s.transpose()) * 0.5
}

/// The full scene: an ordered, non-empty list of ellipsoids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianCloud {
    pub ellipsoids: Vec<Ellipsoid>,
    /// Factor mapping normalized units back to source units.
    pub scene_scale: f64,
    /// Source-space point that normalized coordinates are centered on.
    pub scene_offset: Vector3<f64>,
}

impl GaussianCloud {
    pub fn new(ellipsoids: Vec<Ellipsoid>) -> Result<Self> {
        if ellipsoids.is_empty() {
            return Err(Error::EmptyModel("cloud has no ellipsoids".into()));
        }
        Ok(GaussianCloud {
            ellipsoids,
            scene_scale: 1.0,
            scene_offset: Vector3::zeros(),
        })
    }

    pub fn len(&self) -> usize {
        self.ellipsoids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ellipsoids.is_empty()
    }

    pub fn centers(&self) -> Vec<Vector3<f64>> {
        self.ellipsoids.iter().map(|e| e.center).collect()
    }

    /// Axis-aligned bounding box of the centers.
    pub fn center_bounds(&self) -> (Vector3<f64>, Vector3<f64>) {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for e in &self.ellipsoids {
            lo = lo.inf(&e.center);
            hi = hi.sup(&e.center);
        }
        (lo, hi)
    }

    /// Maps a source-frame point into this cloud's normalized frame.
    pub fn normalize_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        (p - self.scene_offset) / self.scene_scale
    }

    /// Maps a source-frame camera into this cloud's normalized frame.
    pub fn normalize_pose(&self, pose: &Pose) -> Pose {
        Pose::from_rotation(pose.rotation, self.normalize_point(&pose.center))
    }
}

/// Translates and uniformly rescales the scene so the bounding box of the
/// centers is centered at the origin with largest side 1.
pub fn normalize_scene(cloud: &GaussianCloud) -> Result<GaussianCloud> {
    if cloud.is_empty() {
        return Err(Error::EmptyModel("cannot normalize an empty cloud".into()));
    }
    let (lo, hi) = cloud.center_bounds();
    let extent = (hi - lo).max();
    if !(extent > 0.0) || !extent.is_finite() {
        return Err(Error::DegenerateExtent);
    }
    let mid = (lo + hi) * 0.5;
    let factor = 1.0 / extent;
    let ellipsoids = cloud
        .ellipsoids
        .iter()
        .map(|e| Ellipsoid {
            center: (e.center - mid) * factor,
            scale: e.scale * factor,
            ..e.clone()
        })
        .collect();
    Ok(GaussianCloud {
        ellipsoids,
        scene_scale: cloud.scene_scale * extent,
        scene_offset: cloud.scene_offset + mid * cloud.scene_scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::SymmetricEigen;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ellipsoid(center: Vector3<f64>, rot: UnitQuaternion<f64>, scale: Vector3<f64>) -> Ellipsoid {
        Ellipsoid::new(center, rot, scale, 0.8, Rgb::new(0.2, 0.4, 0.6)).unwrap()
    }

    pub(crate) fn random_ellipsoid(rng: &mut impl Rng) -> Ellipsoid {
        let axis = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let rot = UnitQuaternion::from_scaled_axis(axis * 2.0);
        let scale = Vector3::new(
            rng.random_range(0.05..2.0),
            rng.random_range(0.05..2.0),
            rng.random_range(0.05..2.0),
        );
        let center = Vector3::new(
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
        );
        ellipsoid(center, rot, scale)
    }

    #[test]
    fn covariance_axis_aligned() {
        let e = ellipsoid(Vector3::zeros(), UnitQuaternion::identity(), Vector3::new(1.0, 2.0, 3.0));
        assert_relative_eq!(
            covariance(&e),
            Matrix3::from_diagonal(&Vector3::new(1.0, 4.0, 9.0)),
            epsilon = 1e-15
        );
    }

    #[test]
    fn covariance_quarter_turn_swaps_axes() {
        let rot = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_2);
        let e = ellipsoid(Vector3::zeros(), rot, Vector3::new(1.0, 2.0, 1.0));
        assert_relative_eq!(
            covariance(&e),
            Matrix3::from_diagonal(&Vector3::new(4.0, 1.0, 1.0)),
            epsilon = 1e-12
        );
    }

    #[test]
    fn covariance_eigenvalues_are_squared_scales() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let e = random_ellipsoid(&mut rng);
            let mut eig: Vec<f64> = SymmetricEigen::new(covariance(&e)).eigenvalues.iter().copied().collect();
            let mut sq: Vec<f64> = e.scale.iter().map(|s| s * s).collect();
            eig.sort_by(f64::total_cmp);
            sq.sort_by(f64::total_cmp);
            for (a, b) in eig.iter().zip(&sq) {
                assert!((a - b).abs() < 1e-9, "{eig:?} vs {sq:?}");
            }
            let prod = covariance(&e) * e.inverse_covariance();
            assert_relative_eq!(prod, Matrix3::identity(), epsilon = 1e-8);
        }
    }

    #[test]
    fn ellipsoid_validation() {
        let q = UnitQuaternion::identity();
        assert!(Ellipsoid::new(Vector3::zeros(), q, Vector3::new(1.0, 0.0, 1.0), 0.5, Rgb::zeros()).is_err());
        assert!(Ellipsoid::new(Vector3::zeros(), q, Vector3::new(1.0, 1.0, 1.0), 1.5, Rgb::zeros()).is_err());
    }

    #[test]
    fn normalize_two_points() {
        let q = UnitQuaternion::identity();
        let cloud = GaussianCloud::new(vec![
            ellipsoid(Vector3::zeros(), q, Vector3::repeat(0.2)),
            ellipsoid(Vector3::new(2.0, 0.0, 0.0), q, Vector3::repeat(0.2)),
        ])
        .unwrap();
        let n = normalize_scene(&cloud).unwrap();
        assert_relative_eq!(n.ellipsoids[0].center, Vector3::new(-0.5, 0.0, 0.0));
        assert_relative_eq!(n.ellipsoids[1].center, Vector3::new(0.5, 0.0, 0.0));
        assert_relative_eq!(n.ellipsoids[0].scale, Vector3::repeat(0.1));
        assert_eq!(n.scene_scale, 2.0);
        assert_relative_eq!(n.scene_offset, Vector3::new(1.0, 0.0, 0.0));
        assert_relative_eq!(n.normalize_point(&Vector3::new(2.0, 0.0, 0.0)), Vector3::new(0.5, 0.0, 0.0));
        let pose = Pose::look_at(Vector3::new(1.0, -4.0, 0.0), Vector3::new(1.0, 0.0, 0.0), Vector3::z()).unwrap();
        let np = n.normalize_pose(&pose);
        assert_relative_eq!(np.center, Vector3::new(0.0, -2.0, 0.0));
        assert_eq!(np.rotation, pose.rotation);
    }

    #[test]
    fn normalize_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cloud = GaussianCloud::new((0..50).map(|_| random_ellipsoid(&mut rng)).collect()).unwrap();
        let once = normalize_scene(&cloud).unwrap();
        let (lo, hi) = once.center_bounds();
        assert!(((hi - lo).max() - 1.0).abs() < 1e-9);
        assert!((lo + hi).norm() < 1e-9);
        let twice = normalize_scene(&GaussianCloud { scene_scale: 1.0, ..once.clone() }).unwrap();
        assert!((twice.scene_scale - 1.0).abs() < 1e-12);
        for (a, b) in once.ellipsoids.iter().zip(&twice.ellipsoids) {
            assert!((a.center - b.center).norm() < 1e-12);
            assert!((a.scale - b.scale).norm() < 1e-12);
        }
    }

    #[test]
    fn normalize_rejects_coincident_centers() {
        let q = UnitQuaternion::identity();
        let c = Vector3::new(1.0, 1.0, 1.0);
        let cloud = GaussianCloud::new(vec![ellipsoid(c, q, Vector3::repeat(1.0)); 3]).unwrap();
        assert!(matches!(normalize_scene(&cloud), Err(Error::DegenerateExtent)));
    }

    #[test]
    fn empty_cloud_is_rejected() {
        assert!(matches!(GaussianCloud::new(vec![]), Err(Error::EmptyModel(_))));
    }
}
