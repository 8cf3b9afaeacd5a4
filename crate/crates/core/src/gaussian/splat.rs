//! Ellipsoid-to-ellipse projection and per-pixel alpha compositing.

use std::path::Path;

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2};
use rayon::prelude::*;

use super::{Ellipsoid, GaussianCloud};
use crate::camera::{CameraIntrinsics, Pose};
use crate::error::{Error, Result};
use crate::Rgb;

/// Footprint radius, in standard deviations, of a splat on the image plane.
pub const FOOTPRINT_SIGMA: f64 = 3.0;
/// Compositing stops once accumulated transmittance drops below this.
pub const EARLY_EXIT_TRANSMITTANCE: f64 = 1e-4;

const MAX_CONDITION: f64 = 1e12;

/// A splatted ellipsoid: 2D Gaussian footprint on the image plane.
#[derive(Clone, Debug, PartialEq)]
pub struct Ellipse {
    pub center: Vector2<f64>,
    pub covariance: Matrix2<f64>,
    pub depth: f64,
    pub color: Rgb,
    pub opacity: f64,
    conic: Matrix2<f64>,
}

impl Ellipse {
    /// Fails with [`Error::SingularEllipse`] when the covariance is not
    /// positive definite or its condition number exceeds 1e12.
    pub fn new(
        center: Vector2<f64>,
        covariance: Matrix2<f64>,
        depth: f64,
        color: Rgb,
        opacity: f64,
    ) -> Result<Self> {
        let cov = (covariance + covariance.transpose()) * 0.5;
        let (lo, hi) = sym2_eigenvalues(&cov);
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if !(condition < MAX_CONDITION) || !lo.is_finite() {
            return Err(Error::SingularEllipse { condition });
        }
        let det = cov.m11 * cov.m22 - cov.m12 * cov.m21;
        let conic = Matrix2::new(cov.m22, -cov.m12, -cov.m21, cov.m11) / det;
        Ok(Ellipse {
            center,
            covariance: cov,
            depth,
            color,
            opacity,
            conic,
        })
    }

    /// Inverse covariance.
    pub fn conic(&self) -> &Matrix2<f64> {
        &self.conic
    }

    /// Half-widths of the axis-aligned box enclosing the footprint.
    pub fn footprint_radius(&self) -> Vector2<f64> {
        Vector2::new(
            FOOTPRINT_SIGMA * self.covariance.m11.sqrt(),
            FOOTPRINT_SIGMA * self.covariance.m22.sqrt(),
        )
    }
}

fn sym2_eigenvalues(m: &Matrix2<f64>) -> (f64, f64) {
    let tr = 0.5 * (m.m11 + m.m22);
    let d = (0.25 * (m.m11 - m.m22).powi(2) + m.m12 * m.m21).max(0.0).sqrt();
    (tr - d, tr + d)
}

/// Light absorption ½·dᵀE⁻¹d with d = p − y.
pub fn tau(ellipse: &Ellipse, p: &Vector2<f64>) -> f64 {
    let d = p - ellipse.center;
    0.5 * (d.transpose() * ellipse.conic * d)[0]
}

/// Splats an ellipsoid with the local affine approximation of the
/// perspective projection at its center. Returns `None` for ellipsoids
/// behind the camera or with a degenerate footprint.
pub fn project_ellipsoid(e: &Ellipsoid, pose: &Pose, k: &CameraIntrinsics) -> Option<Ellipse> {
    let t = pose.world_to_camera(&e.center);
    let y = k.project(&t)?;
    let (x, yy, z) = (t.x, t.y, t.z);
    let jac = Matrix2x3::new(
        k.fx / z,
        0.0,
        -k.fx * x / (z * z),
        0.0,
        k.fy / z,
        -k.fy * yy / (z * z),
    );
    let w = pose.rotation.matrix();
    let m = jac * w;
    let cov2 = m * e.covariance() * m.transpose();
    // Homogeneous ellipse covariance of the affine map; its last row/column
    // carry no spread, so the reduction divides by one.
    let mut homo = Matrix3::zeros();
    homo.fixed_view_mut::<2, 2>(0, 0).copy_from(&cov2);
    homo[(2, 2)] = 1.0;
    let cov = homo.fixed_view::<2, 2>(0, 0) / homo[(2, 2)];
    Ellipse::new(y, cov, z, e.color, e.opacity).ok()
}

/// Front-to-back compositing of depth-sorted splats at one pixel.
pub fn render_pixel(splats: &[Ellipse], p: &Vector2<f64>) -> Rgb {
    debug_assert!(
        splats.windows(2).all(|w| w[0].depth <= w[1].depth),
        "splats must be sorted by ascending depth"
    );
    composite(splats.iter(), p)
}

fn composite<'a>(splats: impl Iterator<Item = &'a Ellipse>, p: &Vector2<f64>) -> Rgb {
    let mut color = Rgb::zeros();
    let mut transmittance = 1.0;
    for s in splats {
        let a = s.opacity * (-tau(s, p)).exp();
        color += s.color * (a * transmittance);
        transmittance *= 1.0 - a;
        if transmittance < EARLY_EXIT_TRANSMITTANCE {
            break;
        }
    }
    color.map(|c| c.clamp(0.0, 1.0))
}

/// Row-major RGB image with channels in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<Rgb>,
}

impl Image {
    pub fn black(width: u32, height: u32) -> Self {
        Image {
            width,
            height,
            pixels: vec![Rgb::zeros(); (width * height) as usize],
        }
    }

    pub fn get(&self, x: u32, y: u32) -> Rgb {
        self.pixels[(y * self.width + x) as usize]
    }

    pub fn to_rgb8(&self) -> image::RgbImage {
        image::RgbImage::from_fn(self.width, self.height, |x, y| {
            let c = self.get(x, y);
            image::Rgb([to_u8(c.x), to_u8(c.y), to_u8(c.z)])
        })
    }

    pub fn from_rgb8(img: &image::RgbImage) -> Self {
        Image {
            width: img.width(),
            height: img.height(),
            pixels: img
                .pixels()
                .map(|p| Rgb::new(p[0] as f64, p[1] as f64, p[2] as f64) / 255.0)
                .collect(),
        }
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.to_rgb8()
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| Error::io(path, std::io::Error::other(e)))
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
            .to_rgb8();
        Ok(Self::from_rgb8(&img))
    }
}

fn to_u8(c: f64) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Renders the cloud; each pixel composites the depth-sorted ellipses whose
/// footprint covers it. Output is independent of thread count.
pub fn render_image(cloud: &GaussianCloud, pose: &Pose, k: &CameraIntrinsics) -> Image {
    let mut splats: Vec<(usize, Ellipse)> = cloud
        .ellipsoids
        .par_iter()
        .enumerate()
        .filter_map(|(i, e)| project_ellipsoid(e, pose, k).map(|s| (i, s)))
        .collect();
    splats.sort_by(|a, b| a.1.depth.total_cmp(&b.1.depth).then(a.0.cmp(&b.0)));
    let splats: Vec<Ellipse> = splats.into_iter().map(|(_, s)| s).collect();
    let bounds: Vec<[f64; 4]> = splats
        .iter()
        .map(|s| {
            let r = s.footprint_radius();
            [s.center.x - r.x, s.center.x + r.x, s.center.y - r.y, s.center.y + r.y]
        })
        .collect();
    let limit = 2.0 * 0.5 * FOOTPRINT_SIGMA * FOOTPRINT_SIGMA;

    let (w, h) = (k.width, k.height);
    let mut pixels = vec![Rgb::zeros(); (w * h) as usize];
    pixels
        .par_chunks_mut(w as usize)
        .enumerate()
        .for_each(|(row, out)| {
            let yf = row as f64;
            let active: Vec<usize> = (0..splats.len())
                .filter(|&i| bounds[i][2] <= yf && yf <= bounds[i][3])
                .collect();
            for (col, px) in out.iter_mut().enumerate() {
                let p = Vector2::new(col as f64, yf);
                let covering = active.iter().filter_map(|&i| {
                    let b = &bounds[i];
                    (b[0] <= p.x && p.x <= b[1] && 2.0 * tau(&splats[i], &p) <= limit)
                        .then_some(&splats[i])
                });
                *px = composite(covering, &p);
            }
        });
    Image {
        width: w,
        height: h,
        pixels,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{UnitQuaternion, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn splat(center: Vector2<f64>, cov: Matrix2<f64>, depth: f64, color: Rgb, opacity: f64) -> Ellipse {
        Ellipse::new(center, cov, depth, color, opacity).unwrap()
    }

    fn sphere(center: Vector3<f64>, r: f64) -> Ellipsoid {
        Ellipsoid::new(center, UnitQuaternion::identity(), Vector3::repeat(r), 1.0, Rgb::new(1.0, 0.5, 0.25))
            .unwrap()
    }

    fn axis_camera() -> (Pose, CameraIntrinsics) {
        let pose = Pose::look_at(Vector3::new(0.0, 0.0, -10.0), Vector3::zeros(), -Vector3::y()).unwrap();
        let k = CameraIntrinsics::new(100.0, 100.0, 32.0, 32.0, 64, 64).unwrap();
        (pose, k)
    }

    /// Fibonacci lattice on the unit sphere: near-equal-area deterministic samples.
    fn fibonacci_sphere(n: usize) -> Vec<Vector3<f64>> {
        let golden = std::f64::consts::PI * (1.0 + 5f64.sqrt());
        (0..n)
            .map(|i| {
                let t = (i as f64 + 0.5) / n as f64;
                let phi = (1.0 - 2.0 * t).acos();
                let theta = golden * i as f64;
                Vector3::new(theta.cos() * phi.sin(), theta.sin() * phi.sin(), phi.cos())
            })
            .collect()
    }

    /// Projects surface samples of a sphere and fits their 2D covariance;
    /// uniform surface points have per-axis variance r²/3.
    fn sampled_covariance(center: Vector3<f64>, r: f64, pose: &Pose, k: &CameraIntrinsics) -> Matrix2<f64> {
        let pts: Vec<Vector2<f64>> = fibonacci_sphere(10_000)
            .iter()
            .map(|u| k.project(&pose.world_to_camera(&(center + u * r))).unwrap())
            .collect();
        let mean = pts.iter().sum::<Vector2<f64>>() / pts.len() as f64;
        let cov = pts.iter().map(|p| (p - mean) * (p - mean).transpose()).sum::<Matrix2<f64>>()
            / pts.len() as f64;
        cov * 3.0
    }

    #[test]
    fn tau_cases() {
        let s = splat(Vector2::new(3.0, 4.0), Matrix2::identity(), 1.0, Rgb::zeros(), 1.0);
        assert_eq!(tau(&s, &Vector2::new(3.0, 4.0)), 0.0);
        assert_relative_eq!(tau(&s, &Vector2::new(4.0, 4.0)), 0.5);
        let s = splat(Vector2::zeros(), Matrix2::new(4.0, 0.0, 0.0, 1.0), 1.0, Rgb::zeros(), 1.0);
        assert_relative_eq!(tau(&s, &Vector2::new(2.0, 0.0)), 0.5);
    }

    #[test]
    fn near_singular_ellipse_is_rejected() {
        let r = Ellipse::new(Vector2::zeros(), Matrix2::new(1.0, 0.0, 0.0, 1e-13), 1.0, Rgb::zeros(), 1.0);
        assert!(matches!(r, Err(Error::SingularEllipse { .. })));
        let r = Ellipse::new(Vector2::zeros(), Matrix2::new(1.0, 1.0, 1.0, 1.0), 1.0, Rgb::zeros(), 1.0);
        assert!(matches!(r, Err(Error::SingularEllipse { .. })));
    }

    #[test]
    fn on_axis_center_projects_to_principal_point() {
        let (pose, k) = axis_camera();
        let e = project_ellipsoid(&sphere(Vector3::zeros(), 0.5), &pose, &k).unwrap();
        assert_relative_eq!(e.center, Vector2::new(k.cx, k.cy), epsilon = 1e-12);
        assert_relative_eq!(e.depth, 10.0, epsilon = 1e-12);
    }

    #[test]
    fn sphere_projection_matches_sampling() {
        let (pose, k) = axis_camera();
        let (r, d) = (0.25, 10.0);
        let e = project_ellipsoid(&sphere(Vector3::zeros(), r), &pose, &k).unwrap();
        let expected = (k.fx * r / d).powi(2);
        assert_relative_eq!(e.covariance, Matrix2::from_diagonal(&Vector2::repeat(expected)), max_relative = 1e-12);
        let fitted = sampled_covariance(Vector3::zeros(), r, &pose, &k);
        assert!(((fitted.m11 - expected) / expected).abs() < 0.01, "{fitted} vs {expected}");
        assert!(((fitted.m22 - expected) / expected).abs() < 0.01);
        assert!(fitted.m12.abs() < 0.01 * expected);
    }

    #[test]
    fn doubling_distance_halves_spread() {
        let (pose, k) = axis_camera();
        let near = project_ellipsoid(&sphere(Vector3::zeros(), 0.25), &pose, &k).unwrap();
        let far = project_ellipsoid(&sphere(Vector3::new(0.0, 0.0, 10.0), 0.25), &pose, &k).unwrap();
        let ratio = (near.covariance.m11 / far.covariance.m11).sqrt();
        assert!((ratio - 2.0).abs() < 0.02, "{ratio}");
        let s_near = sampled_covariance(Vector3::zeros(), 0.25, &pose, &k);
        let s_far = sampled_covariance(Vector3::new(0.0, 0.0, 10.0), 0.25, &pose, &k);
        let sampled_ratio = (s_near.m11 / s_far.m11).sqrt();
        assert!((sampled_ratio - 2.0).abs() < 0.02, "{sampled_ratio}");
    }

    #[test]
    fn behind_camera_is_culled() {
        let (pose, k) = axis_camera();
        assert!(project_ellipsoid(&sphere(Vector3::new(0.0, 0.0, -20.0), 0.5), &pose, &k).is_none());
    }

    #[test]
    fn roll_rotates_projected_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let k = CameraIntrinsics::new(80.0, 80.0, 32.0, 32.0, 64, 64).unwrap();
        for _ in 0..50 {
            let e = Ellipsoid::new(
                Vector3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)),
                UnitQuaternion::from_scaled_axis(Vector3::new(rng.random(), rng.random(), rng.random())),
                Vector3::new(rng.random_range(0.05..0.3), rng.random_range(0.05..0.3), rng.random_range(0.05..0.3)),
                0.5,
                Rgb::zeros(),
            )
            .unwrap();
            let pose = Pose::look_at(Vector3::new(0.2, -0.1, -4.0), Vector3::zeros(), -Vector3::y()).unwrap();
            let theta: f64 = rng.random_range(-3.0..3.0);
            let roll = nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), theta);
            let rolled = Pose::from_rotation(roll * pose.rotation, pose.center);
            let a = project_ellipsoid(&e, &pose, &k).unwrap();
            let b = project_ellipsoid(&e, &rolled, &k).unwrap();
            let r2 = nalgebra::Rotation2::new(theta).into_inner();
            let conj = r2 * a.covariance * r2.transpose();
            assert!((conj - b.covariance).norm() < 1e-6 * (1.0 + a.covariance.norm()));
        }
    }

    #[test]
    fn single_opaque_splat_at_center() {
        let rho = Rgb::new(0.1, 0.7, 0.3);
        let s = splat(Vector2::new(5.0, 5.0), Matrix2::identity(), 1.0, rho, 1.0);
        assert_eq!(render_pixel(&[s], &Vector2::new(5.0, 5.0)), rho);
    }

    #[test]
    fn two_coincident_half_opaque_splats() {
        let rho = Rgb::new(0.8, 0.4, 0.2);
        let s = splat(Vector2::zeros(), Matrix2::identity(), 1.0, rho, 0.5);
        let c = render_pixel(&[s.clone(), s], &Vector2::zeros());
        assert_relative_eq!(c, rho * 0.75, epsilon = 1e-15);
    }

    /// Literal sum Σ ρᵢ αᵢ e^{−τᵢ} Πⱼ<ᵢ (1 − αⱼ e^{−τⱼ}), no early exit.
    fn literal_composite(splats: &[Ellipse], p: &Vector2<f64>) -> Rgb {
        let mut out = Rgb::zeros();
        for i in 0..splats.len() {
            let gamma: f64 = (0..i)
                .map(|j| 1.0 - splats[j].opacity * (-tau(&splats[j], p)).exp())
                .product();
            out += splats[i].color * splats[i].opacity * (-tau(&splats[i], p)).exp() * gamma;
        }
        out.map(|c| c.clamp(0.0, 1.0))
    }

    fn random_splats(rng: &mut ChaCha8Rng, n: usize) -> Vec<Ellipse> {
        let mut v: Vec<Ellipse> = (0..n)
            .map(|_| {
                let a: f64 = rng.random_range(0.5..4.0);
                let b: f64 = rng.random_range(0.5..4.0);
                let c: f64 = rng.random_range(-0.9..0.9) * (a * b).sqrt();
                splat(
                    Vector2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)),
                    Matrix2::new(a, c, c, b),
                    rng.random_range(0.1..10.0),
                    Rgb::new(rng.random(), rng.random(), rng.random()),
                    rng.random(),
                )
            })
            .collect();
        v.sort_by(|a, b| a.depth.total_cmp(&b.depth));
        v
    }

    #[test]
    fn matches_literal_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let splats = random_splats(&mut rng, 10);
            let p = Vector2::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let fast = render_pixel(&splats, &p);
            let slow = literal_composite(&splats, &p);
            assert!((fast - slow).abs().max() < 1e-3, "{fast} vs {slow}");
        }
    }

    #[test]
    fn transmittance_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let mut splats = random_splats(&mut rng, 6);
            let p = Vector2::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let c = render_pixel(&splats, &p);
            assert!(c.iter().all(|v| (0.0..=1.0).contains(v)));
            // γ starts at 1 and never increases
            let mut gamma = 1.0;
            for s in &splats {
                let next = gamma * (1.0 - s.opacity * (-tau(s, &p)).exp());
                assert!(next <= gamma);
                gamma = next;
            }
            // a white front splat that gets more opaque never darkens the pixel
            splats[0].color = Rgb::repeat(1.0);
            splats[0].opacity = 0.2;
            let before = render_pixel(&splats, &p);
            splats[0].opacity = 0.9;
            let after = render_pixel(&splats, &p);
            assert!(after.iter().zip(before.iter()).all(|(a, b)| a + 1e-12 >= *b));
        }
    }

    #[test]
    fn empty_scene_renders_black() {
        let (pose, k) = axis_camera();
        let behind = GaussianCloud::new(vec![sphere(Vector3::new(0.0, 0.0, -30.0), 0.5)]).unwrap();
        let img = render_image(&behind, &pose, &k);
        assert!(img.pixels.iter().all(|p| *p == Rgb::zeros()));
    }

    #[test]
    fn brightest_pixel_at_principal_point() {
        let (pose, k) = axis_camera();
        let cloud = GaussianCloud::new(vec![sphere(Vector3::zeros(), 0.5)]).unwrap();
        let img = render_image(&cloud, &pose, &k);
        let (idx, _) = img
            .pixels
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.x.total_cmp(&b.1.x).then(b.0.cmp(&a.0)))
            .unwrap();
        assert_eq!((idx as u32 % k.width, idx as u32 / k.width), (32, 32));
    }
}
