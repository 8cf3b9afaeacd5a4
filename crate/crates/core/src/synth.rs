//! Seeded synthetic scenes with known cameras, used for tests, benchmarks
//! and the `synth` command.

use std::path::{Path, PathBuf};

use nalgebra::{Rotation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::camera::{CameraIntrinsics, Pose};
use crate::error::{Error, Result};
use crate::gaussian::{normalize_scene, render_image, save_ply, Ellipsoid, GaussianCloud, Image};
use crate::scoring::FeatureMap;
use crate::transforms::Transforms;
use crate::Rgb;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    /// Flat splats tangent to a sphere, colored by their outward normal.
    Shell,
    /// Randomly oriented splats in a few uniformly colored clusters.
    BoxCluster,
}

impl std::str::FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shell" => Ok(Layout::Shell),
            "box-cluster" => Ok(Layout::BoxCluster),
            other => Err(Error::Config(format!("unknown layout {other:?} (shell, box-cluster)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub ellipsoids: usize,
    pub views: usize,
    pub layout: Layout,
    pub seed: u64,
    pub image_size: u32,
    pub fov_deg: f64,
    /// Camera distance from the origin, scene units.
    pub camera_distance: f64,
    /// Camera elevation range above the xy-plane, degrees.
    pub elevation_deg: (f64, f64),
    /// Average-pooling stride of the RGB feature grid.
    pub feature_stride: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            ellipsoids: 500,
            views: 12,
            layout: Layout::Shell,
            seed: 0,
            image_size: 128,
            fov_deg: 60.0,
            camera_distance: 1.25,
            elevation_deg: (10.0, 70.0),
            feature_stride: 8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthScene {
    pub cloud: GaussianCloud,
    pub intrinsics: CameraIntrinsics,
    pub poses: Vec<Pose>,
}

fn unit(rng: &mut impl Rng) -> Vector3<f64> {
    Vector3::from(UnitSphere.sample(rng))
}

/// Rotation taking local z to `n`.
fn align_z(n: &Vector3<f64>, spin: f64) -> UnitQuaternion<f64> {
    let base = UnitQuaternion::rotation_between(&Vector3::z(), n)
        .unwrap_or_else(|| UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI));
    base * UnitQuaternion::from_axis_angle(&Vector3::z_axis(), spin)
}

fn shell(count: usize, rng: &mut impl Rng) -> Result<Vec<Ellipsoid>> {
    let radius = 0.5;
    let spacing = (4.0 * std::f64::consts::PI * radius * radius / count as f64).sqrt();
    (0..count)
        .map(|_| {
            let n = unit(rng);
            let center = n * radius * rng.random_range(0.97..1.03);
            let color = (Vector3::repeat(0.5) + 0.45 * n).map(|c| c.clamp(0.0, 1.0));
            let tangent = spacing * rng.random_range(0.5..0.8);
            Ellipsoid::new(
                center,
                align_z(&n, rng.random_range(0.0..std::f64::consts::TAU)),
                Vector3::new(tangent, tangent * rng.random_range(0.6..1.0), spacing * 0.15),
                rng.random_range(0.8..0.98),
                color,
            )
        })
        .collect()
}

fn box_cluster(count: usize, rng: &mut impl Rng) -> Result<Vec<Ellipsoid>> {
    let clusters = 8.min(count);
    let seeds: Vec<(Vector3<f64>, Rgb, f64)> = (0..clusters)
        .map(|_| {
            (
                Vector3::new(rng.random_range(-0.35..0.35), rng.random_range(-0.35..0.35), rng.random_range(-0.35..0.35)),
                Rgb::new(rng.random(), rng.random(), rng.random()),
                rng.random_range(0.08..0.16),
            )
        })
        .collect();
    (0..count)
        .map(|i| {
            let (c, color, spread) = seeds[i % clusters];
            let offset = unit(rng) * spread * rng.random::<f64>().cbrt();
            let size = spread * 0.25;
            Ellipsoid::new(
                c + offset,
                UnitQuaternion::from_euler_angles(
                    rng.random_range(-3.1..3.1),
                    rng.random_range(-1.5..1.5),
                    rng.random_range(-3.1..3.1),
                ),
                Vector3::new(
                    size * rng.random_range(0.4..1.0),
                    size * rng.random_range(0.4..1.0),
                    size * rng.random_range(0.4..1.0),
                ),
                rng.random_range(0.6..0.95),
                (color + Rgb::new(rng.random(), rng.random(), rng.random()) * 0.1).map(|v| v.clamp(0.0, 1.0)),
            )
        })
        .collect()
}

/// Cameras on the upper viewing hemisphere at `distance`, looking at the
/// origin with world +z up.
pub fn hemisphere_cameras(count: usize, distance: f64, elevation_deg: (f64, f64), rng: &mut impl Rng) -> Result<Vec<Pose>> {
    let (lo, hi) = (elevation_deg.0.to_radians().sin(), elevation_deg.1.to_radians().sin());
    (0..count)
        .map(|_| {
            let z = rng.random_range(lo.min(hi)..=hi.max(lo));
            let phi = rng.random_range(0.0..std::f64::consts::TAU);
            let r = (1.0 - z * z).sqrt();
            let eye = distance * Vector3::new(r * phi.cos(), r * phi.sin(), z);
            Pose::look_at(eye, Vector3::zeros(), Vector3::z())
        })
        .collect()
}

pub fn synth_scene(cfg: &SynthConfig) -> Result<SynthScene> {
    if cfg.ellipsoids < 2 {
        return Err(Error::Config("a synthetic scene needs at least 2 ellipsoids".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let ellipsoids = match cfg.layout {
        Layout::Shell => shell(cfg.ellipsoids, &mut rng)?,
        Layout::BoxCluster => box_cluster(cfg.ellipsoids, &mut rng)?,
    };
    let cloud = normalize_scene(&GaussianCloud::new(ellipsoids)?)?;
    let intrinsics = CameraIntrinsics::from_fov(cfg.image_size, cfg.image_size, cfg.fov_deg.to_radians())?;
    let poses = hemisphere_cameras(cfg.views, cfg.camera_distance, cfg.elevation_deg, &mut rng)?;
    Ok(SynthScene {
        cloud,
        intrinsics,
        poses,
    })
}

/// Renders every view and its pooled RGB feature map.
pub fn render_views(scene: &SynthScene, stride: usize) -> Result<Vec<(Image, FeatureMap)>> {
    scene
        .poses
        .iter()
        .map(|p| {
            let img = render_image(&scene.cloud, p, &scene.intrinsics);
            let f = FeatureMap::from_image(&img, stride)?;
            Ok((img, f))
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct SynthFiles {
    pub model: PathBuf,
    pub transforms: PathBuf,
    pub images: Vec<PathBuf>,
    pub features: Vec<PathBuf>,
}

/// Writes `model.ply`, `transforms.json`, `images/view_NNN.png` and
/// `features/view_NNN.6dfeat` under `dir`.
pub fn write_scene(scene: &SynthScene, stride: usize, dir: &Path) -> Result<SynthFiles> {
    for sub in ["images", "features"] {
        let d = dir.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let model = dir.join("model.ply");
    save_ply(&scene.cloud, &model)?;
    let mut frames = Vec::new();
    let mut files = SynthFiles {
        model,
        transforms: dir.join("transforms.json"),
        images: vec![],
        features: vec![],
    };
    for (i, ((img, feat), pose)) in render_views(scene, stride)?.into_iter().zip(&scene.poses).enumerate() {
        let name = format!("view_{i:03}");
        let (ip, fp) = (format!("images/{name}.png"), format!("features/{name}.6dfeat"));
        img.save_png(dir.join(&ip))?;
        feat.save(&dir.join(&fp))?;
        frames.push(Transforms::frame(ip.clone(), pose, Some(fp.clone())));
        files.images.push(dir.join(ip));
        files.features.push(dir.join(fp));
    }
    Transforms::new(&scene.intrinsics, frames).save(&files.transforms)?;
    Ok(files)
}

/// A uniformly random rotation, for baselines.
pub fn random_rotation(rng: &mut impl Rng) -> Rotation3<f64> {
    let q = nalgebra::Quaternion::new(
        rand_distr::StandardNormal.sample(rng),
        rand_distr::StandardNormal.sample(rng),
        rand_distr::StandardNormal.sample(rng),
        rand_distr::StandardNormal.sample(rng),
    );
    UnitQuaternion::from_quaternion(q).to_rotation_matrix()
}
