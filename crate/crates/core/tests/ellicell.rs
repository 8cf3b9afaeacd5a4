use std::f64::consts::PI;

use nalgebra::{UnitQuaternion, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use sixdgs_core::ellicell::{build_cells, ellipse_perimeter, surface_area, CellConfig};
use sixdgs_core::Ellipsoid;

fn ellipsoid(a: f64, b: f64, c: f64) -> Ellipsoid {
    Ellipsoid::new(Vector3::zeros(), UnitQuaternion::identity(), Vector3::new(a, b, c), 1.0, Vector3::zeros()).unwrap()
}

/// Area-uniform samples on the axis-aligned ellipsoid by rejection on the
/// sphere-to-ellipsoid area stretch.
fn surface_samples(a: f64, b: f64, c: f64, n: usize, seed: u64) -> Vec<Vector3<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max = [a * b, a * c, b * c].into_iter().fold(0.0, f64::max);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let u = Vector3::<f64>::from_fn(|_, _| StandardNormal.sample(&mut rng)).normalize();
        let stretch = a * b * c * Vector3::new(u.x / a, u.y / b, u.z / c).norm();
        if rng.random::<f64>() * max <= stretch {
            out.push(Vector3::new(a * u.x, b * u.y, c * u.z));
        }
    }
    out
}

/// Relative standard deviation of the Monte-Carlo Voronoi areas of `centers`.
fn voronoi_area_spread(centers: &[Vector3<f64>], samples: &[Vector3<f64>]) -> f64 {
    let mut counts = vec![0usize; centers.len()];
    for p in samples {
        let mut best = (f64::INFINITY, 0);
        for (i, c) in centers.iter().enumerate() {
            let d = (p - c).norm_squared();
            if d < best.0 {
                best = (d, i);
            }
        }
        counts[best.1] += 1;
    }
    let mean = samples.len() as f64 / centers.len() as f64;
    let var = counts.iter().map(|&k| (k as f64 - mean).powi(2)).sum::<f64>() / centers.len() as f64;
    var.sqrt() / mean
}

fn numeric_perimeter(a: f64, b: f64) -> f64 {
    let n = 200_000;
    let h = 2.0 * PI / n as f64;
    (0..n)
        .map(|i| {
            let t = (i as f64 + 0.5) * h;
            (a * a * t.sin().powi(2) + b * b * t.cos().powi(2)).sqrt() * h
        })
        .sum()
}

#[test]
fn sphere_area_is_exact() {
    for r in [0.1, 1.0, 10.0] {
        let s = surface_area(r, r, r).unwrap();
        assert!((s / (4.0 * PI * r * r) - 1.0).abs() < 1e-12, "r={r}");
    }
}

#[test]
fn perimeter_matches_arc_length() {
    for aspect in [1.0, 1.5, 2.0, 3.0, 5.0, 7.5, 10.0] {
        let (a, b) = (aspect, 1.0);
        let rel = (ellipse_perimeter(a, b).unwrap() / numeric_perimeter(a, b) - 1.0).abs();
        assert!(rel < 1e-3, "aspect {aspect}: {rel:e}");
    }
}

#[test]
fn cells_partition_sphere_evenly() {
    let grid = build_cells(0, &ellipsoid(1.0, 1.0, 1.0), &CellConfig { cells: 1000, ..Default::default() }).unwrap();
    let spread = voronoi_area_spread(&grid.world, &surface_samples(1.0, 1.0, 1.0, 200_000, 7));
    assert!(spread <= 0.10, "relative std {spread}");
}

#[test]
fn cells_partition_elongated_ellipsoid_evenly() {
    let grid = build_cells(0, &ellipsoid(3.0, 2.0, 1.0), &CellConfig { cells: 1000, ..Default::default() }).unwrap();
    let spread = voronoi_area_spread(&grid.world, &surface_samples(3.0, 2.0, 1.0, 200_000, 8));
    assert!(spread <= 0.20, "relative std {spread}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cell_centers_lie_on_surface(
        a in 0.05f64..2.0, b in 0.05f64..2.0, c in 0.05f64..2.0,
        cells in 4usize..400,
        qx in -1.0f64..1.0, qy in -1.0f64..1.0, qz in -1.0f64..1.0,
    ) {
        let rot = UnitQuaternion::from_scaled_axis(Vector3::new(qx, qy, qz));
        let e = Ellipsoid::new(Vector3::new(0.3, -0.2, 0.1), rot, Vector3::new(a, b, c), 1.0, Vector3::zeros()).unwrap();
        let grid = build_cells(3, &e, &CellConfig { cells, ..Default::default() }).unwrap();
        prop_assert!(!grid.is_empty());
        let inv = e.inverse_covariance();
        for p in &grid.world {
            let d = p - e.center;
            let q = (d.transpose() * inv * d)[(0, 0)];
            prop_assert!((q - 1.0).abs() < 1e-9, "quadric residual {}", q - 1.0);
        }
    }

    #[test]
    fn cell_count_tracks_target(r in 0.1f64..5.0, cells in 50usize..2000) {
        let grid = build_cells(0, &ellipsoid(r, r, r), &CellConfig { cells, ..Default::default() }).unwrap();
        let ratio = grid.len() as f64 / cells as f64;
        prop_assert!((0.5..=1.5).contains(&ratio), "{} cells for target {}", grid.len(), cells);
    }

    #[test]
    fn area_is_symmetric_and_bounded(a in 0.01f64..10.0, b in 0.01f64..10.0, c in 0.01f64..10.0) {
        let s = surface_area(a, b, c).unwrap();
        prop_assert!((s - surface_area(c, a, b).unwrap()).abs() <= 1e-12 * s);
        let (lo, hi) = (a.min(b).min(c), a.max(b).max(c));
        prop_assert!(s >= 4.0 * PI * lo * lo * (1.0 - 1e-12));
        prop_assert!(s <= 4.0 * PI * hi * hi * (1.0 + 1e-12));
    }
}
