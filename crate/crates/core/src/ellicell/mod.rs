//! Equal-area decomposition of ellipsoid surfaces and radiant ray casting.
//!
//! Each ellipsoid is sliced along its major axis into ribbons roughly one
//! cell-side wide. Every ribbon's centerline (a ring) is an ellipse that is
//! split into cells, and one ray is cast from the ellipsoid center through
//! every cell center.

mod cells;
mod normals;
mod rays;

pub use cells::{build_cells, CellConfig, CellGrid, Ring};
pub use normals::{estimate_normals, NormalField};
pub use rays::{generate_rays, generate_rays_for, read_rays, RaySet, save_rays, load_rays, write_rays, write_rays_csv, Ray, RAYS_MAGIC};

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Default number of trapezoid intervals for arc-length integrals.
pub const DEFAULT_QUADRATURE: usize = 4096;

fn check_axes(axes: &[f64]) -> Result<()> {
    if axes.iter().all(|v| *v > 0.0 && v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Domain(format!("semi-axes must be positive, got {axes:?}")))
    }
}

/// Ellipsoid surface area by the Knud Thomsen / Ramanujan-style power mean,
/// `4π·(((ab)^1.6 + (ac)^1.6 + (bc)^1.6)/3)^(1/1.6)`.
pub fn surface_area(a: f64, b: f64, c: f64) -> Result<f64> {
    check_axes(&[a, b, c])?;
    const P: f64 = 1.6;
    let mean = ((a * b).powf(P) + (a * c).powf(P) + (b * c).powf(P)) / 3.0;
    Ok(4.0 * PI * mean.powf(1.0 / P))
}

/// Ramanujan's second approximation of an ellipse perimeter.
pub fn ellipse_perimeter(a: f64, b: f64) -> Result<f64> {
    check_axes(&[a, b])?;
    Ok(perimeter(a, b))
}

fn perimeter(a: f64, b: f64) -> f64 {
    let s = a + b;
    let d = a - b;
    PI * (s + 3.0 * d * d / (10.0 * s + (a * a + 14.0 * a * b + b * b).sqrt()))
}

/// Unit scale of the ring at axial `offset ∈ (0, 2a)` from the pole of an
/// ellipsoid with major semi-axis `a`; multiply by a minor semi-axis to get
/// the ring's semi-axis along it. `None` at or beyond the poles.
pub fn ribbon_scale(offset: f64, a: f64) -> Option<f64> {
    let z = (offset - a) / a;
    let arg = 1.0 - z * z;
    (arg > 0.0).then(|| arg.sqrt())
}

/// Number of cells on a ring with semi-axes `(r, w)` for cell side `side`;
/// at least one.
pub fn cells_per_ring(r: f64, w: f64, side: f64) -> usize {
    if !(r > 0.0 && w > 0.0) {
        return 1;
    }
    ((perimeter(r, w) / side).floor() as usize).max(1)
}

/// Cumulative trapezoid integral of `density` on `[lo, hi]` with `n`
/// intervals. Returns `(nodes, cumulative)`, both of length `n + 1`.
pub(crate) fn cumulative(density: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let n = n.max(1);
    let h = (hi - lo) / n as f64;
    let nodes: Vec<f64> = (0..=n).map(|i| lo + h * i as f64).collect();
    let mut acc = Vec::with_capacity(n + 1);
    acc.push(0.0);
    let mut prev = density(nodes[0]);
    let mut total = 0.0;
    for t in &nodes[1..] {
        let cur = density(*t);
        total += 0.5 * h * (prev + cur);
        acc.push(total);
        prev = cur;
    }
    (nodes, acc)
}

/// Inverts a monotone cumulative table at `target` by linear interpolation.
pub(crate) fn invert_cumulative(nodes: &[f64], acc: &[f64], target: f64) -> f64 {
    let i = acc.partition_point(|v| *v <= target);
    if i == 0 {
        return nodes[0];
    }
    if i >= acc.len() {
        return nodes[nodes.len() - 1];
    }
    let (a0, a1) = (acc[i - 1], acc[i]);
    let f = if a1 > a0 { (target - a0) / (a1 - a0) } else { 0.0 };
    nodes[i - 1] + f * (nodes[i] - nodes[i - 1])
}

/// Angles `θ'_g`, g = 0..count, of `count` points equally spaced in arc
/// length along the ellipse `(cos_axis·cos θ, sin_axis·sin θ)`, starting at
/// θ = 0. The cumulative arc length is integrated with `quadrature`
/// trapezoid intervals and inverted by interpolation.
pub fn arc_positions(cos_axis: f64, sin_axis: f64, count: usize, quadrature: usize) -> Vec<f64> {
    let (p, q) = (cos_axis * cos_axis, sin_axis * sin_axis);
    let speed = |t: f64| {
        let (s, c) = t.sin_cos();
        (p * s * s + q * c * c).sqrt()
    };
    equal_measure_angles(speed, count, quadrature)
}

/// Angles splitting `[0, 2π)` into `count` parts of equal measure under
/// `density`, the first one at 0.
pub(crate) fn equal_measure_angles(density: impl Fn(f64) -> f64, count: usize, quadrature: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![0.0; count];
    }
    let (nodes, acc) = cumulative(density, 0.0, 2.0 * PI, quadrature);
    let total = acc[acc.len() - 1];
    (0..count)
        .map(|g| invert_cumulative(&nodes, &acc, g as f64 * total / count as f64))
        .collect()
}
