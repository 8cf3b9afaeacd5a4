use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{
    cells_per_ring, cumulative, equal_measure_angles, invert_cumulative, perimeter, ribbon_scale,
    surface_area, DEFAULT_QUADRATURE,
};
use crate::error::{Error, Result};
use crate::gaussian::Ellipsoid;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellConfig {
    /// Target number of cells per ellipsoid (before hemisphere filtering).
    pub cells: usize,
    /// Trapezoid intervals for the arc-length integrals.
    pub quadrature: usize,
}

impl Default for CellConfig {
    fn default() -> Self {
        CellConfig {
            cells: 100,
            quadrature: DEFAULT_QUADRATURE,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ring {
    pub index: usize,
    /// Position along the major axis, in `(−a, a)`.
    pub height: f64,
    /// Semi-axes `(r, w)` along the middle and minor axes.
    pub scale: (f64, f64),
    pub count: usize,
}

/// Cell decomposition of one ellipsoid.
///
/// `local` positions are expressed in the sorted-axis frame (x minor,
/// y middle, z major); `world` positions are the same points after the
/// ellipsoid's rotation and translation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellGrid {
    pub ellipsoid_id: usize,
    pub local: Vec<Vector3<f64>>,
    pub world: Vec<Vector3<f64>>,
    pub rings: Vec<Ring>,
    pub target_area: f64,
    pub side: f64,
    /// Meridian arc length between consecutive ring centerlines.
    pub ring_spacing: f64,
    /// Sorted semi-axes `(a, b, c)`, `a ≥ b ≥ c`.
    pub axes: (f64, f64, f64),
}

impl CellGrid {
    pub fn ring_count(&self) -> usize {
        self.rings.len()
    }

    pub fn len(&self) -> usize {
        self.local.len()
    }

    pub fn is_empty(&self) -> bool {
        self.local.is_empty()
    }
}

/// Splits the surface of `e` into approximately `cfg.cells` equal-area cells.
///
/// Rings are spaced evenly in arc length along the major/middle meridian, so
/// every ribbon is about one cell side wide. Each ring gets
/// `⌊perimeter / side⌋` cells, placed at equal steps of the surface-area
/// measure along the ring; where the ribbon width is constant around the
/// ring (spheres, spheroids) that is the same as equal arc-length steps.
pub fn build_cells(id: usize, e: &Ellipsoid, cfg: &CellConfig) -> Result<CellGrid> {
    if cfg.cells < 4 {
        return Err(Error::Config(format!("need at least 4 cells per ellipsoid, got {}", cfg.cells)));
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| e.scale[j].total_cmp(&e.scale[i]).then(i.cmp(&j)));
    let (a, b, c) = (e.scale[order[0]], e.scale[order[1]], e.scale[order[2]]);

    let target_area = surface_area(a, b, c)? / cfg.cells as f64;
    let side = target_area.sqrt();
    let meridian = perimeter(a, b);
    let ring_count = ((meridian / (2.0 * side)).floor() as usize).max(1);

    // Half-meridian φ ∈ [0, π]: (axial −a·cosφ, radial b·sinφ).
    let (phi_nodes, phi_acc) = cumulative(
        |phi: f64| {
            let (s, co) = phi.sin_cos();
            (a * a * s * s + b * b * co * co).sqrt()
        },
        0.0,
        std::f64::consts::PI,
        cfg.quadrature,
    );
    let half = phi_acc[phi_acc.len() - 1];
    let ring_spacing = half / ring_count as f64;

    let rot = e.rotation_matrix();
    let mut local = Vec::with_capacity(cfg.cells + cfg.cells / 4);
    let mut rings = Vec::with_capacity(ring_count);
    for n in 0..ring_count {
        let phi = invert_cumulative(&phi_nodes, &phi_acc, (n as f64 + 0.5) * ring_spacing);
        let height = -a * phi.cos();
        let Some(rho) = ribbon_scale(height + a, a) else {
            continue;
        };
        let (r, w) = (rho * b, rho * c);
        let count = cells_per_ring(r, w, side);
        // Area element of the surface along the ring, up to the constant sinφ.
        let (sp, cp) = (rho, height / -a);
        let (a2s2, bc2) = (a * a * sp * sp, (b * c * cp).powi(2));
        let density = |t: f64| {
            let (st, ct) = t.sin_cos();
            (a2s2 * (b * b * ct * ct + c * c * st * st) + bc2).sqrt()
        };
        for theta in equal_measure_angles(density, count, cfg.quadrature) {
            let (st, ct) = theta.sin_cos();
            local.push(Vector3::new(w * ct, r * st, height));
        }
        rings.push(Ring {
            index: n,
            height,
            scale: (r, w),
            count,
        });
    }

    let world = local
        .iter()
        .map(|u| {
            let mut v = Vector3::zeros();
            v[order[2]] = u.x;
            v[order[1]] = u.y;
            v[order[0]] = u.z;
            e.center + rot * v
        })
        .collect();

    Ok(CellGrid {
        ellipsoid_id: id,
        local,
        world,
        rings,
        target_area,
        side,
        ring_spacing,
        axes: (a, b, c),
    })
}
