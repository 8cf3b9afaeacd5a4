use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use super::SelectedBundle;
use crate::error::{Error, Result};

/// Smallest admissible eigenvalue of the normal matrix.
pub const MIN_EIGENVALUE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct WlsSolution {
    pub center: Vector3<f64>,
    /// `√(Σ w·dist² / Σ w)`.
    pub residual: f64,
    /// Perpendicular distance of each bundle ray's line to the center.
    pub distances: Vec<f64>,
}

/// Point minimizing the weighted sum of squared perpendicular distances to
/// the bundle's lines, from the normal equations
/// `Σ w(I − ddᵀ)·x = Σ w(I − ddᵀ)·o`.
pub fn intersect_rays_wls(bundle: &SelectedBundle) -> Result<WlsSolution> {
    let mut a = Matrix3::zeros();
    let mut b = Vector3::zeros();
    for (r, w) in bundle.rays.iter().zip(&bundle.weights) {
        let p = Matrix3::identity() - r.direction * r.direction.transpose();
        a += *w * p;
        b += *w * (p * r.origin);
    }
    let eig = SymmetricEigen::new(a);
    let lo = eig.eigenvalues.min();
    let hi = eig.eigenvalues.max();
    if !(lo >= MIN_EIGENVALUE) {
        return Err(Error::DegenerateGeometry {
            condition: if lo > 0.0 { hi / lo } else { f64::INFINITY },
        });
    }
    let inv = eig.eigenvectors * Matrix3::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v)) * eig.eigenvectors.transpose();
    let center = inv * b;
    let distances: Vec<f64> = bundle
        .rays
        .iter()
        .map(|r| {
            let q = center - r.origin;
            (q - r.direction * r.direction.dot(&q)).norm()
        })
        .collect();
    let wsum: f64 = bundle.weights.iter().sum();
    let residual = (distances.iter().zip(&bundle.weights).map(|(d, w)| w * d * d).sum::<f64>() / wsum).sqrt();
    Ok(WlsSolution {
        center,
        residual,
        distances,
    })
}
