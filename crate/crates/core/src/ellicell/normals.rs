use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::GaussianCloud;

/// Ratio of the two smallest scatter eigenvalues above which a normal is
/// considered poorly determined.
const LOW_CONFIDENCE_RATIO: f64 = 0.5;

/// Per-ellipsoid outward normals estimated from the center point cloud.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalField {
    pub normals: Vec<Vector3<f64>>,
    pub k_neighbors: usize,
    /// Set where the local scatter has no well separated smallest direction.
    pub low_confidence: Vec<bool>,
}

impl NormalField {
    pub fn len(&self) -> usize {
        self.normals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.normals.is_empty()
    }

    /// A field with the same normal everywhere.
    pub fn constant(n: Vector3<f64>, count: usize) -> Self {
        NormalField {
            normals: vec![n.normalize(); count],
            k_neighbors: 0,
            low_confidence: vec![false; count],
        }
    }
}

/// Indices of the `k` nearest points to `points[i]`, excluding `i`.
/// `order` is the permutation sorting points by x, `rank` its inverse.
fn knn(points: &[Vector3<f64>], order: &[usize], rank: &[usize], i: usize, k: usize) -> Vec<usize> {
    let p = points[i];
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    let mut worst = f64::INFINITY;
    let push = |best: &mut Vec<(f64, usize)>, worst: &mut f64, d: f64, j: usize| {
        if best.len() == k && d >= *worst {
            return;
        }
        let at = best.partition_point(|&(bd, bj)| (bd, bj) < (d, j));
        best.insert(at, (d, j));
        best.truncate(k);
        if best.len() == k {
            *worst = best[k - 1].0;
        }
    };
    let r = rank[i];
    let (mut lo, mut hi) = (r, r + 1);
    loop {
        let left = lo.checked_sub(1).map(|l| (p.x - points[order[l]].x).powi(2));
        let right = (hi < order.len()).then(|| (points[order[hi]].x - p.x).powi(2));
        let take_left = match (left, right) {
            (None, None) => break,
            (Some(l), Some(rr)) => l <= rr,
            (Some(_), None) => true,
            (None, Some(_)) => false,
        };
        let dx2 = if take_left { left.unwrap() } else { right.unwrap() };
        if best.len() == k && dx2 > worst {
            break;
        }
        let j = if take_left {
            lo -= 1;
            order[lo]
        } else {
            hi += 1;
            order[hi - 1]
        };
        push(&mut best, &mut worst, (points[j] - p).norm_squared(), j);
    }
    best.into_iter().map(|(_, j)| j).collect()
}

/// Sign making the first non-negligible component positive.
fn lexicographic_sign(v: &Vector3<f64>) -> f64 {
    for c in v.iter() {
        if c.abs() > 1e-12 {
            return c.signum();
        }
    }
    1.0
}

/// Estimates one normal per ellipsoid as the smallest-eigenvalue direction
/// of the scatter of its `k` nearest centers (itself included), oriented
/// away from their centroid.
pub fn estimate_normals(cloud: &GaussianCloud, k: usize) -> Result<NormalField> {
    let points = cloud.centers();
    if k < 3 {
        return Err(Error::Config(format!("need k ≥ 3 neighbors, got {k}")));
    }
    if points.len() <= k {
        return Err(Error::Config(format!(
            "normal estimation needs more than k = {k} ellipsoids, got {}",
            points.len()
        )));
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| points[i].x.total_cmp(&points[j].x).then(i.cmp(&j)));
    let mut rank = vec![0; points.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }

    let (normals, low_confidence) = (0..points.len())
        .into_par_iter()
        .map(|i| {
            let mut nb = knn(&points, &order, &rank, i, k - 1);
            nb.push(i);
            let centroid = nb.iter().map(|&j| points[j]).sum::<Vector3<f64>>() / nb.len() as f64;
            let mut scatter = Matrix3::zeros();
            for &j in &nb {
                let d = points[j] - centroid;
                scatter += d * d.transpose();
            }
            let eig = SymmetricEigen::new(scatter);
            let mut idx = [0usize, 1, 2];
            idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
            let (l0, l1) = (eig.eigenvalues[idx[0]].max(0.0), eig.eigenvalues[idx[1]].max(0.0));
            let mut n: Vector3<f64> = eig.eigenvectors.column(idx[0]).into_owned().normalize();
            let away = (points[i] - centroid).dot(&n);
            let scale = scatter.trace().max(f64::MIN_POSITIVE).sqrt();
            let sign = if away.abs() > 1e-9 * scale { away.signum() } else { lexicographic_sign(&n) };
            n *= sign;
            let low = l1 <= 0.0 || l0 / l1 > LOW_CONFIDENCE_RATIO;
            (n, low)
        })
        .unzip();
    Ok(NormalField {
        normals,
        k_neighbors: k,
        low_confidence,
    })
}
