//! Per-ray color synthesis: the splatting compositor evaluated along a 3D
//! ray instead of through an image plane.
//!
//! Each ellipsoid meets the ray at the point of minimum Mahalanobis
//! distance (restricted to the forward half-line). Ellipsoids whose minimum
//! is within the 3σ tube contribute `α·exp(−m²/2)` and are composited in
//! order of that point's ray parameter, nearest to the origin first.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use super::GaussianCloud;
use crate::ellicell::Ray;
use crate::Rgb;

use super::splat::{EARLY_EXIT_TRANSMITTANCE, FOOTPRINT_SIGMA};

#[derive(Clone, Debug)]
struct Primitive {
    center: Vector3<f64>,
    inv_cov: Matrix3<f64>,
    opacity: f64,
    color: Rgb,
}

/// Uniform voxel grid over the 3σ bounding spheres of the ellipsoids.
#[derive(Clone, Debug)]
struct Grid {
    lo: Vector3<f64>,
    cell: f64,
    dims: [usize; 3],
    starts: Vec<u32>,
    items: Vec<u32>,
}

impl Grid {
    fn build(prims: &[Primitive], radii: &[f64]) -> Self {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for (p, r) in prims.iter().zip(radii) {
            lo = lo.inf(&(p.center - Vector3::repeat(*r)));
            hi = hi.sup(&(p.center + Vector3::repeat(*r)));
        }
        let extent = (hi - lo).max().max(1e-9);
        let per_axis = ((prims.len() as f64).cbrt() * 2.0).ceil().clamp(1.0, 128.0);
        let cell = extent / per_axis;
        let dims = [0, 1, 2].map(|a| (((hi[a] - lo[a]) / cell).ceil() as usize).max(1));

        let cell_index = |v: &Vector3<f64>, a: usize| -> usize {
            (((v[a] - lo[a]) / cell).floor().max(0.0) as usize).min(dims[a] - 1)
        };
        let ranges: Vec<[(usize, usize); 3]> = prims
            .iter()
            .zip(radii)
            .map(|(p, r)| {
                let a = p.center - Vector3::repeat(*r);
                let b = p.center + Vector3::repeat(*r);
                [0, 1, 2].map(|ax| (cell_index(&a, ax), cell_index(&b, ax)))
            })
            .collect();

        let n_cells = dims[0] * dims[1] * dims[2];
        let mut counts = vec![0u32; n_cells + 1];
        let flat = |x: usize, y: usize, z: usize| (z * dims[1] + y) * dims[0] + x;
        for r in &ranges {
            for z in r[2].0..=r[2].1 {
                for y in r[1].0..=r[1].1 {
                    for x in r[0].0..=r[0].1 {
                        counts[flat(x, y, z) + 1] += 1;
                    }
                }
            }
        }
        for i in 0..n_cells {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut items = vec![0u32; counts[n_cells] as usize];
        for (idx, r) in ranges.iter().enumerate() {
            for z in r[2].0..=r[2].1 {
                for y in r[1].0..=r[1].1 {
                    for x in r[0].0..=r[0].1 {
                        let c = flat(x, y, z);
                        items[fill[c] as usize] = idx as u32;
                        fill[c] += 1;
                    }
                }
            }
        }
        Grid {
            lo,
            cell,
            dims,
            starts: counts,
            items,
        }
    }

    /// Visits every cell pierced by the half-line `o + t·d`, t ≥ 0.
    fn traverse(&self, o: &Vector3<f64>, d: &Vector3<f64>, mut visit: impl FnMut(&[u32])) {
        let hi = self.lo + Vector3::new(self.dims[0] as f64, self.dims[1] as f64, self.dims[2] as f64) * self.cell;
        let (mut t_enter, mut t_exit) = (0.0f64, f64::INFINITY);
        for a in 0..3 {
            if d[a].abs() < 1e-300 {
                if o[a] < self.lo[a] || o[a] > hi[a] {
                    return;
                }
            } else {
                let t1 = (self.lo[a] - o[a]) / d[a];
                let t2 = (hi[a] - o[a]) / d[a];
                t_enter = t_enter.max(t1.min(t2));
                t_exit = t_exit.min(t1.max(t2));
            }
        }
        if t_enter > t_exit {
            return;
        }
        let start = o + d * t_enter;
        let mut idx = [0i64; 3];
        let mut step = [0i64; 3];
        let mut t_max = [f64::INFINITY; 3];
        let mut t_delta = [f64::INFINITY; 3];
        for a in 0..3 {
            let c = ((start[a] - self.lo[a]) / self.cell).floor() as i64;
            idx[a] = c.clamp(0, self.dims[a] as i64 - 1);
            if d[a] > 0.0 {
                step[a] = 1;
                let boundary = self.lo[a] + (idx[a] + 1) as f64 * self.cell;
                t_max[a] = t_enter + (boundary - start[a]) / d[a];
                t_delta[a] = self.cell / d[a];
            } else if d[a] < 0.0 {
                step[a] = -1;
                let boundary = self.lo[a] + idx[a] as f64 * self.cell;
                t_max[a] = t_enter + (boundary - start[a]) / d[a];
                t_delta[a] = -self.cell / d[a];
            }
        }
        loop {
            let flat = (idx[2] as usize * self.dims[1] + idx[1] as usize) * self.dims[0] + idx[0] as usize;
            let (s, e) = (self.starts[flat] as usize, self.starts[flat + 1] as usize);
            visit(&self.items[s..e]);
            let a = if t_max[0] < t_max[1] {
                if t_max[0] < t_max[2] { 0 } else { 2 }
            } else if t_max[1] < t_max[2] {
                1
            } else {
                2
            };
            if t_max[a] > t_exit {
                return;
            }
            idx[a] += step[a];
            if idx[a] < 0 || idx[a] >= self.dims[a] as i64 {
                return;
            }
            t_max[a] += t_delta[a];
        }
    }
}

/// Reusable per-thread buffers.
#[derive(Default)]
pub struct Scratch {
    stamp: Vec<u32>,
    generation: u32,
    hits: Vec<(f64, u32, f64)>,
}

/// Precomputed acceleration structure for coloring many rays against one cloud.
#[derive(Clone, Debug)]
pub struct RayColorizer {
    prims: Vec<Primitive>,
    grid: Grid,
}

impl RayColorizer {
    pub fn new(cloud: &GaussianCloud) -> Self {
        let prims: Vec<Primitive> = cloud
            .ellipsoids
            .iter()
            .map(|e| Primitive {
                center: e.center,
                inv_cov: e.inverse_covariance(),
                opacity: e.opacity,
                color: e.color,
            })
            .collect();
        let radii: Vec<f64> = cloud
            .ellipsoids
            .iter()
            .map(|e| FOOTPRINT_SIGMA * e.scale.max())
            .collect();
        let grid = Grid::build(&prims, &radii);
        RayColorizer { prims, grid }
    }

    fn hit(&self, idx: u32, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<(f64, f64)> {
        let p = &self.prims[idx as usize];
        let q = o - p.center;
        let sd = p.inv_cov * d;
        let a = d.dot(&sd);
        let b = q.dot(&sd);
        let t = (-b / a).max(0.0);
        let m2 = q.dot(&(p.inv_cov * q)) + 2.0 * t * b + t * t * a;
        (m2 <= FOOTPRINT_SIGMA * FOOTPRINT_SIGMA).then(|| (t, p.opacity * (-0.5 * m2.max(0.0)).exp()))
    }

    pub fn color_with(&self, scratch: &mut Scratch, o: &Vector3<f64>, d: &Vector3<f64>) -> Rgb {
        if scratch.stamp.len() != self.prims.len() {
            scratch.stamp = vec![0; self.prims.len()];
            scratch.generation = 0;
        }
        scratch.generation = scratch.generation.wrapping_add(1);
        if scratch.generation == 0 {
            scratch.stamp.iter_mut().for_each(|s| *s = 0);
            scratch.generation = 1;
        }
        let generation = scratch.generation;
        scratch.hits.clear();
        let Scratch { stamp, hits, .. } = scratch;
        self.grid.traverse(o, d, |items| {
            for &i in items {
                if stamp[i as usize] != generation {
                    stamp[i as usize] = generation;
                    if let Some((t, a)) = self.hit(i, o, d) {
                        hits.push((t, i, a));
                    }
                }
            }
        });
        hits.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        self.composite(hits)
    }

    fn composite(&self, hits: &[(f64, u32, f64)]) -> Rgb {
        let mut color = Rgb::zeros();
        let mut transmittance = 1.0;
        for &(_, i, a) in hits {
            color += self.prims[i as usize].color * (a * transmittance);
            transmittance *= 1.0 - a;
            if transmittance < EARLY_EXIT_TRANSMITTANCE {
                break;
            }
        }
        color.map(|c| c.clamp(0.0, 1.0))
    }

    pub fn color(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> Rgb {
        self.color_with(&mut Scratch::default(), o, d)
    }

    /// Colors a batch of `(origin, direction)` pairs in parallel; output order
    /// matches input order.
    pub fn colors(&self, rays: &[(Vector3<f64>, Vector3<f64>)]) -> Vec<Rgb> {
        rays.par_iter()
            .map_init(Scratch::default, |s, (o, d)| self.color_with(s, o, d))
            .collect()
    }

    /// Brute-force variant without the grid.
    pub fn color_exhaustive(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> Rgb {
        let mut hits: Vec<(f64, u32, f64)> = (0..self.prims.len() as u32)
            .filter_map(|i| self.hit(i, o, d).map(|(t, a)| (t, i, a)))
            .collect();
        hits.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        self.composite(&hits)
    }
}

/// Color of a single ray against the cloud. Builds the acceleration grid on
/// every call; use [`RayColorizer`] for batches.
pub fn ray_color(cloud: &GaussianCloud, ray: &Ray) -> Rgb {
    RayColorizer::new(cloud).color(&ray.origin, &ray.direction)
}
