use std::io::{Read, Write};
use std::path::Path;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{build_cells, CellConfig, NormalField};
use crate::error::{Error, Result};
use crate::gaussian::{GaussianCloud, RayColorizer};
use crate::Rgb;

pub const RAYS_MAGIC: &[u8; 8] = b"6DGSRAYS";
const RECORD_BYTES: usize = 9 * 4 + 4;

/// One hypothesis ray cast from an ellipsoid center.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ray {
    pub origin: Vector3<f64>,
    pub direction: Vector3<f64>,
    pub color: Rgb,
    pub source: u32,
}

impl Ray {
    /// The 9 network inputs `(v_o, v_d, v_c)`.
    pub fn features(&self) -> [f64; 9] {
        let (o, d, c) = (&self.origin, &self.direction, &self.color);
        [o.x, o.y, o.z, d.x, d.y, d.z, c.x, c.y, c.z]
    }
}

/// Casts one ray per cell through every ellipsoid listed in `ids`, keeping
/// those in the hemisphere of the ellipsoid's normal. Output is ordered by
/// position in `ids`, then by cell.
pub fn generate_rays_for(
    cloud: &GaussianCloud,
    colorizer: &RayColorizer,
    cfg: &CellConfig,
    normals: &NormalField,
    ids: &[usize],
) -> Result<Vec<Ray>> {
    if normals.len() != cloud.len() {
        return Err(Error::Config(format!(
            "normal field covers {} ellipsoids, model has {}",
            normals.len(),
            cloud.len()
        )));
    }
    let per: Vec<Vec<Ray>> = ids
        .par_iter()
        .map_init(Default::default, |scratch, &id| {
            let e = cloud.ellipsoids.get(id).ok_or_else(|| Error::Config(format!("no ellipsoid {id}")))?;
            let grid = build_cells(id, e, cfg)?;
            let n = normals.normals[id];
            let mut out = Vec::with_capacity(grid.len() / 2 + 1);
            for u in &grid.world {
                let d = (u - e.center).normalize();
                if d.dot(&n) > 0.0 {
                    out.push(Ray {
                        origin: e.center,
                        direction: d,
                        color: colorizer.color_with(scratch, &e.center, &d),
                        source: id as u32,
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(per.into_iter().flatten().collect())
}

/// Rays for every ellipsoid of `cloud`, in ellipsoid order.
pub fn generate_rays(cloud: &GaussianCloud, cfg: &CellConfig, normals: &NormalField) -> Result<Vec<Ray>> {
    let ids: Vec<usize> = (0..cloud.len()).collect();
    generate_rays_for(cloud, &RayColorizer::new(cloud), cfg, normals, &ids)
}

/// Rays grouped by source ellipsoid.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RaySet {
    pub rays: Vec<Ray>,
    /// `offsets[i]..offsets[i + 1]` indexes the rays of ellipsoid `i`.
    pub offsets: Vec<usize>,
}

impl RaySet {
    /// Groups `rays`, which must be sorted by source, for `sources` ellipsoids.
    pub fn new(rays: Vec<Ray>, sources: usize) -> Result<Self> {
        let mut offsets = vec![0; sources + 1];
        for (i, r) in rays.iter().enumerate() {
            let s = r.source as usize;
            if s >= sources {
                return Err(Error::Format(format!("ray {i} names ellipsoid {s} of {sources}")));
            }
            if i > 0 && rays[i - 1].source > r.source {
                return Err(Error::Format(format!("ray {i} is out of source order")));
            }
            offsets[s + 1] += 1;
        }
        for i in 0..sources {
            offsets[i + 1] += offsets[i];
        }
        Ok(RaySet { rays, offsets })
    }

    pub fn build(cloud: &GaussianCloud, cfg: &CellConfig, normals: &NormalField) -> Result<Self> {
        RaySet::new(generate_rays(cloud, cfg, normals)?, cloud.len())
    }

    pub fn sources(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn of(&self, source: usize) -> &[Ray] {
        &self.rays[self.offsets[source]..self.offsets[source + 1]]
    }

    pub fn len(&self) -> usize {
        self.rays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rays.is_empty()
    }
}

pub fn write_rays<W: Write>(mut w: W, rays: &[Ray]) -> std::io::Result<()> {
    let count = u32::try_from(rays.len()).map_err(|_| std::io::Error::other("too many rays"))?;
    let mut buf = Vec::with_capacity(12 + rays.len() * RECORD_BYTES);
    buf.extend_from_slice(RAYS_MAGIC);
    buf.extend_from_slice(&count.to_le_bytes());
    for r in rays {
        for v in r.features() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        buf.extend_from_slice(&r.source.to_le_bytes());
    }
    w.write_all(&buf)
}

pub fn read_rays(bytes: &[u8]) -> Result<Vec<Ray>> {
    if bytes.len() < 12 || &bytes[..8] != RAYS_MAGIC {
        return Err(Error::Format("not a 6DGSRAYS file".into()));
    }
    let count = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = 12 + count * RECORD_BYTES;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "ray table holds {} bytes, expected {expected} for {count} rays",
            bytes.len()
        )));
    }
    Ok(bytes[12..]
        .chunks_exact(RECORD_BYTES)
        .map(|rec| {
            let f = |i: usize| f32::from_le_bytes(rec[4 * i..4 * i + 4].try_into().unwrap()) as f64;
            Ray {
                origin: Vector3::new(f(0), f(1), f(2)),
                direction: Vector3::new(f(3), f(4), f(5)),
                color: Rgb::new(f(6), f(7), f(8)),
                source: u32::from_le_bytes(rec[36..40].try_into().unwrap()),
            }
        })
        .collect())
}

pub fn save_rays(path: &Path, rays: &[Ray]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_rays(std::io::BufWriter::new(file), rays).map_err(|e| Error::io(path, e))
}

pub fn load_rays(path: &Path) -> Result<Vec<Ray>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    read_rays(&bytes)
}

pub fn write_rays_csv<W: Write>(mut w: W, rays: &[Ray]) -> std::io::Result<()> {
    writeln!(w, "ox,oy,oz,dx,dy,dz,r,g,b,source")?;
    for r in rays {
        let f = r.features();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            f[0], f[1], f[2], f[3], f[4], f[5], f[6], f[7], f[8], r.source
        )?;
    }
    Ok(())
}
