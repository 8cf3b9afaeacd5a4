use std::io::Read;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::Image;

pub const FEATURES_MAGIC: &[u8; 8] = b"6DFEAT1\0";
const HEADER_BYTES: usize = 8 + 5 * 4;

/// Dense descriptor grid of one image, row-major `(y, x, c)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub grid_width: usize,
    pub grid_height: usize,
    pub channels: usize,
    pub image_width: u32,
    pub image_height: u32,
    pub data: Vec<f32>,
}

impl FeatureMap {
    pub fn new(
        grid_width: usize,
        grid_height: usize,
        channels: usize,
        image_width: u32,
        image_height: u32,
        data: Vec<f32>,
    ) -> Result<Self> {
        let f = FeatureMap {
            grid_width,
            grid_height,
            channels,
            image_width,
            image_height,
            data,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.grid_width == 0 || self.grid_height == 0 {
            return Err(Error::Format(format!(
                "feature grid {}x{}x{} has an empty dimension",
                self.grid_width, self.grid_height, self.channels
            )));
        }
        if self.image_width == 0 || self.image_height == 0 {
            return Err(Error::Format("feature source image size is zero".into()));
        }
        if self.data.len() != self.pixels() * self.channels {
            return Err(Error::Format(format!(
                "feature data has {} values, expected {}",
                self.data.len(),
                self.pixels() * self.channels
            )));
        }
        if let Some(i) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Format(format!("non-finite feature value at index {i}")));
        }
        Ok(())
    }

    /// Number of feature cells `M`.
    pub fn pixels(&self) -> usize {
        self.grid_width * self.grid_height
    }

    /// `M × C` view.
    pub fn matrix(&self) -> ArrayView2<'_, f32> {
        ArrayView2::from_shape((self.pixels(), self.channels), &self.data).expect("validated shape")
    }

    pub fn matrix_as<T: super::Real>(&self) -> Array2<T> {
        self.matrix().mapv(|v| T::from(v).unwrap())
    }

    /// Image coordinates of the center of feature cell `index` (row-major).
    pub fn cell_center(&self, index: usize) -> (f64, f64) {
        let (gx, gy) = (index % self.grid_width, index / self.grid_width);
        (
            (gx as f64 + 0.5) * self.image_width as f64 / self.grid_width as f64 - 0.5,
            (gy as f64 + 0.5) * self.image_height as f64 / self.grid_height as f64 - 0.5,
        )
    }

    /// Feature cell containing image point `p`, clamped to the grid.
    pub fn cell_index(&self, p: &nalgebra::Vector2<f64>) -> usize {
        let gx = ((p.x + 0.5) * self.grid_width as f64 / self.image_width as f64).floor();
        let gy = ((p.y + 0.5) * self.grid_height as f64 / self.image_height as f64).floor();
        let gx = gx.clamp(0.0, (self.grid_width - 1) as f64) as usize;
        let gy = gy.clamp(0.0, (self.grid_height - 1) as f64) as usize;
        gy * self.grid_width + gx
    }

    /// RGB features: the image average-pooled over `stride × stride` blocks.
    pub fn from_image(image: &Image, stride: usize) -> Result<Self> {
        let (w, h) = (image.width as usize, image.height as usize);
        if stride == 0 || w % stride != 0 || h % stride != 0 {
            return Err(Error::Config(format!("stride {stride} does not divide {w}x{h}")));
        }
        let (gw, gh) = (w / stride, h / stride);
        let mut data = Vec::with_capacity(gw * gh * 3);
        let norm = 1.0 / (stride * stride) as f64;
        for gy in 0..gh {
            for gx in 0..gw {
                let mut acc = crate::Rgb::zeros();
                for y in gy * stride..(gy + 1) * stride {
                    for x in gx * stride..(gx + 1) * stride {
                        acc += image.pixels[y * w + x];
                    }
                }
                data.extend((acc * norm).iter().map(|v| *v as f32));
            }
        }
        FeatureMap::new(gw, gh, 3, image.width, image.height, data)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_BYTES + 4 * self.data.len());
        out.extend_from_slice(FEATURES_MAGIC);
        for v in [
            self.grid_width as u32,
            self.grid_height as u32,
            self.channels as u32,
            self.image_width,
            self.image_height,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_BYTES {
            return Err(Error::Format(format!(
                "feature file truncated: expected at least {HEADER_BYTES} header bytes, found {}",
                bytes.len()
            )));
        }
        if &bytes[..8] != FEATURES_MAGIC {
            return Err(Error::Format("bad magic, not a 6DFEAT file".into()));
        }
        let u = |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap());
        let (gw, gh, c, w, h) = (u(0) as usize, u(1) as usize, u(2) as usize, u(3), u(4));
        let expected = gw
            .checked_mul(gh)
            .and_then(|m| m.checked_mul(c))
            .and_then(|n| n.checked_mul(4))
            .and_then(|n| n.checked_add(HEADER_BYTES))
            .ok_or_else(|| Error::Format("feature header dimensions overflow".into()))?;
        if bytes.len() != expected {
            return Err(Error::Format(format!(
                "feature file size mismatch: expected {expected} bytes, found {}",
                bytes.len()
            )));
        }
        let data = bytes[HEADER_BYTES..]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        FeatureMap::new(gw, gh, c, w, h, data)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

pub fn load_features(path: &Path) -> Result<FeatureMap> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    FeatureMap::from_bytes(&bytes)
}
