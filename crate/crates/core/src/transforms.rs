//! NeRF-style `transforms.json` camera files.
//!
//! Matrices are camera-to-world in the OpenGL convention (x right, y up,
//! z backward); they are converted to this crate's x right, y down,
//! z forward frame on load.

use std::path::Path;

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::camera::{CameraIntrinsics, Pose};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub file_path: String,
    pub transform_matrix: [[f64; 4]; 4],
    /// Feature file for this view, relative to the transforms file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transforms {
    pub camera_angle_x: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fl_x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fl_y: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cy: Option<f64>,
    pub w: u32,
    pub h: u32,
    pub frames: Vec<Frame>,
}

fn flip() -> Matrix4<f64> {
    Matrix4::from_diagonal(&Vector4::new(1.0, -1.0, -1.0, 1.0))
}

impl Transforms {
    pub fn new(k: &CameraIntrinsics, frames: Vec<Frame>) -> Self {
        Transforms {
            camera_angle_x: 2.0 * (0.5 * k.width as f64 / k.fx).atan(),
            fl_x: Some(k.fx),
            fl_y: Some(k.fy),
            cx: Some(k.cx),
            cy: Some(k.cy),
            w: k.width,
            h: k.height,
            frames,
        }
    }

    pub fn frame(file_path: String, pose: &Pose, features: Option<String>) -> Frame {
        let m = pose.camera_to_world() * flip();
        Frame {
            file_path,
            transform_matrix: std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)])),
            features,
        }
    }

    pub fn intrinsics(&self) -> Result<CameraIntrinsics> {
        let fx = match self.fl_x {
            Some(f) => f,
            None => 0.5 * self.w as f64 / (0.5 * self.camera_angle_x).tan(),
        };
        CameraIntrinsics::new(
            fx,
            self.fl_y.unwrap_or(fx),
            self.cx.unwrap_or(0.5 * self.w as f64),
            self.cy.unwrap_or(0.5 * self.h as f64),
            self.w,
            self.h,
        )
    }

    pub fn pose(&self, index: usize) -> Result<Pose> {
        let f = &self.frames[index];
        let m = Matrix4::from_fn(|r, c| f.transform_matrix[r][c]);
        Pose::from_camera_to_world(&(m * flip()))
            .map_err(|e| Error::Format(format!("frame {index} ({}): {e}", f.file_path)))
    }

    pub fn poses(&self) -> Result<Vec<Pose>> {
        (0..self.frames.len()).map(|i| self.pose(i)).collect()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_slice(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(self).expect("transforms serialize");
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }
}
