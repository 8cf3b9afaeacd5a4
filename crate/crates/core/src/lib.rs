//! Single-image 6-DoF camera pose estimation against a pre-trained 3D
//! Gaussian Splatting model.
//!
//! The pipeline inverts splatting instead of iterating on it:
//!
//! 1. every ellipsoid of the model is decomposed into equal-area surface
//!    cells and casts one colored ray per cell ([`ellicell`]);
//! 2. rays are bound to the target image with a small attention model, or
//!    with an exact distance oracle when the true camera is known
//!    ([`scoring`]);
//! 3. the best-scoring rays, one per ellipsoid, are intersected by weighted
//!    least squares to get the camera center, and the rotation is aligned
//!    from the bundle's bearings ([`solver`]).
//!
//! [`gaussian`] holds the splatting model itself: PLY loading, scene
//! normalization and a CPU reference renderer.

pub mod camera;
pub mod ellicell;
pub mod error;
pub mod gaussian;
pub mod pipeline;
pub mod scoring;
pub mod solver;
pub mod synth;
pub mod transforms;

pub use camera::{CameraIntrinsics, Pose};
pub use ellicell::{CellGrid, NormalField, Ray};
pub use error::{Error, Result};
pub use gaussian::{Ellipse, Ellipsoid, GaussianCloud, Image};
pub use scoring::{FeatureMap, ScoreVector, ScorerWeights, TrainConfig};
pub use solver::{PoseError, PoseEstimate, SelectedBundle};

/// RGB triple with channels in `[0, 1]`.
pub type Rgb = nalgebra::Vector3<f64>;
