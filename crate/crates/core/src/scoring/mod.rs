//! Ray-to-image binding: a positional-encoded MLP featurizes rays, a single
//! attention head scores them against per-pixel image features, and the
//! distance-derived targets supervise training.

mod attention;
mod encoding;
mod features;
mod network;
mod store;
mod targets;
mod train;

pub use attention::{attention_map, attention_scores, dense_argmax_pixels, fast_attention, FastAttention};
pub use encoding::{encode_rays, encoded_len, positional_encoding, DEFAULT_FREQUENCIES, RAY_INPUTS};
pub use features::{load_features, FeatureMap, FEATURES_MAGIC};
pub use network::{logits, softmax_rows, Dense, ScorerWeights, DEFAULT_WIDTH, HIDDEN_LAYERS};
pub use store::{
    load_weights, manifest_for, manifest_path, save_weights, weights_from_bytes, weights_to_bytes, Section,
    WeightsManifest, WEIGHTS_MAGIC,
};
pub use targets::{gt_scores, oracle_pixel, oracle_scorer, ray_distance, score_loss};
pub use train::{loss_and_gradient, train_scorer, AdamW, Step, TrainConfig, TrainOutcome, TrainView};

use serde::{Deserialize, Serialize};

/// Floating-point element type of the network.
pub trait Real:
    ndarray::LinalgScalar + ndarray::ScalarOperand + num_traits::Float + std::ops::AddAssign + std::fmt::Debug + Send + Sync
{
}

impl<T> Real for T where
    T: ndarray::LinalgScalar + ndarray::ScalarOperand + num_traits::Float + std::ops::AddAssign + std::fmt::Debug + Send + Sync
{
}

/// Per-ray scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub values: Vec<f64>,
    /// Set when the scores are a uniform fallback carrying no information.
    pub uniform_fallback: bool,
}

impl ScoreVector {
    pub fn new(values: Vec<f64>) -> Self {
        ScoreVector {
            values,
            uniform_fallback: false,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}
