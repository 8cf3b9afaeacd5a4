use std::collections::HashMap;

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;

use super::network::{logits, softmax_rows};
use super::{FeatureMap, Real, ScoreVector, ScorerWeights};
use crate::error::{Error, Result};

/// Dense `M × N` attention map: softmax over rays for every pixel.
pub fn attention_map<T: Real>(keys: &ArrayView2<T>, queries: &ArrayView2<T>) -> Array2<T> {
    let mut a = logits(keys, queries);
    softmax_rows(&mut a);
    a
}

/// Per-ray scores `ŝ_j = Σ_i A_ij` from ray features `V` (`N × C`),
/// evaluated densely.
pub fn attention_scores<T: Real>(
    ray_features: &ArrayView2<T>,
    features: &FeatureMap,
    weights: &ScorerWeights<T>,
) -> Result<ScoreVector> {
    let c = weights.channels();
    if features.channels != c || ray_features.ncols() != c {
        return Err(Error::Weights(format!(
            "channel mismatch: weights {c}, image features {}, ray features {}",
            features.channels,
            ray_features.ncols()
        )));
    }
    let keys = features.matrix_as::<T>().dot(&weights.key);
    let queries = ray_features.dot(&weights.query);
    let a = attention_map(&keys.view(), &queries.view());
    Ok(ScoreVector::new(
        a.sum_axis(Axis(0)).iter().map(|v| v.to_f64().unwrap()).collect(),
    ))
}

const LN2_HI: f32 = 0.693_145_75;
const LN2_LO: f32 = 1.428_606_8e-6;
const LOG2_E: f32 = std::f32::consts::LOG2_E;

/// `exp(x)` for `x ≤ 0`, relative error below 4e-7, written so the
/// compiler can vectorize loops over it.
#[inline(always)]
fn exp_nonpositive(x: f32) -> f32 {
    // 1.5·2^23: adding it rounds to an integer held in the low mantissa bits.
    const ROUND: f32 = 12_582_912.0;
    let x = x.max(-87.0);
    let shifted = x * LOG2_E + ROUND;
    let n = shifted - ROUND;
    let y = (x - n * LN2_HI) - n * LN2_LO;
    let p = 1.0
        + y * (1.0
            + y * (0.5 + y * (1.0 / 6.0 + y * (1.0 / 24.0 + y * (1.0 / 120.0 + y * (1.0 / 720.0))))));
    let k = shifted.to_bits().wrapping_sub(ROUND.to_bits());
    p * f32::from_bits(k.wrapping_add(127) << 23)
}

/// Attention statistics computed without materializing the `M × N` map.
#[derive(Clone, Debug)]
pub struct FastAttention {
    /// `ŝ`, one per ray.
    pub scores: Vec<f32>,
    /// Per-pixel log of the softmax normalizer.
    pub log_norm: Vec<f32>,
}

/// Rays per tile; a tile of logits for every distinct key stays in cache.
const TILE: usize = 2048;
const LANES: usize = 8;

/// Distinct key rows, scaled by `scale`, with their multiplicities and the
/// distinct row of every pixel.
fn distinct_keys(keys: &ArrayView2<f32>, scale: f32) -> (Array2<f32>, Vec<f32>, Vec<usize>) {
    let mut index: HashMap<Vec<u32>, usize> = HashMap::new();
    let mut rows: Vec<f32> = Vec::new();
    let mut counts: Vec<f32> = Vec::new();
    let of_pixel = keys
        .rows()
        .into_iter()
        .map(|k| {
            let bits: Vec<u32> = k.iter().map(|v| (v + 0.0).to_bits()).collect();
            *index.entry(bits).or_insert_with(|| {
                rows.extend(k.iter().map(|v| v * scale));
                counts.push(0.0);
                counts.len() - 1
            })
        })
        .collect::<Vec<_>>();
    for &u in &of_pixel {
        counts[u] += 1.0;
    }
    let unique = Array2::from_shape_vec((counts.len(), keys.ncols()), rows).expect("key rows");
    (unique, counts, of_pixel)
}

fn lane_max(row: &[f32]) -> f32 {
    let mut lanes = [f32::NEG_INFINITY; LANES];
    let chunks = row.chunks_exact(LANES);
    let tail = chunks.remainder().iter().fold(f32::NEG_INFINITY, |a, &b| a.max(b));
    for c in chunks {
        for (l, v) in lanes.iter_mut().zip(c) {
            *l = l.max(*v);
        }
    }
    lanes.iter().fold(tail, |a, &b| a.max(b))
}

fn lane_sum_exp(row: &[f32], shift: f32) -> f32 {
    let mut lanes = [0f32; LANES];
    let chunks = row.chunks_exact(LANES);
    let tail: f32 = chunks.remainder().iter().map(|v| exp_nonpositive(v - shift)).sum();
    for c in chunks {
        for (l, v) in lanes.iter_mut().zip(c) {
            *l += exp_nonpositive(v - shift);
        }
    }
    lanes.iter().sum::<f32>() + tail
}

/// Computes `ŝ` for `queries` (`N × C`, already projected by `W_q`) against
/// `keys` (`M × C`, projected by `W_k`). Rays are processed in tiles: a
/// first sweep accumulates every pixel's softmax normalizer with a running
/// maximum, a second one sums the normalized weights per ray. Pixels with
/// identical keys are evaluated once.
pub fn fast_attention(keys: &ArrayView2<f32>, queries: &ArrayView2<f32>) -> FastAttention {
    let (m, c) = keys.dim();
    let n = queries.nrows();
    assert_eq!(queries.ncols(), c, "key/query width");
    let (unique, counts, of_pixel) = distinct_keys(keys, 1.0 / (c as f32).sqrt());
    let u = unique.nrows();
    let columns: Vec<Vec<f32>> = (0..c).map(|k| queries.column(k).to_vec()).collect();
    let starts: Vec<usize> = (0..n).step_by(TILE).collect();
    let logits = |i: usize, start: usize, row: &mut Vec<f32>| {
        let end = (start + TILE).min(n);
        row.clear();
        row.resize(end - start, 0.0);
        for (kv, col) in unique.row(i).iter().zip(&columns) {
            row.iter_mut().zip(&col[start..end]).for_each(|(r, q)| *r += kv * q);
        }
    };

    let partial: Vec<Vec<(f32, f32)>> = starts
        .par_iter()
        .map_init(Vec::new, |row, &start| {
            (0..u)
                .map(|i| {
                    logits(i, start, row);
                    let mx = lane_max(row);
                    (mx, lane_sum_exp(row, mx))
                })
                .collect()
        })
        .collect();
    let log_norm_unique: Vec<f32> = (0..u)
        .map(|i| {
            let mx = partial.iter().fold(f32::NEG_INFINITY, |a, p| a.max(p[i].0));
            let z: f64 = partial.iter().map(|p| p[i].1 as f64 * ((p[i].0 - mx) as f64).exp()).sum();
            mx + z.ln() as f32
        })
        .collect();

    let tiles: Vec<Vec<f32>> = starts
        .par_iter()
        .map_init(Vec::new, |row, &start| {
            let mut out = vec![0f32; (start + TILE).min(n) - start];
            for (i, (ln, w)) in log_norm_unique.iter().zip(&counts).enumerate() {
                logits(i, start, row);
                out.iter_mut().zip(row.iter()).for_each(|(o, l)| *o += w * exp_nonpositive((l - ln).min(0.0)));
            }
            out
        })
        .collect();
    let mut scores = Vec::with_capacity(n);
    tiles.into_iter().for_each(|t| scores.extend(t));
    let log_norm = (0..m).map(|i| log_norm_unique[of_pixel[i]]).collect();
    FastAttention { scores, log_norm }
}

impl FastAttention {
    /// Pixel with the largest attention weight for a ray with projected
    /// query `query`; ties go to the lower pixel index.
    pub fn argmax_pixel(&self, keys: &ArrayView2<f32>, query: &[f32]) -> usize {
        let scale = 1.0 / (keys.ncols() as f32).sqrt();
        let mut best = (f32::NEG_INFINITY, 0);
        for (i, k) in keys.rows().into_iter().enumerate() {
            let l = k.iter().zip(query).map(|(a, b)| a * b).sum::<f32>() * scale - self.log_norm[i];
            if l > best.0 {
                best = (l, i);
            }
        }
        best.1
    }
}

/// Pixel-axis argmax of a dense attention map, per ray.
pub fn dense_argmax_pixels<T: Real>(a: &Array2<T>) -> Vec<usize> {
    a.columns()
        .into_iter()
        .map(|col| {
            let mut best = (T::neg_infinity(), 0);
            for (i, v) in col.iter().enumerate() {
                if *v > best.0 {
                    best = (*v, i);
                }
            }
            best.1
        })
        .collect()
}
