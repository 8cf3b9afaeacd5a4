use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::encoding::{encode_rays, encoded_len, RAY_INPUTS};
use super::Real;
use crate::ellicell::Ray;
use crate::error::{Error, Result};

pub const HIDDEN_LAYERS: usize = 3;
pub const DEFAULT_WIDTH: usize = 512;

#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    /// `inputs × outputs`.
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Real> Dense<T> {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            weight: Array2::zeros((inputs, outputs)),
            bias: Array1::zeros(outputs),
        }
    }

    fn forward(&self, x: &ArrayView2<T>) -> Array2<T> {
        let mut y = x.dot(&self.weight);
        y += &self.bias;
        y
    }
}

/// Ray featurizer MLP plus the single attention head's projections.
#[derive(Clone, Debug, PartialEq)]
pub struct ScorerWeights<T = f32> {
    pub layers: Vec<Dense<T>>,
    /// Query projection `C × C`, applied to ray features.
    pub query: Array2<T>,
    /// Key projection `C × C`, applied to image features.
    pub key: Array2<T>,
    pub frequencies: usize,
}

fn silu<T: Real>(x: T) -> T {
    x / (T::one() + (-x).exp())
}

fn silu_grad<T: Real>(x: T) -> T {
    let s = T::one() / (T::one() + (-x).exp());
    s * (T::one() + x * (T::one() - s))
}

/// Intermediate values kept for backpropagation.
pub struct Activations<T> {
    inputs: Array2<T>,
    pre: Vec<Array2<T>>,
    post: Vec<Array2<T>>,
    pub features: Array2<T>,
}

impl<T: Real> ScorerWeights<T> {
    pub fn zeros(width: usize, channels: usize, frequencies: usize) -> Self {
        let mut dims = vec![encoded_len(RAY_INPUTS, frequencies)];
        dims.extend([width; HIDDEN_LAYERS]);
        dims.push(channels);
        ScorerWeights {
            layers: dims.windows(2).map(|d| Dense::zeros(d[0], d[1])).collect(),
            query: Array2::zeros((channels, channels)),
            key: Array2::zeros((channels, channels)),
            frequencies,
        }
    }

    /// Scaled-normal initialization; the attention projections start at the
    /// identity.
    pub fn init(width: usize, channels: usize, frequencies: usize, seed: u64) -> Self {
        let mut w = Self::zeros(width, channels, frequencies);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut w.layers {
            let fan_in = layer.weight.nrows() as f64;
            let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).unwrap();
            layer.weight.mapv_inplace(|_| T::from(normal.sample(&mut rng)).unwrap());
        }
        w.query = Array2::eye(channels);
        w.key = Array2::eye(channels);
        w
    }

    pub fn width(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn channels(&self) -> usize {
        self.query.nrows()
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.len() != HIDDEN_LAYERS + 1 {
            return Err(Error::Weights(format!(
                "expected {} dense layers, found {}",
                HIDDEN_LAYERS + 1,
                self.layers.len()
            )));
        }
        let expected_in = encoded_len(RAY_INPUTS, self.frequencies);
        if self.input_len() != expected_in {
            return Err(Error::Weights(format!(
                "first layer takes {} inputs, encoding yields {expected_in}",
                self.input_len()
            )));
        }
        for (i, pair) in self.layers.windows(2).enumerate() {
            if pair[0].weight.ncols() != pair[1].weight.nrows() {
                return Err(Error::Weights(format!("layer {i} output does not feed layer {}", i + 1)));
            }
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.bias.len() != l.weight.ncols() {
                return Err(Error::Weights(format!("layer {i} bias length mismatch")));
            }
        }
        let c = self.layers[HIDDEN_LAYERS].weight.ncols();
        if self.query.dim() != (c, c) || self.key.dim() != (c, c) {
            return Err(Error::Weights(format!("attention projections must be {c}x{c}")));
        }
        if self.tensors().any(|t| t.iter().any(|v| !v.is_finite())) {
            return Err(Error::Weights("non-finite weight".into()));
        }
        Ok(())
    }

    /// All parameter tensors, flattened to 2-D, in a fixed order.
    pub fn tensors(&self) -> impl Iterator<Item = ArrayView2<'_, T>> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.view(), l.bias.view().insert_axis(Axis(0))])
            .chain([self.query.view(), self.key.view()])
    }

    pub fn for_each_tensor_mut(&mut self, mut f: impl FnMut(&mut [T])) {
        for l in &mut self.layers {
            f(l.weight.as_slice_mut().expect("standard layout"));
            f(l.bias.as_slice_mut().expect("standard layout"));
        }
        f(self.query.as_slice_mut().expect("standard layout"));
        f(self.key.as_slice_mut().expect("standard layout"));
    }

    pub fn tensor_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (0..self.layers.len())
            .flat_map(|i| [format!("layer{i}.weight"), format!("layer{i}.bias")])
            .collect();
        names.push("query".into());
        names.push("key".into());
        names
    }

    pub fn cast<U: Real>(&self) -> ScorerWeights<U> {
        let c = |a: &Array2<T>| a.mapv(|v| U::from(v).unwrap());
        ScorerWeights {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    weight: c(&l.weight),
                    bias: l.bias.mapv(|v| U::from(v).unwrap()),
                })
                .collect(),
            query: c(&self.query),
            key: c(&self.key),
            frequencies: self.frequencies,
        }
    }

    /// MLP forward pass keeping intermediates.
    pub fn forward(&self, inputs: Array2<T>) -> Activations<T> {
        let mut pre = Vec::with_capacity(HIDDEN_LAYERS);
        let mut post: Vec<Array2<T>> = Vec::with_capacity(HIDDEN_LAYERS);
        for (i, layer) in self.layers[..HIDDEN_LAYERS].iter().enumerate() {
            let x = if i == 0 { inputs.view() } else { post[i - 1].view() };
            let z = layer.forward(&x);
            post.push(z.mapv(silu));
            pre.push(z);
        }
        let features = self.layers[HIDDEN_LAYERS].forward(&post[HIDDEN_LAYERS - 1].view());
        Activations {
            inputs,
            pre,
            post,
            features,
        }
    }

    /// Ray features `V`, one row per ray.
    pub fn featurize(&self, inputs: Array2<T>) -> Array2<T> {
        let mut x = inputs;
        for layer in &self.layers[..HIDDEN_LAYERS] {
            x = layer.forward(&x.view());
            x.mapv_inplace(silu);
        }
        self.layers[HIDDEN_LAYERS].forward(&x.view())
    }

    pub fn featurize_rays(&self, rays: &[Ray]) -> Result<Array2<T>> {
        self.validate()?;
        Ok(self.featurize(encode_rays(rays.iter(), self.frequencies)))
    }

    /// Backpropagates `d_features` (gradient w.r.t. `V`) through the MLP,
    /// accumulating into `grad`.
    pub fn backward(&self, act: &Activations<T>, d_features: Array2<T>, grad: &mut ScorerWeights<T>) {
        let mut delta = d_features;
        for i in (0..=HIDDEN_LAYERS).rev() {
            let input = if i == 0 { act.inputs.view() } else { act.post[i - 1].view() };
            grad.layers[i].weight += &input.t().dot(&delta);
            grad.layers[i].bias += &delta.sum_axis(Axis(0));
            if i == 0 {
                break;
            }
            let mut back = delta.dot(&self.layers[i].weight.t());
            Zip::from(&mut back)
                .and(&act.pre[i - 1])
                .for_each(|b, &z| *b = *b * silu_grad(z));
            delta = back;
        }
    }
}

/// Attention logits scaled by `1/√C`: `(F·W_k)(V·W_q)ᵀ/√C`, `M × N`.
pub fn logits<T: Real>(keys: &ArrayView2<T>, queries: &ArrayView2<T>) -> Array2<T> {
    let scale = T::one() / T::from(keys.ncols() as f64).unwrap().sqrt();
    let mut l = keys.dot(&queries.t());
    l.mapv_inplace(|v| v * scale);
    l
}

/// Row-wise softmax in place.
pub fn softmax_rows<T: Real>(l: &mut Array2<T>) {
    for mut row in l.rows_mut() {
        let max = row.iter().fold(T::neg_infinity(), |m, v| m.max(*v));
        row.mapv_inplace(|v| (v - max).exp());
        let z = row.sum();
        row.mapv_inplace(|v| v / z);
    }
}
