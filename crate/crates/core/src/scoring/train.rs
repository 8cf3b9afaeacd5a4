use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::encoding::{encode_rays, DEFAULT_FREQUENCIES};
use super::network::{logits, softmax_rows, DEFAULT_WIDTH};
use super::targets::gt_scores;
use super::{FeatureMap, Real, ScorerWeights};
use crate::camera::{CameraIntrinsics, Pose};
use crate::ellicell::RaySet;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: usize,
    /// Ellipsoids sampled per iteration.
    pub subsample: usize,
    pub weight_decay: f64,
    pub learning_rate: f64,
    /// Distance bandwidth of the supervision targets, scene units.
    pub lambda: f64,
    pub seed: u64,
    pub width: usize,
    pub frequencies: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 1500,
            subsample: 2000,
            weight_decay: 1e-3,
            learning_rate: 1e-3,
            lambda: 0.1,
            seed: 0,
            width: DEFAULT_WIDTH,
            frequencies: DEFAULT_FREQUENCIES,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.weight_decay, self.lambda].iter().all(|v| *v > 0.0 && v.is_finite());
        if !positive || !(self.learning_rate >= 0.0) || self.subsample == 0 || self.width == 0 {
            return Err(Error::Config(format!("invalid training configuration {self:?}")));
        }
        Ok(())
    }
}

/// One supervision image.
#[derive(Clone, Debug)]
pub struct TrainView {
    pub features: FeatureMap,
    pub pose: Pose,
    pub intrinsics: CameraIntrinsics,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub weights: ScorerWeights<f32>,
    /// Loss at every iteration, before that iteration's update.
    pub losses: Vec<f64>,
}

/// Output of one forward/backward pass.
pub struct Step<T> {
    pub loss: T,
    pub scores: Array1<T>,
    pub gradient: ScorerWeights<T>,
}

/// Loss `Σ_j (ŝ_j − s_j)²/(M·N)` of the scores predicted for `inputs`
/// (encoded rays, `N × D`) against image features `image` (`M × C`), and
/// its gradient with respect to every weight.
pub fn loss_and_gradient<T: Real>(
    w: &ScorerWeights<T>,
    inputs: Array2<T>,
    image: &ArrayView2<T>,
    target: &[T],
) -> Step<T> {
    let (m, n) = (image.nrows(), inputs.nrows());
    assert_eq!(target.len(), n, "one target per ray");
    let act = w.forward(inputs);
    let v = &act.features;
    let q = v.dot(&w.query);
    let k = image.dot(&w.key);
    let mut a = logits(&k.view(), &q.view());
    softmax_rows(&mut a);
    let scores = a.sum_axis(Axis(0));

    let norm = T::from((m * n) as f64).unwrap();
    let two = T::one() + T::one();
    let mut loss = T::zero();
    let g: Array1<T> = Zip::from(&scores)
        .and(target)
        .map_collect(|s, t| {
            let d = *s - *t;
            loss += d * d;
            two * d / norm
        });
    loss = loss / norm;

    // Softmax backward, per pixel row: dl_ij = A_ij (g_j − Σ_k A_ik g_k).
    let ag = a.dot(&g);
    Zip::from(a.rows_mut()).and(&ag).for_each(|mut row, &c| {
        Zip::from(&mut row).and(&g).for_each(|x, &gj| *x = *x * (gj - c));
    });
    let scale = T::one() / T::from(w.channels() as f64).unwrap().sqrt();
    let dl = a;
    let mut dk = dl.dot(&q);
    dk.mapv_inplace(|x| x * scale);
    let mut dq = dl.t().dot(&k);
    dq.mapv_inplace(|x| x * scale);

    let mut gradient = ScorerWeights::zeros(w.width(), w.channels(), w.frequencies);
    gradient.key = image.t().dot(&dk);
    gradient.query = v.t().dot(&dq);
    let dv = dq.dot(&w.query.t());
    w.backward(&act, dv, &mut gradient);
    Step {
        loss,
        scores,
        gradient,
    }
}

/// Adam with decoupled weight decay.
pub struct AdamW {
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
    t: i32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl AdamW {
    pub fn new(w: &ScorerWeights<f32>) -> Self {
        let sizes: Vec<usize> = w.tensors().map(|t| t.len()).collect();
        AdamW {
            m: sizes.iter().map(|n| vec![0.0; *n]).collect(),
            v: sizes.iter().map(|n| vec![0.0; *n]).collect(),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-12,
        }
    }

    pub fn step(&mut self, w: &mut ScorerWeights<f32>, grad: &mut ScorerWeights<f32>, lr: f32, decay: f32) {
        self.t += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let mut grads: Vec<Vec<f32>> = Vec::new();
        grad.for_each_tensor_mut(|g| grads.push(g.to_vec()));
        let mut idx = 0;
        let (ms, vs) = (&mut self.m, &mut self.v);
        w.for_each_tensor_mut(|theta| {
            let (m, v, g) = (&mut ms[idx], &mut vs[idx], &grads[idx]);
            for i in 0..theta.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let update = (m[i] / c1) / ((v[i] / c2).sqrt() + eps) + decay * theta[i];
                theta[i] -= lr * update;
            }
            idx += 1;
        });
    }
}

/// Trains the scorer on `views` of `cloud`, whose rays are precomputed in
/// `rays`.
///
/// Every iteration picks one view, samples `cfg.subsample` ellipsoids,
/// scores their rays against that view's features and steps the optimizer
/// on the distance-derived targets. Deterministic for a fixed seed.
pub fn train_scorer(rays: &RaySet, views: &[TrainView], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if views.len() < 2 {
        return Err(Error::Config(format!("need at least 2 training views, got {}", views.len())));
    }
    let channels = views[0].features.channels;
    if let Some(v) = views.iter().find(|v| v.features.channels != channels) {
        return Err(Error::Config(format!(
            "feature maps disagree on channel count: {} vs {}",
            channels, v.features.channels
        )));
    }
    let images: Vec<Array2<f32>> = views.iter().map(|v| v.features.matrix().to_owned()).collect();
    let mut w = ScorerWeights::<f32>::init(cfg.width, channels, cfg.frequencies, cfg.seed);
    let mut opt = AdamW::new(&w);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let count = rays.sources();
    let take = cfg.subsample.min(count);
    let mut losses = Vec::with_capacity(cfg.iterations);
    for iteration in 0..cfg.iterations {
        let vi = rng.random_range(0..views.len());
        let mut ids = sample(&mut rng, count, take).into_vec();
        ids.sort_unstable();
        let batch: Vec<_> = ids.iter().flat_map(|&i| rays.of(i)).collect();
        if batch.is_empty() {
            continue;
        }
        let view = &views[vi];
        let m = view.features.pixels();
        let owned: Vec<_> = batch.iter().map(|r| (*r).clone()).collect();
        let target: Vec<f32> = gt_scores(&owned, &view.pose.center, cfg.lambda, m)?
            .values
            .iter()
            .map(|v| *v as f32)
            .collect();
        let inputs = encode_rays::<f32>(batch.into_iter(), cfg.frequencies);
        let mut step = loss_and_gradient(&w, inputs, &images[vi].view(), &target);
        let loss = step.loss as f64;
        if !loss.is_finite() {
            return Err(Error::Diverged { iteration, loss });
        }
        losses.push(loss);
        opt.step(&mut w, &mut step.gradient, cfg.learning_rate as f32, cfg.weight_decay as f32);
        if w.tensors().any(|t| t.iter().any(|x| !x.is_finite())) {
            return Err(Error::Diverged { iteration, loss: f64::NAN });
        }
        if iteration % 100 == 0 {
            log::debug!("iteration {iteration}: loss {loss:.6e}");
        }
    }
    Ok(TrainOutcome { weights: w, losses })
}
