//! Source-domain pretraining: prediction and masked losses, the α-mixed
//! objective, Adam with a cosine-annealed learning rate, and the training loop.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::PreparedSample;
use crate::masking::{forward_mask, random_mask, TokenMask};
use crate::model::{patchify, Gradients, ModelConfig, PredGrad, Predictions, SurrogateModel};
use crate::seed;
use crate::{Error, Result};

/// Elementwise penalty used by the prediction loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum LossKind {
    #[default]
    L2,
    L1,
}

impl LossKind {
    #[inline]
    fn value_grad(self, err: f64) -> (f64, f64) {
        match self {
            LossKind::L2 => (err * err, 2.0 * err),
            LossKind::L1 => (err.abs(), if err > 0.0 { 1.0 } else if err < 0.0 { -1.0 } else { 0.0 }),
        }
    }
}

fn check(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { what, expected, got })
    }
}

/// `γ_o · mean_k pen(ô_k - o_k) + γ_i · mean_px pen(î - i)` with its gradient.
///
/// Input-scalar predictions do not contribute.
pub fn loss_pred_kind(
    pred: &Predictions,
    sample: &PreparedSample,
    cfg: &ModelConfig,
    gamma_o: f64,
    gamma_i: f64,
    kind: LossKind,
) -> Result<(f64, PredGrad)> {
    let layout = cfg.layout;
    check("scalar predictions", layout.n_scalar_tokens(), pred.scalars.len())?;
    check("output targets", layout.n_output_tokens, sample.o.len())?;
    let mut grad = PredGrad::zeros(cfg);
    let mut loss = 0.0;
    if gamma_o != 0.0 && layout.n_output_tokens > 0 {
        let n = layout.n_output_tokens as f64;
        for (k, tok) in layout.outputs().enumerate() {
            let (v, g) = kind.value_grad(pred.scalars[tok] - sample.o[k]);
            loss += gamma_o * v / n;
            grad.scalars[tok] = gamma_o * g / n;
        }
    }
    if gamma_i != 0.0 && layout.n_patch_tokens > 0 {
        check("patch predictions", grad.patches.data.len(), pred.patches.data.len())?;
        let target = patchify(&sample.img, cfg)?;
        let n = target.data.len() as f64;
        for ((p, t), g) in pred.patches.data.iter().zip(&target.data).zip(grad.patches.data.iter_mut()) {
            let (v, d) = kind.value_grad(p - t);
            loss += gamma_i * v / n;
            *g = gamma_i * d / n;
        }
    }
    Ok((loss, grad))
}

/// Squared-error prediction loss under the forward mask.
pub fn loss_pred(
    pred: &Predictions,
    sample: &PreparedSample,
    cfg: &ModelConfig,
    gamma_o: f64,
    gamma_i: f64,
) -> Result<(f64, PredGrad)> {
    loss_pred_kind(pred, sample, cfg, gamma_o, gamma_i, LossKind::L2)
}

/// Mean squared error over masked entries only: one entry per masked scalar
/// token and one per pixel of each masked patch.
pub fn loss_masked(
    pred: &Predictions,
    sample: &PreparedSample,
    mask: &TokenMask,
    cfg: &ModelConfig,
) -> Result<(f64, PredGrad)> {
    let layout = cfg.layout;
    check("scalar predictions", layout.n_scalar_tokens(), pred.scalars.len())?;
    let px = cfg.patch_pixels();
    let masked = mask.masked();
    let n_scalar = masked.iter().filter(|&&t| layout.is_scalar(t)).count();
    let n_patch = masked.len() - n_scalar;
    let count = n_scalar + n_patch * px;
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    let inv = 1.0 / count as f64;
    let mut grad = PredGrad::zeros(cfg);
    let mut loss = 0.0;
    let target_patches = if n_patch > 0 { Some(patchify(&sample.img, cfg)?) } else { None };
    for &tok in masked {
        if layout.is_scalar(tok) {
            let target = if tok < layout.n_input_tokens {
                sample.x[tok]
            } else {
                sample.o[tok - layout.n_input_tokens]
            };
            let e = pred.scalars[tok] - target;
            loss += e * e * inv;
            grad.scalars[tok] = 2.0 * e * inv;
        } else {
            let p = tok - layout.n_scalar_tokens();
            let target = target_patches.as_ref().expect("patch targets").row(p);
            let prow = pred.patches.row(p);
            let grow = grad.patches.row_mut(p);
            for j in 0..px {
                let e = prow[j] - target[j];
                loss += e * e * inv;
                grow[j] = 2.0 * e * inv;
            }
        }
    }
    Ok((loss, grad))
}

/// `α L_pred + (1 - α) L_masked`.
pub fn mix(alpha: f64, pred: f64, masked: f64) -> f64 {
    alpha * pred + (1.0 - alpha) * masked
}

/// Evaluates `α L_pred(forward mask) + (1 - α) L_masked(random mask)` for one sample.
pub fn loss_combined(
    model: &SurrogateModel,
    sample: &PreparedSample,
    alpha: f64,
    cfg: &PretrainConfig,
    gamma_i: f64,
    mask_seed: u64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument("alpha must lie in [0, 1]".into()));
    }
    let mc = model.config();
    let mut total = 0.0;
    if alpha > 0.0 {
        let p = model.forward(sample, &forward_mask(mc.layout))?;
        total += alpha * loss_pred(&p, sample, mc, cfg.gamma_o, gamma_i)?.0;
    }
    if alpha < 1.0 {
        let mask = random_mask(mc.layout, cfg.mask_rate, mask_seed)?;
        let p = model.forward(sample, &mask)?;
        total += (1.0 - alpha) * loss_masked(&p, sample, &mask, mc)?.0;
    }
    Ok(total)
}

/// `lr0 · ½ (1 + cos(π step / total))`.
pub fn cosine_lr(step: usize, total_steps: usize, lr0: f64) -> f64 {
    let total = total_steps.max(1) as f64;
    let progress = (step as f64 / total).min(1.0);
    lr0 * 0.5 * (1.0 + libm::cos(core::f64::consts::PI * progress))
}

/// Adaptive-moment optimizer state.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let b1t = 1.0 - libm::pow(self.beta1, f64::from(self.t));
        let b2t = 1.0 - libm::pow(self.beta2, f64::from(self.t));
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[i] / b1t;
            let vhat = self.v[i] / b2t;
            params[i] -= lr * mhat / (libm::sqrt(vhat) + self.eps);
        }
    }
}

/// Pretraining hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    /// Weight of the prediction loss; `1 - alpha` weighs the masked loss.
    pub alpha: f64,
    pub gamma_o: f64,
    /// Image weight; `None` balances scalar and image terms at initialization.
    pub gamma_i: Option<f64>,
    pub mask_rate: f64,
    pub lr0: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            gamma_o: 1.0,
            gamma_i: None,
            mask_rate: 0.75,
            lr0: 1e-3,
            epochs: 30,
            batch_size: 64,
            seed: 0,
        }
    }
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Learning rate used by the last step of the epoch.
    pub lr: f64,
    pub train_loss: f64,
    pub test_pred_mse_scalars: f64,
    pub test_pred_mse_image: f64,
}

/// Result of a pretraining run.
#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    /// Trained parameters, rounded to `f32` so that a checkpoint round-trip is exact.
    pub model: SurrogateModel,
    pub gamma_i: f64,
    /// Test-split errors of the untrained model.
    pub initial: EpochLog,
    pub log: Vec<EpochLog>,
}

/// Mean scalar-output and pixel MSE under the forward mask.
pub fn forward_mse(model: &SurrogateModel, samples: &[PreparedSample]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::Empty("evaluation samples"));
    }
    let mc = model.config();
    let mask = forward_mask(mc.layout);
    let (mut s, mut i) = (0.0, 0.0);
    for sample in samples {
        let p = model.forward(sample, &mask)?;
        s += loss_pred(&p, sample, mc, 1.0, 0.0)?.0;
        if mc.layout.n_patch_tokens > 0 {
            i += loss_pred(&p, sample, mc, 0.0, 1.0)?.0;
        }
    }
    let n = samples.len() as f64;
    Ok((s / n, i / n))
}

/// Image weight that equalizes the scalar and image terms for `model` on `samples`.
pub fn balance_image_weight(model: &SurrogateModel, samples: &[PreparedSample]) -> Result<f64> {
    let (s, i) = forward_mse(model, samples)?;
    Ok(if i > 0.0 { s / i } else { 1.0 })
}

fn combined_gradients(
    model: &SurrogateModel,
    batch: &[&PreparedSample],
    mask_seeds: &[u64],
    cfg: &PretrainConfig,
    gamma_i: f64,
) -> Result<(f64, Gradients)> {
    let mc = *model.config();
    let fwd = forward_mask(mc.layout);
    let mut grads = model.zero_grads();
    let mut total = 0.0;
    for (sample, &ms) in batch.iter().zip(mask_seeds) {
        if cfg.alpha > 0.0 {
            let trace = model.forward_trace(sample, &fwd)?;
            let (v, mut g) = loss_pred(&trace.predictions, sample, &mc, cfg.gamma_o, gamma_i)?;
            scale_pred_grad(&mut g, cfg.alpha);
            total += cfg.alpha * v;
            model.backward(&trace, &g, &mut grads);
        }
        if cfg.alpha < 1.0 {
            let mask = random_mask(mc.layout, cfg.mask_rate, ms)?;
            let trace = model.forward_trace(sample, &mask)?;
            let (v, mut g) = loss_masked(&trace.predictions, sample, &mask, &mc)?;
            scale_pred_grad(&mut g, 1.0 - cfg.alpha);
            total += (1.0 - cfg.alpha) * v;
            model.backward(&trace, &g, &mut grads);
        }
    }
    let n = batch.len() as f64;
    grads.scale(1.0 / n);
    let loss = total / n;
    if !loss.is_finite() {
        return Err(Error::NonFinite("pretraining loss".into()));
    }
    grads.check_finite(model)?;
    Ok((loss, grads))
}

fn scale_pred_grad(g: &mut PredGrad, s: f64) {
    g.scalars.iter_mut().for_each(|v| *v *= s);
    g.patches.data.iter_mut().for_each(|v| *v *= s);
}

/// Trains a freshly initialized surrogate on `train`, logging test-split errors per epoch.
pub fn run_pretraining(
    model_cfg: ModelConfig,
    train: &[PreparedSample],
    test: &[PreparedSample],
    cfg: &PretrainConfig,
) -> Result<PretrainOutcome> {
    if train.is_empty() {
        return Err(Error::Empty("pretraining set"));
    }
    if test.is_empty() {
        return Err(Error::Empty("pretraining test split"));
    }
    if !(0.0..=1.0).contains(&cfg.alpha) {
        return Err(Error::InvalidArgument("alpha must lie in [0, 1]".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let mut model = SurrogateModel::init(model_cfg, cfg.seed)?;
    model.round_to_f32();
    let gamma_i = match cfg.gamma_i {
        Some(g) => g,
        None => balance_image_weight(&model, test)?,
    };
    let (s0, i0) = forward_mse(&model, test)?;
    let initial = EpochLog {
        epoch: 0,
        lr: cosine_lr(0, 1, cfg.lr0),
        train_loss: f64::NAN,
        test_pred_mse_scalars: s0,
        test_pred_mse_image: i0,
    };

    let steps_per_epoch = train.len().div_ceil(cfg.batch_size);
    let total_steps = cfg.epochs * steps_per_epoch;
    let mut adam = Adam::new(model.params.len());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let mut rng = seed::rng(seed::derive_indexed(cfg.seed, "pretrain/shuffle", epoch as u64));
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut lr = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&PreparedSample> = chunk.iter().map(|&i| &train[i]).collect();
            let seeds: Vec<u64> = chunk
                .iter()
                .map(|&i| seed::derive_indexed(cfg.seed, "pretrain/mask", (epoch * train.len() + i) as u64))
                .collect();
            let (loss, grads) = combined_gradients(&model, &batch, &seeds, cfg, gamma_i)?;
            lr = cosine_lr(step, total_steps, cfg.lr0);
            adam.step(&mut model.params, &grads.data, lr);
            epoch_loss += loss * chunk.len() as f64;
            step += 1;
        }
        let (ts, ti) = forward_mse(&model, test)?;
        log.push(EpochLog {
            epoch: epoch + 1,
            lr,
            train_loss: epoch_loss / train.len() as f64,
            test_pred_mse_scalars: ts,
            test_pred_mse_image: ti,
        });
    }
    model.round_to_f32();
    Ok(PretrainOutcome {
        model,
        gamma_i,
        initial,
        log,
    })
}

/// Deterministic `(train, test)` index split holding out `n_test` samples.
pub fn holdout_split(n: usize, n_test: usize, seed_value: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::rng(seed::derive(seed_value, "pretrain/holdout")));
    let n_test = n_test.min(n);
    let mut test = idx[..n_test].to_vec();
    let mut train = idx[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    (train, test)
}

/// Runs every candidate configuration and returns the index with the lowest
/// final test error (scalar MSE plus pixel MSE), along with all outcomes.
pub fn pretrain_sweep(
    model_cfg: ModelConfig,
    train: &[PreparedSample],
    test: &[PreparedSample],
    candidates: &[PretrainConfig],
) -> Result<(usize, Vec<PretrainOutcome>)> {
    if candidates.is_empty() {
        return Err(Error::Empty("pretraining candidates"));
    }
    let outcomes = candidates
        .iter()
        .map(|c| run_pretraining(model_cfg, train, test, c))
        .collect::<Result<Vec<_>>>()?;
    let score = |o: &PretrainOutcome| {
        let last = o.log.last().copied().unwrap_or(o.initial);
        last.test_pred_mse_scalars + last.test_pred_mse_image
    };
    let best = (0..outcomes.len())
        .min_by(|&a, &b| score(&outcomes[a]).total_cmp(&score(&outcomes[b])))
        .expect("non-empty");
    Ok((best, outcomes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;
    use crate::masking::TokenLayout;

    fn scalar_cfg(n_in: usize, n_out: usize) -> ModelConfig {
        let mut c = ModelConfig::micro();
        c.layout = TokenLayout::new(n_in, n_out, 0);
        c
    }

    fn preds(scalars: Vec<f64>, cfg: &ModelConfig) -> Predictions {
        Predictions {
            scalars,
            patches: Mat::zeros(cfg.layout.n_patch_tokens, cfg.patch_pixels()),
        }
    }

    #[test]
    fn loss_pred_examples() {
        let cfg = scalar_cfg(1, 3);
        let s = PreparedSample {
            x: vec![0.5],
            o: vec![0.0, 1.0, 2.0],
            img: vec![],
        };
        let perfect = preds(vec![9.0, 0.0, 1.0, 2.0], &cfg);
        assert_eq!(loss_pred(&perfect, &s, &cfg, 1.0, 1.0).unwrap().0, 0.0);
        let off = preds(vec![0.0, 2.0, 3.0, 4.0], &cfg);
        assert_eq!(loss_pred(&off, &s, &cfg, 1.5, 0.0).unwrap().0, 1.5 * 4.0);
        // gamma_o = 0: scalar predictions are irrelevant
        assert_eq!(loss_pred(&off, &s, &cfg, 0.0, 0.0).unwrap().0, 0.0);
        assert!(loss_pred(&preds(vec![0.0; 3], &cfg), &s, &cfg, 1.0, 0.0).is_err());
    }

    #[test]
    fn loss_pred_image_term_uses_pixels() {
        let cfg = ModelConfig::micro();
        let s = PreparedSample {
            x: vec![0.0; 2],
            o: vec![0.0; 2],
            img: vec![1.0; 16],
        };
        let p = Predictions {
            scalars: vec![0.0; 4],
            patches: Mat::from_vec(4, 4, vec![3.0; 16]),
        };
        assert_eq!(loss_pred(&p, &s, &cfg, 0.0, 0.5).unwrap().0, 0.5 * 4.0);
    }

    #[test]
    fn loss_masked_examples() {
        let cfg = scalar_cfg(1, 1);
        let s = PreparedSample {
            x: vec![0.2],
            o: vec![1.0],
            img: vec![],
        };
        let mask = TokenMask::from_masked(cfg.layout, [1]).unwrap();
        let p = preds(vec![0.7, 3.0], &cfg);
        assert_eq!(loss_masked(&p, &s, &mask, &cfg).unwrap().0, 4.0);
        // visible ground truth does not matter
        let mut s2 = s.clone();
        s2.x[0] = 0.9;
        assert_eq!(loss_masked(&p, &s2, &mask, &cfg).unwrap().0, 4.0);
        let all = TokenMask::from_masked(cfg.layout, [0, 1]).unwrap();
        assert_eq!(loss_masked(&preds(vec![0.2, 1.0], &cfg), &s, &all, &cfg).unwrap().0, 0.0);
        let none = TokenMask::all_visible(cfg.layout);
        assert_eq!(loss_masked(&p, &s, &none, &cfg).unwrap_err(), Error::EmptyMask);
    }

    #[test]
    fn mix_endpoints_and_interior() {
        assert_eq!(mix(1.0, 0.3, 0.9), 0.3);
        assert_eq!(mix(0.0, 0.3, 0.9), 0.9);
        assert!((mix(0.02, 1.0, 0.5) - 0.51).abs() < 1e-15);
    }

    #[test]
    fn cosine_schedule_examples() {
        assert_eq!(cosine_lr(0, 100, 1e-3), 1e-3);
        assert!(cosine_lr(100, 100, 1e-3).abs() < 1e-18);
        assert!((cosine_lr(50, 100, 1e-3) - 5e-4).abs() < 1e-15);
        let lrs: Vec<f64> = (0..=37).map(|s| cosine_lr(s, 37, 2e-3)).collect();
        assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut adam = Adam::new(2);
        let mut p = [1.0, -1.0];
        adam.step(&mut p, &[0.5, -2.0], 0.1);
        assert!((p[0] - 0.9).abs() < 1e-7);
        assert!((p[1] + 0.9).abs() < 1e-7);
    }

    #[test]
    fn holdout_split_is_a_partition() {
        let (train, test) = holdout_split(20, 5, 3);
        assert_eq!(test.len(), 5);
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..20).collect::<Vec<_>>());
    }
}
