//! Target-domain adaptation: parameter splitting, full-batch fine-tuning of
//! the trainable subset, post-hoc bias and variance correction, nested
//! leave-one-out validation and the final fit.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::PreparedSample;
use crate::linalg::{mean, std_pop, Mat};
use crate::masking::{forward_mask, TokenMask};
use crate::model::{patchify, Predictions, Stages, StageInput, SurrogateModel, Trace};
use crate::pretrain::{loss_pred_kind, LossKind};
use crate::{Error, Result};

/// Variance-correction guard on the prediction spread.
pub const VARIANCE_EPS: f64 = 1e-12;

/// Named parameter subsets that may be fine-tuned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selector {
    /// Output rows of the scalar heads `W_k`.
    ScalarHeads,
    PatchHead,
    /// Last decoder block (the decoder norm stays fixed).
    DecoderBlockLast,
    EncoderBlockLast,
    All,
}

impl Selector {
    pub const ALL: [Selector; 5] = [
        Selector::ScalarHeads,
        Selector::PatchHead,
        Selector::DecoderBlockLast,
        Selector::EncoderBlockLast,
        Selector::All,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Selector::ScalarHeads => "scalar_heads",
            Selector::PatchHead => "patch_head",
            Selector::DecoderBlockLast => "decoder_block_last",
            Selector::EncoderBlockLast => "encoder_block_last",
            Selector::All => "all",
        }
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Selector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Selector::ALL
            .into_iter()
            .find(|sel| sel.name() == s)
            .ok_or_else(|| Error::UnknownSelector(s.to_string()))
    }
}

/// Which prediction a fine-tune targets; the other modality's loss weight is zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    #[default]
    Scalars,
    Image,
}

impl Modality {
    /// `(γ_o, γ_i)`.
    pub fn weights(self) -> (f64, f64) {
        match self {
            Modality::Scalars => (1.0, 0.0),
            Modality::Image => (0.0, 1.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::Scalars => "scalars",
            Modality::Image => "image",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scalars" => Ok(Modality::Scalars),
            "image" => Ok(Modality::Image),
            _ => Err(Error::InvalidArgument(alloc::format!("unknown modality {s:?}"))),
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::L2 => "L2",
            LossKind::L1 => "L1",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "L2" | "l2" => Ok(LossKind::L2),
            "L1" | "l1" => Ok(LossKind::L1),
            _ => Err(Error::InvalidArgument(alloc::format!("unknown loss kind {s:?}"))),
        }
    }
}

/// One fine-tuning configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FineTuneConfig {
    pub selector: Selector,
    /// Step size δ.
    pub lr: f64,
    /// Number of full-batch steps E.
    pub epochs: usize,
    pub loss_kind: LossKind,
    pub modality: Modality,
    pub bias_correct: bool,
    pub var_correct: bool,
}

impl Default for FineTuneConfig {
    fn default() -> Self {
        Self {
            selector: Selector::ScalarHeads,
            lr: 1e-2,
            epochs: 100,
            loss_kind: LossKind::L2,
            modality: Modality::Scalars,
            bias_correct: false,
            var_correct: false,
        }
    }
}

/// Disjoint cover of the flat parameter buffer into fixed and trainable ranges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSplit {
    /// `(label, range)` pairs, sorted by offset and non-overlapping.
    pub trainable: Vec<(String, Range<usize>)>,
    pub fixed: Vec<Range<usize>>,
    /// Earliest forward stage owning a trainable parameter.
    pub start_stage: usize,
}

impl ParamSplit {
    pub fn n_trainable(&self) -> usize {
        self.trainable.iter().map(|(_, r)| r.len()).sum()
    }

    pub fn is_trainable(&self, i: usize) -> bool {
        self.trainable.iter().any(|(_, r)| r.contains(&i))
    }
}

/// Resolves `selector` against the model manifest.
pub fn split_params(model: &SurrogateModel, selector: Selector) -> Result<ParamSplit> {
    let cfg = model.config();
    let manifest = model.manifest();
    let mut trainable: Vec<(String, Range<usize>)> = Vec::new();
    let mut start_stage = usize::MAX;
    let mut take_prefix = |prefix: &str, trainable: &mut Vec<(String, Range<usize>)>| {
        for info in manifest.tensors.iter().filter(|t| t.name.starts_with(prefix)) {
            trainable.push((info.name.clone(), info.tensor().range()));
            start_stage = start_stage.min(info.stage);
        }
    };
    match selector {
        Selector::ScalarHeads => {
            let t = model.tensors().head_scalar;
            let dd = cfg.dec_dim;
            let lo = t.offset + cfg.layout.n_input_tokens * dd;
            let hi = t.offset + cfg.layout.n_scalar_tokens() * dd;
            if hi > lo {
                trainable.push(("head.scalar.weight[outputs]".into(), lo..hi));
                start_stage = cfg.stages().heads();
            }
        }
        Selector::PatchHead => {
            if cfg.layout.n_patch_tokens > 0 {
                take_prefix("head.patch.", &mut trainable);
            }
        }
        Selector::DecoderBlockLast => {
            if cfg.dec_blocks > 0 {
                take_prefix(&alloc::format!("dec.blocks.{}.", cfg.dec_blocks - 1), &mut trainable);
            }
        }
        Selector::EncoderBlockLast => {
            if cfg.enc_blocks > 0 {
                take_prefix(&alloc::format!("enc.blocks.{}.", cfg.enc_blocks - 1), &mut trainable);
            }
        }
        Selector::All => take_prefix("", &mut trainable),
    }
    if trainable.is_empty() {
        return Err(Error::EmptyTrainable(selector.name().to_string()));
    }
    trainable.sort_by_key(|(_, r)| r.start);
    let mut fixed = Vec::new();
    let mut cursor = 0;
    for (_, r) in &trainable {
        if r.start > cursor {
            fixed.push(cursor..r.start);
        }
        cursor = r.end;
    }
    if cursor < manifest.total {
        fixed.push(cursor..manifest.total);
    }
    Ok(ParamSplit {
        trainable,
        fixed,
        start_stage,
    })
}

/// Subtracts the mean training residual `b = mean(pred - target)`.
///
/// Returns the corrected predictions and `b`.
pub fn bias_correct(train_preds: &[f64], targets: &[f64]) -> Result<(Vec<f64>, f64)> {
    if train_preds.is_empty() || train_preds.len() != targets.len() {
        return Err(Error::InvalidArgument("bias correction needs matching non-empty sets".into()));
    }
    let b = train_preds.iter().zip(targets).map(|(p, t)| p - t).sum::<f64>() / train_preds.len() as f64;
    Ok((train_preds.iter().map(|p| p - b).collect(), b))
}

/// Rescales deviations of `preds` about the training-prediction mean by
/// `σ(targets) / σ(train_preds)`.
pub fn variance_correct(preds: &[f64], targets: &[f64], train_preds: &[f64]) -> Result<Vec<f64>> {
    let (mu, scale) = variance_params(targets, train_preds, 0)?;
    Ok(preds.iter().map(|&p| mu + (p - mu) * scale).collect())
}

fn variance_params(targets: &[f64], train_preds: &[f64], scalar: usize) -> Result<(f64, f64)> {
    if train_preds.len() != targets.len() || targets.is_empty() {
        return Err(Error::InvalidArgument("variance correction needs matching non-empty sets".into()));
    }
    let sp = std_pop(train_preds);
    if !(sp > VARIANCE_EPS) {
        return Err(Error::DegenerateVariance { scalar, std: sp });
    }
    Ok((mean(train_preds), std_pop(targets) / sp))
}

/// Per-output-scalar corrections fitted on the fine-tuning set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionParams {
    /// `b^k`, subtracted first.
    pub bias: Option<Vec<f64>>,
    /// `(μ^k, σ(y^k)/σ(ŷ^k))` computed after the bias step.
    pub variance: Option<Vec<(f64, f64)>>,
}

impl CorrectionParams {
    /// Fits corrections from `train_preds[i][k]` and `targets[i][k]`.
    pub fn fit(train_preds: &[Vec<f64>], targets: &[Vec<f64>], bias: bool, variance: bool) -> Result<Self> {
        let n = train_preds.len();
        if n == 0 || targets.len() != n {
            return Err(Error::InvalidArgument("corrections need matching non-empty sets".into()));
        }
        let d = train_preds[0].len();
        let column = |rows: &[Vec<f64>], k: usize| rows.iter().map(|r| r[k]).collect::<Vec<f64>>();
        let mut out = CorrectionParams {
            bias: None,
            variance: None,
        };
        let mut cols: Vec<Vec<f64>> = (0..d).map(|k| column(train_preds, k)).collect();
        if bias {
            let mut b = Vec::with_capacity(d);
            for (k, col) in cols.iter_mut().enumerate() {
                let (corrected, bk) = bias_correct(col, &column(targets, k))?;
                *col = corrected;
                b.push(bk);
            }
            out.bias = Some(b);
        }
        if variance {
            let v = cols
                .iter()
                .enumerate()
                .map(|(k, col)| variance_params(&column(targets, k), col, k))
                .collect::<Result<Vec<_>>>()?;
            out.variance = Some(v);
        }
        Ok(out)
    }

    pub fn apply(&self, outputs: &mut [f64]) {
        if let Some(b) = &self.bias {
            outputs.iter_mut().zip(b).for_each(|(y, b)| *y -= b);
        }
        if let Some(v) = &self.variance {
            outputs.iter_mut().zip(v).for_each(|(y, (mu, s))| *y = mu + (*y - mu) * s);
        }
    }
}

/// A fine-tuned model together with its post-hoc corrections.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedModel {
    pub model: SurrogateModel,
    pub config: FineTuneConfig,
    /// Scalar corrections; `None` for image adaptation or when disabled.
    pub correction: Option<CorrectionParams>,
}

impl AdaptedModel {
    /// Corrected normalized output scalars under the forward mask.
    pub fn predict_outputs(&self, sample: &PreparedSample) -> Result<Vec<f64>> {
        let p = self.model.forward(sample, &forward_mask(self.model.config().layout))?;
        Ok(self.finish_outputs(&p))
    }

    /// Predicted image (pixel space) under the forward mask.
    pub fn predict_image(&self, sample: &PreparedSample) -> Result<Vec<f64>> {
        let p = self.model.forward(sample, &forward_mask(self.model.config().layout))?;
        p.image(self.model.config())
    }

    fn finish_outputs(&self, p: &Predictions) -> Vec<f64> {
        let mut out = p.outputs(self.model.config()).to_vec();
        if let Some(c) = &self.correction {
            c.apply(&mut out);
        }
        out
    }

    /// Held-out error in the adapted modality: scalar MSE averaged over
    /// outputs, or pixel MSE.
    pub fn error(&self, sample: &PreparedSample) -> Result<f64> {
        let p = self.model.forward(sample, &forward_mask(self.model.config().layout))?;
        self.error_from(&p, sample)
    }

    fn error_from(&self, p: &Predictions, sample: &PreparedSample) -> Result<f64> {
        match self.config.modality {
            Modality::Scalars => Ok(scalar_mse(&self.finish_outputs(p), &sample.o)),
            Modality::Image => image_mse(p, sample, self.model.config()),
        }
    }
}

pub(crate) fn scalar_mse(pred: &[f64], target: &[f64]) -> f64 {
    pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len().max(1) as f64
}

pub(crate) fn image_mse(p: &Predictions, sample: &PreparedSample, cfg: &crate::model::ModelConfig) -> Result<f64> {
    if cfg.layout.n_patch_tokens == 0 {
        return Ok(0.0);
    }
    let target = patchify(&sample.img, cfg)?;
    let n = target.data.len() as f64;
    Ok(p.patches.data.iter().zip(&target.data).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n)
}

/// Result of nested leave-one-out validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    /// Mean held-out error; `+∞` when any fold is degenerate.
    pub v: f64,
    pub fold_errors: Vec<f64>,
}

impl Validation {
    pub fn from_folds(fold_errors: Vec<f64>) -> Self {
        let v = if fold_errors.iter().any(|e| !e.is_finite()) || fold_errors.is_empty() {
            f64::INFINITY
        } else {
            mean(&fold_errors)
        };
        Validation { v, fold_errors }
    }
}

/// Whether an error marks a configuration as unusable rather than a bug.
pub fn is_degenerate(e: &Error) -> bool {
    matches!(e, Error::DegenerateVariance { .. } | Error::NonFinite(_))
}

/// A checkpoint plus target samples with the frozen-prefix activations cached.
///
/// Parameters before a selector's start stage never change during
/// fine-tuning, so the activation entering that stage is computed once per
/// sample and reused by every configuration and fold.
pub struct FineTuneContext<'a> {
    checkpoint: &'a SurrogateModel,
    samples: &'a [PreparedSample],
    mask: TokenMask,
    activations: Vec<Vec<Option<Mat>>>,
}

impl<'a> FineTuneContext<'a> {
    pub fn new(checkpoint: &'a SurrogateModel, samples: &'a [PreparedSample]) -> Result<Self> {
        let mask = forward_mask(checkpoint.config().layout);
        let count = checkpoint.config().stages().count();
        let activations = samples
            .iter()
            .map(|s| {
                let trace = checkpoint.forward_trace(s, &mask)?;
                Ok((0..count).map(|st| trace.stage_input(st).cloned()).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            checkpoint,
            samples,
            mask,
            activations,
        })
    }

    pub fn checkpoint(&self) -> &SurrogateModel {
        self.checkpoint
    }

    pub fn samples(&self) -> &[PreparedSample] {
        self.samples
    }

    fn trace(&self, model: &SurrogateModel, i: usize, start: usize) -> Result<Trace> {
        if start == Stages::EMBED {
            return model.forward_trace(&self.samples[i], &self.mask);
        }
        let act = self.activations[i][start].clone().expect("cached stage input");
        model.forward_from(StageInput::Activation(start, act), &self.mask)
    }

    /// Fine-tunes on the samples at `indices` (in that order).
    pub fn finetune(&self, indices: &[usize], cfg: &FineTuneConfig) -> Result<AdaptedModel> {
        if indices.is_empty() {
            return Err(Error::Empty("fine-tuning set"));
        }
        if !cfg.lr.is_finite() || cfg.lr < 0.0 {
            return Err(Error::InvalidArgument("learning rate must be finite and non-negative".into()));
        }
        let split = split_params(self.checkpoint, cfg.selector)?;
        let start = split.start_stage;
        let mc = *self.checkpoint.config();
        let (go, gi) = cfg.modality.weights();
        let mut model = self.checkpoint.clone();
        let n = indices.len() as f64;
        if cfg.lr > 0.0 {
            for _ in 0..cfg.epochs {
                let mut grads = model.zero_grads();
                let mut loss = 0.0;
                for &i in indices {
                    let trace = self.trace(&model, i, start)?;
                    let (l, g) = loss_pred_kind(&trace.predictions, &self.samples[i], &mc, go, gi, cfg.loss_kind)?;
                    loss += l;
                    model.backward(&trace, &g, &mut grads);
                }
                if !loss.is_finite() {
                    return Err(Error::NonFinite("fine-tuning loss".into()));
                }
                let step = cfg.lr / n;
                for (_, r) in &split.trainable {
                    for j in r.clone() {
                        model.params[j] -= step * grads.data[j];
                    }
                }
            }
            if split.trainable.iter().any(|(_, r)| model.params[r.clone()].iter().any(|v| !v.is_finite())) {
                return Err(Error::NonFinite("fine-tuned parameters".into()));
            }
        }
        let mut adapted = AdaptedModel {
            model,
            config: *cfg,
            correction: None,
        };
        if cfg.modality == Modality::Scalars && (cfg.bias_correct || cfg.var_correct) {
            let mut preds = Vec::with_capacity(indices.len());
            let mut targets = Vec::with_capacity(indices.len());
            for &i in indices {
                let p = self.trace(&adapted.model, i, start)?.predictions;
                preds.push(p.outputs(&mc).to_vec());
                targets.push(self.samples[i].o.clone());
            }
            adapted.correction = Some(CorrectionParams::fit(&preds, &targets, cfg.bias_correct, cfg.var_correct)?);
        }
        Ok(adapted)
    }

    /// Held-out error of `adapted` on sample `i`, reusing the cached prefix.
    pub fn error(&self, adapted: &AdaptedModel, i: usize) -> Result<f64> {
        let start = split_params(self.checkpoint, adapted.config.selector)?.start_stage;
        let p = self.trace(&adapted.model, i, start)?.predictions;
        adapted.error_from(&p, &self.samples[i])
    }

    /// Errors of `adapted` on every sample in `held_out`.
    pub fn errors(&self, adapted: &AdaptedModel, held_out: &[usize]) -> Result<Vec<f64>> {
        held_out.iter().map(|&i| self.error(adapted, i)).collect()
    }

    /// Leave-one-out over `indices`: fine-tune on the rest, score the held-out sample.
    pub fn nested_loo(&self, indices: &[usize], cfg: &FineTuneConfig) -> Result<Validation> {
        if indices.len() < 2 {
            return Err(Error::InvalidArgument("nested validation needs at least two samples".into()));
        }
        let mut fold_errors = Vec::with_capacity(indices.len());
        for (f, &held) in indices.iter().enumerate() {
            let rest: Vec<usize> = indices.iter().enumerate().filter(|&(j, _)| j != f).map(|(_, &i)| i).collect();
            let err = match self.finetune(&rest, cfg) {
                Ok(adapted) => self.error(&adapted, held)?,
                Err(e) if is_degenerate(&e) => f64::INFINITY,
                Err(e) => return Err(e),
            };
            fold_errors.push(if err.is_finite() { err } else { f64::INFINITY });
        }
        Ok(Validation::from_folds(fold_errors))
    }
}

/// Fine-tunes `checkpoint` on `train` with `cfg`.
pub fn finetune(checkpoint: &SurrogateModel, train: &[PreparedSample], cfg: &FineTuneConfig) -> Result<AdaptedModel> {
    let ctx = FineTuneContext::new(checkpoint, train)?;
    let all: Vec<usize> = (0..train.len()).collect();
    ctx.finetune(&all, cfg)
}

/// Mean held-out error over the leave-one-out folds of `train`.
pub fn nested_loo_validation(
    checkpoint: &SurrogateModel,
    train: &[PreparedSample],
    cfg: &FineTuneConfig,
) -> Result<Validation> {
    let ctx = FineTuneContext::new(checkpoint, train)?;
    let all: Vec<usize> = (0..train.len()).collect();
    ctx.nested_loo(&all, cfg)
}

/// Single fine-tune on training plus validation data with the selected config.
pub fn final_fit(checkpoint: &SurrogateModel, train_and_val: &[PreparedSample], cfg: &FineTuneConfig) -> Result<AdaptedModel> {
    finetune(checkpoint, train_and_val, cfg)
}

/// A no-op adaptation: the checkpoint itself, uncorrected.
pub fn unadapted(checkpoint: &SurrogateModel, modality: Modality) -> AdaptedModel {
    AdaptedModel {
        model: checkpoint.clone(),
        config: FineTuneConfig {
            epochs: 0,
            lr: 0.0,
            modality,
            ..FineTuneConfig::default()
        },
        correction: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use alloc::vec;

    fn micro() -> SurrogateModel {
        SurrogateModel::init(ModelConfig::micro(), 0).unwrap()
    }

    fn samples(n: usize) -> Vec<PreparedSample> {
        (0..n)
            .map(|i| {
                let f = i as f64 / n as f64;
                PreparedSample {
                    x: vec![f, 1.0 - f],
                    o: vec![0.3 + 0.5 * f, 0.8 - 0.4 * f * f],
                    img: (0..16).map(|p| 0.5 + 0.05 * p as f64 + f).collect(),
                }
            })
            .collect()
    }

    #[test]
    fn selector_names_round_trip() {
        for s in Selector::ALL {
            assert_eq!(s.name().parse::<Selector>().unwrap(), s);
        }
        assert_eq!("last_layer".parse::<Selector>().unwrap_err(), Error::UnknownSelector("last_layer".into()));
    }

    #[test]
    fn splits_cover_all_parameters_disjointly() {
        let m = micro();
        for s in Selector::ALL {
            let split = split_params(&m, s).unwrap();
            let mut ranges: Vec<Range<usize>> = split.trainable.iter().map(|(_, r)| r.clone()).collect();
            ranges.extend(split.fixed.iter().cloned());
            ranges.sort_by_key(|r| r.start);
            let mut cursor = 0;
            for r in ranges {
                assert_eq!(r.start, cursor, "{s}");
                cursor = r.end;
            }
            assert_eq!(cursor, m.params.len());
        }
        assert!(split_params(&m, Selector::All).unwrap().fixed.is_empty());
    }

    #[test]
    fn scalar_heads_cover_output_rows_only() {
        let m = micro();
        let split = split_params(&m, Selector::ScalarHeads).unwrap();
        let t = m.tensors().head_scalar;
        let dd = m.config().dec_dim;
        assert_eq!(split.trainable.len(), 1);
        assert_eq!(split.trainable[0].1, t.offset + 2 * dd..t.offset + 4 * dd);
        assert_eq!(split.start_stage, m.config().stages().heads());
    }

    #[test]
    fn missing_layers_give_empty_trainable() {
        let mut cfg = ModelConfig::micro();
        cfg.layout = crate::masking::TokenLayout::new(2, 2, 0);
        let m = SurrogateModel::init(cfg, 0).unwrap();
        assert_eq!(
            split_params(&m, Selector::PatchHead).unwrap_err(),
            Error::EmptyTrainable("patch_head".into())
        );
    }

    #[test]
    fn bias_correction_examples() {
        let (c, b) = bias_correct(&[2.0, 2.0, 2.0], &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!((c, b), (vec![1.0; 3], 1.0));
        let (c, b) = bias_correct(&[1.0, 3.0], &[0.0, 0.0]).unwrap();
        assert_eq!((c, b), (vec![-1.0, 1.0], 2.0));
        assert_eq!(bias_correct(&[0.4, 0.6], &[0.4, 0.6]).unwrap().1, 0.0);
    }

    #[test]
    fn variance_correction_examples() {
        let c = variance_correct(&[0.0, 4.0], &[1.0, 3.0], &[0.0, 4.0]).unwrap();
        assert_eq!(c, vec![1.0, 3.0]);
        assert_eq!(variance_correct(&[5.0, 7.0], &[0.0, 2.0], &[1.0, 3.0]).unwrap(), vec![5.0, 7.0]);
        assert!(matches!(
            variance_correct(&[1.0], &[1.0, 3.0], &[2.0, 2.0]),
            Err(Error::DegenerateVariance { .. })
        ));
    }

    #[test]
    fn zero_epochs_or_zero_step_leave_parameters_unchanged() {
        let m = micro();
        let data = samples(4);
        for cfg in [
            FineTuneConfig { epochs: 0, ..Default::default() },
            FineTuneConfig { lr: 0.0, epochs: 100, selector: Selector::All, ..Default::default() },
        ] {
            assert_eq!(finetune(&m, &data, &cfg).unwrap().model.params, m.params);
        }
        let bias_only = FineTuneConfig { epochs: 0, bias_correct: true, ..Default::default() };
        let a = finetune(&m, &data, &bias_only).unwrap();
        assert!(a.correction.unwrap().bias.is_some());
    }

    #[test]
    fn fixed_parameters_are_bit_identical() {
        let m = micro();
        let data = samples(5);
        for s in [Selector::ScalarHeads, Selector::DecoderBlockLast, Selector::EncoderBlockLast] {
            let cfg = FineTuneConfig { selector: s, lr: 0.05, epochs: 5, ..Default::default() };
            let a = finetune(&m, &data, &cfg).unwrap();
            let split = split_params(&m, s).unwrap();
            for r in &split.fixed {
                assert_eq!(a.model.params[r.clone()], m.params[r.clone()], "{s}");
            }
            assert_ne!(a.model.params, m.params, "{s}");
        }
    }

    #[test]
    fn prefix_cache_matches_full_forward() {
        let m = micro();
        let data = samples(3);
        let cfg = FineTuneConfig { selector: Selector::DecoderBlockLast, lr: 0.1, epochs: 3, ..Default::default() };
        let a = finetune(&m, &data, &cfg).unwrap();
        // reference: full forward passes, manual gradient steps
        let mut r = m.clone();
        let split = split_params(&m, cfg.selector).unwrap();
        let masks: Vec<TokenMask> = (0..3).map(|_| forward_mask(m.config().layout)).collect();
        for _ in 0..3 {
            let batch: Vec<(&PreparedSample, &TokenMask)> = data.iter().zip(&masks).collect();
            let mc = *m.config();
            let (_, g) = r
                .gradients(&batch, |p, s, _| crate::pretrain::loss_pred(p, s, &mc, 1.0, 0.0))
                .unwrap();
            for (_, rg) in &split.trainable {
                for j in rg.clone() {
                    r.params[j] -= 0.1 * g.data[j];
                }
            }
        }
        for (x, y) in a.model.params.iter().zip(&r.params) {
            assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn nested_loo_with_no_adaptation_is_the_baseline() {
        let m = micro();
        let data = samples(4);
        let cfg = FineTuneConfig { epochs: 0, ..Default::default() };
        let v = nested_loo_validation(&m, &data, &cfg).unwrap();
        let base = unadapted(&m, Modality::Scalars);
        let expected: Vec<f64> = data.iter().map(|s| base.error(s).unwrap()).collect();
        assert_eq!(v.fold_errors, expected);
        assert_eq!(v.v, mean(&expected));
        let two = nested_loo_validation(&m, &data[..2], &cfg).unwrap();
        assert_eq!(two.fold_errors.len(), 2);
    }

    #[test]
    fn degenerate_variance_marks_validation_infinite() {
        let m = micro();
        // zeroed heads make every prediction constant
        let mut flat = m.clone();
        let t = flat.tensors().head_scalar;
        flat.params[t.range()].fill(0.0);
        let data = samples(3);
        let cfg = FineTuneConfig { epochs: 0, var_correct: true, ..Default::default() };
        let v = nested_loo_validation(&flat, &data, &cfg).unwrap();
        assert_eq!(v.v, f64::INFINITY);
    }

    #[test]
    fn corrections_apply_in_order() {
        let preds = vec![vec![1.0], vec![3.0], vec![5.0]];
        let targets = vec![vec![0.0], vec![1.0], vec![2.0]];
        let c = CorrectionParams::fit(&preds, &targets, true, true).unwrap();
        let mut out: Vec<f64> = preds.iter().map(|p| p[0]).collect();
        for y in out.chunks_mut(1) {
            c.apply(y);
        }
        for (o, t) in out.iter().zip([0.0, 1.0, 2.0]) {
            assert!((o - t).abs() < 1e-12);
        }
    }
}
