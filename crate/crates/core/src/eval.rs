//! Metrics, the leave-k-out evaluation protocol, linear CKA and report assembly.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::adapt::{is_degenerate, unadapted, AdaptedModel, FineTuneConfig, FineTuneContext, Modality, Validation};
use crate::data::{NormStats, PreparedSample};
use crate::hpograph::{argmin_finite, GridSpec, HyperParamGrid, NeighborhoodTable};
use crate::linalg::{matmul, mean, std_sample, Mat};
use crate::masking::forward_mask;
use crate::model::SurrogateModel;
use crate::runner::TaskRunner;
use crate::stats::{paired_t_test, TTest};
use crate::{Error, Result};

/// Normalized-space errors of one model on a test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Squared error per output scalar, averaged over samples.
    pub per_scalar: Vec<f64>,
    /// Squared error averaged over pixels and samples.
    pub image: f64,
}

impl Metrics {
    /// Mean over scalars, each weighted equally.
    pub fn mean_scalar(&self) -> f64 {
        mean(&self.per_scalar)
    }

    /// Per-scalar MSE in raw units (`span_k²` times the normalized value).
    pub fn raw_per_scalar(&self, norm: &NormStats) -> Vec<f64> {
        self.per_scalar
            .iter()
            .enumerate()
            .map(|(k, m)| m * norm.output_span(k) * norm.output_span(k))
            .collect()
    }
}

/// Per-scalar and image MSE of `model` (with its corrections) on `test`.
pub fn mse_metrics(model: &AdaptedModel, test: &[PreparedSample]) -> Result<Metrics> {
    if test.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let cfg = *model.model.config();
    let mask = forward_mask(cfg.layout);
    let mut per_scalar = vec![0.0; cfg.layout.n_output_tokens];
    let mut image = 0.0;
    for s in test {
        let p = model.model.forward(s, &mask)?;
        let mut out = p.outputs(&cfg).to_vec();
        if let Some(c) = &model.correction {
            c.apply(&mut out);
        }
        for (acc, (y, t)) in per_scalar.iter_mut().zip(out.iter().zip(&s.o)) {
            *acc += (y - t) * (y - t);
        }
        image += crate::adapt::image_mse(&p, s, &cfg)?;
    }
    let n = test.len() as f64;
    per_scalar.iter_mut().for_each(|v| *v /= n);
    Ok(Metrics {
        per_scalar,
        image: image / n,
    })
}

/// Column-centered copy of `x`.
fn centered(x: &Mat) -> Mat {
    let mut c = x.clone();
    for j in 0..x.cols {
        let m = (0..x.rows).map(|i| x.get(i, j)).sum::<f64>() / x.rows as f64;
        for i in 0..x.rows {
            c.row_mut(i)[j] -= m;
        }
    }
    c
}

/// Linear centered kernel alignment between two feature sets over the same rows.
pub fn cka_linear(x: &Mat, y: &Mat) -> Result<f64> {
    if x.rows != y.rows {
        return Err(Error::Dimension {
            what: "CKA rows",
            expected: x.rows,
            got: y.rows,
        });
    }
    if x.rows < 2 {
        return Err(Error::InvalidArgument("CKA needs at least two samples".into()));
    }
    let (xc, yc) = (centered(x), centered(y));
    let (xt, yt) = (xc.transpose(), yc.transpose());
    let cross = matmul(&yt, &xc).frobenius_sq();
    let xx = libm::sqrt(matmul(&xt, &xc).frobenius_sq());
    let yy = libm::sqrt(matmul(&yt, &yc).frobenius_sq());
    if xx == 0.0 || yy == 0.0 {
        return Ok(0.0);
    }
    Ok((cross / (xx * yy)).clamp(0.0, 1.0))
}

/// Decoder embeddings `e_k` of every output token: one `n × dec_dim` matrix per output.
pub fn output_features(model: &SurrogateModel, samples: &[PreparedSample]) -> Result<Vec<Mat>> {
    let cfg = model.config();
    let mask = forward_mask(cfg.layout);
    let mut feats: Vec<Mat> = (0..cfg.layout.n_output_tokens)
        .map(|_| Mat::zeros(samples.len(), cfg.dec_dim))
        .collect();
    for (i, s) in samples.iter().enumerate() {
        let trace = model.forward_trace(s, &mask)?;
        for (k, tok) in cfg.layout.outputs().enumerate() {
            feats[k].row_mut(i).copy_from_slice(trace.features().row(tok));
        }
    }
    Ok(feats)
}

/// Per-output CKA between pretrained and each adapted model's `e_k` features.
pub fn cka_analysis(
    pretrained: &SurrogateModel,
    adapted: &[&SurrogateModel],
    samples: &[PreparedSample],
) -> Result<Vec<Vec<f64>>> {
    let base = output_features(pretrained, samples)?;
    adapted
        .iter()
        .map(|m| {
            if m.config() != pretrained.config() {
                return Err(Error::ArchitectureMismatch("CKA models differ in architecture".into()));
            }
            let feats = output_features(m, samples)?;
            base.iter().zip(&feats).map(|(a, b)| cka_linear(a, b)).collect()
        })
        .collect()
}

/// All `k`-element subsets of `0..n` in lexicographic order.
pub fn leave_out_folds(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        let Some(pos) = (0..k).rev().find(|&i| cur[i] < n - k + i) else {
            return out;
        };
        cur[pos] += 1;
        for j in pos + 1..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

/// Report label of the selector with neighborhood size `k`.
pub fn selector_label(k: usize) -> String {
    match k {
        0 => "VE_min".into(),
        1 => "GSE_min".into(),
        _ => format!("GSE_min_k{k}"),
    }
}

pub const BASELINE: &str = "baseline";

/// Protocol settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    /// Test samples held out per fold.
    pub k_leave: usize,
    /// Neighborhood sizes to select with; raw argmin (`0`) is always included.
    pub k_select: Vec<usize>,
    pub modalities: Vec<Modality>,
    /// Compute CKA of the scalar final fits against the checkpoint.
    pub cka: bool,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            k_leave: 1,
            k_select: vec![1],
            modalities: vec![Modality::Scalars],
            cka: true,
        }
    }
}

impl ProtocolConfig {
    /// `0` followed by the requested sizes, sorted and deduplicated.
    pub fn ks(&self) -> Vec<usize> {
        let mut ks = self.k_select.clone();
        ks.push(0);
        ks.sort_unstable();
        ks.dedup();
        ks
    }
}

/// Outcome of one selector on one fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    pub k: usize,
    pub label: String,
    pub config: Option<usize>,
    /// Errors per test sample: per-scalar squared errors, or one pixel MSE.
    pub test_errors: Vec<Vec<f64>>,
    /// Per-output CKA of the final fit against the checkpoint.
    pub cka: Option<Vec<f64>>,
    /// Why the fold produced no result for this selector.
    pub failure: Option<String>,
}

/// Everything measured on one fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub test: Vec<usize>,
    /// Samples used for nested validation, ascending.
    pub train: Vec<usize>,
    /// Nested leave-one-out validation error per configuration.
    pub v: Vec<f64>,
    /// `fold_errors[c][j]` is the held-out error of config `c` on `train[j]`.
    pub fold_errors: Vec<Vec<f64>>,
    pub baseline: Vec<Vec<f64>>,
    pub selections: Vec<SelectionOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityResult {
    pub modality: Modality,
    pub folds: Vec<FoldRecord>,
}

/// Complete, serializable protocol output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolResult {
    pub n_samples: usize,
    pub k_leave: usize,
    pub ks: Vec<usize>,
    pub grid: GridSpec,
    pub results: Vec<ModalityResult>,
}

impl ProtocolResult {
    pub fn n_folds(&self) -> usize {
        self.results.first().map_or(0, |r| r.folds.len())
    }

    pub fn modality(&self, m: Modality) -> Option<&ModalityResult> {
        self.results.iter().find(|r| r.modality == m)
    }
}

fn sample_errors(adapted: &AdaptedModel, samples: &[PreparedSample], idx: &[usize]) -> Result<Vec<Vec<f64>>> {
    idx.iter()
        .map(|&i| {
            let s = &samples[i];
            Ok(match adapted.config.modality {
                Modality::Scalars => adapted
                    .predict_outputs(s)?
                    .iter()
                    .zip(&s.o)
                    .map(|(y, t)| (y - t) * (y - t))
                    .collect(),
                Modality::Image => vec![adapted.error(s)?],
            })
        })
        .collect()
}

fn complement(n: usize, excluded: &[usize]) -> Vec<usize> {
    (0..n).filter(|i| !excluded.contains(i)).collect()
}

/// Leave-`k_leave`-out evaluation with nested leave-one-out grid sweeps.
///
/// A nested fine-tune depends only on its training subset, and the same
/// subset arises in several outer folds, so each `(config, subset)` pair is
/// fine-tuned once and scored on every sample outside the subset.
pub fn leave_k_out_protocol<R: TaskRunner>(
    checkpoint: &SurrogateModel,
    target: &[PreparedSample],
    grid: &HyperParamGrid,
    pc: &ProtocolConfig,
    runner: &R,
) -> Result<ProtocolResult> {
    let n = target.len();
    if pc.k_leave == 0 || n < pc.k_leave + 2 {
        return Err(Error::InvalidArgument(format!(
            "leave-{}-out needs at least {} target samples, got {n}",
            pc.k_leave,
            pc.k_leave + 2
        )));
    }
    if pc.modalities.is_empty() {
        return Err(Error::Empty("protocol modalities"));
    }
    let ctx = FineTuneContext::new(checkpoint, target)?;
    let folds = leave_out_folds(n, pc.k_leave);
    let ks = pc.ks();
    let tables: Vec<NeighborhoodTable> = ks.iter().map(|&k| NeighborhoodTable::new(grid.lattice(), k)).collect();
    let base_features = if pc.cka { Some(output_features(checkpoint, target)?) } else { None };

    let subsets: Vec<Vec<usize>> = leave_out_folds(n, pc.k_leave + 1)
        .iter()
        .map(|held| complement(n, held))
        .collect();
    let subset_index: BTreeMap<&[usize], usize> = subsets.iter().enumerate().map(|(i, s)| (s.as_slice(), i)).collect();

    let mut results = Vec::new();
    for &modality in &pc.modalities {
        let g = grid.with_modality(modality);
        let configs = g.configs();
        let n_sub = subsets.len();
        // errors[c * n_sub + s][i]: held-out error on sample i (NaN where i is in the subset)
        let errors = runner.run(configs.len() * n_sub, |task| -> Result<Vec<f64>> {
            let (c, s) = (task / n_sub, task % n_sub);
            let held = complement(n, &subsets[s]);
            let mut row = vec![f64::NAN; n];
            match ctx.finetune(&subsets[s], &configs[c]) {
                Ok(adapted) => {
                    for &i in &held {
                        let e = match ctx.error(&adapted, i) {
                            Ok(e) => e,
                            Err(e) if is_degenerate(&e) => f64::INFINITY,
                            Err(e) => return Err(e),
                        };
                        row[i] = if e.is_finite() { e } else { f64::INFINITY };
                    }
                }
                Err(e) if is_degenerate(&e) => held.iter().for_each(|&i| row[i] = f64::INFINITY),
                Err(e) => return Err(e),
            }
            Ok(row)
        });
        let errors = errors.into_iter().collect::<Result<Vec<_>>>()?;

        // nested validation and selection per fold
        struct Pending {
            train: Vec<usize>,
            v: Vec<f64>,
            fold_errors: Vec<Vec<f64>>,
            picks: Vec<core::result::Result<usize, String>>,
        }
        let mut pending = Vec::with_capacity(folds.len());
        for test in &folds {
            let train = complement(n, test);
            let mut v = Vec::with_capacity(configs.len());
            let mut fold_errors = Vec::with_capacity(configs.len());
            for c in 0..configs.len() {
                let errs: Vec<f64> = train
                    .iter()
                    .map(|&val| {
                        let sub: Vec<usize> = train.iter().copied().filter(|&i| i != val).collect();
                        errors[c * n_sub + subset_index[sub.as_slice()]][val]
                    })
                    .collect();
                let val = Validation::from_folds(errs);
                v.push(val.v);
                fold_errors.push(val.fold_errors);
            }
            let picks = tables
                .iter()
                .map(|t| {
                    let smoothed = t.smooth(&v).map_err(|e| e.to_string())?;
                    argmin_finite(&smoothed).ok_or_else(|| Error::NoValidConfig.to_string())
                })
                .collect();
            pending.push(Pending {
                train,
                v,
                fold_errors,
                picks,
            });
        }

        // final fits, one per distinct (fold, config)
        let mut fits: Vec<(usize, usize)> = pending
            .iter()
            .enumerate()
            .flat_map(|(f, p)| p.picks.iter().filter_map(move |r| r.as_ref().ok().map(|&c| (f, c))))
            .collect();
        fits.sort_unstable();
        fits.dedup();
        let fitted = runner.run(fits.len(), |j| -> Result<core::result::Result<(Vec<Vec<f64>>, Option<Vec<f64>>), String>> {
            let (f, c) = fits[j];
            let adapted = match ctx.finetune(&pending[f].train, &configs[c]) {
                Ok(a) => a,
                Err(e) if is_degenerate(&e) => return Ok(Err(e.to_string())),
                Err(e) => return Err(e),
            };
            let errs = sample_errors(&adapted, target, &folds[f])?;
            let cka = match (&base_features, modality) {
                (Some(base), Modality::Scalars) => {
                    let feats = output_features(&adapted.model, target)?;
                    Some(base.iter().zip(&feats).map(|(a, b)| cka_linear(a, b)).collect::<Result<Vec<_>>>()?)
                }
                _ => None,
            };
            Ok(Ok((errs, cka)))
        });
        let fitted = fitted.into_iter().collect::<Result<Vec<_>>>()?;
        let fit_of: BTreeMap<(usize, usize), usize> = fits.iter().enumerate().map(|(j, &key)| (key, j)).collect();

        let base = unadapted(checkpoint, modality);
        let mut records = Vec::with_capacity(folds.len());
        for (f, p) in pending.into_iter().enumerate() {
            let selections = ks
                .iter()
                .zip(&p.picks)
                .map(|(&k, pick)| {
                    let mut out = SelectionOutcome {
                        k,
                        label: selector_label(k),
                        config: None,
                        test_errors: Vec::new(),
                        cka: None,
                        failure: None,
                    };
                    match pick {
                        Err(msg) => out.failure = Some(msg.clone()),
                        Ok(c) => {
                            out.config = Some(*c);
                            match &fitted[fit_of[&(f, *c)]] {
                                Ok((errs, cka)) => {
                                    out.test_errors = errs.clone();
                                    out.cka = cka.clone();
                                }
                                Err(msg) => out.failure = Some(msg.clone()),
                            }
                        }
                    }
                    out
                })
                .collect();
            records.push(FoldRecord {
                test: folds[f].clone(),
                baseline: sample_errors(&base, target, &folds[f])?,
                train: p.train,
                v: p.v,
                fold_errors: p.fold_errors,
                selections,
            });
        }
        results.push(ModalityResult {
            modality,
            folds: records,
        });
    }
    Ok(ProtocolResult {
        n_samples: n,
        k_leave: pc.k_leave,
        ks,
        grid: grid.clone().into(),
        results,
    })
}

/// Mean and standard deviation of one selector over all evaluations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectorSummary {
    pub label: String,
    /// Number of (fold, test sample) evaluations behind the scalar columns.
    pub n_evaluations: usize,
    pub failed_folds: usize,
    pub per_scalar_mean: Vec<f64>,
    pub per_scalar_std: Vec<f64>,
    pub scalar_mean: f64,
    pub scalar_std: f64,
    pub image_mean: Option<f64>,
    pub image_std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestRow {
    pub modality: Modality,
    pub a: String,
    pub b: String,
    pub n_pairs: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    /// `None` when the differences have zero variance.
    pub test: Option<TTest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CkaRow {
    pub label: String,
    /// Mean over folds of the per-output CKA.
    pub per_scalar: Vec<f64>,
}

/// One point of the validation-versus-test scatter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub modality: Modality,
    pub label: String,
    pub validation: f64,
    pub test: f64,
}

/// Aggregated view of a [`ProtocolResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub k_leave: usize,
    pub n_folds: usize,
    pub selectors: Vec<SelectorSummary>,
    pub ttests: Vec<TTestRow>,
    pub cka: Vec<CkaRow>,
    /// `(modality, k, mean over folds of min_i Ṽ_i)` for `k = 0..=5`.
    pub smoothing_curve: Vec<(Modality, usize, f64)>,
    pub scatter: Vec<ScatterPoint>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    match v.len() {
        0 => (f64::NAN, f64::NAN),
        1 => (v[0], 0.0),
        _ => (mean(v), std_sample(v)),
    }
}

/// Per-fold mean error of one selector (`None` for failed folds).
fn fold_means(m: &ModalityResult, label: &str) -> Vec<Option<f64>> {
    m.folds
        .iter()
        .map(|f| {
            let errs = if label == BASELINE {
                Some(&f.baseline)
            } else {
                f.selections
                    .iter()
                    .find(|s| s.label == label && s.failure.is_none())
                    .map(|s| &s.test_errors)
            }?;
            let per: Vec<f64> = errs.iter().map(|e| mean(e)).collect();
            Some(mean(&per))
        })
        .collect()
}

fn evaluations<'a>(m: &'a ModalityResult, label: &str) -> (Vec<&'a Vec<f64>>, usize) {
    let mut rows = Vec::new();
    let mut failed = 0;
    for f in &m.folds {
        if label == BASELINE {
            rows.extend(f.baseline.iter());
        } else {
            match f.selections.iter().find(|s| s.label == label) {
                Some(s) if s.failure.is_none() => rows.extend(s.test_errors.iter()),
                _ => failed += 1,
            }
        }
    }
    (rows, failed)
}

impl EvaluationReport {
    pub fn from_protocol(p: &ProtocolResult) -> Result<Self> {
        if p.results.is_empty() || p.n_folds() == 0 {
            return Err(Error::Empty("protocol results"));
        }
        let grid = HyperParamGrid::try_from(p.grid.clone())?;
        let mut labels = vec![String::from(BASELINE)];
        labels.extend(p.ks.iter().map(|&k| selector_label(k)));
        let scal = p.modality(Modality::Scalars);
        let img = p.modality(Modality::Image);

        let selectors = labels
            .iter()
            .map(|label| {
                let mut s = SelectorSummary {
                    label: label.clone(),
                    n_evaluations: 0,
                    failed_folds: 0,
                    per_scalar_mean: Vec::new(),
                    per_scalar_std: Vec::new(),
                    scalar_mean: f64::NAN,
                    scalar_std: f64::NAN,
                    image_mean: None,
                    image_std: None,
                };
                if let Some(m) = scal {
                    let (rows, failed) = evaluations(m, label);
                    s.n_evaluations = rows.len();
                    s.failed_folds = failed;
                    let d = rows.first().map_or(0, |r| r.len());
                    for k in 0..d {
                        let col: Vec<f64> = rows.iter().map(|r| r[k]).collect();
                        let (mu, sd) = mean_std(&col);
                        s.per_scalar_mean.push(mu);
                        s.per_scalar_std.push(sd);
                    }
                    let avg: Vec<f64> = rows.iter().map(|r| mean(r)).collect();
                    (s.scalar_mean, s.scalar_std) = mean_std(&avg);
                }
                if let Some(m) = img {
                    let (rows, failed) = evaluations(m, label);
                    s.failed_folds += failed;
                    let col: Vec<f64> = rows.iter().map(|r| r[0]).collect();
                    let (mu, sd) = mean_std(&col);
                    s.image_mean = Some(mu);
                    s.image_std = Some(sd);
                }
                s
            })
            .collect();

        let mut ttests = Vec::new();
        for m in &p.results {
            let ve = selector_label(0);
            for &k in p.ks.iter().filter(|&&k| k > 0) {
                let gse = selector_label(k);
                for a in [ve.as_str(), BASELINE] {
                    let (fa, fb) = (fold_means(m, a), fold_means(m, &gse));
                    let (xa, xb): (Vec<f64>, Vec<f64>) = fa
                        .iter()
                        .zip(&fb)
                        .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
                        .unzip();
                    ttests.push(TTestRow {
                        modality: m.modality,
                        a: a.to_string(),
                        b: gse.clone(),
                        n_pairs: xa.len(),
                        mean_a: if xa.is_empty() { f64::NAN } else { mean(&xa) },
                        mean_b: if xb.is_empty() { f64::NAN } else { mean(&xb) },
                        test: paired_t_test(&xa, &xb).ok(),
                    });
                }
            }
        }

        let mut cka = Vec::new();
        if let Some(m) = scal {
            for &k in &p.ks {
                let label = selector_label(k);
                let rows: Vec<&Vec<f64>> = m
                    .folds
                    .iter()
                    .filter_map(|f| f.selections.iter().find(|s| s.k == k).and_then(|s| s.cka.as_ref()))
                    .collect();
                if let Some(first) = rows.first() {
                    let per_scalar = (0..first.len())
                        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64)
                        .collect();
                    cka.push(CkaRow { label, per_scalar });
                }
            }
        }

        let mut smoothing_curve = Vec::new();
        for m in &p.results {
            for k in 0..=5 {
                let table = NeighborhoodTable::new(grid.lattice(), k);
                let mut mins = Vec::new();
                for f in &m.folds {
                    let s = table.smooth(&f.v)?;
                    if let Some(i) = argmin_finite(&s) {
                        mins.push(s[i]);
                    }
                }
                smoothing_curve.push((m.modality, k, if mins.is_empty() { f64::INFINITY } else { mean(&mins) }));
            }
        }

        let mut scatter = Vec::new();
        for m in &p.results {
            for f in &m.folds {
                for s in f.selections.iter().filter(|s| s.failure.is_none()) {
                    let c = s.config.expect("successful selection has a config");
                    let per: Vec<f64> = s.test_errors.iter().map(|e| mean(e)).collect();
                    scatter.push(ScatterPoint {
                        modality: m.modality,
                        label: s.label.clone(),
                        validation: f.v[c],
                        test: mean(&per),
                    });
                }
            }
        }

        Ok(EvaluationReport {
            k_leave: p.k_leave,
            n_folds: p.n_folds(),
            selectors,
            ttests,
            cka,
            smoothing_curve,
            scatter,
        })
    }

    pub fn selector(&self, label: &str) -> Option<&SelectorSummary> {
        self.selectors.iter().find(|s| s.label == label)
    }
}

/// Runs the grid sweep on one training set: nested validation for every config.
pub fn sweep<R: TaskRunner>(
    checkpoint: &SurrogateModel,
    train: &[PreparedSample],
    grid: &HyperParamGrid,
    runner: &R,
) -> Result<Vec<Validation>> {
    let ctx = FineTuneContext::new(checkpoint, train)?;
    let all: Vec<usize> = (0..train.len()).collect();
    let configs: Vec<FineTuneConfig> = grid.configs();
    runner
        .run(configs.len(), |c| ctx.nested_loo(&all, &configs[c]))
        .into_iter()
        .collect()
}
