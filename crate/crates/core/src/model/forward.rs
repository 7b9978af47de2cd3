//! Staged forward pass and its reverse-mode counterpart.
//!
//! The pipeline is split into [`Stages`]; a forward pass may start at any
//! stage given that stage's input activation. Fine-tuning uses this to
//! compute the frozen prefix once per sample and replay only the trainable
//! suffix.

use alloc::vec::Vec;

use super::layers::{self, BlockCache, LnCache};
use super::{patchify, Gradients, ModelConfig, Stages, SurrogateModel};
use crate::data::PreparedSample;
use crate::linalg::{acc_at_b, acc_col_sums, matmul_w, matmul_wt, Mat};
use crate::masking::TokenMask;
use crate::{Error, Result};

/// Model outputs for every token.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    /// One prediction per scalar token (inputs first, then outputs).
    pub scalars: Vec<f64>,
    /// One row of pixels per patch token.
    pub patches: Mat,
}

impl Predictions {
    pub fn inputs(&self, cfg: &ModelConfig) -> &[f64] {
        &self.scalars[cfg.layout.inputs()]
    }

    pub fn outputs(&self, cfg: &ModelConfig) -> &[f64] {
        &self.scalars[cfg.layout.outputs()]
    }

    /// Reassembles the predicted image.
    pub fn image(&self, cfg: &ModelConfig) -> Result<Vec<f64>> {
        super::unpatchify(&self.patches, cfg)
    }
}

/// Loss gradient with respect to [`Predictions`].
#[derive(Debug, Clone, PartialEq)]
pub struct PredGrad {
    pub scalars: Vec<f64>,
    pub patches: Mat,
}

impl PredGrad {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        Self {
            scalars: alloc::vec![0.0; cfg.layout.n_scalar_tokens()],
            patches: Mat::zeros(cfg.layout.n_patch_tokens, cfg.patch_pixels()),
        }
    }
}

/// Where a forward pass starts.
pub enum StageInput<'a> {
    Sample(&'a PreparedSample),
    Activation(usize, Mat),
}

enum StageKind {
    Embed,
    EncBlock(usize),
    EncNorm,
    Bridge,
    DecBlock(usize),
    DecNorm,
    Heads,
}

fn kind(st: &Stages, s: usize) -> StageKind {
    if s == Stages::EMBED {
        StageKind::Embed
    } else if s < st.enc_norm() {
        StageKind::EncBlock(s - 1)
    } else if s == st.enc_norm() {
        StageKind::EncNorm
    } else if s == st.bridge() {
        StageKind::Bridge
    } else if s < st.dec_norm() {
        StageKind::DecBlock(s - st.dec_block(0))
    } else if s == st.dec_norm() {
        StageKind::DecNorm
    } else {
        StageKind::Heads
    }
}

struct EmbedCache {
    /// `(row, token, value)` for visible scalar tokens.
    scalars: Vec<(usize, usize, f64)>,
    /// Output rows of visible patch tokens, aligned with `patch_in`.
    patch_rows: Vec<usize>,
    patch_in: Mat,
}

enum StageCache {
    Embed(EmbedCache),
    Block(BlockCache),
    Norm(LnCache),
    Bridge { input: Mat },
    Heads { features: Mat },
}

/// Everything a backward pass needs, plus the stage outputs of interest.
pub struct Trace {
    start: usize,
    visible: Vec<usize>,
    caches: Vec<StageCache>,
    /// Activation entering each stage, indexed by `stage - start`
    /// (absent for the embedding stage).
    inputs: Vec<Option<Mat>>,
    pub predictions: Predictions,
}

impl Trace {
    /// Decoder output embeddings (one row per token) feeding the heads.
    pub fn features(&self) -> &Mat {
        match self.caches.last() {
            Some(StageCache::Heads { features }) => features,
            _ => unreachable!("trace always ends at the heads"),
        }
    }

    /// The activation entering `stage`, if the trace covers it.
    pub fn stage_input(&self, stage: usize) -> Option<&Mat> {
        if stage < self.start {
            return None;
        }
        self.inputs.get(stage - self.start).and_then(Option::as_ref)
    }
}

impl SurrogateModel {
    fn check_inputs(&self, sample: &PreparedSample, mask: &TokenMask) -> Result<()> {
        let cfg = &self.config;
        if mask.layout() != cfg.layout {
            return Err(Error::ArchitectureMismatch(alloc::format!(
                "mask layout {:?} does not match model layout {:?}",
                mask.layout(),
                cfg.layout
            )));
        }
        let checks = [
            ("inputs", cfg.layout.n_input_tokens, sample.x.len()),
            ("outputs", cfg.layout.n_output_tokens, sample.o.len()),
        ];
        for (what, expected, got) in checks {
            if expected != got {
                return Err(Error::Dimension { what, expected, got });
            }
        }
        if cfg.layout.n_patch_tokens > 0 && sample.img.len() != cfg.img_h * cfg.img_w {
            return Err(Error::Dimension {
                what: "image",
                expected: cfg.img_h * cfg.img_w,
                got: sample.img.len(),
            });
        }
        Ok(())
    }

    /// Predictions for every token of `sample` under `mask`.
    pub fn forward(&self, sample: &PreparedSample, mask: &TokenMask) -> Result<Predictions> {
        Ok(self.forward_trace(sample, mask)?.predictions)
    }

    /// Full forward pass keeping the caches needed by [`SurrogateModel::backward`].
    pub fn forward_trace(&self, sample: &PreparedSample, mask: &TokenMask) -> Result<Trace> {
        self.check_inputs(sample, mask)?;
        self.forward_from(StageInput::Sample(sample), mask)
    }

    /// Forward pass starting at an arbitrary stage.
    pub fn forward_from(&self, input: StageInput<'_>, mask: &TokenMask) -> Result<Trace> {
        let st = self.config.stages();
        let p = &self.params;
        let t = &self.tensors;
        let heads = self.config.n_heads;
        let (start, mut h) = match input {
            StageInput::Sample(sample) => {
                let (h, cache) = self.embed(sample, mask)?;
                (Stages::EMBED, (h, Some(cache)))
            }
            StageInput::Activation(stage, m) => {
                if stage == Stages::EMBED || stage >= st.count() {
                    return Err(Error::InvalidArgument("activation stage out of range".into()));
                }
                (stage, (m, None))
            }
        };
        let mut caches = Vec::with_capacity(st.count() - start);
        let mut inputs = Vec::with_capacity(st.count() - start);
        if let Some(c) = h.1.take() {
            caches.push(StageCache::Embed(c));
            inputs.push(None);
        }
        let first = if start == Stages::EMBED { 1 } else { start };
        let mut x = h.0;
        for s in first..st.count() {
            inputs.push(Some(x.clone()));
            match kind(&st, s) {
                StageKind::Embed => unreachable!(),
                StageKind::EncBlock(i) => {
                    let (y, c) = layers::block(&x, p, &t.enc_blocks[i], heads);
                    caches.push(StageCache::Block(c));
                    x = y;
                }
                StageKind::EncNorm => {
                    let (y, c) = layers::layer_norm(&x, &p[t.enc_norm_g.range()], &p[t.enc_norm_b.range()]);
                    caches.push(StageCache::Norm(c));
                    x = y;
                }
                StageKind::Bridge => {
                    let y = self.bridge(&x, mask);
                    caches.push(StageCache::Bridge { input: x });
                    x = y;
                }
                StageKind::DecBlock(j) => {
                    let (y, c) = layers::block(&x, p, &t.dec_blocks[j], heads);
                    caches.push(StageCache::Block(c));
                    x = y;
                }
                StageKind::DecNorm => {
                    let (y, c) = layers::layer_norm(&x, &p[t.dec_norm_g.range()], &p[t.dec_norm_b.range()]);
                    caches.push(StageCache::Norm(c));
                    x = y;
                }
                StageKind::Heads => {
                    let preds = self.heads(&x);
                    caches.push(StageCache::Heads { features: x });
                    return Ok(Trace {
                        start,
                        visible: mask.visible().to_vec(),
                        caches,
                        inputs,
                        predictions: preds,
                    });
                }
            }
        }
        unreachable!("stage loop always reaches the heads")
    }

    fn embed(&self, sample: &PreparedSample, mask: &TokenMask) -> Result<(Mat, EmbedCache)> {
        let cfg = &self.config;
        let d = cfg.enc_dim;
        let layout = cfg.layout;
        let visible = mask.visible();
        let mut h = Mat::zeros(visible.len(), d);
        let mut scalars = Vec::new();
        let mut patch_rows = Vec::new();
        let mut patch_ids = Vec::new();
        let embed = &self.params[self.tensors.scalar_embed.range()];
        let pos = &self.params[self.tensors.scalar_pos.range()];
        for (row, &tok) in visible.iter().enumerate() {
            if layout.is_scalar(tok) {
                let value = if tok < layout.n_input_tokens {
                    sample.x[tok]
                } else {
                    sample.o[tok - layout.n_input_tokens]
                };
                let out = h.row_mut(row);
                let v = &embed[tok * d..(tok + 1) * d];
                let pk = &pos[tok * d..(tok + 1) * d];
                for c in 0..d {
                    out[c] = value * v[c] + pk[c];
                }
                scalars.push((row, tok, value));
            } else {
                patch_rows.push(row);
                patch_ids.push(tok - layout.n_scalar_tokens());
            }
        }
        let patch_in = if patch_ids.is_empty() {
            Mat::zeros(0, cfg.patch_pixels())
        } else {
            patchify(&sample.img, cfg)?.select_rows(&patch_ids)
        };
        if !patch_ids.is_empty() {
            let proj = matmul_w(&patch_in, &self.params[self.tensors.patch_w.range()], d);
            let bias = &self.params[self.tensors.patch_b.range()];
            for (i, (&row, &pid)) in patch_rows.iter().zip(&patch_ids).enumerate() {
                let sc = self.enc_patch_pos.row(pid);
                let out = h.row_mut(row);
                for c in 0..d {
                    out[c] = proj.data[i * d + c] + bias[c] + sc[c];
                }
            }
        }
        Ok((
            h,
            EmbedCache {
                scalars,
                patch_rows,
                patch_in,
            },
        ))
    }

    /// Projects encoder outputs to decoder width and fills masked slots.
    fn bridge(&self, enc: &Mat, mask: &TokenMask) -> Mat {
        let cfg = &self.config;
        let dd = cfg.dec_dim;
        let layout = cfg.layout;
        let p = &self.params;
        let t = &self.tensors;
        let b = layers::linear(enc, p, t.bridge_w, t.bridge_b);
        let mut z = Mat::zeros(layout.total(), dd);
        for (r, &tok) in mask.visible().iter().enumerate() {
            z.row_mut(tok).copy_from_slice(b.row(r));
        }
        let mask_tok = &p[t.mask_token.range()];
        for &tok in mask.masked() {
            z.row_mut(tok).copy_from_slice(mask_tok);
        }
        let spos = &p[t.dec_scalar_pos.range()];
        for tok in 0..layout.total() {
            let add: &[f64] = if layout.is_scalar(tok) {
                &spos[tok * dd..(tok + 1) * dd]
            } else {
                self.dec_patch_pos.row(tok - layout.n_scalar_tokens())
            };
            for (o, a) in z.row_mut(tok).iter_mut().zip(add) {
                *o += a;
            }
        }
        z
    }

    fn heads(&self, e: &Mat) -> Predictions {
        let cfg = &self.config;
        let dd = cfg.dec_dim;
        let layout = cfg.layout;
        let w = &self.params[self.tensors.head_scalar.range()];
        let scalars = (0..layout.n_scalar_tokens())
            .map(|k| crate::linalg::dot(e.row(k), &w[k * dd..(k + 1) * dd]))
            .collect();
        let patch_feats = e.select_rows(&layout.patches().collect::<Vec<_>>());
        let patches = layers::linear(&patch_feats, &self.params, self.tensors.head_patch_w, self.tensors.head_patch_b);
        Predictions { scalars, patches }
    }

    /// Accumulates `dL/dθ` into `grads` for every stage covered by `trace`.
    pub fn backward(&self, trace: &Trace, dpred: &PredGrad, grads: &mut Gradients) {
        let st = self.config.stages();
        let layout = self.config.layout;
        let dd = self.config.dec_dim;
        let de = self.config.enc_dim;
        let p = &self.params;
        let t = &self.tensors;
        let g = &mut grads.data;
        let heads = self.config.n_heads;
        let mut dx = Mat::zeros(0, 0);
        for s in (trace.start..st.count()).rev() {
            let cache = &trace.caches[s - trace.start];
            match (kind(&st, s), cache) {
                (StageKind::Heads, StageCache::Heads { features }) => {
                    let mut de_ = Mat::zeros(layout.total(), dd);
                    let w = &p[t.head_scalar.range()];
                    let gw = &mut g[t.head_scalar.range()];
                    for (k, &gk) in dpred.scalars.iter().enumerate() {
                        if gk == 0.0 {
                            continue;
                        }
                        let ek = features.row(k);
                        for c in 0..dd {
                            gw[k * dd + c] += gk * ek[c];
                        }
                        for (o, wv) in de_.row_mut(k).iter_mut().zip(&w[k * dd..(k + 1) * dd]) {
                            *o = gk * wv;
                        }
                    }
                    if layout.n_patch_tokens > 0 && dpred.patches.data.iter().any(|v| *v != 0.0) {
                        let rows: Vec<usize> = layout.patches().collect();
                        let pf = features.select_rows(&rows);
                        acc_at_b(&mut g[t.head_patch_w.range()], &pf, &dpred.patches);
                        acc_col_sums(&mut g[t.head_patch_b.range()], &dpred.patches);
                        let dpf = matmul_wt(&dpred.patches, &p[t.head_patch_w.range()], dd);
                        for (i, &r) in rows.iter().enumerate() {
                            de_.row_mut(r).copy_from_slice(dpf.row(i));
                        }
                    }
                    dx = de_;
                }
                (StageKind::DecNorm, StageCache::Norm(c)) => {
                    dx = layers::layer_norm_backward(&dx, c, &p[t.dec_norm_g.range()], g, t.dec_norm_g, t.dec_norm_b);
                }
                (StageKind::DecBlock(j), StageCache::Block(c)) => {
                    dx = layers::block_backward(&dx, c, p, g, &t.dec_blocks[j], heads);
                }
                (StageKind::Bridge, StageCache::Bridge { input }) => {
                    let spos = t.dec_scalar_pos;
                    let mut dmask = alloc::vec![0.0; dd];
                    let mut db = Mat::zeros(trace.visible.len(), dd);
                    let mut vis_row = alloc::vec![usize::MAX; layout.total()];
                    for (r, &tok) in trace.visible.iter().enumerate() {
                        vis_row[tok] = r;
                    }
                    for tok in 0..layout.total() {
                        let row = dx.row(tok);
                        if layout.is_scalar(tok) {
                            let gs = &mut g[spos.range()][tok * dd..(tok + 1) * dd];
                            for (o, v) in gs.iter_mut().zip(row) {
                                *o += v;
                            }
                        }
                        if vis_row[tok] == usize::MAX {
                            for (o, v) in dmask.iter_mut().zip(row) {
                                *o += v;
                            }
                        } else {
                            db.row_mut(vis_row[tok]).copy_from_slice(row);
                        }
                    }
                    for (o, v) in g[t.mask_token.range()].iter_mut().zip(&dmask) {
                        *o += v;
                    }
                    dx = layers::linear_backward(&db, input, p, g, t.bridge_w, t.bridge_b);
                }
                (StageKind::EncNorm, StageCache::Norm(c)) => {
                    dx = layers::layer_norm_backward(&dx, c, &p[t.enc_norm_g.range()], g, t.enc_norm_g, t.enc_norm_b);
                }
                (StageKind::EncBlock(i), StageCache::Block(c)) => {
                    dx = layers::block_backward(&dx, c, p, g, &t.enc_blocks[i], heads);
                }
                (StageKind::Embed, StageCache::Embed(c)) => {
                    let ge = t.scalar_embed;
                    let gp = t.scalar_pos;
                    for &(row, tok, value) in &c.scalars {
                        let r = dx.row(row);
                        for col in 0..de {
                            g[ge.offset + tok * de + col] += value * r[col];
                            g[gp.offset + tok * de + col] += r[col];
                        }
                    }
                    if !c.patch_rows.is_empty() {
                        let dpatch = dx.select_rows(&c.patch_rows);
                        acc_at_b(&mut g[t.patch_w.range()], &c.patch_in, &dpatch);
                        acc_col_sums(&mut g[t.patch_b.range()], &dpatch);
                    }
                }
                _ => unreachable!("stage cache out of sync"),
            }
        }
    }
}
