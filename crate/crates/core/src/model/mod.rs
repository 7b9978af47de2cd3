//! The multi-modal masked-autoencoder surrogate.
//!
//! Visible tokens are embedded (scalars as `value * v_k + pos_k`, patches as
//! `patch W_p + b + sincos`), encoded by pre-norm transformer blocks, bridged
//! to the decoder width, merged with mask-token embeddings for the masked
//! slots, decoded, and mapped to predictions: one vector `W_k` per scalar
//! token and a shared linear head for patches. Predictions are produced for
//! every token. Gradients are exact reverse-mode derivatives written by hand.

mod forward;
mod layers;
mod params;
mod posenc;

use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use forward::{PredGrad, Predictions, StageInput, Trace};
pub use params::{BlockTensors, Init, Manifest, ParamTensors, Stages, Tensor, TensorInfo};
pub use posenc::sinusoidal_pos_2d;

use crate::data::PreparedSample;
use crate::linalg::Mat;
use crate::masking::{TokenLayout, TokenMask};
use crate::seed;
use crate::{Error, Result};

/// Architecture hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layout: TokenLayout,
    pub img_h: usize,
    pub img_w: usize,
    pub patch_h: usize,
    pub patch_w: usize,
    pub enc_dim: usize,
    pub dec_dim: usize,
    pub enc_blocks: usize,
    pub dec_blocks: usize,
    pub n_heads: usize,
    pub ffn_mult: usize,
}

impl ModelConfig {
    /// Square image split into a `grid x grid` patch layout.
    fn with_image(d_in: usize, d_out: usize, img: usize, grid: usize) -> Self {
        Self {
            layout: TokenLayout::new(d_in, d_out, grid * grid),
            img_h: img,
            img_w: img,
            patch_h: img / grid.max(1),
            patch_w: img / grid.max(1),
            enc_dim: 0,
            dec_dim: 0,
            enc_blocks: 0,
            dec_blocks: 0,
            n_heads: 1,
            ffn_mult: 4,
        }
    }

    /// Full-size architecture: 512/256 widths, 8 encoder and 6 decoder blocks.
    pub fn large(d_in: usize, d_out: usize, img: usize) -> Self {
        Self {
            enc_dim: 512,
            dec_dim: 256,
            enc_blocks: 8,
            dec_blocks: 6,
            n_heads: 8,
            ..Self::with_image(d_in, d_out, img, 4)
        }
    }

    /// Desk-scale architecture: 64/32 widths, two blocks each, four heads.
    pub fn desk(d_in: usize, d_out: usize, img: usize) -> Self {
        Self {
            enc_dim: 64,
            dec_dim: 32,
            enc_blocks: 2,
            dec_blocks: 2,
            n_heads: 4,
            ..Self::with_image(d_in, d_out, img, 4)
        }
    }

    /// Smallest useful architecture for the full benchmark layout.
    pub fn tiny(d_in: usize, d_out: usize, img: usize) -> Self {
        Self {
            enc_dim: 16,
            dec_dim: 16,
            enc_blocks: 1,
            dec_blocks: 1,
            n_heads: 2,
            ffn_mult: 2,
            ..Self::with_image(d_in, d_out, img, 4)
        }
    }

    /// Width-8, single-block model over a (2, 2, 4) layout and a 4x4 image;
    /// used for gradient checks and golden values.
    pub fn micro() -> Self {
        Self {
            enc_dim: 8,
            dec_dim: 8,
            enc_blocks: 1,
            dec_blocks: 1,
            n_heads: 2,
            ffn_mult: 2,
            ..Self::with_image(2, 2, 4, 2)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.enc_dim == 0 || self.dec_dim == 0 || self.n_heads == 0 || self.ffn_mult == 0 {
            return bad("model widths, heads and ffn multiplier must be positive");
        }
        if self.enc_blocks == 0 || self.dec_blocks == 0 {
            return bad("encoder and decoder need at least one block");
        }
        if self.enc_dim % self.n_heads != 0 || self.dec_dim % self.n_heads != 0 {
            return bad("embedding widths must be divisible by the head count");
        }
        if self.layout.n_patch_tokens > 0 {
            if self.patch_h == 0
                || self.patch_w == 0
                || self.img_h % self.patch_h != 0
                || self.img_w % self.patch_w != 0
            {
                return bad("patch size must divide the image exactly");
            }
            if self.grid_h() * self.grid_w() != self.layout.n_patch_tokens {
                return bad("patch grid does not match the number of patch tokens");
            }
            if self.enc_dim % 4 != 0 || self.dec_dim % 4 != 0 {
                return bad("sinusoidal patch encodings need widths divisible by 4");
            }
        }
        Ok(())
    }

    pub fn grid_h(&self) -> usize {
        self.img_h.checked_div(self.patch_h).unwrap_or(0)
    }

    pub fn grid_w(&self) -> usize {
        self.img_w.checked_div(self.patch_w).unwrap_or(0)
    }

    pub fn patch_pixels(&self) -> usize {
        if self.layout.n_patch_tokens == 0 {
            0
        } else {
            self.patch_h * self.patch_w
        }
    }

    pub fn stages(&self) -> Stages {
        Stages {
            enc_blocks: self.enc_blocks,
            dec_blocks: self.dec_blocks,
        }
    }
}

/// Splits an `img_h x img_w` row-major image into flattened patches
/// (patches in row-major grid order, pixels row-major within a patch).
pub fn patchify(img: &[f64], cfg: &ModelConfig) -> Result<Mat> {
    let (h, w, ph, pw) = (cfg.img_h, cfg.img_w, cfg.patch_h, cfg.patch_w);
    if img.len() != h * w {
        return Err(Error::Dimension {
            what: "image",
            expected: h * w,
            got: img.len(),
        });
    }
    if ph == 0 || pw == 0 || h % ph != 0 || w % pw != 0 {
        return Err(Error::InvalidArgument(format!(
            "patch {ph}x{pw} does not divide image {h}x{w}"
        )));
    }
    let (gh, gw) = (h / ph, w / pw);
    let mut out = Mat::zeros(gh * gw, ph * pw);
    for gr in 0..gh {
        for gc in 0..gw {
            let row = out.row_mut(gr * gw + gc);
            for i in 0..ph {
                let src = (gr * ph + i) * w + gc * pw;
                row[i * pw..(i + 1) * pw].copy_from_slice(&img[src..src + pw]);
            }
        }
    }
    Ok(out)
}

/// Inverse of [`patchify`].
pub fn unpatchify(patches: &Mat, cfg: &ModelConfig) -> Result<Vec<f64>> {
    let (h, w, ph, pw) = (cfg.img_h, cfg.img_w, cfg.patch_h, cfg.patch_w);
    if ph == 0 || pw == 0 || h % ph != 0 || w % pw != 0 {
        return Err(Error::InvalidArgument("patch size does not divide image".into()));
    }
    let (gh, gw) = (h / ph, w / pw);
    if patches.rows != gh * gw || patches.cols != ph * pw {
        return Err(Error::Dimension {
            what: "patch matrix",
            expected: gh * gw * ph * pw,
            got: patches.rows * patches.cols,
        });
    }
    let mut img = alloc::vec![0.0; h * w];
    for gr in 0..gh {
        for gc in 0..gw {
            let row = patches.row(gr * gw + gc);
            for i in 0..ph {
                let dst = (gr * ph + i) * w + gc * pw;
                img[dst..dst + pw].copy_from_slice(&row[i * pw..(i + 1) * pw]);
            }
        }
    }
    Ok(img)
}

/// Parameters of a surrogate together with its fixed positional tables.
#[derive(Debug, Clone)]
pub struct SurrogateModel {
    config: ModelConfig,
    manifest: Manifest,
    tensors: ParamTensors,
    enc_patch_pos: Mat,
    dec_patch_pos: Mat,
    pub params: Vec<f64>,
}

impl PartialEq for SurrogateModel {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.params == other.params
    }
}

impl SurrogateModel {
    /// Builds a zero-parameter model; use [`SurrogateModel::init`] for training.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let (manifest, tensors) = params::build_manifest(&config);
        let (gh, gw) = (config.grid_h(), config.grid_w());
        let (enc_patch_pos, dec_patch_pos) = if config.layout.n_patch_tokens > 0 {
            (
                sinusoidal_pos_2d(gh, gw, config.enc_dim)?,
                sinusoidal_pos_2d(gh, gw, config.dec_dim)?,
            )
        } else {
            (Mat::zeros(0, config.enc_dim), Mat::zeros(0, config.dec_dim))
        };
        let params = alloc::vec![0.0; manifest.total];
        Ok(Self {
            config,
            manifest,
            tensors,
            enc_patch_pos,
            dec_patch_pos,
            params,
        })
    }

    /// Seeded initialization: truncated normal (std 0.02) for embeddings and
    /// heads, normal with std `1/sqrt(fan_in)` for projections, unit gains.
    pub fn init(config: ModelConfig, seed_value: u64) -> Result<Self> {
        let mut model = Self::zeros(config)?;
        let mut rng = seed::rng(seed::derive(seed_value, "model/init"));
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        for info in &model.manifest.tensors {
            let slice = &mut model.params[info.tensor().range()];
            match info.init {
                Init::Zeros => slice.fill(0.0),
                Init::Ones => slice.fill(1.0),
                Init::TruncNormal => {
                    for v in slice.iter_mut() {
                        let z = loop {
                            let z: f64 = unit.sample(&mut rng);
                            if z.abs() <= 2.0 {
                                break z;
                            }
                        };
                        *v = 0.02 * z;
                    }
                }
                Init::FanIn => {
                    let std = 1.0 / libm::sqrt(info.shape[0] as f64);
                    for v in slice.iter_mut() {
                        *v = std * unit.sample(&mut rng);
                    }
                }
            }
        }
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn tensors(&self) -> &ParamTensors {
        &self.tensors
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.manifest.find(name).map(|t| &self.params[t.tensor().range()])
    }

    /// Replaces all parameters; the length must match the manifest.
    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.manifest.total {
            return Err(Error::Dimension {
                what: "parameter buffer",
                expected: self.manifest.total,
                got: params.len(),
            });
        }
        self.params = params;
        Ok(())
    }

    /// Rounds every parameter to the nearest `f32` (the checkpoint precision).
    pub fn round_to_f32(&mut self) {
        for p in &mut self.params {
            *p = f64::from(*p as f32);
        }
    }

    /// `value * v_k + pos_k` for scalar token `k`.
    pub fn embed_scalar(&self, value_norm: f64, k: usize) -> Result<Vec<f64>> {
        let n = self.config.layout.n_scalar_tokens();
        if k >= n {
            return Err(Error::TokenOutOfRange { index: k, len: n });
        }
        let d = self.config.enc_dim;
        let v = &self.params[self.tensors.scalar_embed.range()][k * d..(k + 1) * d];
        let pos = &self.params[self.tensors.scalar_pos.range()][k * d..(k + 1) * d];
        Ok(v.iter().zip(pos).map(|(a, p)| value_norm * a + p).collect())
    }

    /// Mean loss and mean gradient over a batch of `(sample, mask)` pairs.
    ///
    /// `loss` maps predictions to a value and its gradient with respect to
    /// the predictions.
    pub fn gradients<F>(&self, batch: &[(&PreparedSample, &TokenMask)], loss: F) -> Result<(f64, Gradients)>
    where
        F: Fn(&Predictions, &PreparedSample, &TokenMask) -> Result<(f64, PredGrad)>,
    {
        if batch.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let mut grads = self.zero_grads();
        let mut total = 0.0;
        for (sample, mask) in batch {
            let trace = self.forward_trace(sample, mask)?;
            let (value, dpred) = loss(&trace.predictions, sample, mask)?;
            if !value.is_finite() {
                return Err(Error::NonFinite("loss".into()));
            }
            total += value;
            self.backward(&trace, &dpred, &mut grads);
        }
        let n = batch.len() as f64;
        grads.scale(1.0 / n);
        grads.check_finite(self)?;
        Ok((total / n, grads))
    }

    /// Runs the encoder stack (blocks and final norm) on already-embedded tokens.
    pub fn encode(&self, tokens: &Mat) -> Mat {
        let t = &self.tensors;
        let mut x = tokens.clone();
        for block in &t.enc_blocks {
            x = layers::block(&x, &self.params, block, self.config.n_heads).0;
        }
        layers::layer_norm(&x, &self.params[t.enc_norm_g.range()], &self.params[t.enc_norm_b.range()]).0
    }

    pub fn zero_grads(&self) -> Gradients {
        Gradients {
            data: alloc::vec![0.0; self.manifest.total],
        }
    }
}

/// Gradient buffer laid out like the parameter buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub data: Vec<f64>,
}

impl Gradients {
    pub fn tensor<'a>(&'a self, model: &SurrogateModel, name: &str) -> Option<&'a [f64]> {
        model.manifest().find(name).map(|t| &self.data[t.tensor().range()])
    }

    pub fn scale(&mut self, s: f64) {
        for g in &mut self.data {
            *g *= s;
        }
    }

    /// Fails with the first tensor holding a non-finite entry.
    pub fn check_finite(&self, model: &SurrogateModel) -> Result<()> {
        if let Some(i) = self.data.iter().position(|g| !g.is_finite()) {
            let name = model
                .manifest()
                .owner(i)
                .map(|t| t.name.clone())
                .unwrap_or_else(|| "unknown".into());
            return Err(Error::NonFinite(format!("gradient of {name}")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn presets_validate() {
        for cfg in [
            ModelConfig::large(9, 10, 60),
            ModelConfig::desk(9, 10, 24),
            ModelConfig::tiny(9, 10, 24),
            ModelConfig::micro(),
        ] {
            cfg.validate().unwrap();
        }
        assert_eq!(ModelConfig::desk(9, 10, 24).layout.total(), 35);
        assert_eq!(ModelConfig::large(9, 10, 60).patch_pixels(), 225);
    }

    #[test]
    fn rejects_inconsistent_configs() {
        let mut cfg = ModelConfig::desk(9, 10, 24);
        cfg.n_heads = 5;
        assert!(cfg.validate().is_err());
        let mut cfg = ModelConfig::desk(9, 10, 24);
        cfg.patch_h = 5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn patchify_examples() {
        let cfg = ModelConfig::large(9, 10, 60);
        let img: Vec<f64> = (0..3600).map(|i| i as f64).collect();
        let p = patchify(&img, &cfg).unwrap();
        assert_eq!((p.rows, p.cols), (16, 225));
        assert_eq!(p.get(1, 0), 15.0);
        assert_eq!(p.get(4, 0), 15.0 * 60.0);

        let mut unit = ModelConfig::micro();
        unit.img_h = 2;
        unit.img_w = 2;
        unit.patch_h = 1;
        unit.patch_w = 1;
        let p = patchify(&[1.0, 2.0, 3.0, 4.0], &unit).unwrap();
        assert_eq!((p.rows, p.cols), (4, 1));
        assert_eq!(p.data, vec![1.0, 2.0, 3.0, 4.0]);

        let mut bad = ModelConfig::micro();
        bad.patch_h = 3;
        assert!(patchify(&[0.0; 16], &bad).is_err());
    }

    #[test]
    fn patchify_round_trip() {
        let cfg = ModelConfig::desk(9, 10, 24);
        let mut rng = seed::rng(5);
        let img: Vec<f64> = (0..576).map(|_| rand::Rng::random::<f64>(&mut rng)).collect();
        assert_eq!(unpatchify(&patchify(&img, &cfg).unwrap(), &cfg).unwrap(), img);
    }

    #[test]
    fn embed_scalar_examples() {
        let cfg = ModelConfig {
            enc_dim: 2,
            n_heads: 1,
            ..ModelConfig::with_image(1, 1, 0, 0)
        };
        let mut cfg = cfg;
        cfg.dec_dim = 2;
        cfg.enc_blocks = 1;
        cfg.dec_blocks = 1;
        let mut m = SurrogateModel::zeros(cfg).unwrap();
        let t = m.tensors().clone();
        m.params[t.scalar_embed.range()][..2].copy_from_slice(&[2.0, 4.0]);
        assert_eq!(m.embed_scalar(0.5, 0).unwrap(), vec![1.0, 2.0]);
        m.params[t.scalar_pos.range()][..2].copy_from_slice(&[0.25, -1.0]);
        assert_eq!(m.embed_scalar(0.0, 0).unwrap(), vec![0.25, -1.0]);
        assert_eq!(m.embed_scalar(1.0, 0).unwrap(), vec![2.25, 3.0]);
        assert!(m.embed_scalar(1.0, 2).is_err());
    }

    #[test]
    fn manifest_is_reproducible_from_config() {
        let a = SurrogateModel::init(ModelConfig::desk(9, 10, 24), 1).unwrap();
        let b = SurrogateModel::zeros(ModelConfig::desk(9, 10, 24)).unwrap();
        assert_eq!(a.manifest(), b.manifest());
        let names: Vec<&str> = a.manifest().tensors.iter().map(|t| t.name.as_str()).collect();
        assert!(names.contains(&"head.scalar.weight"));
        assert!(names.contains(&"dec.blocks.1.ffn.w2"));
        let mut sorted = names.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), names.len());
    }
}
