//! Parameter manifest: stable names, shapes and offsets into one flat buffer.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::ModelConfig;

/// A view into the flat parameter (or gradient) buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tensor {
    pub offset: usize,
    pub len: usize,
}

impl Tensor {
    #[inline]
    pub fn range(&self) -> core::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

/// How a tensor is initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// Truncated normal, std 0.02, cut at two standard deviations.
    TruncNormal,
    /// Normal with std `1 / sqrt(fan_in)`.
    FanIn,
    Zeros,
    Ones,
}

/// One named parameter tensor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub stage: usize,
    pub init: Init,
    #[serde(skip)]
    pub offset: usize,
}

impl TensorInfo {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn tensor(&self) -> Tensor {
        Tensor {
            offset: self.offset,
            len: self.numel(),
        }
    }
}

/// Ordered list of every parameter tensor of a model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub tensors: Vec<TensorInfo>,
    pub total: usize,
}

impl Manifest {
    pub fn find(&self, name: &str) -> Option<&TensorInfo> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// The tensor owning flat index `i`.
    pub fn owner(&self, i: usize) -> Option<&TensorInfo> {
        self.tensors.iter().find(|t| t.tensor().range().contains(&i))
    }
}

/// Tensors of one pre-norm transformer block.
#[derive(Debug, Clone, Copy)]
pub struct BlockTensors {
    pub ln1_g: Tensor,
    pub ln1_b: Tensor,
    pub wq: Tensor,
    pub bq: Tensor,
    pub wk: Tensor,
    pub bk: Tensor,
    pub wv: Tensor,
    pub bv: Tensor,
    pub wo: Tensor,
    pub bo: Tensor,
    pub ln2_g: Tensor,
    pub ln2_b: Tensor,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

/// Typed handles to every tensor, resolved once from the manifest.
#[derive(Debug, Clone)]
pub struct ParamTensors {
    pub scalar_embed: Tensor,
    pub scalar_pos: Tensor,
    pub patch_w: Tensor,
    pub patch_b: Tensor,
    pub enc_blocks: Vec<BlockTensors>,
    pub enc_norm_g: Tensor,
    pub enc_norm_b: Tensor,
    pub bridge_w: Tensor,
    pub bridge_b: Tensor,
    pub mask_token: Tensor,
    pub dec_scalar_pos: Tensor,
    pub dec_blocks: Vec<BlockTensors>,
    pub dec_norm_g: Tensor,
    pub dec_norm_b: Tensor,
    pub head_scalar: Tensor,
    pub head_patch_w: Tensor,
    pub head_patch_b: Tensor,
}

struct Builder {
    tensors: Vec<TensorInfo>,
    offset: usize,
}

impl Builder {
    fn add(&mut self, name: String, shape: &[usize], stage: usize, init: Init) -> Tensor {
        let info = TensorInfo {
            name,
            shape: shape.to_vec(),
            stage,
            init,
            offset: self.offset,
        };
        let t = info.tensor();
        self.offset += t.len;
        self.tensors.push(info);
        t
    }

    fn block(&mut self, prefix: &str, dim: usize, hidden: usize, stage: usize) -> BlockTensors {
        let mut add = |suffix: &str, shape: &[usize], init| {
            self.add(format!("{prefix}.{suffix}"), shape, stage, init)
        };
        BlockTensors {
            ln1_g: add("ln1.gamma", &[dim], Init::Ones),
            ln1_b: add("ln1.beta", &[dim], Init::Zeros),
            wq: add("attn.wq", &[dim, dim], Init::FanIn),
            bq: add("attn.bq", &[dim], Init::Zeros),
            wk: add("attn.wk", &[dim, dim], Init::FanIn),
            bk: add("attn.bk", &[dim], Init::Zeros),
            wv: add("attn.wv", &[dim, dim], Init::FanIn),
            bv: add("attn.bv", &[dim], Init::Zeros),
            wo: add("attn.wo", &[dim, dim], Init::FanIn),
            bo: add("attn.bo", &[dim], Init::Zeros),
            ln2_g: add("ln2.gamma", &[dim], Init::Ones),
            ln2_b: add("ln2.beta", &[dim], Init::Zeros),
            w1: add("ffn.w1", &[dim, hidden], Init::FanIn),
            b1: add("ffn.b1", &[hidden], Init::Zeros),
            w2: add("ffn.w2", &[hidden, dim], Init::FanIn),
            b2: add("ffn.b2", &[dim], Init::Zeros),
        }
    }
}

/// Stage indices of the forward pipeline.
///
/// `0` embeds visible tokens, `1..=E` are encoder blocks, then the encoder
/// norm, the bridge into decoder width (with mask-token insertion), the `D`
/// decoder blocks, the decoder norm and finally the output heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stages {
    pub enc_blocks: usize,
    pub dec_blocks: usize,
}

impl Stages {
    pub const EMBED: usize = 0;

    pub fn enc_block(&self, i: usize) -> usize {
        1 + i
    }

    pub fn enc_norm(&self) -> usize {
        1 + self.enc_blocks
    }

    pub fn bridge(&self) -> usize {
        2 + self.enc_blocks
    }

    pub fn dec_block(&self, j: usize) -> usize {
        3 + self.enc_blocks + j
    }

    pub fn dec_norm(&self) -> usize {
        3 + self.enc_blocks + self.dec_blocks
    }

    pub fn heads(&self) -> usize {
        4 + self.enc_blocks + self.dec_blocks
    }

    pub fn count(&self) -> usize {
        5 + self.enc_blocks + self.dec_blocks
    }
}

pub(crate) fn build_manifest(cfg: &ModelConfig) -> (Manifest, ParamTensors) {
    let st = cfg.stages();
    let n_scalar = cfg.layout.n_scalar_tokens();
    let (de, dd) = (cfg.enc_dim, cfg.dec_dim);
    let px = cfg.patch_pixels();
    let mut b = Builder {
        tensors: Vec::new(),
        offset: 0,
    };
    let e = Stages::EMBED;
    let scalar_embed = b.add("enc.scalar_embed".into(), &[n_scalar, de], e, Init::TruncNormal);
    let scalar_pos = b.add("enc.scalar_pos".into(), &[n_scalar, de], e, Init::TruncNormal);
    let patch_w = b.add("enc.patch_proj.weight".into(), &[px, de], e, Init::FanIn);
    let patch_b = b.add("enc.patch_proj.bias".into(), &[de], e, Init::Zeros);
    let enc_blocks = (0..cfg.enc_blocks)
        .map(|i| b.block(&format!("enc.blocks.{i}"), de, de * cfg.ffn_mult, st.enc_block(i)))
        .collect();
    let enc_norm_g = b.add("enc.norm.gamma".into(), &[de], st.enc_norm(), Init::Ones);
    let enc_norm_b = b.add("enc.norm.beta".into(), &[de], st.enc_norm(), Init::Zeros);
    let bridge_w = b.add("bridge.weight".into(), &[de, dd], st.bridge(), Init::FanIn);
    let bridge_b = b.add("bridge.bias".into(), &[dd], st.bridge(), Init::Zeros);
    let mask_token = b.add("dec.mask_token".into(), &[dd], st.bridge(), Init::TruncNormal);
    let dec_scalar_pos = b.add("dec.scalar_pos".into(), &[n_scalar, dd], st.bridge(), Init::TruncNormal);
    let dec_blocks = (0..cfg.dec_blocks)
        .map(|j| b.block(&format!("dec.blocks.{j}"), dd, dd * cfg.ffn_mult, st.dec_block(j)))
        .collect();
    let dec_norm_g = b.add("dec.norm.gamma".into(), &[dd], st.dec_norm(), Init::Ones);
    let dec_norm_b = b.add("dec.norm.beta".into(), &[dd], st.dec_norm(), Init::Zeros);
    let head_scalar = b.add("head.scalar.weight".into(), &[n_scalar, dd], st.heads(), Init::TruncNormal);
    let head_patch_w = b.add("head.patch.weight".into(), &[dd, px], st.heads(), Init::TruncNormal);
    let head_patch_b = b.add("head.patch.bias".into(), &[px], st.heads(), Init::Zeros);
    let manifest = Manifest {
        total: b.offset,
        tensors: b.tensors,
    };
    (
        manifest,
        ParamTensors {
            scalar_embed,
            scalar_pos,
            patch_w,
            patch_b,
            enc_blocks,
            enc_norm_g,
            enc_norm_b,
            bridge_w,
            bridge_b,
            mask_token,
            dec_scalar_pos,
            dec_blocks,
            dec_norm_g,
            dec_norm_b,
            head_scalar,
            head_patch_w,
            head_patch_b,
        },
    )
}
