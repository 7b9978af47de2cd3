//! Checkpoint directories.
//!
//! * `model.json`: model configuration, the ordered tensor manifest (names
//!   and shapes), the normalization ranges of the pretraining data, the
//!   fine-tuning configuration for adapted models, and the provenance record.
//! * `params.bin`: every tensor as little-endian `f32`, concatenated in
//!   manifest order.
//! * `corrections.json`: post-hoc scalar corrections (adapted models only).
//!
//! Parameters are stored at `f32` precision. Training rounds its results to
//! `f32`, so a save / load / save cycle reproduces every byte.

use std::path::Path;

use serde::{Deserialize, Serialize};
use surrogate_core::adapt::{AdaptedModel, CorrectionParams, FineTuneConfig};
use surrogate_core::data::NormStats;
use surrogate_core::model::{ModelConfig, SurrogateModel};

use crate::provenance::Provenance;
use crate::staging::{self, StagedDir};
use crate::{StoreError, StoreResult};

pub const MODEL_JSON: &str = "model.json";
pub const PARAMS_BIN: &str = "params.bin";
pub const CORRECTIONS_JSON: &str = "corrections.json";

const FORMAT: &str = "surrogate-checkpoint-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelFile {
    format: String,
    config: ModelConfig,
    tensors: Vec<TensorEntry>,
    norm: NormStats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    finetune: Option<FineTuneConfig>,
    provenance: Provenance,
}

/// A pretrained or adapted model with the metadata stored beside it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: SurrogateModel,
    pub norm: NormStats,
    pub finetune: Option<FineTuneConfig>,
    pub correction: Option<CorrectionParams>,
    pub provenance: Provenance,
}

fn entries(model: &SurrogateModel) -> Vec<TensorEntry> {
    model
        .manifest()
        .tensors
        .iter()
        .map(|t| TensorEntry {
            name: t.name.clone(),
            shape: t.shape.clone(),
        })
        .collect()
}

impl Checkpoint {
    pub fn pretrained(model: SurrogateModel, norm: NormStats, provenance: Provenance) -> Self {
        Self {
            model,
            norm,
            finetune: None,
            correction: None,
            provenance,
        }
    }

    pub fn adapted(adapted: AdaptedModel, norm: NormStats, provenance: Provenance) -> Self {
        Self {
            model: adapted.model,
            norm,
            finetune: Some(adapted.config),
            correction: adapted.correction,
            provenance,
        }
    }

    /// The adapted model, if this checkpoint was written by fine-tuning.
    pub fn as_adapted(&self) -> Option<AdaptedModel> {
        self.finetune.map(|config| AdaptedModel {
            model: self.model.clone(),
            config,
            correction: self.correction.clone(),
        })
    }

    /// Writes the checkpoint files into an existing directory.
    pub fn write_files(&self, dir: &Path) -> StoreResult<()> {
        let file = ModelFile {
            format: FORMAT.to_string(),
            config: *self.model.config(),
            tensors: entries(&self.model),
            norm: self.norm.clone(),
            finetune: self.finetune,
            provenance: self.provenance.clone(),
        };
        staging::write(&dir.join(MODEL_JSON), staging::to_json(&file))?;
        let mut bytes = Vec::with_capacity(self.model.params.len() * 4);
        for &p in &self.model.params {
            bytes.extend_from_slice(&(p as f32).to_le_bytes());
        }
        staging::write(&dir.join(PARAMS_BIN), bytes)?;
        if let Some(c) = &self.correction {
            staging::write(&dir.join(CORRECTIONS_JSON), staging::to_json(c))?;
        }
        Ok(())
    }

    /// Writes a complete checkpoint directory (atomically), provenance included.
    pub fn save(&self, dir: &Path) -> StoreResult<()> {
        let staged = StagedDir::new(dir)?;
        self.write_files(staged.path())?;
        staging::write(&staged.file(staging::PROVENANCE_FILE), self.provenance.to_json())?;
        staged.commit()?;
        Ok(())
    }

    pub fn load(dir: &Path) -> StoreResult<Self> {
        let mpath = dir.join(MODEL_JSON);
        if !mpath.is_file() {
            return Err(StoreError::Missing(mpath));
        }
        let file: ModelFile = staging::read_json(&mpath)?;
        if file.format != FORMAT {
            return Err(StoreError::corrupt(&mpath, format!("unknown format {:?}", file.format)));
        }
        let mut model = SurrogateModel::zeros(file.config).map_err(|e| StoreError::corrupt(&mpath, e))?;
        let expected = entries(&model);
        if file.tensors != expected {
            return Err(StoreError::corrupt(&mpath, "tensor manifest does not match the model configuration"));
        }
        let ppath = dir.join(PARAMS_BIN);
        let bytes = staging::read(&ppath)?;
        let total = model.manifest().total;
        if bytes.len() != total * 4 {
            return Err(StoreError::corrupt(
                &ppath,
                format!("{} bytes, expected {} for {total} parameters", bytes.len(), total * 4),
            ));
        }
        let params = bytes
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect();
        model.set_params(params)?;
        let cpath = dir.join(CORRECTIONS_JSON);
        let correction = if cpath.is_file() { Some(staging::read_json(&cpath)?) } else { None };
        if correction.is_some() && file.finetune.is_none() {
            return Err(StoreError::corrupt(&cpath, "corrections without a fine-tuning configuration"));
        }
        Ok(Self {
            model,
            norm: file.norm,
            finetune: file.finetune,
            correction,
            provenance: file.provenance,
        })
    }
}
