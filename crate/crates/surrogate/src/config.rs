//! Experiment configuration files (TOML).
//!
//! Every field has a default, so a file only lists what it changes.
//! Precedence, lowest to highest: built-in defaults, the `--config` file,
//! command-line flags.
//!
//! ```toml
//! seed = 7
//! workers = 4
//!
//! [paths]
//! data = "runs/data"
//!
//! [gen]
//! n_source = 2048
//! n_target = 10
//! shift = 0.6
//!
//! [pretrain]
//! epochs = 30
//!
//! [protocol]
//! k_leave = 3
//! k_select = [1, 2]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use surrogate_core::adapt::FineTuneConfig;
use surrogate_core::data::Dims;
use surrogate_core::eval::ProtocolConfig;
use surrogate_core::hpograph::{GridSpec, HyperParamGrid};
use surrogate_core::model::ModelConfig;
use surrogate_core::pretrain::PretrainConfig;

use crate::staging;
use crate::{StoreError, StoreResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Dataset root holding `source/` and `target/`.
    pub data: PathBuf,
    pub checkpoint: PathBuf,
    pub adapted: PathBuf,
    pub select: PathBuf,
    pub eval: PathBuf,
    pub report: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        let p = |s: &str| PathBuf::from("runs").join(s);
        Self {
            data: p("data"),
            checkpoint: p("checkpoint"),
            adapted: p("adapted"),
            select: p("select"),
            eval: p("eval"),
            report: p("report"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSection {
    pub n_source: usize,
    pub n_target: usize,
    pub shift: f64,
    pub img_size: usize,
}

impl Default for GenSection {
    fn default() -> Self {
        Self {
            n_source: 2048,
            n_target: 10,
            shift: 0.6,
            img_size: 24,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    #[default]
    Tiny,
    Desk,
    Large,
}

impl Preset {
    pub fn model_config(self, dims: &Dims) -> ModelConfig {
        let (d_in, d_out, img) = (dims.d_in, dims.d_out, dims.img_h);
        match self {
            Preset::Tiny => ModelConfig::tiny(d_in, d_out, img),
            Preset::Desk => ModelConfig::desk(d_in, d_out, img),
            Preset::Large => ModelConfig::large(d_in, d_out, img),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub preset: Preset,
}

/// Pretraining settings; the seed is the experiment's root seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainSection {
    pub alpha: f64,
    pub gamma_o: f64,
    pub gamma_i: Option<f64>,
    pub mask_rate: f64,
    pub lr0: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Source samples held out to monitor prediction error.
    pub n_test: usize,
}

impl Default for PretrainSection {
    fn default() -> Self {
        let d = PretrainConfig::default();
        Self {
            alpha: d.alpha,
            gamma_o: d.gamma_o,
            gamma_i: d.gamma_i,
            mask_rate: d.mask_rate,
            lr0: d.lr0,
            epochs: d.epochs,
            batch_size: d.batch_size,
            n_test: 256,
        }
    }
}

impl PretrainSection {
    pub fn to_config(&self, seed: u64) -> PretrainConfig {
        PretrainConfig {
            alpha: self.alpha,
            gamma_o: self.gamma_o,
            gamma_i: self.gamma_i,
            mask_rate: self.mask_rate,
            lr0: self.lr0,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectSection {
    /// Neighborhood size used for the selection (0 is the raw argmin).
    pub k: usize,
}

impl Default for SelectSection {
    fn default() -> Self {
        Self { k: 1 }
    }
}

/// Learning rates, step counts and trainable layers of the default grid.
pub const DEFAULT_LRS: [f64; 3] = [1e-3, 1e-2, 1e-1];
pub const DEFAULT_EPOCHS: [usize; 3] = [10, 30, 100];

pub fn default_grid() -> GridSpec {
    HyperParamGrid::desk(FineTuneConfig::default(), DEFAULT_LRS, DEFAULT_EPOCHS).into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Root seed; every random stream is derived from it by label.
    pub seed: u64,
    /// Threads for grid sweeps; results do not depend on it.
    pub workers: usize,
    pub paths: Paths,
    pub gen: GenSection,
    pub model: ModelSection,
    pub pretrain: PretrainSection,
    /// Configuration used by `adapt`.
    pub adapt: FineTuneConfig,
    pub grid: GridSpec,
    pub select: SelectSection,
    pub protocol: ProtocolConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 1,
            paths: Paths::default(),
            gen: GenSection::default(),
            model: ModelSection::default(),
            pretrain: PretrainSection::default(),
            adapt: FineTuneConfig::default(),
            grid: default_grid(),
            select: SelectSection::default(),
            protocol: ProtocolConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("serializable config")
    }

    /// Reads `path`, or returns the defaults when no file is given.
    pub fn load(path: Option<&Path>) -> StoreResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = staging::read_string(path)?;
        Self::from_toml(&text).map_err(|e| StoreError::Config(format!("{}: {e}", path.display())))
    }

    pub fn grid(&self) -> StoreResult<HyperParamGrid> {
        HyperParamGrid::try_from(self.grid.clone()).map_err(|e| StoreError::Config(format!("grid: {e}")))
    }
}
