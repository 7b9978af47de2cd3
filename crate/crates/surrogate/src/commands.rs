//! The six subcommands. Each resolves its settings (defaults, then the
//! config file, then flags), computes, and writes one output directory that
//! is staged and moved into place only when complete.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;
use surrogate_core::adapt::{final_fit, unadapted, FineTuneConfig, Modality, Selector};
use surrogate_core::data::{gen_synthetic_benchmark, Dataset, Dims, PreparedSample};
use surrogate_core::eval::{leave_k_out_protocol, mse_metrics, sweep, Metrics, ProtocolConfig};
use surrogate_core::hpograph::{argmin_finite, GridSpec, HyperParamGrid, NeighborhoodTable};
use surrogate_core::model::ModelConfig;
use surrogate_core::pretrain::{holdout_split, run_pretraining, LossKind, PretrainConfig};

use crate::checkpoint::Checkpoint;
use crate::config::{ExperimentConfig, Preset};
use crate::dataset_io::{self, load_dataset, write_dataset_files};
use crate::parallel::RayonRunner;
use crate::provenance::Provenance;
use crate::staging::{self, StagedDir, PROVENANCE_FILE};
use crate::{report, tables, StoreError, StoreResult};

pub const MASKED_LOSS_NOTE: &str = "masked loss: mean squared error over the masked entries (one entry per masked scalar, one per pixel of each masked patch)";

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Experiment configuration file (TOML); flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

impl Common {
    fn resolve(&self) -> StoreResult<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(self.config.as_deref())?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }

    /// A path from a flag, or from the config file when one is given.
    fn path(&self, flag: &Option<PathBuf>, name: &str, from_file: impl FnOnce() -> PathBuf) -> StoreResult<PathBuf> {
        match (flag, &self.config) {
            (Some(p), _) => Ok(p.clone()),
            (None, Some(_)) => Ok(from_file()),
            (None, None) => Err(StoreError::Config(format!("--{name} is required unless a --config file sets it"))),
        }
    }
}

fn runner(workers: usize) -> StoreResult<RayonRunner> {
    RayonRunner::new(workers).map_err(|e| StoreError::Config(format!("cannot start {workers} workers: {e}")))
}

/// A dataset directory, or a `gen` output containing `name/`.
fn dataset_dir(path: &Path, name: &str) -> PathBuf {
    if path.join(dataset_io::MANIFEST).is_file() || !path.join(name).is_dir() {
        path.to_path_buf()
    } else {
        path.join(name)
    }
}

fn dataset_digest(prov: Provenance, role: &str, dir: &Path) -> StoreResult<Provenance> {
    let mut p = prov;
    for f in [dataset_io::MANIFEST, dataset_io::INPUTS, dataset_io::OUTPUTS, dataset_io::IMAGES] {
        p = p.input(&format!("{role}/{f}"), &dir.join(f))?;
    }
    Ok(p)
}

fn checkpoint_digest(prov: Provenance, role: &str, dir: &Path) -> StoreResult<Provenance> {
    prov.input(&format!("{role}/{}", crate::checkpoint::MODEL_JSON), &dir.join(crate::checkpoint::MODEL_JSON))?
        .input(&format!("{role}/{}", crate::checkpoint::PARAMS_BIN), &dir.join(crate::checkpoint::PARAMS_BIN))
}

/// Prepares `target` with the checkpoint's normalization ranges.
fn prepare_with(target: &Dataset, ck: &Checkpoint) -> StoreResult<Vec<PreparedSample>> {
    let mut ds = target.clone();
    ds.norm = ck.norm.clone();
    Ok(ds.prepare()?)
}

fn load_checkpoint(dir: &Path) -> StoreResult<Checkpoint> {
    Checkpoint::load(dir)
}

fn finish(staged: StagedDir, prov: &Provenance) -> StoreResult<PathBuf> {
    staging::write(&staged.file(PROVENANCE_FILE), prov.to_json())?;
    staged.commit()
}

// ---------------------------------------------------------------- gen

#[derive(Debug, Clone, Default, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub common: Common,
    /// Output directory; receives `source/` and `target/`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub n_source: Option<usize>,
    #[arg(long)]
    pub n_target: Option<usize>,
    /// Strength of the source-to-target output shift.
    #[arg(long)]
    pub shift: Option<f64>,
    /// Square image side in pixels.
    #[arg(long)]
    pub img_size: Option<usize>,
}

#[derive(Serialize)]
struct GenSettings {
    n_source: usize,
    n_target: usize,
    shift: f64,
    dims: Dims,
}

pub fn gen(args: &GenArgs) -> StoreResult<PathBuf> {
    let cfg = args.common.resolve()?;
    let out = args.common.path(&args.out, "out", || cfg.paths.data.clone())?;
    let g = &cfg.gen;
    let settings = GenSettings {
        n_source: args.n_source.unwrap_or(g.n_source),
        n_target: args.n_target.unwrap_or(g.n_target),
        shift: args.shift.unwrap_or(g.shift),
        dims: Dims::benchmark(args.img_size.unwrap_or(g.img_size)),
    };
    if settings.n_source == 0 || settings.n_target == 0 {
        return Err(StoreError::Config("--n-source and --n-target must be positive".into()));
    }
    let (src, tgt) = gen_synthetic_benchmark(cfg.seed, settings.n_source, settings.n_target, settings.shift, settings.dims)?;
    let staged = StagedDir::new(&out)?;
    for (name, ds) in [("source", &src), ("target", &tgt)] {
        let dir = staged.file(name);
        std::fs::create_dir(&dir).map_err(|e| StoreError::io(&dir, e))?;
        write_dataset_files(&dir, ds)?;
    }
    finish(staged, &Provenance::new("gen", &settings, cfg.seed))
}

// ---------------------------------------------------------------- pretrain

#[derive(Debug, Clone, Default, Args)]
pub struct PretrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Source dataset directory (or a `gen` output).
    #[arg(long)]
    pub source: Option<PathBuf>,
    /// Checkpoint directory to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr0: Option<f64>,
    /// Weight of the prediction loss (the masked loss gets `1 - alpha`).
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub mask_rate: Option<f64>,
    /// Source samples held out for the training log.
    #[arg(long)]
    pub n_test: Option<usize>,
}

#[derive(Serialize)]
struct PretrainSettings {
    model: ModelConfig,
    pretrain: PretrainConfig,
    n_test: usize,
}

pub fn pretrain(args: &PretrainArgs) -> StoreResult<PathBuf> {
    let cfg = args.common.resolve()?;
    let source = args.common.path(&args.source, "source", || cfg.paths.data.join("source"))?;
    let out = args.common.path(&args.out, "out", || cfg.paths.checkpoint.clone())?;
    let mut p = cfg.pretrain.clone();
    p.epochs = args.epochs.unwrap_or(p.epochs);
    p.batch_size = args.batch_size.unwrap_or(p.batch_size);
    p.lr0 = args.lr0.unwrap_or(p.lr0);
    p.alpha = args.alpha.unwrap_or(p.alpha);
    p.mask_rate = args.mask_rate.unwrap_or(p.mask_rate);
    p.n_test = args.n_test.unwrap_or(p.n_test);

    let source = dataset_dir(&source, "source");
    let ds = load_dataset(&source)?;
    if p.n_test == 0 || p.n_test >= ds.len() {
        return Err(StoreError::Config(format!("--n-test must lie in 1..{} for this dataset", ds.len())));
    }
    let model = args.preset.unwrap_or(cfg.model.preset).model_config(&ds.dims);
    let settings = PretrainSettings {
        model,
        pretrain: p.to_config(cfg.seed),
        n_test: p.n_test,
    };
    let prepared = ds.prepare()?;
    // the split belongs to the data, so it is stable across pretraining seeds
    let (tr, te) = holdout_split(prepared.len(), p.n_test, ds.seed);
    let train: Vec<PreparedSample> = tr.iter().map(|&i| prepared[i].clone()).collect();
    let test: Vec<PreparedSample> = te.iter().map(|&i| prepared[i].clone()).collect();
    let outcome = run_pretraining(model, &train, &test, &settings.pretrain)?;

    let prov = dataset_digest(Provenance::new("pretrain", &settings, cfg.seed), "source", &source)?.note(MASKED_LOSS_NOTE);
    let staged = StagedDir::new(&out)?;
    Checkpoint::pretrained(outcome.model, ds.norm.clone(), prov.clone()).write_files(staged.path())?;
    staging::write(
        &staged.file(tables::TRAINING_LOG),
        tables::training_log_csv(&outcome.initial, &outcome.log),
    )?;
    finish(staged, &prov)
}

// ---------------------------------------------------------------- adapt

#[derive(Debug, Clone, Default, Args)]
pub struct AdaptArgs {
    #[command(flatten)]
    pub common: Common,
    /// Pretrained checkpoint directory.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Target dataset directory (or a `gen` output).
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// Adapted checkpoint directory to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Trainable layers: scalar_heads, patch_head, decoder_block_last, encoder_block_last, all.
    #[arg(long)]
    pub layers: Option<Selector>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// L2 or L1.
    #[arg(long)]
    pub loss: Option<LossKind>,
    /// scalars or image.
    #[arg(long)]
    pub modality: Option<Modality>,
    #[arg(long)]
    pub bias_correct: Option<bool>,
    #[arg(long)]
    pub var_correct: Option<bool>,
    /// Target samples excluded from fine-tuning and scored in `metrics.csv`.
    #[arg(long, value_delimiter = ',')]
    pub holdout: Vec<usize>,
}

#[derive(Serialize)]
struct AdaptSettings {
    finetune: FineTuneConfig,
    holdout: Vec<usize>,
}

pub const METRICS: &str = "metrics.csv";

fn metrics_csv(columns: &[(&str, Option<Metrics>)]) -> String {
    let d = columns.iter().filter_map(|(_, m)| m.as_ref()).map(|m| m.per_scalar.len()).max().unwrap_or(0);
    let cell = |m: &Option<Metrics>, f: &dyn Fn(&Metrics) -> f64| m.as_ref().map(|m| f(m).to_string()).unwrap_or_default();
    let mut s = String::from("metric");
    for (name, _) in columns {
        s.push(',');
        s.push_str(name);
    }
    s.push('\n');
    let mut line = |label: String, f: &dyn Fn(&Metrics) -> f64| {
        s.push_str(&label);
        for (_, m) in columns {
            s.push(',');
            s.push_str(&cell(m, f));
        }
        s.push('\n');
    };
    for k in 0..d {
        line(format!("o{}", k + 1), &move |m: &Metrics| m.per_scalar[k]);
    }
    line("scalar_mean".into(), &|m: &Metrics| m.mean_scalar());
    line("image".into(), &|m: &Metrics| m.image);
    s
}

pub fn adapt(args: &AdaptArgs) -> StoreResult<PathBuf> {
    let cfg = args.common.resolve()?;
    let ck_dir = args.common.path(&args.checkpoint, "checkpoint", || cfg.paths.checkpoint.clone())?;
    let target_dir = args.common.path(&args.target, "target", || cfg.paths.data.join("target"))?;
    let out = args.common.path(&args.out, "out", || cfg.paths.adapted.clone())?;
    let mut ft = cfg.adapt;
    ft.selector = args.layers.unwrap_or(ft.selector);
    ft.lr = args.lr.unwrap_or(ft.lr);
    ft.epochs = args.epochs.unwrap_or(ft.epochs);
    ft.loss_kind = args.loss.unwrap_or(ft.loss_kind);
    ft.modality = args.modality.unwrap_or(ft.modality);
    ft.bias_correct = args.bias_correct.unwrap_or(ft.bias_correct);
    ft.var_correct = args.var_correct.unwrap_or(ft.var_correct);

    let ck = load_checkpoint(&ck_dir)?;
    let target_dir = dataset_dir(&target_dir, "target");
    let target = load_dataset(&target_dir)?;
    let samples = prepare_with(&target, &ck)?;
    let mut holdout = args.holdout.clone();
    holdout.sort_unstable();
    holdout.dedup();
    if let Some(&bad) = holdout.iter().find(|&&i| i >= samples.len()) {
        return Err(StoreError::Config(format!("--holdout index {bad} out of range for {} samples", samples.len())));
    }
    let (train, held): (Vec<_>, Vec<_>) = samples.iter().cloned().enumerate().partition(|(i, _)| !holdout.contains(i));
    let train: Vec<PreparedSample> = train.into_iter().map(|(_, s)| s).collect();
    let held: Vec<PreparedSample> = held.into_iter().map(|(_, s)| s).collect();
    if train.is_empty() {
        return Err(StoreError::Config("--holdout leaves no samples to fine-tune on".into()));
    }
    let mut adapted = final_fit(&ck.model, &train, &ft)?;
    adapted.model.round_to_f32();

    let base = unadapted(&ck.model, ft.modality);
    let score = |m: &surrogate_core::adapt::AdaptedModel, set: &[PreparedSample]| -> StoreResult<Option<Metrics>> {
        Ok(if set.is_empty() { None } else { Some(mse_metrics(m, set)?) })
    };
    let metrics = metrics_csv(&[
        ("train_baseline", score(&base, &train)?),
        ("train_adapted", score(&adapted, &train)?),
        ("holdout_baseline", score(&base, &held)?),
        ("holdout_adapted", score(&adapted, &held)?),
    ]);

    let settings = AdaptSettings { finetune: ft, holdout };
    let prov = Provenance::new("adapt", &settings, cfg.seed);
    let prov = dataset_digest(checkpoint_digest(prov, "checkpoint", &ck_dir)?, "target", &target_dir)?;
    let staged = StagedDir::new(&out)?;
    Checkpoint::adapted(adapted, ck.norm.clone(), prov.clone()).write_files(staged.path())?;
    staging::write(&staged.file(METRICS), metrics)?;
    finish(staged, &prov)
}

// ---------------------------------------------------------------- select

#[derive(Debug, Clone, Default, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// Selection directory to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Neighborhood size for smoothing (0 selects the raw argmin).
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Reuse the sweep of an earlier `select` output instead of recomputing it.
    #[arg(long)]
    pub from_sweep: Option<PathBuf>,
    /// Also fine-tune the selected configuration on all target samples.
    #[arg(long)]
    pub fit: bool,
}

pub const GRID_JSON: &str = "grid.json";
pub const SELECTED_JSON: &str = "selected.json";
pub const ADAPTED_DIR: &str = "adapted";

#[derive(Serialize)]
struct SelectSettings {
    k: usize,
    grid: GridSpec,
    fit: bool,
}

#[derive(Serialize)]
struct Selected {
    k: usize,
    config: usize,
    levels: Vec<String>,
    finetune: FineTuneConfig,
    v: f64,
    smoothed: f64,
    raw_argmin: usize,
}

pub fn select(args: &SelectArgs) -> StoreResult<PathBuf> {
    let cfg = args.common.resolve()?;
    let out = args.common.path(&args.out, "out", || cfg.paths.select.clone())?;
    let k = args.k.unwrap_or(cfg.select.k);
    let needs_model = args.from_sweep.is_none() || args.fit;
    let (ck_dir, target_dir) = if needs_model {
        let ck = args.common.path(&args.checkpoint, "checkpoint", || cfg.paths.checkpoint.clone())?;
        let tg = args.common.path(&args.target, "target", || cfg.paths.data.join("target"))?;
        (Some(ck), Some(dataset_dir(&tg, "target")))
    } else {
        (None, None)
    };
    let model = match (&ck_dir, &target_dir) {
        (Some(c), Some(t)) => {
            let ck = load_checkpoint(c)?;
            let target = load_dataset(t)?;
            let samples = prepare_with(&target, &ck)?;
            Some((ck, samples))
        }
        _ => None,
    };

    let (grid, validations, mut prov) = match &args.from_sweep {
        Some(dir) => {
            let gpath = dir.join(GRID_JSON);
            if !gpath.is_file() {
                return Err(StoreError::Missing(gpath));
            }
            let spec: GridSpec = staging::read_json(&gpath)?;
            let grid = HyperParamGrid::try_from(spec).map_err(|e| StoreError::corrupt(&gpath, e))?;
            let sweep_path = dir.join(tables::SWEEP);
            let v = tables::read_sweep_csv(&sweep_path, &grid)?;
            let settings = SelectSettings {
                k,
                grid: grid.clone().into(),
                fit: args.fit,
            };
            let prov = Provenance::new("select", &settings, cfg.seed).input("sweep", &sweep_path)?;
            (grid, v, prov)
        }
        None => {
            let grid = cfg.grid()?;
            let (ck, samples) = model.as_ref().expect("loaded above");
            let r = runner(args.workers.unwrap_or(cfg.workers))?;
            let v = sweep(&ck.model, samples, &grid, &r)?;
            let settings = SelectSettings {
                k,
                grid: grid.clone().into(),
                fit: args.fit,
            };
            let prov = Provenance::new("select", &settings, cfg.seed);
            (grid, v, prov)
        }
    };
    if let (Some(c), Some(t)) = (&ck_dir, &target_dir) {
        prov = dataset_digest(checkpoint_digest(prov, "checkpoint", c)?, "target", t)?;
    }

    let v: Vec<f64> = validations.iter().map(|x| x.v).collect();
    let mut ks = vec![0, k];
    ks.dedup();
    let smoothed: Vec<(usize, Vec<f64>)> = ks
        .iter()
        .map(|&kk| Ok((kk, NeighborhoodTable::new(grid.lattice(), kk).smooth(&v)?)))
        .collect::<StoreResult<_>>()?;
    let raw = argmin_finite(&v).ok_or(surrogate_core::Error::NoValidConfig)?;
    let s_k = &smoothed.last().expect("k present").1;
    let chosen = argmin_finite(s_k).ok_or(surrogate_core::Error::NoValidConfig)?;
    let selected = Selected {
        k,
        config: chosen,
        levels: grid.labels(chosen)?,
        finetune: grid.config(chosen)?,
        v: v[chosen],
        smoothed: s_k[chosen],
        raw_argmin: raw,
    };

    let staged = StagedDir::new(&out)?;
    staging::write(&staged.file(GRID_JSON), staging::to_json(&GridSpec::from(grid.clone())))?;
    staging::write(&staged.file(tables::SWEEP), tables::sweep_csv(&grid, &validations))?;
    staging::write(&staged.file(tables::SELECTION), tables::selection_csv(&grid, &v, &smoothed, raw, chosen))?;
    staging::write(&staged.file(SELECTED_JSON), staging::to_json(&selected))?;
    if args.fit {
        let (ck, samples) = model.as_ref().expect("loaded above");
        let mut adapted = final_fit(&ck.model, samples, &selected.finetune)?;
        adapted.model.round_to_f32();
        let dir = staged.file(ADAPTED_DIR);
        std::fs::create_dir(&dir).map_err(|e| StoreError::io(&dir, e))?;
        Checkpoint::adapted(adapted, ck.norm.clone(), prov.clone()).write_files(&dir)?;
    }
    finish(staged, &prov)
}

// ---------------------------------------------------------------- eval

#[derive(Debug, Clone, Default, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// Evaluation directory to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Target samples held out per outer fold.
    #[arg(long)]
    pub k_leave: Option<usize>,
    /// Neighborhood sizes to compare against the raw argmin.
    #[arg(long, value_delimiter = ',')]
    pub k_select: Option<Vec<usize>>,
    /// Modalities to adapt, e.g. `scalars,image`.
    #[arg(long, value_delimiter = ',')]
    pub modality: Option<Vec<Modality>>,
    /// Skip the CKA analysis.
    #[arg(long)]
    pub no_cka: bool,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Serialize)]
struct EvalSettings {
    protocol: ProtocolConfig,
    grid: GridSpec,
}

pub fn eval(args: &EvalArgs) -> StoreResult<PathBuf> {
    let cfg = args.common.resolve()?;
    let ck_dir = args.common.path(&args.checkpoint, "checkpoint", || cfg.paths.checkpoint.clone())?;
    let target_dir = args.common.path(&args.target, "target", || cfg.paths.data.join("target"))?;
    let out = args.common.path(&args.out, "out", || cfg.paths.eval.clone())?;
    let mut pc = cfg.protocol.clone();
    pc.k_leave = args.k_leave.unwrap_or(pc.k_leave);
    if let Some(ks) = &args.k_select {
        pc.k_select = ks.clone();
    }
    if let Some(m) = &args.modality {
        pc.modalities = m.clone();
    }
    pc.cka &= !args.no_cka;
    let grid = cfg.grid()?;

    let ck = load_checkpoint(&ck_dir)?;
    let target_dir = dataset_dir(&target_dir, "target");
    let target = load_dataset(&target_dir)?;
    let samples = prepare_with(&target, &ck)?;
    if pc.k_leave == 0 || samples.len() < pc.k_leave + 2 {
        return Err(StoreError::Config(format!(
            "--k-leave {} needs at least {} target samples, found {}",
            pc.k_leave,
            pc.k_leave + 2,
            samples.len()
        )));
    }
    let r = runner(args.workers.unwrap_or(cfg.workers))?;
    let result = leave_k_out_protocol(&ck.model, &samples, &grid, &pc, &r)?;

    let settings = EvalSettings {
        protocol: pc,
        grid: grid.into(),
    };
    let prov = Provenance::new("eval", &settings, cfg.seed);
    let prov = dataset_digest(checkpoint_digest(prov, "checkpoint", &ck_dir)?, "target", &target_dir)?;
    let staged = StagedDir::new(&out)?;
    tables::write_protocol(staged.path(), &result, Some(&ck.norm))?;
    finish(staged, &prov)
}

// ---------------------------------------------------------------- report

#[derive(Debug, Clone, Default, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub common: Common,
    /// Directory written by `eval`.
    #[arg(long = "eval")]
    pub eval_dir: Option<PathBuf>,
    /// Report directory to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn report(args: &ReportArgs) -> StoreResult<PathBuf> {
    let cfg = args.common.resolve()?;
    let eval_dir = args.common.path(&args.eval_dir, "eval", || cfg.paths.eval.clone())?;
    let out = args.common.path(&args.out, "out", || cfg.paths.report.clone())?;
    let stored = tables::read_protocol(&eval_dir)?;
    let mut prov = Provenance::new("report", &(), cfg.seed);
    for f in [tables::PROTOCOL, tables::FOLDS, tables::VALIDATION, tables::TEST_ERRORS] {
        prov = prov.input(&format!("eval/{f}"), &eval_dir.join(f))?;
    }
    let staged = StagedDir::new(&out)?;
    report::write_report(staged.path(), &stored.protocol, stored.norm.as_ref())?;
    finish(staged, &prov)
}
