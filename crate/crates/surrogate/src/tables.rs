//! CSV tables: training logs, grid sweeps, selections and persisted protocol
//! results.
//!
//! Floats are written with Rust's shortest round-trip formatting (`inf` and
//! `NaN` included), so every table parses back to the exact values written.
//! Index and error lists inside a single field are space separated.

use std::path::Path;

use surrogate_core::adapt::{Modality, Validation};
use surrogate_core::data::NormStats;
use surrogate_core::eval::{FoldRecord, ModalityResult, ProtocolResult, SelectionOutcome, BASELINE};
use surrogate_core::hpograph::{GridSpec, HyperParamGrid};
use surrogate_core::pretrain::EpochLog;

use crate::staging;
use crate::{StoreError, StoreResult};

pub const TRAINING_LOG: &str = "training_log.csv";
pub const SWEEP: &str = "sweep.csv";
pub const SELECTION: &str = "selection.csv";
pub const PROTOCOL: &str = "protocol.json";
pub const FOLDS: &str = "folds.csv";
pub const VALIDATION: &str = "validation.csv";
pub const TEST_ERRORS: &str = "test_errors.csv";

fn csv_string(header: &[String], rows: &[Vec<String>]) -> String {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf-8 fields")
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn join<T: std::fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

/// Parsed CSV with named-column access.
struct Table<'a> {
    path: &'a Path,
    header: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl<'a> Table<'a> {
    fn read(path: &'a Path, expected: &[&str]) -> StoreResult<Self> {
        let text = staging::read_string(path)?;
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header: Vec<String> = r
            .headers()
            .map_err(|e| StoreError::corrupt(path, e))?
            .iter()
            .map(str::to_string)
            .collect();
        if let Some(missing) = expected.iter().find(|c| !header.iter().any(|h| h == *c)) {
            return Err(StoreError::corrupt(path, format!("missing column {missing:?}")));
        }
        let rows = r
            .records()
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| StoreError::corrupt(path, e))?;
        Ok(Self { path, header, rows })
    }

    fn col(&self, name: &str) -> usize {
        self.header.iter().position(|h| h == name).expect("checked in read")
    }

    fn get<'r>(&self, row: &'r csv::StringRecord, name: &str) -> &'r str {
        row.get(self.col(name)).unwrap_or("")
    }

    fn parse<T: std::str::FromStr>(&self, r: usize, field: &str, what: &str) -> StoreResult<T>
    where
        T::Err: std::fmt::Display,
    {
        field
            .parse()
            .map_err(|e| StoreError::corrupt(self.path, format!("row {}: bad {what} {field:?}: {e}", r + 1)))
    }

    fn list<T: std::str::FromStr>(&self, r: usize, field: &str, what: &str) -> StoreResult<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        field.split_whitespace().map(|x| self.parse(r, x, what)).collect()
    }
}

/// Training log with one row per epoch; epoch 0 is the initialization.
pub fn training_log_csv(initial: &EpochLog, log: &[EpochLog]) -> String {
    let header = strings(&["epoch", "lr", "train_loss", "test_pred_mse_scalars", "test_pred_mse_image"]);
    let rows: Vec<Vec<String>> = std::iter::once(initial)
        .chain(log)
        .map(|e| {
            vec![
                e.epoch.to_string(),
                e.lr.to_string(),
                e.train_loss.to_string(),
                e.test_pred_mse_scalars.to_string(),
                e.test_pred_mse_image.to_string(),
            ]
        })
        .collect();
    csv_string(&header, &rows)
}

fn grid_columns(grid: &HyperParamGrid) -> Vec<String> {
    grid.dims().iter().map(|d| d.param.name().to_string()).collect()
}

fn config_cells(grid: &HyperParamGrid, c: usize) -> Vec<String> {
    let mut row = vec![c.to_string()];
    row.extend(grid.labels(c).expect("config inside grid"));
    row
}

/// One row per configuration: dimension levels, `V` and the nested fold errors.
pub fn sweep_csv(grid: &HyperParamGrid, sweep: &[Validation]) -> String {
    let mut header = vec!["config".to_string()];
    header.extend(grid_columns(grid));
    header.extend(strings(&["V", "fold_errors"]));
    let rows: Vec<Vec<String>> = sweep
        .iter()
        .enumerate()
        .map(|(c, val)| {
            let mut row = config_cells(grid, c);
            row.push(val.v.to_string());
            row.push(join(&val.fold_errors));
            row
        })
        .collect();
    csv_string(&header, &rows)
}

/// Reads a sweep table written by [`sweep_csv`] for the same grid.
pub fn read_sweep_csv(path: &Path, grid: &HyperParamGrid) -> StoreResult<Vec<Validation>> {
    let t = Table::read(path, &["config", "V", "fold_errors"])?;
    if t.rows.len() != grid.len() {
        return Err(StoreError::corrupt(path, format!("{} rows for a grid of {}", t.rows.len(), grid.len())));
    }
    t.rows
        .iter()
        .enumerate()
        .map(|(r, row)| {
            let c: usize = t.parse(r, t.get(row, "config"), "config")?;
            if c != r {
                return Err(StoreError::corrupt(path, format!("row {} has config {c}", r + 1)));
            }
            Ok(Validation {
                v: t.parse(r, t.get(row, "V"), "V")?,
                fold_errors: t.list(r, t.get(row, "fold_errors"), "fold error")?,
            })
        })
        .collect()
}

/// Selection table: `V`, `Ṽ` for each `k` (columns `smoothed_k{k}`) and flags
/// for the raw and smoothed argmins.
pub fn selection_csv(grid: &HyperParamGrid, v: &[f64], smoothed: &[(usize, Vec<f64>)], ve_min: usize, gse_min: usize) -> String {
    let mut header = vec!["config".to_string()];
    header.extend(grid_columns(grid));
    header.push("V".into());
    header.extend(smoothed.iter().map(|(k, _)| format!("smoothed_k{k}")));
    header.extend(strings(&["ve_min", "gse_min"]));
    let rows: Vec<Vec<String>> = (0..v.len())
        .map(|c| {
            let mut row = config_cells(grid, c);
            row.push(v[c].to_string());
            row.extend(smoothed.iter().map(|(_, s)| s[c].to_string()));
            row.push(u8::from(c == ve_min).to_string());
            row.push(u8::from(c == gse_min).to_string());
            row
        })
        .collect();
    csv_string(&header, &rows)
}

#[derive(serde::Serialize, serde::Deserialize)]
struct ProtocolMeta {
    n_samples: usize,
    k_leave: usize,
    ks: Vec<usize>,
    modalities: Vec<Modality>,
    grid: GridSpec,
    /// Ranges of the checkpoint, for raw-space columns in reports.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    norm: Option<NormStats>,
}

/// A protocol result as persisted by an evaluation run.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredProtocol {
    pub protocol: ProtocolResult,
    pub norm: Option<NormStats>,
}

/// Persists a protocol result as `protocol.json` plus three CSV tables.
pub fn write_protocol(dir: &Path, p: &ProtocolResult, norm: Option<&NormStats>) -> StoreResult<()> {
    let meta = ProtocolMeta {
        n_samples: p.n_samples,
        k_leave: p.k_leave,
        ks: p.ks.clone(),
        modalities: p.results.iter().map(|r| r.modality).collect(),
        grid: p.grid.clone(),
        norm: norm.cloned(),
    };
    staging::write(&dir.join(PROTOCOL), staging::to_json(&meta))?;

    let mut folds = Vec::new();
    let mut validation = Vec::new();
    let mut tests = Vec::new();
    for m in &p.results {
        let name = m.modality.name().to_string();
        for (f, rec) in m.folds.iter().enumerate() {
            folds.push(vec![name.clone(), f.to_string(), join(&rec.test), join(&rec.train)]);
            for (c, (v, errs)) in rec.v.iter().zip(&rec.fold_errors).enumerate() {
                validation.push(vec![name.clone(), f.to_string(), c.to_string(), v.to_string(), join(errs)]);
            }
            for (j, errs) in rec.baseline.iter().enumerate() {
                let cells = [&name, &f.to_string(), BASELINE, "", "", &j.to_string(), "", &join(errs), ""];
                tests.push(cells.iter().map(|s| s.to_string()).collect());
            }
            for s in &rec.selections {
                let config = s.config.map(|c| c.to_string()).unwrap_or_default();
                let cka = s.cka.as_deref().map(join).unwrap_or_default();
                if let Some(msg) = &s.failure {
                    tests.push(vec![name.clone(), f.to_string(), s.label.clone(), s.k.to_string(), config, String::new(), msg.clone(), String::new(), String::new()]);
                    continue;
                }
                for (j, errs) in s.test_errors.iter().enumerate() {
                    // CKA belongs to the fold's final fit; it is stored once on the first sample
                    let cka = if j == 0 { cka.clone() } else { String::new() };
                    tests.push(vec![name.clone(), f.to_string(), s.label.clone(), s.k.to_string(), config.clone(), j.to_string(), String::new(), join(errs), cka]);
                }
            }
        }
    }
    staging::write(&dir.join(FOLDS), csv_string(&strings(&["modality", "fold", "test", "train"]), &folds))?;
    staging::write(
        &dir.join(VALIDATION),
        csv_string(&strings(&["modality", "fold", "config", "V", "fold_errors"]), &validation),
    )?;
    staging::write(
        &dir.join(TEST_ERRORS),
        csv_string(
            &strings(&["modality", "fold", "selector", "k", "config", "sample", "failure", "errors", "cka"]),
            &tests,
        ),
    )
}

/// Rebuilds the protocol result written by [`write_protocol`].
pub fn read_protocol(dir: &Path) -> StoreResult<StoredProtocol> {
    let mpath = dir.join(PROTOCOL);
    if !mpath.is_file() {
        return Err(StoreError::Missing(mpath));
    }
    let meta: ProtocolMeta = staging::read_json(&mpath)?;
    let grid = HyperParamGrid::try_from(meta.grid.clone()).map_err(|e| StoreError::corrupt(&mpath, e))?;
    let modality_of = |path: &Path, s: &str| -> StoreResult<usize> {
        meta.modalities
            .iter()
            .position(|m| m.name() == s)
            .ok_or_else(|| StoreError::corrupt(path, format!("unexpected modality {s:?}")))
    };
    let mut results: Vec<ModalityResult> = meta
        .modalities
        .iter()
        .map(|&modality| ModalityResult {
            modality,
            folds: Vec::new(),
        })
        .collect();

    let fpath = dir.join(FOLDS);
    let t = Table::read(&fpath, &["modality", "fold", "test", "train"])?;
    for (r, row) in t.rows.iter().enumerate() {
        let m = modality_of(&fpath, t.get(row, "modality"))?;
        let f: usize = t.parse(r, t.get(row, "fold"), "fold")?;
        if f != results[m].folds.len() {
            return Err(StoreError::corrupt(&fpath, format!("row {}: folds out of order", r + 1)));
        }
        results[m].folds.push(FoldRecord {
            test: t.list(r, t.get(row, "test"), "index")?,
            train: t.list(r, t.get(row, "train"), "index")?,
            v: Vec::new(),
            fold_errors: Vec::new(),
            baseline: Vec::new(),
            selections: Vec::new(),
        });
    }

    let vpath = dir.join(VALIDATION);
    let t = Table::read(&vpath, &["modality", "fold", "config", "V", "fold_errors"])?;
    for (r, row) in t.rows.iter().enumerate() {
        let m = modality_of(&vpath, t.get(row, "modality"))?;
        let f: usize = t.parse(r, t.get(row, "fold"), "fold")?;
        let c: usize = t.parse(r, t.get(row, "config"), "config")?;
        let rec = results[m]
            .folds
            .get_mut(f)
            .ok_or_else(|| StoreError::corrupt(&vpath, format!("row {}: unknown fold {f}", r + 1)))?;
        if c != rec.v.len() || c >= grid.len() {
            return Err(StoreError::corrupt(&vpath, format!("row {}: configs out of order", r + 1)));
        }
        rec.v.push(t.parse(r, t.get(row, "V"), "V")?);
        rec.fold_errors.push(t.list(r, t.get(row, "fold_errors"), "fold error")?);
    }

    let epath = dir.join(TEST_ERRORS);
    let t = Table::read(&epath, &["modality", "fold", "selector", "k", "config", "sample", "failure", "errors", "cka"])?;
    for (r, row) in t.rows.iter().enumerate() {
        let m = modality_of(&epath, t.get(row, "modality"))?;
        let f: usize = t.parse(r, t.get(row, "fold"), "fold")?;
        let rec = results[m]
            .folds
            .get_mut(f)
            .ok_or_else(|| StoreError::corrupt(&epath, format!("row {}: unknown fold {f}", r + 1)))?;
        let label = t.get(row, "selector");
        if label == BASELINE {
            rec.baseline.push(t.list(r, t.get(row, "errors"), "error")?);
            continue;
        }
        let k: usize = t.parse(r, t.get(row, "k"), "k")?;
        let config = match t.get(row, "config") {
            "" => None,
            s => Some(t.parse(r, s, "config")?),
        };
        let failure = Some(t.get(row, "failure")).filter(|s| !s.is_empty()).map(str::to_string);
        let fresh = t.get(row, "sample") == "0" || failure.is_some();
        if fresh {
            let cka = match t.get(row, "cka") {
                "" => None,
                s => Some(t.list(r, s, "cka")?),
            };
            rec.selections.push(SelectionOutcome {
                k,
                label: label.to_string(),
                config,
                test_errors: Vec::new(),
                cka,
                failure: failure.clone(),
            });
        }
        let sel = rec
            .selections
            .last_mut()
            .filter(|s| s.label == label)
            .ok_or_else(|| StoreError::corrupt(&epath, format!("row {}: sample rows out of order", r + 1)))?;
        if failure.is_none() {
            sel.test_errors.push(t.list(r, t.get(row, "errors"), "error")?);
        }
    }
    Ok(StoredProtocol {
        protocol: ProtocolResult {
            n_samples: meta.n_samples,
            k_leave: meta.k_leave,
            ks: meta.ks,
            grid: meta.grid,
            results,
        },
        norm: meta.norm,
    })
}
