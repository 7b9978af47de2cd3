//! Dataset directories: `manifest.json`, `inputs.csv`, `outputs.csv`, `images.bin`.
//!
//! Scalars are stored as `f32` text in shortest round-trip form (at most nine
//! significant digits), images as little-endian `f32`, so a load of a saved
//! dataset is bit-identical.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use surrogate_core::data::{Dataset, Dims, Domain, MultiModalSample, NormStats};

use crate::staging::{self, StagedDir};
use crate::{StoreError, StoreResult};

pub const MANIFEST: &str = "manifest.json";
pub const INPUTS: &str = "inputs.csv";
pub const OUTPUTS: &str = "outputs.csv";
pub const IMAGES: &str = "images.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    n: usize,
    d_in: usize,
    d_out: usize,
    img_h: usize,
    img_w: usize,
    domain: Domain,
    seed: u64,
    norm: NormStats,
}

fn scalar_csv(prefix: char, width: usize, rows: impl Iterator<Item = impl AsRef<[f32]>>) -> String {
    let mut s = (1..=width).map(|i| format!("{prefix}{i}")).collect::<Vec<_>>().join(",");
    s.push('\n');
    for row in rows {
        for (j, v) in row.as_ref().iter().enumerate() {
            if j > 0 {
                s.push(',');
            }
            write!(s, "{v}").expect("write to string");
        }
        s.push('\n');
    }
    s
}

/// Writes the dataset files into an existing directory.
pub fn write_dataset_files(dir: &Path, ds: &Dataset) -> StoreResult<()> {
    ds.validate()?;
    let manifest = Manifest {
        n: ds.len(),
        d_in: ds.dims.d_in,
        d_out: ds.dims.d_out,
        img_h: ds.dims.img_h,
        img_w: ds.dims.img_w,
        domain: ds.domain,
        seed: ds.seed,
        norm: ds.norm.clone(),
    };
    staging::write(&dir.join(MANIFEST), staging::to_json(&manifest))?;
    staging::write(&dir.join(INPUTS), scalar_csv('x', ds.dims.d_in, ds.samples.iter().map(|s| &s.x)))?;
    staging::write(&dir.join(OUTPUTS), scalar_csv('o', ds.dims.d_out, ds.samples.iter().map(|s| &s.o)))?;
    let mut bytes = Vec::with_capacity(ds.len() * ds.dims.pixels() * 4);
    for s in &ds.samples {
        for v in &s.img {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    staging::write(&dir.join(IMAGES), bytes)
}

/// Saves `ds` as a complete dataset directory at `dir` (atomically).
pub fn save_dataset(dir: &Path, ds: &Dataset, provenance: &str) -> StoreResult<()> {
    let staged = StagedDir::new(dir)?;
    write_dataset_files(staged.path(), ds)?;
    staging::write(&staged.file(staging::PROVENANCE_FILE), provenance)?;
    staged.commit()?;
    Ok(())
}

fn read_scalars(path: &Path, prefix: char, width: usize, n: usize) -> StoreResult<Vec<Vec<f32>>> {
    let text = staging::read_string(path)?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| StoreError::corrupt(path, e))?;
    let expected: Vec<String> = (1..=width).map(|i| format!("{prefix}{i}")).collect();
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(StoreError::corrupt(
            path,
            format!("header {:?}, expected {}", header.iter().collect::<Vec<_>>().join(","), expected.join(",")),
        ));
    }
    let mut rows = Vec::with_capacity(n);
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| StoreError::corrupt(path, e))?;
        let row = record
            .iter()
            .map(|f| f.parse::<f32>().map_err(|e| StoreError::corrupt(path, format!("row {}: {e}", r + 1))))
            .collect::<StoreResult<Vec<f32>>>()?;
        rows.push(row);
    }
    if rows.len() != n {
        return Err(StoreError::corrupt(path, format!("{} data rows, manifest says {n}", rows.len())));
    }
    Ok(rows)
}

/// Loads a dataset directory.
pub fn load_dataset(dir: &Path) -> StoreResult<Dataset> {
    let mpath = dir.join(MANIFEST);
    if !mpath.is_file() {
        return Err(StoreError::Missing(mpath));
    }
    let m: Manifest = staging::read_json(&mpath)?;
    let dims = Dims {
        d_in: m.d_in,
        d_out: m.d_out,
        img_h: m.img_h,
        img_w: m.img_w,
    };
    let xs = read_scalars(&dir.join(INPUTS), 'x', m.d_in, m.n)?;
    let os = read_scalars(&dir.join(OUTPUTS), 'o', m.d_out, m.n)?;
    let ipath = dir.join(IMAGES);
    let bytes = staging::read(&ipath)?;
    let px = dims.pixels();
    if bytes.len() != m.n * px * 4 {
        return Err(StoreError::corrupt(
            &ipath,
            format!("{} bytes, expected {} ({} images of {}x{})", bytes.len(), m.n * px * 4, m.n, m.img_h, m.img_w),
        ));
    }
    let pixels: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let samples = xs
        .into_iter()
        .zip(os)
        .enumerate()
        .map(|(i, (x, o))| MultiModalSample {
            x,
            o,
            img: pixels[i * px..(i + 1) * px].to_vec(),
        })
        .collect();
    let ds = Dataset {
        dims,
        domain: m.domain,
        norm: m.norm,
        seed: m.seed,
        samples,
    };
    ds.validate().map_err(|e| StoreError::corrupt(&mpath, e))?;
    Ok(ds)
}
