//! Atomic directory outputs: write into a sibling staging directory, then rename.

use std::fs;
use std::path::{Path, PathBuf};

use crate::{StoreError, StoreResult};

/// Marker every output directory carries; only such directories are replaced.
pub const PROVENANCE_FILE: &str = "provenance.json";

/// A staging directory that becomes `target` on [`StagedDir::commit`].
///
/// Dropping without committing removes the staged files.
pub struct StagedDir {
    target: PathBuf,
    dir: tempfile::TempDir,
}

impl StagedDir {
    pub fn new(target: impl AsRef<Path>) -> StoreResult<Self> {
        let target = target.as_ref().to_path_buf();
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent).map_err(|e| StoreError::io(&parent, e))?;
        check_replaceable(&target)?;
        let name = target.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let dir = tempfile::Builder::new()
            .prefix(&format!(".{name}.staging-"))
            .tempdir_in(&parent)
            .map_err(|e| StoreError::io(&parent, e))?;
        Ok(Self { target, dir })
    }

    pub fn path(&self) -> &Path {
        self.dir.path()
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn target(&self) -> &Path {
        &self.target
    }

    /// Replaces `target` with the staged contents.
    pub fn commit(self) -> StoreResult<PathBuf> {
        check_replaceable(&self.target)?;
        if self.target.exists() {
            fs::remove_dir_all(&self.target).map_err(|e| StoreError::io(&self.target, e))?;
        }
        let staged = self.dir.keep();
        fs::rename(&staged, &self.target).map_err(|e| StoreError::io(&self.target, e))?;
        Ok(self.target)
    }
}

/// An existing target must be empty or a previous output of this tool.
fn check_replaceable(target: &Path) -> StoreResult<()> {
    if !target.exists() {
        return Ok(());
    }
    if !target.is_dir() {
        return Err(StoreError::Occupied { path: target.to_path_buf() });
    }
    let empty = fs::read_dir(target)
        .map_err(|e| StoreError::io(target, e))?
        .next()
        .is_none();
    if empty || target.join(PROVENANCE_FILE).is_file() {
        Ok(())
    } else {
        Err(StoreError::Occupied { path: target.to_path_buf() })
    }
}

/// Writes `bytes` to `path` through a temporary sibling file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> StoreResult<()> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(parent).map_err(|e| StoreError::io(parent, e))?;
    std::io::Write::write_all(&mut tmp, bytes).map_err(|e| StoreError::io(path, e))?;
    tmp.persist(path).map_err(|e| StoreError::io(path, e.error))?;
    Ok(())
}

pub fn read(path: &Path) -> StoreResult<Vec<u8>> {
    fs::read(path).map_err(|e| StoreError::io(path, e))
}

pub fn read_string(path: &Path) -> StoreResult<String> {
    fs::read_to_string(path).map_err(|e| StoreError::io(path, e))
}

pub fn write(path: &Path, bytes: impl AsRef<[u8]>) -> StoreResult<()> {
    fs::write(path, bytes).map_err(|e| StoreError::io(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> StoreResult<T> {
    let text = read_string(path)?;
    serde_json::from_str(&text).map_err(|e| StoreError::corrupt(path, e))
}
