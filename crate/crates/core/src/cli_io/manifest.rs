use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::write_atomic;
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path, recorded_as: impl Into<String>) -> Result<Self> {
        Ok(Self { path: recorded_as.into(), sha256: sha256_file(path)? })
    }
}

/// Provenance record written into every run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Full argument vector, program name excluded.
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub seed: u64,
    /// Input files with their paths as given on the command line.
    pub inputs: Vec<FileDigest>,
    /// Output files relative to the run directory, sorted by path.
    pub outputs: Vec<FileDigest>,
    pub wall_time_secs: f64,
    pub version: String,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn collect(dir: &Path, rel: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let here = dir.join(rel);
    for entry in std::fs::read_dir(&here).map_err(|e| Error::io(&here, e))? {
        let entry = entry.map_err(|e| Error::io(&here, e))?;
        let name = rel.join(entry.file_name());
        let ft = entry.file_type().map_err(|e| Error::io(entry.path(), e))?;
        if ft.is_dir() {
            collect(dir, &name, out)?;
        } else if name != Path::new(MANIFEST_FILE) {
            out.push(name);
        }
    }
    Ok(())
}

/// Digests of every file under `dir` except the manifest itself.
pub fn digest_tree(dir: &Path) -> Result<Vec<FileDigest>> {
    let mut files = Vec::new();
    collect(dir, Path::new(""), &mut files)?;
    files.sort();
    files
        .iter()
        .map(|rel| {
            let shown = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect::<Vec<_>>().join("/");
            FileDigest::of(&dir.join(rel), shown)
        })
        .collect()
}

impl RunManifest {
    pub fn save(&self, dir: &Path) -> Result<()> {
        write_atomic(&dir.join(MANIFEST_FILE), &serde_json::to_vec_pretty(self)?)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_slice(&text)?)
    }

    /// Inputs whose current digest differs from the recorded one.
    pub fn changed_inputs(&self) -> Result<Vec<String>> {
        let mut changed = Vec::new();
        for f in &self.inputs {
            if sha256_file(Path::new(&f.path))? != f.sha256 {
                changed.push(f.path.clone());
            }
        }
        Ok(changed)
    }
}
