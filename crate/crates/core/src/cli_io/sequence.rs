//! JSON descriptor tying a moving image, its frames and optional reference
//! data together. Paths are relative to the descriptor's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::format::{load_field, load_mask, load_volume};
use super::write_atomic;
use crate::engine::SequenceSpec;
use crate::error::{Error, Result};
use crate::objective::{DeformationField, LabelMask};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameEntry {
    pub path: String,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceFile {
    pub moving: String,
    pub frames: Vec<FrameEntry>,
    /// Mask of the moving image.
    #[serde(default)]
    pub mask: Option<String>,
    /// Reference masks, one per frame.
    #[serde(default)]
    pub frame_masks: Vec<String>,
    /// Ground-truth pull-back fields, one per frame.
    #[serde(default)]
    pub true_fields: Vec<String>,
}

/// A descriptor with every referenced file loaded.
#[derive(Debug, Clone)]
pub struct LoadedSequence {
    pub spec: SequenceSpec,
    pub frame_masks: Vec<LabelMask>,
    pub true_fields: Vec<DeformationField>,
    /// Every file read, descriptor first.
    pub files: Vec<PathBuf>,
    pub frame_paths: Vec<PathBuf>,
}

impl SequenceFile {
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &serde_json::to_vec_pretty(self)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_slice(&text)?)
    }

    pub fn load(path: &Path) -> Result<LoadedSequence> {
        let desc = Self::read(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let mut files = vec![path.to_path_buf()];
        let mut resolve = |p: &str| {
            let full = base.join(p);
            files.push(full.clone());
            full
        };
        let moving = load_volume(&resolve(&desc.moving))?;
        let mut frames = Vec::with_capacity(desc.frames.len());
        let mut frame_paths = Vec::with_capacity(desc.frames.len());
        for f in &desc.frames {
            let p = resolve(&f.path);
            frames.push((load_volume(&p)?, f.time));
            frame_paths.push(p);
        }
        let mask = desc.mask.as_deref().map(|p| load_mask(&resolve(p))).transpose()?;
        let frame_masks = desc.frame_masks.iter().map(|p| load_mask(&resolve(p))).collect::<Result<Vec<_>>>()?;
        let true_fields = desc.true_fields.iter().map(|p| load_field(&resolve(p))).collect::<Result<Vec<_>>>()?;
        for (what, n) in [("frame_masks", frame_masks.len()), ("true_fields", true_fields.len())] {
            if n != 0 && n != frames.len() {
                return Err(Error::Precondition(format!("{what} lists {n} files for {} frames", frames.len())));
            }
        }
        let spec = SequenceSpec::new(moving, frames, mask)?;
        spec.validate()?;
        Ok(LoadedSequence { spec, frame_masks, true_fields, files, frame_paths })
    }
}
