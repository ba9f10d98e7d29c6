//! File formats, run directories and the command-line front end.

pub(crate) mod binary;
mod cli;
mod format;
mod manifest;
mod plot;
mod run;
mod sequence;

pub use cli::{run_cli, OUT_ROOT_VAR};
pub use format::{
    decode, encode_field, encode_mask, encode_volume, load_field, load_mask, load_volume, save_field, save_mask,
    save_volume, FileKind, Stored,
};
pub use manifest::{digest_tree, sha256_file, FileDigest, RunManifest, MANIFEST_FILE};
pub use plot::{checkerboard, deformation_grid, pgm, plotdata, CHECKER_TILE, GRID_SPACING, VOLUME_COLUMNS};
pub use run::{
    evaluate_fields, loss_csv, read_trajectory, to_trajectory, write_metrics, write_trajectory, EvalInputs,
    TrajectoryIndex, LOSS_COLUMNS,
};
pub use sequence::{FrameEntry, LoadedSequence, SequenceFile};

use std::path::Path;

use crate::error::{Error, Result};

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
