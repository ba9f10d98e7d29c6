//! Plot-ready artifacts derived from a run directory.

use std::fmt::Write as _;
use std::path::Path;

use super::format::load_volume;
use super::manifest::RunManifest;
use super::run::{read_trajectory, TrajectoryIndex};
use super::write_atomic;
use crate::error::{Error, Result};
use crate::metrics_eval::{jacobian_volume, MetricsReport};
use crate::objective::{DeformationField, ImageVolume};

pub const VOLUME_COLUMNS: [&str; 3] = ["time", "volume", "relative_volume"];
/// Grid line spacing of deformation-grid images, in voxels.
pub const GRID_SPACING: f64 = 8.0;
pub const CHECKER_TILE: usize = 8;

/// 8-bit binary portable graymap.
pub fn pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// First two axes of a 2D array, or its middle slice along axis 0 for 3D.
fn plane(data: &[f64], shape: &[usize]) -> (usize, usize, Vec<f64>) {
    match shape.len() {
        1 => (shape[0], 1, data.to_vec()),
        2 => (shape[0], shape[1], data.to_vec()),
        _ => {
            let slab = shape[1] * shape[2];
            let mid = shape[0] / 2;
            (shape[1], shape[2], data[mid * slab..(mid + 1) * slab].to_vec())
        }
    }
}

fn to_gray(values: &[f64], lo: f64, hi: f64) -> Vec<u8> {
    let span = if hi > lo { hi - lo } else { 1.0 };
    values.iter().map(|v| (((v - lo) / span).clamp(0.0, 1.0) * 255.0).round() as u8).collect()
}

/// Alternating tiles of `a` and `b`, jointly rescaled to 0..255.
pub fn checkerboard(a: &ImageVolume, b: &ImageVolume) -> Result<Vec<u8>> {
    a.domain().check_same(b.domain(), "checkerboard")?;
    let (rows, cols, pa) = plane(a.intensities().data(), a.domain().shape());
    let (_, _, pb) = plane(b.intensities().data(), b.domain().shape());
    let lo = pa.iter().chain(&pb).cloned().fold(f64::INFINITY, f64::min);
    let hi = pa.iter().chain(&pb).cloned().fold(f64::NEG_INFINITY, f64::max);
    let mixed: Vec<f64> = (0..rows * cols)
        .map(|p| {
            let (r, c) = (p / cols, p % cols);
            if (r / CHECKER_TILE + c / CHECKER_TILE) % 2 == 0 { pa[p] } else { pb[p] }
        })
        .collect();
    Ok(pgm(cols, rows, &to_gray(&mixed, lo, hi)))
}

/// Black where a mapped coordinate lies within half a voxel of a multiple
/// of [`GRID_SPACING`], white elsewhere. The identity gives a regular lattice.
pub fn deformation_grid(field: &DeformationField) -> Vec<u8> {
    let shape = field.domain().shape();
    let d = shape.len();
    let m = field.domain().voxel_count();
    let axes: Vec<usize> = if d > 2 { vec![1, 2] } else { (0..d).collect() };
    let mut line = vec![0.0; m];
    for (p, l) in line.iter_mut().enumerate() {
        let near = axes.iter().any(|&a| {
            let v = field.mapping().data()[a * m + p] / GRID_SPACING;
            (v - v.round()).abs() * GRID_SPACING < 0.5
        });
        *l = if near { 0.0 } else { 1.0 };
    }
    let (rows, cols, flat) = plane(&line, shape);
    pgm(cols, rows, &to_gray(&flat, 0.0, 1.0))
}

fn volumes_csv(index: &TrajectoryIndex, fields: &[DeformationField], metrics: Option<&MetricsReport>) -> Result<String> {
    let volumes = match metrics.filter(|m| m.volumes.len() == fields.len() + 1) {
        Some(m) => m.volumes.clone(),
        None => {
            let domain = fields[0].domain();
            let v0 = domain.voxel_count() as f64 * domain.voxel_volume();
            let all = vec![true; domain.voxel_count()];
            let mut v = vec![v0];
            for f in fields {
                v.push(jacobian_volume(f, &all, v0)?);
            }
            v
        }
    };
    let mut s = VOLUME_COLUMNS.join(",");
    s.push('\n');
    let times = std::iter::once(0.0).chain(index.times.iter().cloned());
    for (t, v) in times.zip(&volumes) {
        writeln!(s, "{t},{v},{}", v / volumes[0]).unwrap();
    }
    Ok(s)
}

/// Writes `loss.csv`, `volumes.csv`, `grid_NNN.pgm` and, when frames and
/// warped images are available, `checker_NNN.pgm` into `out`.
pub fn plotdata(run: &Path, out: &Path) -> Result<Vec<String>> {
    RunManifest::load(run)?;
    let (index, fields) = read_trajectory(run)?;
    let mut written = Vec::new();
    let mut emit = |name: String, bytes: &[u8]| -> Result<()> {
        write_atomic(&out.join(&name), bytes)?;
        written.push(name);
        Ok(())
    };
    let loss = run.join("loss.csv");
    if loss.exists() {
        emit("loss.csv".into(), &std::fs::read(&loss).map_err(|e| Error::io(&loss, e))?)?;
    }
    let metrics_path = run.join("metrics.json");
    let metrics: Option<MetricsReport> = if metrics_path.exists() {
        let text = std::fs::read(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?;
        Some(serde_json::from_slice(&text)?)
    } else {
        None
    };
    emit("volumes.csv".into(), volumes_csv(&index, &fields, metrics.as_ref())?.as_bytes())?;
    for (i, f) in fields.iter().enumerate() {
        emit(format!("grid_{:03}.pgm", i + 1), &deformation_grid(f))?;
    }
    for (i, frame) in index.frames.iter().enumerate() {
        let warped_path = run.join(format!("warped/warped_{:03}.sqfv", i + 1));
        if !warped_path.exists() {
            continue;
        }
        let frame = load_volume(Path::new(frame))?;
        let warped = load_volume(&warped_path)?;
        emit(format!("checker_{:03}.pgm", i + 1), &checkerboard(&warped, &frame)?)?;
    }
    Ok(written)
}
