//! Run directory contents: fields, warped images, losses and metrics.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::format::{load_field, save_field, save_mask, save_volume};
use super::write_atomic;
use crate::engine::{propagate_labels, SequenceSpec};
use crate::error::{Error, Result};
use crate::metrics_eval::{
    dice, endpoint_error, jac_volume_deviation, mask_volume, mcd, neg_jac_fraction, volume_trajectory_fit,
    warped_mask_volume, MetricsReport,
};
use crate::objective::{warp, DeformationField, Interp, LabelMask, LossBreakdown};
use crate::ode_flow::{checkpoint_at, Trajectory};

pub const LOSS_COLUMNS: [&str; 7] = ["iteration", "total", "sim", "jdet", "mag", "smt", "boundary"];

/// Checkpoint index of a run, stored as `trajectory.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryIndex {
    pub times: Vec<f64>,
    pub steps_per_segment: Vec<usize>,
    /// Field files relative to the run directory, one per checkpoint.
    pub fields: Vec<String>,
    /// Frame images the checkpoints were fitted to, if known.
    #[serde(default)]
    pub frames: Vec<String>,
    pub best_iteration: Option<usize>,
}

pub fn field_name(i: usize) -> String {
    format!("fields/field_{i:03}.sqfv")
}

pub fn loss_csv(history: &[LossBreakdown]) -> String {
    let mut s = LOSS_COLUMNS.join(",");
    s.push('\n');
    for (i, l) in history.iter().enumerate() {
        writeln!(s, "{i},{},{},{},{},{},{}", l.total, l.sim, l.jdet, l.mag, l.smt, l.boundary).unwrap();
    }
    s
}

/// Writes checkpoint fields, warped images and the trajectory index.
pub fn write_trajectory(
    dir: &Path,
    spec: &SequenceSpec,
    traj: &Trajectory,
    frame_paths: &[PathBuf],
    best_iteration: Option<usize>,
) -> Result<Vec<DeformationField>> {
    let mut fields = Vec::with_capacity(traj.len());
    let mut names = Vec::with_capacity(traj.len());
    for i in 1..=traj.len() {
        let f = checkpoint_at(traj, i)?;
        save_field(&f, &dir.join(field_name(i)))?;
        save_volume(&warp(&spec.moving, &f, Interp::Linear)?, &dir.join(format!("warped/warped_{i:03}.sqfv")))?;
        names.push(field_name(i));
        fields.push(f);
    }
    if let Some(mask) = &spec.mask {
        for (i, m) in propagate_labels(mask, traj)?.iter().enumerate() {
            save_mask(m, &dir.join(format!("masks/mask_{:03}.sqfv", i + 1)))?;
        }
    }
    let frames = frame_paths.iter().map(|p| absolute(p).display().to_string()).collect();
    let index = TrajectoryIndex {
        times: traj.times.clone(),
        steps_per_segment: traj.steps_per_segment.clone(),
        fields: names,
        frames,
        best_iteration,
    };
    write_atomic(&dir.join("trajectory.json"), &serde_json::to_vec_pretty(&index)?)?;
    Ok(fields)
}

pub fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

/// Reads `trajectory.json` and the fields it lists.
pub fn read_trajectory(dir: &Path) -> Result<(TrajectoryIndex, Vec<DeformationField>)> {
    let path = dir.join("trajectory.json");
    let text = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let index: TrajectoryIndex = serde_json::from_slice(&text)?;
    if index.fields.is_empty() || index.fields.len() != index.times.len() {
        return Err(Error::Precondition(format!("{}: field list does not match times", path.display())));
    }
    let fields = index.fields.iter().map(|f| load_field(&dir.join(f))).collect::<Result<Vec<_>>>()?;
    Ok((index, fields))
}

/// Rebuilds a trajectory from checkpoint fields.
pub fn to_trajectory(index: &TrajectoryIndex, fields: &[DeformationField]) -> Result<Trajectory> {
    let domain = fields[0].domain().clone();
    for f in fields {
        f.domain().check_same(&domain, "trajectory fields")?;
    }
    Ok(Trajectory {
        domain,
        times: index.times.clone(),
        steps_per_segment: index.steps_per_segment.clone(),
        fields: fields.iter().map(|f| f.mapping().clone()).collect(),
        intermediate_states: None,
    })
}

/// Inputs to [`evaluate_fields`] beyond the fields themselves.
#[derive(Debug, Clone, Copy)]
pub struct EvalInputs<'a> {
    pub times: &'a [f64],
    pub mask: Option<&'a LabelMask>,
    pub frame_masks: &'a [LabelMask],
    pub true_fields: &'a [DeformationField],
    /// Label tracked for volumes.
    pub label: u32,
}

/// Metrics of the final checkpoint plus the volume trajectory of `label`.
pub fn evaluate_fields(fields: &[DeformationField], inputs: EvalInputs) -> Result<MetricsReport> {
    let last = fields.last().ok_or_else(|| Error::Precondition("no fields to evaluate".into()))?;
    let mut report = MetricsReport { neg_jac_fraction: Some(neg_jac_fraction(last)?), ..Default::default() };
    if let Some(truth) = inputs.true_fields.last() {
        report.endpoint_error = Some(endpoint_error(last, truth, None)?);
    }
    let Some(mask) = inputs.mask else {
        let all = vec![true; last.domain().voxel_count()];
        report.mean_abs_jdet_dev = Some(jac_volume_deviation(last, &all)?);
        return Ok(report);
    };
    let warped = crate::objective::warp_labels(mask, last)?;
    let region: Vec<bool> = warped.labels().iter().map(|&l| l != 0).collect();
    if region.iter().any(|&b| b) {
        report.mean_abs_jdet_dev = Some(jac_volume_deviation(last, &region)?);
    }
    if let Some(target) = inputs.frame_masks.last() {
        for label in mask.label_set().into_iter().filter(|&l| l != 0) {
            report.dice.push((label, dice(&warped, target, label)?));
            if warped.count(label) > 0 && target.count(label) > 0 {
                report.mcd.push((label, mcd(&warped, target, label)?));
            }
        }
    }
    if mask.count(inputs.label) > 0 {
        let mut volumes = vec![mask_volume(mask, inputs.label)];
        for f in fields {
            volumes.push(warped_mask_volume(mask, inputs.label, f)?);
        }
        if volumes.len() >= 3 {
            let mut times = vec![0.0];
            times.extend_from_slice(inputs.times);
            report.volume_fit = Some(volume_trajectory_fit(&volumes, &times)?);
        }
        report.volumes = volumes;
    }
    Ok(report)
}

pub fn write_metrics(dir: &Path, report: &MetricsReport) -> Result<()> {
    write_atomic(&dir.join("metrics.txt"), report.to_kv().as_bytes())?;
    let csv = format!("{}\n{}\n", MetricsReport::csv_header(), report.csv_row());
    write_atomic(&dir.join("metrics.csv"), csv.as_bytes())?;
    write_atomic(&dir.join("metrics.json"), &serde_json::to_vec_pretty(report)?)
}
