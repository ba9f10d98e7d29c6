use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::{jdet_grid, DeformationField, LabelMask};

/// Ordinary least squares of baseline-normalized volume against time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeFit {
    /// Change in normalized volume per unit time.
    pub slope: f64,
    pub intercept: f64,
    /// Pearson correlation; 0 when the response has no variance.
    pub r: f64,
    /// `sum residual^2 / (n - 2)`.
    pub residual_variance: f64,
    /// Set when the response variance is zero and `r` is defined as 0.
    pub degenerate: bool,
}

pub fn volume_trajectory_fit(volumes: &[f64], times: &[f64]) -> Result<VolumeFit> {
    if volumes.len() < 3 || volumes.len() != times.len() {
        return Err(Error::Precondition(format!(
            "need at least 3 paired points, got {} volumes and {} times",
            volumes.len(),
            times.len()
        )));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition("times must be strictly increasing".into()));
    }
    let v0 = volumes[0];
    if !(v0 > 0.0) {
        return Err(Error::Precondition(format!("baseline volume must be positive, got {v0}")));
    }
    let y: Vec<f64> = volumes.iter().map(|v| v / v0).collect();
    let n = y.len() as f64;
    let mt = times.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = times.iter().map(|t| (t - mt).powi(2)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let sxy: f64 = times.iter().zip(&y).map(|(t, v)| (t - mt) * (v - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mt;
    let rss: f64 = times.iter().zip(&y).map(|(t, v)| (v - intercept - slope * t).powi(2)).sum();
    let degenerate = syy == 0.0;
    let r = if degenerate { 0.0 } else { sxy / (sxx * syy).sqrt() };
    Ok(VolumeFit { slope, intercept, r, residual_variance: rss / (n - 2.0), degenerate })
}

/// Physical volume of one label, by voxel counting.
pub fn mask_volume(mask: &LabelMask, label: u32) -> f64 {
    mask.count(label) as f64 * mask.domain().voxel_volume()
}

/// Volume of the region that `field` pulls back onto a baseline region of
/// volume `baseline_volume`, from the mean Jacobian determinant over the
/// warped region `region`.
pub fn jacobian_volume(field: &DeformationField, region: &[bool], baseline_volume: f64) -> Result<f64> {
    let det = jdet_grid(field)?;
    if region.len() != det.len() {
        return Err(Error::DomainMismatch(format!("region of {} voxels, field of {}", region.len(), det.len())));
    }
    let (sum, n) = det
        .data()
        .iter()
        .zip(region)
        .filter(|(_, r)| **r)
        .fold((0.0, 0usize), |(s, n), (d, _)| (s + d, n + 1));
    if n == 0 {
        return Err(Error::Precondition("empty region".into()));
    }
    Ok(baseline_volume / (sum / n as f64))
}

/// Partial-volume estimate of the region `label` occupies after warping:
/// the label indicator is sampled linearly at `field(x)` and summed.
pub fn warped_mask_volume(mask: &LabelMask, label: u32, field: &DeformationField) -> Result<f64> {
    mask.domain().check_same(field.domain(), "warped_mask_volume")?;
    let shape = mask.domain().shape();
    let indicator: Vec<f64> = mask.labels().iter().map(|&l| f64::from(u8::from(l == label))).collect();
    let sampled = crate::diffcore::kernels::warp_linear(&indicator, shape, field.mapping().data(), mask.domain().voxel_count());
    Ok(sampled.iter().sum::<f64>() * mask.domain().voxel_volume())
}
