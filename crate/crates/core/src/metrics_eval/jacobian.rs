use crate::error::{Error, Result};
use crate::objective::{jdet_grid, DeformationField};

/// Mean of `|det(D phi) - 1|` over the voxels of `region`.
pub fn jac_volume_deviation(field: &DeformationField, region: &[bool]) -> Result<f64> {
    let det = jdet_grid(field)?;
    if region.len() != det.len() {
        return Err(Error::DomainMismatch(format!("region of {} voxels, field of {}", region.len(), det.len())));
    }
    let vals: Vec<f64> = det.data().iter().zip(region).filter(|(_, r)| **r).map(|(d, _)| (d - 1.0).abs()).collect();
    if vals.is_empty() {
        return Err(Error::Precondition("empty region".into()));
    }
    Ok(vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Fraction of grid points where `det(D phi) <= 0`.
pub fn neg_jac_fraction(field: &DeformationField) -> Result<f64> {
    let det = jdet_grid(field)?;
    Ok(det.data().iter().filter(|&&d| d <= 0.0).count() as f64 / det.len() as f64)
}

/// Mean Euclidean distance between two mappings, optionally inside a region.
pub fn endpoint_error(field: &DeformationField, truth: &DeformationField, region: Option<&[bool]>) -> Result<f64> {
    field.domain().check_same(truth.domain(), "endpoint_error")?;
    let m = field.domain().voxel_count();
    let d = field.domain().ndim();
    let (a, b) = (field.mapping().data(), truth.mapping().data());
    let mut total = 0.0;
    let mut n = 0usize;
    for p in 0..m {
        if region.is_some_and(|r| !r[p]) {
            continue;
        }
        total += (0..d).map(|k| (a[k * m + p] - b[k * m + p]).powi(2)).sum::<f64>().sqrt();
        n += 1;
    }
    if n == 0 {
        return Err(Error::Precondition("empty region".into()));
    }
    Ok(total / n as f64)
}
