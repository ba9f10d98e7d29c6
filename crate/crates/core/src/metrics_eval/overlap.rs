use crate::diffcore::for_each_index;
use crate::error::{Error, Result};
use crate::objective::LabelMask;
use crate::ode_flow::Domain;

/// `2|A ∩ B| / (|A| + |B|)`, or 1 when both are empty.
pub fn dice_binary(a: &[bool], b: &[bool]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DomainMismatch(format!("masks of {} and {} voxels", a.len(), b.len())));
    }
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let total = a.iter().filter(|x| **x).count() + b.iter().filter(|x| **x).count();
    if total == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / total as f64)
}

/// Dice overlap of one label in two masks.
pub fn dice(a: &LabelMask, b: &LabelMask, label: u32) -> Result<f64> {
    a.domain().check_same(b.domain(), "dice")?;
    dice_binary(&a.select(label), &b.select(label))
}

/// Mask voxels with at least one face neighbour outside the mask or outside
/// the grid, as index tuples.
pub fn boundary_voxels(mask: &[bool], shape: &[usize]) -> Vec<Vec<usize>> {
    let strides = crate::diffcore::strides_of(shape);
    let mut out = Vec::new();
    let mut p = 0;
    for_each_index(shape, |idx| {
        if mask[p] {
            let edge = (0..shape.len()).any(|a| {
                idx[a] == 0 || idx[a] + 1 == shape[a] || !mask[p - strides[a]] || !mask[p + strides[a]]
            });
            if edge {
                out.push(idx.to_vec());
            }
        }
        p += 1;
    });
    out
}

pub(crate) fn directed_mean(from: &[Vec<usize>], to: &[Vec<usize>], spacing: &[f64]) -> f64 {
    let total: f64 = from
        .iter()
        .map(|p| {
            to.iter()
                .map(|q| {
                    p.iter()
                        .zip(q)
                        .zip(spacing)
                        .map(|((&a, &b), s)| ((a as f64 - b as f64) * s).powi(2))
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .sum();
    total / from.len() as f64
}

/// Symmetric mean contour distance in physical units: the average of the
/// mean nearest-boundary distance from A's boundary to B's and from B's to A's.
pub fn mean_contour_distance(a: &[bool], b: &[bool], shape: &[usize], spacing: &[f64]) -> Result<f64> {
    let n: usize = shape.iter().product();
    if a.len() != n || b.len() != n || spacing.len() != shape.len() {
        return Err(Error::DomainMismatch(format!("masks of {} and {} voxels on {shape:?}", a.len(), b.len())));
    }
    let ba = boundary_voxels(a, shape);
    let bb = boundary_voxels(b, shape);
    if ba.is_empty() || bb.is_empty() {
        return Err(Error::Precondition("mean contour distance needs two non-empty masks".into()));
    }
    Ok(0.5 * (directed_mean(&ba, &bb, spacing) + directed_mean(&bb, &ba, spacing)))
}

/// [`mean_contour_distance`] of one label, using the domain spacing.
pub fn mcd(a: &LabelMask, b: &LabelMask, label: u32) -> Result<f64> {
    a.domain().check_same(b.domain(), "mcd")?;
    let d: &Domain = a.domain();
    mean_contour_distance(&a.select(label), &b.select(label), d.shape(), d.spacing())
}

/// Mean distance from A's boundary voxels to the nearest boundary voxel of B.
pub fn directed_contour_distance(a: &[bool], b: &[bool], shape: &[usize], spacing: &[f64]) -> Result<f64> {
    let ba = boundary_voxels(a, shape);
    let bb = boundary_voxels(b, shape);
    if ba.is_empty() || bb.is_empty() {
        return Err(Error::Precondition("contour distance needs two non-empty masks".into()));
    }
    Ok(directed_mean(&ba, &bb, spacing))
}
