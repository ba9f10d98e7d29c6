use crate::diffcore::{kernels, NdArray};
use crate::error::{Error, Result};
use crate::objective::{warp, warp_labels, DeformationField, ImageVolume, Interp, LabelMask};
use crate::ode_flow::{checkpoint_at, Trajectory};

/// Nearest-neighbour warp of `seg` through every checkpoint of `trajectory`.
pub fn propagate_labels(seg: &LabelMask, trajectory: &Trajectory) -> Result<Vec<LabelMask>> {
    seg.domain().check_same(&trajectory.domain, "propagate_labels")?;
    (1..=trajectory.len())
        .map(|i| warp_labels(seg, &checkpoint_at(trajectory, i)?))
        .collect()
}

/// Propagates one label by linear interpolation of its indicator and
/// thresholding at 0.5.
pub fn propagate_binary_linear(seg: &LabelMask, label: u32, trajectory: &Trajectory) -> Result<Vec<LabelMask>> {
    seg.domain().check_same(&trajectory.domain, "propagate_binary_linear")?;
    let indicator: Vec<f64> = seg.labels().iter().map(|&l| f64::from(u8::from(l == label))).collect();
    let image = ImageVolume::new(seg.domain().clone(), NdArray::new(seg.domain().shape().to_vec(), indicator)?)?;
    (1..=trajectory.len())
        .map(|i| {
            let w = warp(&image, &checkpoint_at(trajectory, i)?, Interp::Linear)?;
            let labels = w.intensities().data().iter().map(|&v| if v >= 0.5 { label } else { 0 }).collect();
            LabelMask::new(seg.domain().clone(), labels)
        })
        .collect()
}

/// Composes a chain of pull-back fields `[phi_12, phi_23, ...]` into
/// `x -> phi_12(phi_23(...(x)))`, resampling each field linearly.
pub fn compose_pairwise(chain: &[DeformationField]) -> Result<DeformationField> {
    let (last, rest) = chain.split_last().ok_or_else(|| Error::Precondition("empty field chain".into()))?;
    let domain = last.domain().clone();
    let shape = domain.shape().to_vec();
    let m = domain.voxel_count();
    let d = domain.ndim();
    let mut acc = last.mapping().clone();
    for f in rest.iter().rev() {
        f.domain().check_same(&domain, "compose_pairwise")?;
        let mut out = vec![0.0; d * m];
        for a in 0..d {
            let channel = &f.mapping().data()[a * m..(a + 1) * m];
            out[a * m..(a + 1) * m].copy_from_slice(&kernels::warp_linear(channel, &shape, acc.data(), m));
        }
        acc = NdArray::new(domain.field_shape(), out)?;
    }
    DeformationField::new(domain, acc)
}
