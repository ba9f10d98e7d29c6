use serde::{Deserialize, Serialize};

use super::{DeformationField, ImageVolume, LabelMask};
use crate::diffcore::kernels;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Interp {
    #[default]
    Linear,
    Nearest,
}

/// Pull-back warp: `out(x) = image(field(x))`, clamping at the border.
pub fn warp(image: &ImageVolume, field: &DeformationField, interp: Interp) -> Result<ImageVolume> {
    image.domain().check_same(field.domain(), "warp")?;
    let shape = image.domain().shape();
    let m = image.domain().voxel_count();
    let data = image.intensities().data();
    let coords = field.mapping().data();
    let out = match interp {
        Interp::Linear => kernels::warp_linear(data, shape, coords, m),
        Interp::Nearest => kernels::warp_nearest(data, shape, coords, m),
    };
    ImageVolume::new(image.domain().clone(), crate::diffcore::NdArray::new(shape.to_vec(), out)?)
}

/// Nearest-neighbour warp of a label mask.
pub fn warp_labels(mask: &LabelMask, field: &DeformationField) -> Result<LabelMask> {
    mask.domain().check_same(field.domain(), "warp_labels")?;
    let shape = mask.domain().shape();
    let values: Vec<f64> = mask.labels().iter().map(|&l| l as f64).collect();
    let out = kernels::warp_nearest(&values, shape, field.mapping().data(), mask.domain().voxel_count());
    LabelMask::new(mask.domain().clone(), out.into_iter().map(|v| v as u32).collect())
}
