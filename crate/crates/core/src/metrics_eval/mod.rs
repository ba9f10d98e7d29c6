//! Overlap, contour, Jacobian and volume-trend metrics.

mod jacobian;
mod overlap;
mod report;
mod volume;

pub use jacobian::{endpoint_error, jac_volume_deviation, neg_jac_fraction};
pub use overlap::{boundary_voxels, dice, dice_binary, directed_contour_distance, mcd, mean_contour_distance};
pub use report::{MetricsReport, CSV_COLUMNS};
pub use volume::{jacobian_volume, mask_volume, volume_trajectory_fit, warped_mask_volume, VolumeFit};

#[cfg(test)]
mod tests;
