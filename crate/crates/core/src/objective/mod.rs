//! Image warping, windowed NCC similarity and the deformation regularizers.

mod ncc;
mod regularizers;
mod total;
mod types;
mod warp;

pub use ncc::{local_ncc, ncc_var, NCC_EPS};
pub use regularizers::{
    boundary_term, boundary_value, jdet_grid, jdet_penalty, jdet_penalty_var, jdet_var, loss_jdet, loss_mag, loss_smt,
    mag_var, smt_var, BoundaryMode,
};
pub use total::{record_loss, total_loss, LossBreakdown, LossTerms, ObjectiveConfig};
pub use types::{DeformationField, ImageVolume, LabelMask};
pub use warp::{warp, warp_labels, Interp};
