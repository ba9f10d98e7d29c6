//! Neural velocity fields: per-point MLP and grid conv net, time encoding,
//! near-identity initialization, and the Gaussian smoothing operator.

mod checkpoint;
mod encoding;
mod kernel;
mod model;

pub use checkpoint::{decode_model, encode_model, load_model, save_model};
pub use encoding::positional_encode;
pub use kernel::{gaussian_smooth, GaussianKernel};
pub use model::{init_model, ArchConfig, ModelConfig, VelocityModel, INIT_VELOCITY_BOUND};

#[cfg(test)]
mod tests;
