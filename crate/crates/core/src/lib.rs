//! Deformable registration of images and image sequences by integrating a
//! neural velocity field from the identity map.

pub mod cli_io;
pub mod diffcore;
pub mod engine;
pub mod error;
pub mod field_model;
pub mod metrics_eval;
pub mod objective;
pub mod ode_flow;
pub mod phantoms;

pub use error::{Error, Result};
