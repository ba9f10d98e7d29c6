use serde::{Deserialize, Serialize};

use crate::diffcore::{for_each_index, NdArray};
use crate::error::{Error, Result};

/// Regular voxel grid with physical spacing (mm per voxel, per axis).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    shape: Vec<usize>,
    spacing: Vec<f64>,
}

impl Domain {
    pub fn new(shape: Vec<usize>, spacing: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.len() > 3 {
            return Err(Error::Precondition(format!("domain must have 1 to 3 axes, got {shape:?}")));
        }
        if shape.len() != spacing.len() {
            return Err(Error::Precondition(format!("{} extents but {} spacings", shape.len(), spacing.len())));
        }
        if shape.iter().any(|&n| n < 3) {
            return Err(Error::Precondition(format!("every extent must be at least 3, got {shape:?}")));
        }
        if spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::Precondition(format!("spacings must be positive, got {spacing:?}")));
        }
        Ok(Self { shape, spacing })
    }

    /// Unit spacing.
    pub fn unit(shape: &[usize]) -> Result<Self> {
        Self::new(shape.to_vec(), vec![1.0; shape.len()])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn voxel_count(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn voxel_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// Shape of a vector field over this domain, channel first: `[d, *shape]`.
    pub fn field_shape(&self) -> Vec<usize> {
        let mut s = vec![self.ndim()];
        s.extend_from_slice(&self.shape);
        s
    }

    /// The identity map: channel `a` holds the voxel index along axis `a`.
    pub fn identity_grid(&self) -> NdArray {
        let d = self.ndim();
        let m = self.voxel_count();
        let mut data = vec![0.0; d * m];
        let mut p = 0;
        for_each_index(&self.shape, |idx| {
            for a in 0..d {
                data[a * m + p] = idx[a] as f64;
            }
            p += 1;
        });
        NdArray::new(self.field_shape(), data).expect("field shape")
    }

    pub fn check_same(&self, other: &Domain, what: &str) -> Result<()> {
        if self.shape != other.shape || self.spacing != other.spacing {
            return Err(Error::DomainMismatch(format!(
                "{what}: {:?}@{:?} vs {:?}@{:?}",
                self.shape, self.spacing, other.shape, other.spacing
            )));
        }
        Ok(())
    }
}
