use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::diffcore::{Boundary, Graph, NdArray, Var};
use crate::error::{Error, Result};

/// Separable discrete Gaussian, one odd size and standard deviation (voxels) per axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianKernel {
    size: Vec<usize>,
    sigma: Vec<f64>,
}

impl GaussianKernel {
    pub fn new(size: Vec<usize>, sigma: Vec<f64>) -> Result<Self> {
        if size.is_empty() || size.len() != sigma.len() {
            return Err(Error::Config(format!("kernel sizes {size:?} and sigmas {sigma:?} disagree")));
        }
        if size.iter().any(|&s| s % 2 == 0) {
            return Err(Error::Config(format!("kernel sizes must be odd, got {size:?}")));
        }
        if sigma.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::Config(format!("kernel sigmas must be positive, got {sigma:?}")));
        }
        Ok(Self { size, sigma })
    }

    /// Same size and sigma along each of `ndim` axes.
    pub fn isotropic(ndim: usize, size: usize, sigma: f64) -> Result<Self> {
        Self::new(vec![size; ndim], vec![sigma; ndim])
    }

    pub fn size(&self) -> &[usize] {
        &self.size
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn ndim(&self) -> usize {
        self.size.len()
    }

    /// Normalized 1-D weights `exp(-i^2 / 2 sigma^2) / Z` for each axis.
    pub fn taps(&self) -> Vec<Vec<f64>> {
        self.size
            .iter()
            .zip(&self.sigma)
            .map(|(&n, &s)| {
                let r = (n / 2) as i64;
                let w: Vec<f64> = (-r..=r).map(|i| (-((i * i) as f64) / (2.0 * s * s)).exp()).collect();
                let z: f64 = w.iter().sum();
                w.into_iter().map(|v| v / z).collect()
            })
            .collect()
    }

    pub fn check_fits(&self, spatial: &[usize]) -> Result<()> {
        if spatial.len() != self.ndim() {
            return Err(Error::shape("gaussian_smooth", format!("{}-D kernel on {spatial:?}", self.ndim())));
        }
        if let Some((s, n)) = self.size.iter().zip(spatial).find(|(s, n)| s > n) {
            return Err(Error::Precondition(format!("kernel size {s} exceeds field extent {n}")));
        }
        Ok(())
    }

    /// Records the smoothing of every channel of `field` (`[c, *S]`) on `g`.
    pub fn smooth_var(&self, g: &mut Graph, field: Var) -> Result<Var> {
        self.check_fits(&g.shape(field)[1..])?;
        g.filter(field, 1, Rc::new(self.taps()), Boundary::Reflect)
    }
}

/// Per-channel separable Gaussian smoothing of a `[c, *S]` field with reflective borders.
pub fn gaussian_smooth(field: &NdArray, kernel: &GaussianKernel) -> Result<NdArray> {
    let mut g = Graph::new();
    let f = g.constant(field.clone())?;
    let s = kernel.smooth_var(&mut g, f)?;
    Ok(g.value(s).clone())
}
