//! Synthetic image sequences with analytically known deformations.
//!
//! Every generator defines a pull-back map `phi_i` per frame and renders
//! frame `i` as the analytic baseline image evaluated at `phi_i(x)`, so
//! `frame_0 ∘ phi_i ≈ frame_i` up to interpolation error. Masks are produced
//! the same way from the analytic baseline regions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::diffcore::{for_each_index, NdArray};
use crate::engine::SequenceSpec;
use crate::error::{Error, Result};
use crate::objective::{DeformationField, ImageVolume, LabelMask};
use crate::ode_flow::Domain;

mod shapes;

pub use shapes::{atrophying_blob, contracting_annulus, translated_pair, EDGE_WIDTH};

/// Frames, true fields, masks and region volumes of a synthetic sequence.
/// Index 0 is the baseline (moving) frame.
#[derive(Debug, Clone)]
pub struct PhantomSequence {
    pub frames: Vec<ImageVolume>,
    /// `true_fields[i]` maps frame-`i` coordinates into frame 0.
    pub true_fields: Vec<DeformationField>,
    pub masks: Vec<LabelMask>,
    pub physical_times: Vec<f64>,
    /// Volume of the tracked region (label 1) in every frame.
    pub true_volumes: Vec<f64>,
}

impl PhantomSequence {
    pub fn domain(&self) -> &Domain {
        self.frames[0].domain()
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Frame 0 as the moving image, later frames at their physical times.
    pub fn to_spec(&self) -> Result<SequenceSpec> {
        SequenceSpec::new(
            self.frames[0].clone(),
            self.frames[1..].iter().cloned().zip(self.physical_times[1..].iter().copied()).collect(),
            Some(self.masks[0].clone()),
        )
    }
}

pub(crate) fn smooth_step(u: f64) -> f64 {
    0.5 * (1.0 + (u / EDGE_WIDTH).tanh())
}

/// Evaluates `map` at every voxel, returning `[d, *shape]` target coordinates.
pub(crate) fn build_field(domain: &Domain, map: impl Fn(&[f64]) -> Vec<f64>) -> Result<DeformationField> {
    let d = domain.ndim();
    let m = domain.voxel_count();
    let mut data = vec![0.0; d * m];
    let mut p = 0;
    for_each_index(domain.shape(), |idx| {
        let x: Vec<f64> = idx.iter().map(|&i| i as f64).collect();
        for (a, v) in map(&x).into_iter().enumerate() {
            data[a * m + p] = v;
        }
        p += 1;
    });
    DeformationField::new(domain.clone(), NdArray::new(domain.field_shape(), data)?)
}

/// Samples `f` at the mapped position of every voxel.
pub(crate) fn render(field: &DeformationField, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let d = field.domain().ndim();
    let m = field.domain().voxel_count();
    let map = field.mapping().data();
    (0..m)
        .map(|p| {
            let y: Vec<f64> = (0..d).map(|a| map[a * m + p]).collect();
            f(&y)
        })
        .collect()
}

pub(crate) fn noisy_image(domain: &Domain, mut values: Vec<f64>, sd: f64, rng: &mut ChaCha8Rng) -> Result<ImageVolume> {
    if sd > 0.0 {
        let normal = Normal::new(0.0, sd).map_err(|e| Error::Precondition(e.to_string()))?;
        values.iter_mut().for_each(|v| *v += normal.sample(rng));
    }
    ImageVolume::new(domain.clone(), NdArray::new(domain.shape().to_vec(), values)?)
}

pub(crate) fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub(crate) fn check_noise(sd: f64) -> Result<()> {
    if !(sd >= 0.0 && sd.is_finite()) {
        return Err(Error::Precondition(format!("noise_sd must be non-negative, got {sd}")));
    }
    Ok(())
}
