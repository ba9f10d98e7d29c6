use serde::{Deserialize, Serialize};

use super::ncc::ncc_var;
use super::regularizers::{jdet_penalty_var, jdet_var, mag_var, smt_var};
use super::{BoundaryMode, ImageVolume};
use crate::diffcore::{Graph, NdArray, Var};
use crate::error::{Error, Result};
use crate::ode_flow::Trajectory;

/// Weights and settings of the registration objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectiveConfig {
    pub lambda_jdet: f64,
    pub lambda_mag: f64,
    pub lambda_smt: f64,
    pub epsilon: f64,
    pub window: usize,
    /// Apply the Jacobian and smoothness terms to every checkpoint instead
    /// of only the last one.
    pub per_checkpoint_regularization: bool,
    pub boundary: BoundaryMode,
    pub frame_weights: Option<Vec<f64>>,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            lambda_jdet: 250.0,
            lambda_mag: 0.01,
            lambda_smt: 0.1,
            epsilon: 1e-3,
            window: 9,
            per_checkpoint_regularization: true,
            boundary: BoundaryMode::None,
            frame_weights: None,
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda_jdet", self.lambda_jdet), ("lambda_mag", self.lambda_mag), ("lambda_smt", self.lambda_smt)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be a non-negative number, got {v}")));
            }
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon must be non-negative, got {}", self.epsilon)));
        }
        if self.window % 2 == 0 {
            return Err(Error::Config(format!("window must be odd, got {}", self.window)));
        }
        if let Some(w) = &self.frame_weights {
            if w.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
                return Err(Error::Config("frame weights must be non-negative".into()));
            }
        }
        Ok(())
    }
}

/// Values of the individual loss terms and their weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct LossBreakdown {
    pub total: f64,
    pub sim: f64,
    pub jdet: f64,
    pub mag: f64,
    pub smt: f64,
    pub boundary: f64,
}

impl LossBreakdown {
    pub fn compose(sim: f64, jdet: f64, mag: f64, smt: f64, boundary: f64, config: &ObjectiveConfig) -> Self {
        let total = sim + jdet * config.lambda_jdet + mag * config.lambda_mag + smt * config.lambda_smt + boundary;
        Self { total, sim, jdet, mag, smt, boundary }
    }
}

/// Graph nodes of the loss terms.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub total: Var,
    pub sim: Var,
    pub jdet: Var,
    pub mag: Var,
    pub smt: Var,
    pub boundary: Var,
}

impl LossTerms {
    pub fn breakdown(&self, g: &Graph, config: &ObjectiveConfig) -> LossBreakdown {
        let b = LossBreakdown::compose(
            g.scalar(self.sim),
            g.scalar(self.jdet),
            g.scalar(self.mag),
            g.scalar(self.smt),
            g.scalar(self.boundary),
            config,
        );
        debug_assert_eq!(b.total.to_bits(), g.scalar(self.total).to_bits());
        b
    }
}

fn sum_vars(g: &mut Graph, vars: &[Var]) -> Result<Var> {
    let mut acc = g.constant(NdArray::scalar(0.0))?;
    for &v in vars {
        acc = g.add(acc, v)?;
    }
    Ok(acc)
}

/// Records the sequence objective: summed `1 - NCC` of the moving image
/// warped by each checkpoint against its frame, plus the weighted
/// regularizers.
pub fn record_loss(
    g: &mut Graph,
    moving: Var,
    frames: &[Var],
    checkpoints: &[Var],
    velocities: &[(Var, f64)],
    identity: Var,
    config: &ObjectiveConfig,
) -> Result<LossTerms> {
    if frames.is_empty() || frames.len() != checkpoints.len() {
        return Err(Error::Precondition(format!(
            "{} frames for {} checkpoints",
            frames.len(),
            checkpoints.len()
        )));
    }
    if let Some(w) = &config.frame_weights {
        if w.len() != frames.len() {
            return Err(Error::Config(format!("{} frame weights for {} frames", w.len(), frames.len())));
        }
    }
    let mut sims = Vec::with_capacity(frames.len());
    for (i, (&f, &phi)) in frames.iter().zip(checkpoints).enumerate() {
        let warped = g.warp(moving, phi)?;
        let ncc = ncc_var(g, warped, f, config.window)?;
        let neg = g.neg(ncc)?;
        let mut d = g.offset(neg, 1.0)?;
        if let Some(w) = &config.frame_weights {
            d = g.scale(d, w[i])?;
        }
        sims.push(d);
    }
    let sim = sum_vars(g, &sims)?;
    let regularized = if config.per_checkpoint_regularization { checkpoints } else { &checkpoints[checkpoints.len() - 1..] };
    let mut jdets = Vec::new();
    let mut smts = Vec::new();
    for &phi in regularized {
        let det = jdet_var(g, phi)?;
        jdets.push(jdet_penalty_var(g, det, config.epsilon)?);
        smts.push(smt_var(g, phi, identity)?);
    }
    let jdet = sum_vars(g, &jdets)?;
    let smt = sum_vars(g, &smts)?;
    let mag = mag_var(g, velocities)?;
    let boundary = match config.boundary {
        BoundaryMode::None => g.constant(NdArray::scalar(0.0))?,
    };
    let t = g.scale(jdet, config.lambda_jdet)?;
    let total = g.add(sim, t)?;
    let t = g.scale(mag, config.lambda_mag)?;
    let total = g.add(total, t)?;
    let t = g.scale(smt, config.lambda_smt)?;
    let total = g.add(total, t)?;
    let total = g.add(total, boundary)?;
    Ok(LossTerms { total, sim, jdet, mag, smt, boundary })
}

/// Evaluates the objective for a finished trajectory.
pub fn total_loss(
    moving: &ImageVolume,
    frames: &[ImageVolume],
    trajectory: &Trajectory,
    velocity_samples: &[(NdArray, f64)],
    config: &ObjectiveConfig,
) -> Result<LossBreakdown> {
    config.validate()?;
    for f in frames {
        moving.domain().check_same(f.domain(), "total_loss frame")?;
    }
    moving.domain().check_same(&trajectory.domain, "total_loss trajectory")?;
    let mut g = Graph::new();
    let m = g.constant(moving.intensities().clone())?;
    let fs = frames.iter().map(|f| g.constant(f.intensities().clone())).collect::<Result<Vec<_>>>()?;
    let cps = trajectory.fields.iter().map(|f| g.constant(f.clone())).collect::<Result<Vec<_>>>()?;
    let vs = velocity_samples
        .iter()
        .map(|(v, dt)| Ok((g.constant(v.clone())?, *dt)))
        .collect::<Result<Vec<_>>>()?;
    let id = g.constant(moving.domain().identity_grid())?;
    let terms = record_loss(&mut g, m, &fs, &cps, &vs, id, config)?;
    Ok(terms.breakdown(&g, config))
}
