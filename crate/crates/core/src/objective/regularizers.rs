use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::DeformationField;
use crate::diffcore::{Graph, NdArray, Var};
use crate::error::{Error, Result};

/// Records `det(D phi)` for a field `[d, *S]`, giving `[1, *S]`.
pub fn jdet_var(g: &mut Graph, phi: Var) -> Result<Var> {
    let d = g.shape(phi)[0];
    if g.shape(phi).len() != d + 1 || !(2..=3).contains(&d) {
        return Err(Error::shape("jdet", format!("field {:?}", g.shape(phi))));
    }
    // a[i][j] = d phi_i / d x_j
    let mut a = vec![vec![phi; d]; d];
    for j in 0..d {
        let dj = g.diff(phi, j + 1)?;
        for (i, row) in a.iter_mut().enumerate() {
            row[j] = g.slice(dj, i, 1)?;
        }
    }
    let det2 = |g: &mut Graph, p: Var, q: Var, r: Var, s: Var| -> Result<Var> {
        let ps = g.mul(p, s)?;
        let qr = g.mul(q, r)?;
        g.sub(ps, qr)
    };
    if d == 2 {
        return det2(g, a[0][0], a[0][1], a[1][0], a[1][1]);
    }
    let c0 = det2(g, a[1][1], a[1][2], a[2][1], a[2][2])?;
    let c1 = det2(g, a[1][0], a[1][2], a[2][0], a[2][2])?;
    let c2 = det2(g, a[1][0], a[1][1], a[2][0], a[2][1])?;
    let t0 = g.mul(a[0][0], c0)?;
    let t1 = g.mul(a[0][1], c1)?;
    let t2 = g.mul(a[0][2], c2)?;
    let s = g.sub(t0, t1)?;
    g.add(s, t2)
}

/// Records `mean relu(-(det + eps))^2`.
pub fn jdet_penalty_var(g: &mut Graph, det: Var, eps: f64) -> Result<Var> {
    let shifted = g.offset(det, eps)?;
    let neg = g.neg(shifted)?;
    let r = g.relu(neg)?;
    let sq = g.square(r)?;
    g.mean(sq)
}

/// Records the mean over voxels of `sum_ij (D_j u_i)^2`, where `u = phi - Id`.
pub fn smt_var(g: &mut Graph, phi: Var, identity: Var) -> Result<Var> {
    let shape = g.shape(phi).to_vec();
    let d = shape[0];
    let voxels: usize = shape[1..].iter().product();
    let u = g.sub(phi, identity)?;
    let mut total = None;
    for j in 0..d {
        let dj = g.diff(u, j + 1)?;
        let sq = g.square(dj)?;
        let s = g.sum(sq)?;
        total = Some(match total {
            None => s,
            Some(t) => g.add(t, s)?,
        });
    }
    g.scale(total.expect("d >= 1"), 1.0 / voxels as f64)
}

/// Records `sum_s dt_s * mean_x |v_s(x)|^2` for velocity grids `[d, *S]`.
pub fn mag_var(g: &mut Graph, samples: &[(Var, f64)]) -> Result<Var> {
    let mut total = g.constant(NdArray::scalar(0.0))?;
    for &(v, dt) in samples {
        let voxels: usize = g.shape(v)[1..].iter().product();
        let sq = g.square(v)?;
        let s = g.sum(sq)?;
        let s = g.scale(s, dt / voxels as f64)?;
        total = g.add(total, s)?;
    }
    Ok(total)
}

/// Jacobian determinants of a field, central differences inside and
/// one-sided on the faces.
pub fn jdet_grid(field: &DeformationField) -> Result<NdArray> {
    let mut g = Graph::new();
    let phi = g.constant(field.mapping().clone())?;
    let det = jdet_var(&mut g, phi)?;
    g.value(det).clone().reshape(field.domain().shape().to_vec())
}

/// `mean relu(-(det + eps))^2` over a determinant grid.
pub fn jdet_penalty(det: &NdArray, eps: f64) -> Result<f64> {
    if !(eps >= 0.0) {
        return Err(Error::Precondition(format!("epsilon must be non-negative, got {eps}")));
    }
    let s: f64 = det.data().iter().map(|&v| (-(v + eps)).max(0.0).powi(2)).sum();
    Ok(s / det.len() as f64)
}

pub fn loss_jdet(field: &DeformationField, eps: f64) -> Result<f64> {
    jdet_penalty(&jdet_grid(field)?, eps)
}

/// Flow energy of smoothed velocity grids sampled once per step.
pub fn loss_mag(velocities: &[NdArray], step_sizes: &[f64]) -> Result<f64> {
    if velocities.len() != step_sizes.len() {
        return Err(Error::Precondition(format!(
            "{} velocity grids for {} step sizes",
            velocities.len(),
            step_sizes.len()
        )));
    }
    let mut total = 0.0;
    for (v, dt) in velocities.iter().zip(step_sizes) {
        if v.ndim() < 2 {
            return Err(Error::shape("loss_mag", format!("velocity {:?}", v.shape())));
        }
        let voxels = v.len() / v.shape()[0];
        total += dt * v.data().iter().map(|x| x * x).sum::<f64>() / voxels as f64;
    }
    Ok(total)
}

pub fn loss_smt(field: &DeformationField) -> Result<f64> {
    let mut g = Graph::new();
    let phi = g.constant(field.mapping().clone())?;
    let id = g.constant(field.domain().identity_grid())?;
    let v = smt_var(&mut g, phi, id)?;
    Ok(g.scalar(v))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryMode {
    /// No boundary term.
    #[default]
    None,
}

impl FromStr for BoundaryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            other => Err(Error::Config(format!("unknown boundary mode {other:?}"))),
        }
    }
}

/// Boundary penalty for a named mode; `"none"` contributes zero.
pub fn boundary_term(field: &DeformationField, mode: &str) -> Result<f64> {
    Ok(boundary_value(field, mode.parse()?))
}

pub fn boundary_value(_field: &DeformationField, mode: BoundaryMode) -> f64 {
    match mode {
        BoundaryMode::None => 0.0,
    }
}
