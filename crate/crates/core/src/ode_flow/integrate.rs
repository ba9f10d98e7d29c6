use serde::{Deserialize, Serialize};

use super::{Domain, StepSchedule};
use crate::diffcore::{Graph, NdArray, Var};
use crate::error::{Error, Result};
use crate::field_model::VelocityModel;
use crate::objective::DeformationField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Euler,
    Rk4,
}

/// Something that yields the smoothed velocity `K v(phi, t)` for a state
/// `phi` of shape `[d, *S]` recorded on `g`.
pub trait VelocitySource {
    fn velocity(&self, g: &mut Graph, phi: Var, t: f64) -> Result<Var>;
}

/// A model whose parameters are bound to variables of one graph.
pub struct BoundModel<'a> {
    model: &'a VelocityModel,
    params: Vec<Var>,
    domain: &'a Domain,
}

impl<'a> BoundModel<'a> {
    pub fn bind(g: &mut Graph, model: &'a VelocityModel, domain: &'a Domain) -> Result<Self> {
        model.kernel().check_fits(domain.shape())?;
        if model.config().domain_dim != domain.ndim() {
            return Err(Error::DomainMismatch(format!(
                "{}-D model on a {}-D domain",
                model.config().domain_dim,
                domain.ndim()
            )));
        }
        let params = model.params().bind(g)?;
        Ok(Self { model, params, domain })
    }

    /// Uses existing parameter variables, typically ones being differentiated.
    pub fn with_vars(model: &'a VelocityModel, params: &[Var], domain: &'a Domain) -> Result<Self> {
        model.kernel().check_fits(domain.shape())?;
        Ok(Self { model, params: params.to_vec(), domain })
    }

    pub fn params(&self) -> &[Var] {
        &self.params
    }
}

impl VelocitySource for BoundModel<'_> {
    fn velocity(&self, g: &mut Graph, phi: Var, t: f64) -> Result<Var> {
        let raw = self.model.raw_velocity(g, &self.params, phi, t, self.domain)?;
        self.model.kernel().smooth_var(g, raw)
    }
}

/// Graph-side record of an integration: checkpoint states, the effective
/// velocity of every step with its step size, and every state after a step.
#[derive(Debug, Clone)]
pub struct FlowRecord {
    pub checkpoints: Vec<Var>,
    pub velocities: Vec<(Var, f64)>,
    pub states: Vec<Var>,
}

fn query<S: VelocitySource + ?Sized>(src: &S, g: &mut Graph, phi: Var, t: f64, step: usize) -> Result<Var> {
    let v = src.velocity(g, phi, t).map_err(|e| match e {
        Error::NonFinite { .. } => Error::NonFiniteVelocity { step },
        other => other,
    })?;
    if !g.value(v).all_finite() {
        return Err(Error::NonFiniteVelocity { step });
    }
    if g.shape(v) != g.shape(phi) {
        return Err(Error::shape("integrate", format!("velocity {:?} for state {:?}", g.shape(v), g.shape(phi))));
    }
    Ok(v)
}

/// One step of size `dt` from time `t`; returns the new state and the
/// effective velocity (for RK4 the weighted stage average).
pub fn step<S: VelocitySource + ?Sized>(
    g: &mut Graph,
    src: &S,
    phi: Var,
    t: f64,
    dt: f64,
    method: Method,
    index: usize,
) -> Result<(Var, Var)> {
    let v = match method {
        Method::Euler => query(src, g, phi, t, index)?,
        Method::Rk4 => {
            let k1 = query(src, g, phi, t, index)?;
            let s = g.scale(k1, 0.5 * dt)?;
            let p2 = g.add(phi, s)?;
            let k2 = query(src, g, p2, t + 0.5 * dt, index)?;
            let s = g.scale(k2, 0.5 * dt)?;
            let p3 = g.add(phi, s)?;
            let k3 = query(src, g, p3, t + 0.5 * dt, index)?;
            let s = g.scale(k3, dt)?;
            let p4 = g.add(phi, s)?;
            let k4 = query(src, g, p4, t + dt, index)?;
            let mid = g.add(k2, k3)?;
            let mid = g.scale(mid, 2.0)?;
            let ends = g.add(k1, k4)?;
            let sum = g.add(ends, mid)?;
            g.scale(sum, 1.0 / 6.0)?
        }
    };
    let inc = g.scale(v, dt)?;
    Ok((g.add(phi, inc)?, v))
}

/// Integrates over `[t0, t1]` in `steps` equal steps. `first_step` offsets
/// the step index reported in errors.
#[allow(clippy::too_many_arguments)]
pub fn integrate_segment<S: VelocitySource + ?Sized>(
    g: &mut Graph,
    src: &S,
    phi: Var,
    t0: f64,
    t1: f64,
    steps: usize,
    method: Method,
    first_step: usize,
) -> Result<(Var, Vec<(Var, f64)>, Vec<Var>)> {
    if steps == 0 || !(t1 > t0) {
        return Err(Error::Precondition(format!("segment [{t0}, {t1}] with {steps} steps")));
    }
    let dt = (t1 - t0) / steps as f64;
    let mut phi = phi;
    let mut velocities = Vec::with_capacity(steps);
    let mut states = Vec::with_capacity(steps);
    for k in 0..steps {
        let (next, v) = step(g, src, phi, t0 + k as f64 * dt, dt, method, first_step + k)?;
        velocities.push((v, dt));
        states.push(next);
        phi = next;
    }
    Ok((phi, velocities, states))
}

/// Records the full schedule on `g`, starting from `phi0`.
pub fn integrate_graph<S: VelocitySource + ?Sized>(
    g: &mut Graph,
    src: &S,
    phi0: Var,
    schedule: &StepSchedule,
    method: Method,
) -> Result<FlowRecord> {
    let mut record = FlowRecord { checkpoints: Vec::new(), velocities: Vec::new(), states: Vec::new() };
    let mut phi = phi0;
    let mut done = 0;
    for s in 0..schedule.len() {
        let (t0, t1) = schedule.segment_bounds(s);
        let n = schedule.steps_per_segment()[s];
        let (end, vs, states) = integrate_segment(g, src, phi, t0, t1, n, method, done)?;
        done += n;
        record.checkpoints.push(end);
        record.velocities.extend(vs);
        record.states.extend(states);
        phi = end;
    }
    Ok(record)
}

/// Checkpoint deformation grids of an integration run. `times` holds the
/// integration checkpoints; registration drivers replace them with frame times.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub domain: Domain,
    pub times: Vec<f64>,
    pub steps_per_segment: Vec<usize>,
    pub fields: Vec<NdArray>,
    pub intermediate_states: Option<Vec<NdArray>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn last(&self) -> Result<DeformationField> {
        checkpoint_at(self, self.len())
    }
}

/// The stored field for checkpoint `i` (1-based).
pub fn checkpoint_at(trajectory: &Trajectory, i: usize) -> Result<DeformationField> {
    if i == 0 || i > trajectory.fields.len() {
        return Err(Error::Index { index: i, len: trajectory.fields.len() });
    }
    DeformationField::new(trajectory.domain.clone(), trajectory.fields[i - 1].clone())
}

/// Advances `phi` from `t0` to `t1` without retaining a graph across steps.
/// `make` binds a velocity source to each fresh per-step graph.
#[allow(clippy::too_many_arguments)]
pub fn advance<S, F>(
    make: &F,
    phi: &NdArray,
    t0: f64,
    t1: f64,
    steps: usize,
    method: Method,
    first_step: usize,
    mut on_state: impl FnMut(&NdArray),
) -> Result<NdArray>
where
    S: VelocitySource,
    F: Fn(&mut Graph) -> Result<S>,
{
    if steps == 0 || !(t1 > t0) {
        return Err(Error::Precondition(format!("segment [{t0}, {t1}] with {steps} steps")));
    }
    let dt = (t1 - t0) / steps as f64;
    let mut state = phi.clone();
    for k in 0..steps {
        let mut g = Graph::new();
        let src = make(&mut g)?;
        let p = g.constant(state)?;
        let (next, _) = step(&mut g, &src, p, t0 + k as f64 * dt, dt, method, first_step + k)?;
        state = g.value(next).clone();
        on_state(&state);
    }
    Ok(state)
}

/// Integrates any velocity source over a schedule from the identity grid.
pub fn integrate_with<S, F>(
    make: F,
    domain: &Domain,
    schedule: &StepSchedule,
    method: Method,
    keep_states: bool,
) -> Result<Trajectory>
where
    S: VelocitySource,
    F: Fn(&mut Graph) -> Result<S>,
{
    let mut state = domain.identity_grid();
    let mut fields = Vec::with_capacity(schedule.len());
    let mut states = Vec::new();
    let mut done = 0;
    for s in 0..schedule.len() {
        let (t0, t1) = schedule.segment_bounds(s);
        let n = schedule.steps_per_segment()[s];
        state = advance(&make, &state, t0, t1, n, method, done, |x| {
            if keep_states {
                states.push(x.clone());
            }
        })?;
        done += n;
        fields.push(state.clone());
    }
    Ok(Trajectory {
        domain: domain.clone(),
        times: schedule.checkpoints().to_vec(),
        steps_per_segment: schedule.steps_per_segment().to_vec(),
        fields,
        intermediate_states: keep_states.then_some(states),
    })
}

/// Integrates `model` over `schedule` starting from the identity map.
pub fn integrate(model: &VelocityModel, domain: &Domain, schedule: &StepSchedule, method: Method) -> Result<Trajectory> {
    integrate_with(|g| BoundModel::bind(g, model, domain), domain, schedule, method, false)
}
