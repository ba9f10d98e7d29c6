use std::time::{Duration, Instant};

use super::{optimize, RegistrationConfig};
use crate::diffcore::{Graph, ParamVector};
use crate::error::{Error, Result};
use crate::field_model::{init_model, VelocityModel};
use crate::metrics_eval::MetricsReport;
use crate::objective::{record_loss, DeformationField, ImageVolume, LabelMask, LossBreakdown};
use crate::ode_flow::{integrate, integrate_graph, make_schedule, BoundModel, Domain, StepSchedule, Trajectory};

use super::compose_pairwise;

/// A moving image at time 0 and the frames it is registered to.
#[derive(Debug, Clone)]
pub struct SequenceSpec {
    pub moving: ImageVolume,
    /// Frames with their physical acquisition times.
    pub frames: Vec<(ImageVolume, f64)>,
    pub mask: Option<LabelMask>,
}

impl SequenceSpec {
    pub fn new(moving: ImageVolume, frames: Vec<(ImageVolume, f64)>, mask: Option<LabelMask>) -> Result<Self> {
        let s = Self { moving, frames, mask };
        s.validate()?;
        Ok(s)
    }

    pub fn domain(&self) -> &Domain {
        self.moving.domain()
    }

    pub fn times(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.1).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::Precondition("sequence has no frames".into()));
        }
        let mut prev = 0.0;
        for (i, (f, t)) in self.frames.iter().enumerate() {
            self.moving.domain().check_same(f.domain(), &format!("frame {}", i + 1))?;
            if !(*t > prev) || !t.is_finite() {
                return Err(Error::Precondition(format!(
                    "frame times must be positive and strictly increasing, got {:?}",
                    self.times()
                )));
            }
            prev = *t;
        }
        if let Some(m) = &self.mask {
            self.moving.domain().check_same(m.domain(), "mask")?;
        }
        Ok(())
    }

    pub fn schedule(&self, config: &RegistrationConfig) -> Result<StepSchedule> {
        let mut times = vec![0.0];
        times.extend(self.times());
        make_schedule(&times, config.schedule_mode, config.steps_per_unit)
    }
}

#[derive(Debug, Clone)]
pub struct RegistrationResult {
    pub trajectory: Trajectory,
    pub loss_history: Vec<LossBreakdown>,
    pub final_model: VelocityModel,
    pub metrics: Option<MetricsReport>,
    pub wall_time: Duration,
    pub best_iteration: usize,
}

impl RegistrationResult {
    pub fn final_field(&self) -> Result<DeformationField> {
        self.trajectory.last()
    }
}

/// Loss and parameter gradient of one evaluation of the sequence objective.
pub fn sequence_loss(
    spec: &SequenceSpec,
    model: &VelocityModel,
    params: &ParamVector,
    schedule: &StepSchedule,
    config: &RegistrationConfig,
) -> Result<(LossBreakdown, ParamVector)> {
    let domain = spec.domain();
    let objective = config.objective();
    let mut g = Graph::new();
    let vars = params.bind(&mut g)?;
    let src = BoundModel::with_vars(model, &vars, domain)?;
    let id = g.constant(domain.identity_grid())?;
    let rec = integrate_graph(&mut g, &src, id, schedule, config.integrator)?;
    let moving = g.constant(spec.moving.intensities().clone())?;
    let frames = spec
        .frames
        .iter()
        .map(|(f, _)| g.constant(f.intensities().clone()))
        .collect::<Result<Vec<_>>>()?;
    let terms = record_loss(&mut g, moving, &frames, &rec.checkpoints, &rec.velocities, id, &objective)?;
    let breakdown = terms.breakdown(&g, &objective);
    if !breakdown.total.is_finite() {
        return Err(Error::NonFinite { op: "total_loss" });
    }
    let grads = g.backward(terms.total)?;
    Ok((breakdown, params.gradients(&grads, &vars)))
}

/// Fits one velocity model against every frame of the sequence at once.
pub fn register_sequence(spec: &SequenceSpec, config: &RegistrationConfig) -> Result<RegistrationResult> {
    spec.validate()?;
    config.validate()?;
    let start = Instant::now();
    let domain = spec.domain();
    let schedule = spec.schedule(config)?;
    let model = init_model(&config.model_config(domain.ndim()), config.seed)?;
    model.kernel().check_fits(domain.shape())?;
    let opt = optimize(
        |p| sequence_loss(spec, &model, p, &schedule, config),
        model.params(),
        config.iterations,
        config.learning_rate,
        config.optimizer,
    )?;
    let final_model = model.with_params(opt.params)?;
    let mut trajectory = integrate(&final_model, domain, &schedule, config.integrator)?;
    trajectory.times = spec.times();
    Ok(RegistrationResult {
        trajectory,
        loss_history: opt.history,
        final_model,
        metrics: None,
        wall_time: start.elapsed(),
        best_iteration: opt.best_iteration,
    })
}

/// Registers `moving` to a single `fixed` frame at time 1.
pub fn register_pair(moving: &ImageVolume, fixed: &ImageVolume, config: &RegistrationConfig) -> Result<RegistrationResult> {
    moving.domain().check_same(fixed.domain(), "register_pair")?;
    let spec = SequenceSpec::new(moving.clone(), vec![(fixed.clone(), 1.0)], None)?;
    register_sequence(&spec, config)
}

/// Per-frame fields of a pairwise baseline together with the models used.
#[derive(Debug, Clone)]
pub struct PairwiseResult {
    /// Field mapping frame-`i` coordinates into the moving image, one per frame.
    pub fields: Vec<DeformationField>,
    pub models: Vec<VelocityModel>,
    pub wall_time: Duration,
}

impl PairwiseResult {
    pub fn total_param_count(&self) -> usize {
        self.models.iter().map(|m| m.param_count()).sum()
    }
}

fn pair_config(config: &RegistrationConfig, k: usize) -> RegistrationConfig {
    RegistrationConfig { seed: config.seed.wrapping_add(k as u64), frame_weights: None, ..config.clone() }
}

/// Registers each successive frame pair independently and composes the
/// results, so frame `i` is reached through `i` chained fields.
pub fn register_pairwise_chain(spec: &SequenceSpec, config: &RegistrationConfig) -> Result<PairwiseResult> {
    spec.validate()?;
    let start = Instant::now();
    let mut steps = Vec::new();
    let mut models = Vec::new();
    let mut fields = Vec::new();
    let mut prev = &spec.moving;
    for (k, (frame, _)) in spec.frames.iter().enumerate() {
        let r = register_pair(prev, frame, &pair_config(config, k))?;
        steps.push(r.final_field()?);
        models.push(r.final_model);
        fields.push(compose_pairwise(&steps)?);
        prev = frame;
    }
    Ok(PairwiseResult { fields, models, wall_time: start.elapsed() })
}

/// Registers every frame directly to the moving image, each with its own model.
pub fn register_pairwise_to_baseline(spec: &SequenceSpec, config: &RegistrationConfig) -> Result<PairwiseResult> {
    spec.validate()?;
    let start = Instant::now();
    let mut models = Vec::new();
    let mut fields = Vec::new();
    for (k, (frame, _)) in spec.frames.iter().enumerate() {
        let r = register_pair(&spec.moving, frame, &pair_config(config, k))?;
        fields.push(r.final_field()?);
        models.push(r.final_model);
    }
    Ok(PairwiseResult { fields, models, wall_time: start.elapsed() })
}
