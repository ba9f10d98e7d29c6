use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field_model::{ArchConfig, ModelConfig};
use crate::objective::{BoundaryMode, ObjectiveConfig};
use crate::ode_flow::{Method, ScheduleMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

/// Everything that controls one registration run. Field names are the JSON
/// keys of the config file; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegistrationConfig {
    pub lambda_jdet: f64,
    pub lambda_mag: f64,
    pub lambda_smt: f64,
    pub epsilon: f64,
    pub window: usize,
    pub per_checkpoint_regularization: bool,
    pub boundary: BoundaryMode,
    pub frame_weights: Option<Vec<f64>>,
    pub iterations: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub integrator: Method,
    pub schedule_mode: ScheduleMode,
    /// Steps per segment in fixed mode, steps per unit of physical time in
    /// adaptive mode.
    pub steps_per_unit: f64,
    pub arch: ArchConfig,
    pub time_encoding_dims: usize,
    pub kernel_size: usize,
    pub kernel_sigma: f64,
    pub seed: u64,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        let objective = ObjectiveConfig::default();
        Self {
            lambda_jdet: objective.lambda_jdet,
            lambda_mag: objective.lambda_mag,
            lambda_smt: objective.lambda_smt,
            epsilon: objective.epsilon,
            window: objective.window,
            per_checkpoint_regularization: objective.per_checkpoint_regularization,
            boundary: objective.boundary,
            frame_weights: None,
            iterations: 300,
            learning_rate: 1e-2,
            optimizer: OptimizerKind::Adam,
            integrator: Method::Euler,
            schedule_mode: ScheduleMode::Fixed,
            steps_per_unit: 2.0,
            arch: ArchConfig::default_mlp(),
            time_encoding_dims: 8,
            kernel_size: 5,
            kernel_sigma: 1.0,
            seed: 0,
        }
    }
}

impl RegistrationConfig {
    pub fn objective(&self) -> ObjectiveConfig {
        ObjectiveConfig {
            lambda_jdet: self.lambda_jdet,
            lambda_mag: self.lambda_mag,
            lambda_smt: self.lambda_smt,
            epsilon: self.epsilon,
            window: self.window,
            per_checkpoint_regularization: self.per_checkpoint_regularization,
            boundary: self.boundary,
            frame_weights: self.frame_weights.clone(),
        }
    }

    pub fn model_config(&self, domain_dim: usize) -> ModelConfig {
        let mut m = ModelConfig::new(self.arch.clone(), domain_dim);
        m.time_encoding_dims = self.time_encoding_dims;
        m.kernel_size = self.kernel_size;
        m.kernel_sigma = self.kernel_sigma;
        m
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.steps_per_unit > 0.0 && self.steps_per_unit.is_finite()) {
            return Err(Error::Config(format!("steps_per_unit must be positive, got {}", self.steps_per_unit)));
        }
        self.objective().validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }
}
