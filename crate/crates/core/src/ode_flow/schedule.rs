use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleMode {
    /// Frames are treated as equally spaced in time.
    #[default]
    Fixed,
    /// Step counts follow the physical acquisition intervals.
    Adaptive,
}

/// Checkpoint times in `(0, 1]` and the integration steps between them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    checkpoints: Vec<f64>,
    steps_per_segment: Vec<usize>,
    mode: ScheduleMode,
}

impl StepSchedule {
    pub fn new(checkpoints: Vec<f64>, steps_per_segment: Vec<usize>, mode: ScheduleMode) -> Result<Self> {
        if checkpoints.is_empty() || checkpoints.len() != steps_per_segment.len() {
            return Err(Error::Precondition(format!(
                "{} checkpoints with {} segments",
                checkpoints.len(),
                steps_per_segment.len()
            )));
        }
        let mut prev = 0.0;
        for &t in &checkpoints {
            if !(t > prev && t <= 1.0) {
                return Err(Error::Precondition(format!("checkpoint times must increase within (0, 1], got {checkpoints:?}")));
            }
            prev = t;
        }
        if steps_per_segment.contains(&0) {
            return Err(Error::Precondition("every segment needs at least one step".into()));
        }
        Ok(Self { checkpoints, steps_per_segment, mode })
    }

    /// A single segment over `[0, 1]`.
    pub fn single(steps: usize) -> Result<Self> {
        Self::new(vec![1.0], vec![steps], ScheduleMode::Fixed)
    }

    pub fn checkpoints(&self) -> &[f64] {
        &self.checkpoints
    }

    pub fn steps_per_segment(&self) -> &[usize] {
        &self.steps_per_segment
    }

    pub fn mode(&self) -> ScheduleMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.checkpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.checkpoints.is_empty()
    }

    pub fn total_steps(&self) -> usize {
        self.steps_per_segment.iter().sum()
    }

    /// `(t_start, t_end)` of segment `s`.
    pub fn segment_bounds(&self, s: usize) -> (f64, f64) {
        let start = if s == 0 { 0.0 } else { self.checkpoints[s - 1] };
        (start, self.checkpoints[s])
    }

    /// The same checkpoints with every step count multiplied by `factor`.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        Self::new(
            self.checkpoints.clone(),
            self.steps_per_segment.iter().map(|s| s * factor).collect(),
            self.mode,
        )
    }
}

/// Builds a schedule from acquisition times starting at 0.
///
/// In fixed mode every segment gets `round(steps_per_unit)` steps and the
/// checkpoints are spaced uniformly. In adaptive mode checkpoints sit at the
/// cumulative fraction of elapsed time and each segment gets
/// `max(1, round(interval * steps_per_unit))` steps.
pub fn make_schedule(physical_times: &[f64], mode: ScheduleMode, steps_per_unit: f64) -> Result<StepSchedule> {
    if physical_times.len() < 2 {
        return Err(Error::Precondition("need the baseline time and at least one frame time".into()));
    }
    if physical_times[0] != 0.0 {
        return Err(Error::Precondition(format!("first time must be 0, got {}", physical_times[0])));
    }
    if !physical_times.iter().all(|t| t.is_finite()) || physical_times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition(format!("times must be strictly increasing: {physical_times:?}")));
    }
    if !(steps_per_unit > 0.0 && steps_per_unit.is_finite()) {
        return Err(Error::Precondition(format!("steps_per_unit must be positive, got {steps_per_unit}")));
    }
    let n = physical_times.len() - 1;
    let total = physical_times[n];
    let (checkpoints, steps) = match mode {
        ScheduleMode::Fixed => {
            let k = (steps_per_unit.round() as usize).max(1);
            ((1..=n).map(|i| i as f64 / n as f64).collect(), vec![k; n])
        }
        ScheduleMode::Adaptive => {
            let cps = physical_times[1..].iter().map(|t| t / total).collect();
            let steps = physical_times
                .windows(2)
                .map(|w| (((w[1] - w[0]) * steps_per_unit).round() as usize).max(1))
                .collect();
            (cps, steps)
        }
    };
    let mut checkpoints: Vec<f64> = checkpoints;
    // guard against rounding drift in the last time
    checkpoints[n - 1] = 1.0;
    StepSchedule::new(checkpoints, steps, mode)
}
