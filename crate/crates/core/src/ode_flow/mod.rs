//! Integration of `d phi / dt = K v(phi, t)` from the identity map over a
//! checkpoint schedule in normalized time `[0, 1]`.
//!
//! Gradients flow through the stored per-step states; memory grows with
//! steps times grid size times dimension.

mod domain;
mod integrate;
mod schedule;

pub use domain::Domain;
pub use integrate::{
    advance, checkpoint_at, integrate, integrate_graph, integrate_segment, integrate_with, step, BoundModel,
    FlowRecord, Method, Trajectory, VelocitySource,
};
pub use schedule::{make_schedule, ScheduleMode, StepSchedule};
