//! Exact urn dynamics `Y_{n+1} = Y_n + D_{n+1} X_{n+1}`.

mod audit;
mod engine;
mod model;
mod rule;
mod state;
mod trajectory;

pub use audit::{
    audit_assumptions, AssumptionCheck, AssumptionReport, A1_BALANCE, A1_NONNEGATIVITY,
    A2_SECOND_MOMENT, A3_CONVERGENCE, MIN_AUDIT_SAMPLES,
};
pub use engine::{step, StepRecord, UrnEngine};
pub use model::{AdditionModel, CustomAddition};
pub use rule::{draw_probabilities, DrawingRule, RuleKind};
pub use state::UrnState;
pub use trajectory::{
    run_trajectory, run_trajectory_observed, Checkpoint, RecordingPolicy, Trajectory,
};
