//! Reproducible parallel batches and the statistics that check predictions
//! against them.

mod checks;
mod io;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, UrnError};
use crate::rng::stream_rng;
use crate::urn::{
    run_trajectory, AdditionModel, DrawingRule, RecordingPolicy, Trajectory, UrnState,
};

pub use checks::{
    classify_endpoints, clt_check, frequency_limit_check, rate_regression, trap_hit_fraction,
    CltReport, EndpointLabel, FrequencyReport, RateReport, TrapReport, NO_ENDPOINT,
};
pub use io::{atomic_write, git_describe, write_batch_dir, write_endpoints_csv, BatchManifest};

#[derive(Clone, Debug)]
pub struct BatchSpec {
    pub runs: usize,
    pub horizon: u64,
    pub master_seed: u64,
    pub policy: RecordingPolicy,
    pub initial: UrnState,
    pub rule: DrawingRule,
    pub model: AdditionModel,
}

impl BatchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(UrnError::invalid("runs", "must be at least 1"));
        }
        if self.horizon == 0 {
            return Err(UrnError::invalid("horizon", "must be at least 1"));
        }
        if self.model.dim() != self.initial.dim() {
            return Err(UrnError::invalid("model", "dimension differs from y0"));
        }
        self.policy.validate()
    }
}

/// Serializable summary of a batch specification.
#[derive(Clone, Debug, Serialize)]
pub struct BatchSummary {
    pub runs: usize,
    pub horizon: u64,
    pub master_seed: u64,
    pub policy: RecordingPolicy,
    pub y0: Vec<f64>,
    pub rule: String,
    pub f: String,
    pub model: String,
}

impl From<&BatchSpec> for BatchSummary {
    fn from(s: &BatchSpec) -> Self {
        BatchSummary {
            runs: s.runs,
            horizon: s.horizon,
            master_seed: s.master_seed,
            policy: s.policy.clone(),
            y0: s.initial.y.clone(),
            rule: format!("{:?}", s.rule.kind).to_lowercase(),
            f: s.rule.f.spec_string(),
            model: s.model.kind_name().to_string(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BatchResult {
    pub horizon: u64,
    pub master_seed: u64,
    /// Trajectories in run-index order.
    pub runs: Vec<Trajectory>,
}

impl BatchResult {
    pub fn finals(&self) -> Vec<Vec<f64>> {
        self.runs.iter().map(|t| t.final_y()).collect()
    }
}

/// Runs every trajectory on its own `(master_seed, run)` stream. Output does
/// not depend on scheduling or thread count.
pub fn run_batch(spec: &BatchSpec) -> Result<BatchResult> {
    spec.validate()?;
    let results: Vec<Result<Trajectory>> = (0..spec.runs)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(spec.master_seed, k as u64);
            run_trajectory(
                &spec.initial,
                &spec.rule,
                &spec.model,
                spec.horizon,
                &mut rng,
                &spec.policy,
            )
        })
        .collect();
    collect_runs(results, spec.runs).map(|runs| BatchResult {
        horizon: spec.horizon,
        master_seed: spec.master_seed,
        runs,
    })
}

/// Keeps results up to the first failure, reported as a partial batch.
pub(crate) fn collect_runs<T>(results: Vec<Result<T>>, requested: usize) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(results.len());
    for r in results {
        match r {
            Ok(t) => out.push(t),
            Err(e) => {
                return Err(UrnError::PartialBatch {
                    completed: out.len(),
                    requested,
                    source: Box::new(e),
                })
            }
        }
    }
    Ok(out)
}
