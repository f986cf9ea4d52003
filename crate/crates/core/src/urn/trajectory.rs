use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UrnError};
use crate::urn::engine::UrnEngine;
use crate::urn::model::AdditionModel;
use crate::urn::rule::DrawingRule;
use crate::urn::state::UrnState;

/// Which step indices get recorded. The horizon is always recorded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum RecordingPolicy {
    /// `n_k = ⌈first · ratio^k⌉`.
    Geometric {
        first: f64,
        ratio: f64,
    },
    Every(u64),
    At(Vec<u64>),
    FinalOnly,
}

impl Default for RecordingPolicy {
    fn default() -> Self {
        // ten points per decade
        RecordingPolicy::Geometric {
            first: 1.0,
            ratio: 10f64.powf(0.1),
        }
    }
}

impl RecordingPolicy {
    pub fn validate(&self) -> Result<()> {
        match self {
            RecordingPolicy::Geometric { first, ratio } => {
                if !(*first >= 1.0 && first.is_finite()) || !(*ratio > 1.0 && ratio.is_finite()) {
                    return Err(UrnError::invalid(
                        "checkpoints",
                        "geometric policy needs first >= 1 and ratio > 1",
                    ));
                }
            }
            RecordingPolicy::Every(k) if *k == 0 => {
                return Err(UrnError::invalid("checkpoints", "step must be positive"));
            }
            RecordingPolicy::At(v)
                if v.windows(2).any(|w| w[0] >= w[1]) || v.first() == Some(&0) =>
            {
                return Err(UrnError::invalid(
                    "checkpoints",
                    "must be strictly increasing and positive",
                ));
            }
            _ => {}
        }
        Ok(())
    }

    /// Sorted, deduplicated checkpoint indices in `1..=horizon`.
    pub fn checkpoints(&self, horizon: u64) -> Vec<u64> {
        let mut out: Vec<u64> = match self {
            RecordingPolicy::Geometric { first, ratio } => {
                let mut v = Vec::new();
                let mut x = *first;
                while x.ceil() <= horizon as f64 {
                    v.push(x.ceil() as u64);
                    x *= ratio;
                }
                v
            }
            RecordingPolicy::Every(k) => (1..=horizon / k).map(|i| i * k).collect(),
            RecordingPolicy::At(v) => v
                .iter()
                .copied()
                .filter(|n| *n >= 1 && *n <= horizon)
                .collect(),
            RecordingPolicy::FinalOnly => Vec::new(),
        };
        out.push(horizon);
        out.sort_unstable();
        out.dedup();
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub n: u64,
    /// `Ỹ_n`.
    pub y: Vec<f64>,
    /// `Ñ_n = N_n / n`.
    pub freq: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub initial: Vec<f64>,
    pub checkpoints: Vec<Checkpoint>,
    pub final_state: UrnState,
    pub counts: Vec<u64>,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.initial.len()
    }

    pub fn final_y(&self) -> Vec<f64> {
        self.final_state.normalized()
    }

    pub fn final_freq(&self) -> &[f64] {
        &self
            .checkpoints
            .last()
            .expect("horizon is always recorded")
            .freq
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let d = self.dim();
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["n".to_string()];
        header.extend((1..=d).map(|i| format!("y{i}")));
        header.extend((1..=d).map(|i| format!("ny{i}")));
        wtr.write_record(&header)?;
        for c in &self.checkpoints {
            let mut row = vec![c.n.to_string()];
            row.extend(c.y.iter().map(|v| v.to_string()));
            row.extend(c.freq.iter().map(|v| v.to_string()));
            wtr.write_record(&row)?;
        }
        wtr.flush().map_err(|e| UrnError::io("<csv>", e))?;
        Ok(())
    }
}

/// Evolves a fresh copy of `model` from `initial` to `horizon`.
pub fn run_trajectory<R: Rng>(
    initial: &UrnState,
    rule: &DrawingRule,
    model: &AdditionModel,
    horizon: u64,
    rng: &mut R,
    policy: &RecordingPolicy,
) -> Result<Trajectory> {
    run_trajectory_observed(initial, rule, model, horizon, rng, policy, |_| Ok(()))
}

/// As [`run_trajectory`], calling `observe` after every step.
pub fn run_trajectory_observed<R: Rng, F>(
    initial: &UrnState,
    rule: &DrawingRule,
    model: &AdditionModel,
    horizon: u64,
    rng: &mut R,
    policy: &RecordingPolicy,
    mut observe: F,
) -> Result<Trajectory>
where
    F: FnMut(&UrnEngine) -> Result<()>,
{
    if horizon == 0 {
        return Err(UrnError::invalid("horizon", "must be at least 1"));
    }
    policy.validate()?;
    let marks = policy.checkpoints(horizon);
    let mut engine = UrnEngine::new(initial.clone(), rule.clone(), model.fresh())?;
    let mut checkpoints = Vec::with_capacity(marks.len());
    let mut next = 0;
    for n in 1..=horizon {
        engine.advance(rng)?;
        observe(&engine)?;
        if marks[next] == n {
            next += 1;
            checkpoints.push(Checkpoint {
                n,
                y: engine.state().normalized(),
                freq: engine.drawing_frequencies(),
            });
        }
    }
    let (final_state, _, counts) = engine.into_parts();
    final_state.validate()?;
    Ok(Trajectory {
        initial: initial.normalized(),
        checkpoints,
        final_state,
        counts,
    })
}
