use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::{max_column_sum_error, operator_norm, Matrix};
use crate::urn::model::AdditionModel;
use crate::urn::rule::{draw_probabilities, DrawingRule};
use crate::urn::state::UrnState;

/// Below this many samples every check is reported inconclusive.
pub const MIN_AUDIT_SAMPLES: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    /// `None` when inconclusive.
    pub pass: Option<bool>,
    pub statistic: f64,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AssumptionReport {
    pub checks: BTreeMap<String, AssumptionCheck>,
}

impl AssumptionReport {
    pub fn get(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.get(name)
    }

    pub fn all_pass(&self) -> bool {
        self.checks.values().all(|c| c.pass == Some(true))
    }
}

pub const A1_NONNEGATIVITY: &str = "A1_nonnegativity";
pub const A1_BALANCE: &str = "A1_balance";
pub const A2_SECOND_MOMENT: &str = "A2_second_moment";
pub const A3_CONVERGENCE: &str = "A3_convergence";

/// Audits the addition model along one urn path started at the barycentre.
///
/// Sampled matrices are checked directly, so a contract violation shows up as
/// a failed check rather than an error.
pub fn audit_assumptions<R: Rng>(
    model: &AdditionModel,
    rule: &DrawingRule,
    samples: usize,
    rng: &mut R,
) -> Result<AssumptionReport> {
    let d = model.dim();
    let mut report = AssumptionReport::default();
    if samples < MIN_AUDIT_SAMPLES {
        let detail = format!("{samples} samples, at least {MIN_AUDIT_SAMPLES} needed");
        for name in [
            A1_NONNEGATIVITY,
            A1_BALANCE,
            A2_SECOND_MOMENT,
            A3_CONVERGENCE,
        ] {
            report.checks.insert(
                name.into(),
                AssumptionCheck {
                    pass: None,
                    statistic: f64::NAN,
                    detail: detail.clone(),
                },
            );
        }
        return Ok(report);
    }

    let mut m = model.fresh();
    let limit = m.limit();
    let mut state = UrnState::new(vec![1.0; d])?;
    let mut dm = Matrix::zeros(d, d);
    let mut min_entry = f64::INFINITY;
    let mut worst_h_balance: f64 = 0.0;
    let mut d_col_sum_mean = vec![0.0; d];
    let mut col_sq = Vec::with_capacity(samples);
    let mut hdist = Vec::with_capacity(samples);

    for _ in 0..samples {
        let h = m.compensator();
        worst_h_balance = worst_h_balance.max(max_column_sum_error(&h));
        hdist.push(operator_norm(&(h - &limit)));
        let probs = draw_probabilities(&state, rule)?;
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let j = probs.iter().position(|p| {
            acc += p;
            u < acc
        });
        let j = j.unwrap_or(d - 1);
        m.sample_into(rng, &mut dm)?;
        min_entry = min_entry.min(dm.min());
        for (k, s) in d_col_sum_mean.iter_mut().enumerate() {
            *s += dm.column(k).sum() / samples as f64;
        }
        col_sq.push(
            (0..d)
                .map(|k| dm.column(k).norm_squared())
                .fold(0.0, f64::max),
        );
        if dm.iter().all(|v| *v >= 0.0 && v.is_finite()) {
            for i in 0..d {
                state.y[i] += dm[(i, j)];
            }
        }
        state.n += 1;
        m.after_draw(j);
    }

    report.checks.insert(
        A1_NONNEGATIVITY.into(),
        AssumptionCheck {
            pass: Some(min_entry >= 0.0),
            statistic: min_entry,
            detail: format!("smallest sampled entry of D over {samples} samples"),
        },
    );

    let balance = if m.compensator_estimated() {
        // estimated compensator: compare sampled column sums with 1
        let err = d_col_sum_mean
            .iter()
            .map(|s| (s - 1.0).abs())
            .fold(0.0, f64::max);
        AssumptionCheck {
            pass: Some(err <= 1e-12 || err <= 4.0 / (samples as f64).sqrt()),
            statistic: err,
            detail: "max |mean column sum of sampled D - 1| (compensator is estimated)".into(),
        }
    } else {
        AssumptionCheck {
            pass: Some(worst_h_balance <= 1e-12),
            statistic: worst_h_balance,
            detail: "max |column sum of H_n - 1| over the audited path".into(),
        }
    };
    report.checks.insert(A1_BALANCE.into(), balance);

    let half = samples / 2;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (early, late) = (mean(&col_sq[..half]), mean(&col_sq[half..]));
    let sup = col_sq.iter().cloned().fold(0.0, f64::max);
    report.checks.insert(
        A2_SECOND_MOMENT.into(),
        AssumptionCheck {
            pass: Some(sup.is_finite() && late <= 2.0 * early + 1e-12),
            statistic: sup,
            detail: format!("sup of squared column norms; mean {early:.4} early vs {late:.4} late"),
        },
    );

    let quarter = (samples / 4).max(1);
    let first = mean(&hdist[..quarter]);
    let last = mean(&hdist[samples - quarter..]);
    report.checks.insert(
        A3_CONVERGENCE.into(),
        AssumptionCheck {
            pass: Some(last <= first + 1e-12),
            statistic: last,
            detail: format!(
                "mean |||H_n - H||| over first quarter {first:.3e}, last quarter {last:.3e}"
            ),
        },
    );
    Ok(report)
}
