use serde::{Deserialize, Serialize};

use crate::asymptotics::{CltPrediction, Regime};
use crate::error::{Result, UrnError};
use crate::linalg::max_dist;
use crate::montecarlo::BatchResult;
use crate::shape::ShapeFunction;
use crate::stats::{dagostino_k2, mean, median, ols_slope, quantile, variance, NormalityResult};
use crate::urn::Trajectory;

/// Label for runs that settle near none of the targets.
pub const NO_ENDPOINT: &str = "none";

/// Final point within `eps` of `target` and no exit after `horizon / 2`.
fn settled_near(t: &Trajectory, target: &[f64], eps: f64, horizon: u64) -> bool {
    t.checkpoints
        .iter()
        .filter(|c| 2 * c.n >= horizon)
        .all(|c| max_dist(&c.y, target) <= eps)
        && max_dist(&t.final_y(), target) <= eps
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CltReport {
    pub n: u64,
    pub retained: usize,
    pub excluded: usize,
    /// `"sqrt_n"` or `"sqrt_n_over_log_n"`.
    pub scaling: String,
    /// Sample variance of `a_n (Ỹ_n − y*)·(1, −1)/√2`.
    pub empirical_variance_tangent: f64,
    pub predicted_sigma2_tangent: f64,
    pub ratio: f64,
    /// Same comparison for the first coordinate, `a_n (Ỹ¹_n − y*¹)`.
    pub empirical_variance_coordinate: f64,
    pub predicted_sigma2_coordinate: f64,
    /// Empirical variance over the linearised finite-horizon prediction.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub finite_horizon_ratio: Option<f64>,
    pub mean_fluctuation: f64,
    pub normality: Option<NormalityResult>,
    pub normality_rejected_1pct: bool,
}

/// Fluctuations at the horizon, projected on the tangent direction.
///
/// With `retain = Some(r)` only runs ending within `r` of `y*` (max-norm)
/// enter, so multi-attractor batches are conditioned on the selected root.
pub fn clt_check(
    batch: &BatchResult,
    prediction: &CltPrediction,
    retain: Option<f64>,
) -> Result<CltReport> {
    if prediction.y_star.len() != 2 {
        return Err(UrnError::Scope(
            "the fluctuation check is two-colour only".into(),
        ));
    }
    let (scale, scaling) = match prediction.regime {
        Regime::Clt => {
            let n = batch.horizon as f64;
            (n.sqrt(), "sqrt_n")
        }
        Regime::LogClt => {
            let n = batch.horizon as f64;
            ((n / n.ln()).sqrt(), "sqrt_n_over_log_n")
        }
        other => {
            return Err(UrnError::RegimeMismatch(format!(
                "fluctuation check needs the clt or log_clt regime, prediction is {}",
                other.as_str()
            )))
        }
    };
    let sigma_t = prediction
        .sigma_tangent
        .ok_or_else(|| UrnError::RegimeMismatch("prediction carries no variance".into()))?;
    let y_star = &prediction.y_star;
    let mut coord = Vec::with_capacity(batch.runs.len());
    for t in &batch.runs {
        let y = t.final_y();
        if retain.is_some_and(|r| max_dist(&y, y_star) > r) {
            continue;
        }
        coord.push(scale * (y[0] - y_star[0]));
    }
    let retained = coord.len();
    if retained < 2 {
        return Err(UrnError::invalid("batch", "fewer than two retained runs"));
    }
    // (y − y*)·(1, −1)/√2 = √2 (y¹ − y*¹) on the simplex
    let tangent: Vec<f64> = coord.iter().map(|c| c * std::f64::consts::SQRT_2).collect();
    let var_t = variance(&tangent);
    let var_c = variance(&coord);
    let normality = dagostino_k2(&tangent);
    Ok(CltReport {
        n: batch.horizon,
        retained,
        excluded: batch.runs.len() - retained,
        scaling: scaling.into(),
        empirical_variance_tangent: var_t,
        predicted_sigma2_tangent: sigma_t,
        ratio: var_t / sigma_t,
        empirical_variance_coordinate: var_c,
        predicted_sigma2_coordinate: sigma_t / 2.0,
        finite_horizon_ratio: prediction
            .finite_horizon
            .map(|f| var_c / f.sigma2_coordinate),
        mean_fluctuation: mean(&coord),
        normality_rejected_1pct: normality.is_some_and(|r| r.p_value < 0.01),
        normality,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub lambda: f64,
    pub retained: usize,
    pub excluded: usize,
    pub median_slope: f64,
    pub slope_q05: f64,
    pub slope_q95: f64,
    pub slopes: Vec<f64>,
    /// `n^λ ‖Ỹ_n − y*‖` at the horizon, one per retained run.
    pub upsilon: Vec<f64>,
    pub upsilon_positive_fraction: f64,
    pub upsilon_max: f64,
    /// Median of `n^λ ‖Ỹ_n − y*‖` at the horizon over its median at the
    /// start of the fitting window. Near 1 when the scaled error settles.
    pub upsilon_growth: f64,
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Per-run slope of `log ‖Ỹ_n − y*‖` against `log n` over the last two
/// decades of checkpoints. Runs ending farther than `retain` from `y*` are
/// excluded and counted.
pub fn rate_regression(
    batch: &BatchResult,
    y_star: &[f64],
    regime: Regime,
    lambda: f64,
    retain: f64,
) -> Result<RateReport> {
    if regime != Regime::AsRate {
        return Err(UrnError::RegimeMismatch(format!(
            "rate regression needs the as_rate regime, got {}",
            regime.as_str()
        )));
    }
    let start = (batch.horizon / 100).max(1);
    let mut slopes = Vec::new();
    let mut upsilon = Vec::new();
    let mut early = Vec::new();
    let mut excluded = 0;
    for t in &batch.runs {
        if max_dist(&t.final_y(), y_star) > retain {
            excluded += 1;
            continue;
        }
        let window: Vec<_> = t.checkpoints.iter().filter(|c| c.n >= start).collect();
        if window.len() < 3 {
            return Err(UrnError::invalid(
                "checkpoints",
                "need at least 3 checkpoints in the last two decades",
            ));
        }
        let pts: Vec<(f64, f64)> = window
            .iter()
            .map(|c| ((c.n as f64).ln(), euclid(&c.y, y_star)))
            .filter(|(_, e)| *e > 0.0)
            .map(|(x, e)| (x, e.ln()))
            .collect();
        if pts.len() < 3 {
            excluded += 1;
            continue;
        }
        let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        slopes.push(ols_slope(&xs, &ys));
        let first = window[0];
        early.push((first.n as f64).powf(lambda) * euclid(&first.y, y_star));
        upsilon.push((batch.horizon as f64).powf(lambda) * euclid(&t.final_y(), y_star));
    }
    if slopes.is_empty() {
        return Err(UrnError::invalid("batch", "no run was retained"));
    }
    Ok(RateReport {
        lambda,
        retained: slopes.len(),
        excluded,
        median_slope: median(&slopes),
        slope_q05: quantile(&slopes, 0.05),
        slope_q95: quantile(&slopes, 0.95),
        upsilon_positive_fraction: upsilon.iter().filter(|u| **u > 0.0).count() as f64
            / upsilon.len() as f64,
        upsilon_max: upsilon.iter().cloned().fold(0.0, f64::max),
        upsilon_growth: median(&upsilon) / median(&early),
        slopes,
        upsilon,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrapReport {
    pub runs: usize,
    pub hits: usize,
    pub fraction: f64,
    pub epsilon: f64,
}

/// Fraction of runs that settle within `epsilon` (max-norm) of `point`.
pub fn trap_hit_fraction(batch: &BatchResult, point: &[f64], epsilon: f64) -> TrapReport {
    let hits = batch
        .runs
        .iter()
        .filter(|t| settled_near(t, point, epsilon, batch.horizon))
        .count();
    TrapReport {
        runs: batch.runs.len(),
        hits,
        fraction: hits as f64 / batch.runs.len() as f64,
        epsilon,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndpointLabel {
    pub run: usize,
    pub label: String,
    pub final_y: Vec<f64>,
}

/// Labels each run with the target it settled near, or [`NO_ENDPOINT`].
pub fn classify_endpoints(
    batch: &BatchResult,
    targets: &[(String, Vec<f64>)],
    epsilon: f64,
) -> Vec<EndpointLabel> {
    batch
        .runs
        .iter()
        .enumerate()
        .map(|(run, t)| {
            let hit: Vec<&String> = targets
                .iter()
                .filter(|(_, p)| settled_near(t, p, epsilon, batch.horizon))
                .map(|(l, _)| l)
                .collect();
            let label = match hit.as_slice() {
                [one] => (*one).clone(),
                [] => NO_ENDPOINT.into(),
                _ => "ambiguous".into(),
            };
            EndpointLabel {
                run,
                label,
                final_y: t.final_y(),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyReport {
    pub matched: usize,
    pub unmatched: usize,
    /// Max-norm gap between `Ñ_n` and `f̃(y*)/Tr f̃(y*)` per matched run.
    pub deviations: Vec<f64>,
    pub max_deviation: f64,
    pub fraction_within: f64,
    pub tolerance: f64,
}

/// Compares final drawing frequencies with the drawing law at the attractor
/// each run settled near (within `retain`).
pub fn frequency_limit_check(
    batch: &BatchResult,
    attractors: &[Vec<f64>],
    f: &ShapeFunction,
    retain: f64,
    tolerance: f64,
) -> FrequencyReport {
    let laws: Vec<Vec<f64>> = attractors
        .iter()
        .map(|a| {
            let w: Vec<f64> = a.iter().map(|v| f.eval(*v)).collect();
            let s: f64 = w.iter().sum();
            w.into_iter().map(|v| v / s).collect()
        })
        .collect();
    let mut deviations = Vec::new();
    let mut unmatched = 0;
    for t in &batch.runs {
        let y = t.final_y();
        let nearest = attractors
            .iter()
            .enumerate()
            .map(|(k, a)| (k, max_dist(&y, a)))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        match nearest {
            Some((k, dist)) if dist <= retain => {
                deviations.push(max_dist(t.final_freq(), &laws[k]))
            }
            _ => unmatched += 1,
        }
    }
    let within = deviations.iter().filter(|d| **d < tolerance).count();
    FrequencyReport {
        matched: deviations.len(),
        unmatched,
        max_deviation: deviations.iter().cloned().fold(0.0, f64::max),
        fraction_within: if deviations.is_empty() {
            0.0
        } else {
            within as f64 / deviations.len() as f64
        },
        deviations,
        tolerance,
    }
}
