//! Adaptive asset allocation: Bernoulli success model, the success-rate
//! estimator `Π_n`, the reallocation matrices `D_{n+1}` and their compensator.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UrnError};
use crate::linalg::{operator_norm, Matrix};
use crate::montecarlo::collect_runs;
use crate::rng::stream_rng;
use crate::shape::ShapeFunction;
use crate::urn::{AdditionModel, DrawingRule, RecordingPolicy, UrnEngine, UrnState};

/// Success probabilities `p^i ∈ (0, 1)` of the `d` assets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerformanceModel {
    pub p: Vec<f64>,
}

impl PerformanceModel {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.len() < 2 {
            return Err(UrnError::invalid("p", "need at least two assets"));
        }
        if p.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
            return Err(UrnError::invalid(
                "p",
                "success probabilities must lie in (0, 1)",
            ));
        }
        Ok(PerformanceModel { p })
    }

    pub fn dim(&self) -> usize {
        self.p.len()
    }
}

/// Success and selection counters per asset, started at one success out of
/// one selection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialState {
    pub successes: Vec<f64>,
    pub selections: Vec<f64>,
    pub pi: Vec<f64>,
}

impl TrialState {
    pub fn new(d: usize) -> Self {
        TrialState {
            successes: vec![1.0; d],
            selections: vec![1.0; d],
            pi: vec![1.0; d],
        }
    }

    pub fn from_pi(pi: Vec<f64>) -> Result<Self> {
        if pi.iter().any(|v| !(*v > 0.0 && *v <= 1.0)) {
            return Err(UrnError::invalid("pi", "estimates must lie in (0, 1]"));
        }
        Ok(TrialState {
            successes: pi.clone(),
            selections: vec![1.0; pi.len()],
            pi,
        })
    }

    pub fn dim(&self) -> usize {
        self.pi.len()
    }

    /// Records the outcome of the selected asset.
    pub fn record(&mut self, asset: usize, success: bool) {
        self.selections[asset] += 1.0;
        if success {
            self.successes[asset] += 1.0;
        }
        self.pi[asset] = self.successes[asset] / self.selections[asset];
    }

    fn others_sum(&self, j: usize) -> f64 {
        self.pi
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != j)
            .map(|(_, v)| v)
            .sum()
    }
}

/// Reallocation matrix for one stage: column `j` puts `T^j` on the diagonal
/// and spreads `1 − T^j` over the other assets in proportion to `Π`.
pub fn sample_addition_matrix(trial: &TrialState, t: &[f64]) -> Matrix {
    let d = trial.dim();
    let mut m = Matrix::zeros(d, d);
    fill_addition_matrix(&trial.pi, t, &mut m);
    m
}

fn fill_addition_matrix(pi: &[f64], t: &[f64], out: &mut Matrix) {
    let d = pi.len();
    let total: f64 = pi.iter().sum();
    for j in 0..d {
        let rest = 1.0 - t[j];
        let others = total - pi[j];
        for i in 0..d {
            out[(i, j)] = if i == j { t[j] } else { pi[i] * rest / others };
        }
    }
}

/// Conditional compensator `H_{n+1} = E[D_{n+1} | F_n]`.
pub fn generating_matrix(trial: &TrialState, p: &[f64]) -> Matrix {
    let d = trial.dim();
    Matrix::from_fn(d, d, |i, j| {
        if i == j {
            p[j]
        } else {
            trial.pi[i] * (1.0 - p[j]) / trial.others_sum(j)
        }
    })
}

/// Limit generating matrix, entries `p^i (1 − p^j) / Σ_{k≠j} p^k` off the diagonal.
pub fn limit_h(p: &[f64]) -> Matrix {
    let total: f64 = p.iter().sum();
    let d = p.len();
    Matrix::from_fn(d, d, |i, j| {
        if i == j {
            p[j]
        } else {
            p[i] * (1.0 - p[j]) / (total - p[j])
        }
    })
}

/// Closed-form limits `C^j = lim E[D^{·j} (D^{·j})ᵗ | F_{n−1}]`.
pub fn limit_second_moments(p: &[f64]) -> Vec<Matrix> {
    let trial = TrialState::from_pi(p.to_vec()).expect("p in (0,1)");
    (0..p.len())
        .map(|j| column_second_moment(&trial, p, j))
        .collect()
}

/// `E[D^{·j} (D^{·j})ᵗ | F_n]` for Bernoulli successes.
pub fn column_second_moment(trial: &TrialState, p: &[f64], j: usize) -> Matrix {
    let d = trial.dim();
    let others = trial.others_sum(j);
    let w = |i: usize| trial.pi[i] / others;
    Matrix::from_fn(d, d, |i, l| match (i == j, l == j) {
        // E[T^2] = p, E[T(1 - T)] = 0, E[(1 - T)^2] = 1 - p
        (true, true) => p[j],
        (true, false) | (false, true) => 0.0,
        (false, false) => w(i) * w(l) * (1.0 - p[j]),
    })
}

/// Bernoulli reallocation model with its per-trajectory trial state.
#[derive(Clone, Debug)]
pub struct FinanceModel {
    pub performance: PerformanceModel,
    pub trial: TrialState,
    last_t: Vec<f64>,
}

impl FinanceModel {
    pub fn new(performance: PerformanceModel) -> Self {
        let d = performance.dim();
        FinanceModel {
            performance,
            trial: TrialState::new(d),
            last_t: vec![0.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.performance.dim()
    }

    /// Draws all `T^i` (every asset is evaluated at every stage).
    #[inline]
    fn draw_trials<R: Rng>(&mut self, rng: &mut R) {
        for (t, p) in self.last_t.iter_mut().zip(&self.performance.p) {
            *t = if rng.gen::<f64>() < *p { 1.0 } else { 0.0 };
        }
    }

    pub(crate) fn sample_into<R: Rng>(&mut self, rng: &mut R, out: &mut Matrix) {
        self.draw_trials(rng);
        fill_addition_matrix(&self.trial.pi, &self.last_t, out);
    }

    #[inline]
    pub(crate) fn add_column<R: Rng>(&mut self, j: usize, rng: &mut R, y: &mut [f64]) {
        self.draw_trials(rng);
        let t = self.last_t[j];
        if t == 1.0 {
            y[j] += 1.0;
            return;
        }
        let pi = &self.trial.pi;
        let others: f64 = pi.iter().sum::<f64>() - pi[j];
        let rest = 1.0 - t;
        for (i, yi) in y.iter_mut().enumerate() {
            if i != j {
                *yi += pi[i] * rest / others;
            }
        }
    }

    pub(crate) fn after_draw(&mut self, j: usize) {
        let success = self.last_t[j] == 1.0;
        self.trial.record(j, success);
    }

    pub fn compensator(&self) -> Matrix {
        generating_matrix(&self.trial, &self.performance.p)
    }

    pub fn limit(&self) -> Matrix {
        limit_h(&self.performance.p)
    }

    pub fn column_second_moment(&self, j: usize) -> Matrix {
        column_second_moment(&self.trial, &self.performance.p, j)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AllocationPoint {
    pub n: u64,
    pub y: Vec<f64>,
    pub freq: Vec<f64>,
    pub pi: Vec<f64>,
    /// Operator norm `|||H_n − H|||`.
    pub hdist: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AllocationTrajectory {
    pub d: usize,
    pub points: Vec<AllocationPoint>,
    /// Partial sums of `|||H_n − H|||²` at the checkpoints.
    pub hdist_sq_partial_sums: Vec<f64>,
    pub final_pi: Vec<f64>,
    pub final_y: Vec<f64>,
}

impl AllocationTrajectory {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let d = self.d;
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["n".to_string()];
        header.extend((1..=d).map(|i| format!("y{i}")));
        header.extend((1..=d).map(|i| format!("ny{i}")));
        header.extend((1..=d).map(|i| format!("pi{i}")));
        header.push("hdist".into());
        wtr.write_record(&header)?;
        for p in &self.points {
            let mut row = vec![p.n.to_string()];
            row.extend(p.y.iter().map(|v| v.to_string()));
            row.extend(p.freq.iter().map(|v| v.to_string()));
            row.extend(p.pi.iter().map(|v| v.to_string()));
            row.push(p.hdist.to_string());
            wtr.write_record(&row)?;
        }
        wtr.flush().map_err(|e| UrnError::io("<csv>", e))?;
        Ok(())
    }
}

/// Full coupled allocation simulation with the frequency drawing rule.
pub fn run_allocation<R: Rng>(
    performance: &PerformanceModel,
    f: &ShapeFunction,
    y0: &[f64],
    horizon: u64,
    rng: &mut R,
    policy: &RecordingPolicy,
) -> Result<AllocationTrajectory> {
    if y0.len() != performance.dim() {
        return Err(UrnError::invalid("y0", "dimension differs from p"));
    }
    if horizon == 0 {
        return Err(UrnError::invalid("horizon", "must be at least 1"));
    }
    let state = UrnState::new(y0.to_vec())?;
    let model = AdditionModel::Finance(FinanceModel::new(performance.clone()));
    let mut urn = UrnEngine::new(state, DrawingRule::frequency(f.clone()), model)?;
    let limit = limit_h(&performance.p);
    let checkpoints = policy.checkpoints(horizon);
    let mut points = Vec::with_capacity(checkpoints.len());
    let mut partial = Vec::with_capacity(checkpoints.len());
    let mut sq_sum = 0.0;
    let mut next = checkpoints.iter().peekable();
    let track_every_step = performance.dim() > 2;
    for n in 1..=horizon {
        urn.advance(rng)?;
        let at_checkpoint = next.peek().is_some_and(|&&c| c == n);
        if track_every_step || at_checkpoint {
            let h_n = match urn.model() {
                AdditionModel::Finance(m) => m.compensator(),
                _ => unreachable!(),
            };
            let dist = operator_norm(&(h_n - &limit));
            sq_sum += dist * dist;
            if at_checkpoint {
                next.next();
                let pi = match urn.model() {
                    AdditionModel::Finance(m) => m.trial.pi.clone(),
                    _ => unreachable!(),
                };
                points.push(AllocationPoint {
                    n,
                    y: urn.state().normalized(),
                    freq: urn.drawing_frequencies(),
                    pi,
                    hdist: dist,
                });
                partial.push(sq_sum);
            }
        }
    }
    let final_pi = match urn.model() {
        AdditionModel::Finance(m) => m.trial.pi.clone(),
        _ => unreachable!(),
    };
    Ok(AllocationTrajectory {
        d: performance.dim(),
        points,
        hdist_sq_partial_sums: partial,
        final_pi,
        final_y: urn.state().normalized(),
    })
}

/// `runs` independent allocations on the `(master_seed, run)` streams, in
/// run order.
pub fn run_allocation_batch(
    performance: &PerformanceModel,
    f: &ShapeFunction,
    y0: &[f64],
    horizon: u64,
    runs: usize,
    master_seed: u64,
    policy: &RecordingPolicy,
) -> Result<Vec<AllocationTrajectory>> {
    if runs == 0 {
        return Err(UrnError::invalid("runs", "must be at least 1"));
    }
    policy.validate()?;
    let out: Vec<Result<AllocationTrajectory>> = (0..runs)
        .into_par_iter()
        .map(|k| {
            run_allocation(
                performance,
                f,
                y0,
                horizon,
                &mut stream_rng(master_seed, k as u64),
                policy,
            )
        })
        .collect();
    collect_runs(out, runs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_column_sum_error;
    use crate::rng::stream_rng;

    #[test]
    fn all_successes_give_identity() {
        let trial = TrialState::from_pi(vec![0.3, 0.6, 0.9]).unwrap();
        let m = sample_addition_matrix(&trial, &[1.0, 1.0, 1.0]);
        assert_eq!(m, Matrix::identity(3, 3));
    }

    #[test]
    fn two_assets_all_failures() {
        let trial = TrialState::from_pi(vec![0.5, 0.5]).unwrap();
        let m = sample_addition_matrix(&trial, &[0.0, 0.0]);
        assert_eq!(m, Matrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
    }

    #[test]
    fn limit_matrix_two_assets() {
        let h = limit_h(&[0.7, 0.75]);
        let expected = Matrix::from_row_slice(2, 2, &[0.7, 0.25, 0.3, 0.75]);
        assert!((h - expected).amax() < 1e-15);
    }

    #[test]
    fn compensator_equals_limit_when_estimates_are_exact() {
        let p = vec![0.2, 0.5, 0.85];
        let trial = TrialState::from_pi(p.clone()).unwrap();
        assert!((generating_matrix(&trial, &p) - limit_h(&p)).amax() < 1e-15);
    }

    #[test]
    fn limit_is_symmetric_under_invariant_measure() {
        let p = [0.2, 0.5, 0.85, 0.6];
        let h = limit_h(&p);
        // invariant measure of the co-stochastic H: right Perron vector
        let ev = h.clone().eigen_right_perron();
        let dm = Matrix::from_diagonal(&ev.map(|v| v.sqrt()));
        let dinv = Matrix::from_diagonal(&ev.map(|v| 1.0 / v.sqrt()));
        let s = &dinv * &h * &dm;
        assert!((&s - s.transpose()).amax() < 1e-10);
    }

    trait Perron {
        fn eigen_right_perron(self) -> crate::linalg::Vector;
    }

    impl Perron for Matrix {
        fn eigen_right_perron(self) -> crate::linalg::Vector {
            let mut v = crate::linalg::Vector::from_element(self.nrows(), 1.0);
            for _ in 0..10_000 {
                v = &self * &v;
                let s = v.sum();
                v /= s;
            }
            v
        }
    }

    #[test]
    fn sampled_matrices_are_balanced() {
        let perf = PerformanceModel::new(vec![0.3, 0.55, 0.8]).unwrap();
        let mut m = FinanceModel::new(perf);
        let mut rng = stream_rng(3, 0);
        let mut d = Matrix::zeros(3, 3);
        for k in 0..2000 {
            m.sample_into(&mut rng, &mut d);
            assert!(max_column_sum_error(&d) < 1e-12);
            assert!(d.iter().all(|v| *v >= 0.0));
            m.after_draw(k % 3);
        }
        assert!(max_column_sum_error(&m.compensator()) < 1e-12);
    }

    #[test]
    fn second_moments_match_sampling() {
        let p = vec![0.35, 0.6, 0.8];
        let perf = PerformanceModel::new(p.clone()).unwrap();
        let mut m = FinanceModel::new(perf);
        m.trial = TrialState::from_pi(vec![0.4, 0.5, 0.7]).unwrap();
        let mut rng = stream_rng(11, 0);
        let mut d = Matrix::zeros(3, 3);
        let n = 200_000;
        let mut acc = vec![Matrix::zeros(3, 3); 3];
        for _ in 0..n {
            m.sample_into(&mut rng, &mut d);
            for (j, a) in acc.iter_mut().enumerate() {
                let c = d.column(j).into_owned();
                *a += &c * c.transpose();
            }
        }
        for (j, a) in acc.iter().enumerate() {
            let emp = a / n as f64;
            assert!((emp - m.column_second_moment(j)).amax() < 5e-3);
        }
    }
}
