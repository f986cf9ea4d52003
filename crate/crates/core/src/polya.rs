//! The `H = I_d` case: Dirichlet limits, trap exclusion and the bandit
//! martingale.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UrnError};
use crate::montecarlo::collect_runs;
use crate::rng::stream_rng;
use crate::shape::ShapeFunction;
use crate::stats::{beta_cdf, ks_test, KsResult};
use crate::urn::{AdditionModel, DrawingRule, Trajectory, UrnEngine, UrnState};

/// `E[X^k] = ∏_{i<k} (a+i)/(a+b+i)` for `X ~ Beta(a, b)`.
pub fn beta_moment(k: u32, a: f64, b: f64) -> Result<f64> {
    if k == 0 {
        return Err(UrnError::invalid("k", "moment order must be at least 1"));
    }
    if !(a > 0.0 && b > 0.0) {
        return Err(UrnError::invalid("a,b", "Beta parameters must be positive"));
    }
    Ok((0..k)
        .map(|i| (a + i as f64) / (a + b + i as f64))
        .product())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub colour: usize,
    pub k: u32,
    pub empirical: f64,
    pub expected: f64,
    pub standard_error: f64,
    /// `(empirical − expected) / standard_error`.
    pub z: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirichletReport {
    pub runs: usize,
    pub horizon: u64,
    pub y0: Vec<f64>,
    pub moments: Vec<MomentRow>,
    /// KS test of `Ỹ¹` against Beta(`Y_0¹`, `Y_0²`), two colours only.
    pub ks: Option<KsResult>,
    pub max_abs_z: f64,
}

/// Simulates `runs` Pólya urns to `horizon` and compares the marginals of
/// `Ỹ_n` with the Dirichlet(`Y_0`) limit.
pub fn dirichlet_limit_check(
    f: &ShapeFunction,
    model: &AdditionModel,
    y0: &[f64],
    runs: usize,
    horizon: u64,
    master_seed: u64,
) -> Result<DirichletReport> {
    if !f.is_identity() || !matches!(model, AdditionModel::Identity { .. }) {
        return Err(UrnError::Scope(
            "the Dirichlet limit holds for the identity rule with the identity model only".into(),
        ));
    }
    if y0.iter().any(|v| !(*v > 0.0)) {
        return Err(UrnError::invalid("y0", "all entries must be positive"));
    }
    if runs < 2 || horizon == 0 {
        return Err(UrnError::invalid(
            "runs",
            "need at least two runs and a positive horizon",
        ));
    }
    let d = y0.len();
    let state = UrnState::new(y0.to_vec())?;
    let rule = DrawingRule::frequency(f.clone());
    let finals: Vec<Result<Vec<f64>>> = (0..runs)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(master_seed, k as u64);
            let mut e = UrnEngine::new(state.clone(), rule.clone(), model.fresh())?;
            for _ in 0..horizon {
                e.advance(&mut rng)?;
            }
            Ok(e.state().normalized())
        })
        .collect();
    let finals = collect_runs(finals, runs)?;
    let total: f64 = y0.iter().sum();
    let mut moments = Vec::new();
    for c in 0..d {
        let (a, b) = (y0[c], total - y0[c]);
        for k in 1..=4u32 {
            let xs: Vec<f64> = finals.iter().map(|y| y[c].powi(k as i32)).collect();
            let m = crate::stats::mean(&xs);
            let se = (crate::stats::variance(&xs) / runs as f64).sqrt();
            let expected = beta_moment(k, a, b)?;
            moments.push(MomentRow {
                colour: c + 1,
                k,
                empirical: m,
                expected,
                standard_error: se,
                z: (m - expected) / se,
            });
        }
    }
    let ks = (d == 2).then(|| {
        let xs: Vec<f64> = finals.iter().map(|y| y[0]).collect();
        ks_test(&xs, |x| beta_cdf(x, y0[0], y0[1]))
    });
    Ok(DirichletReport {
        runs,
        horizon,
        y0: y0.to_vec(),
        max_abs_z: moments.iter().map(|m| m.z.abs()).fold(0.0, f64::max),
        moments,
        ks,
    })
}

#[derive(Clone, Debug)]
pub struct TrapQuery {
    /// Zero-based colour indices of `I`.
    pub subset: Vec<usize>,
    pub d: usize,
    pub f: ShapeFunction,
}

impl TrapQuery {
    pub fn new(mut subset: Vec<usize>, d: usize, f: ShapeFunction) -> Result<Self> {
        subset.sort_unstable();
        subset.dedup();
        if subset.is_empty() || subset.len() >= d || subset.iter().any(|i| *i >= d) {
            return Err(UrnError::invalid(
                "I",
                "must be a nonempty proper subset of the colours",
            ));
        }
        Ok(TrapQuery { subset, d, f })
    }

    /// `ẽ_I`.
    pub fn face_barycenter(&self) -> Vec<f64> {
        let k = self.subset.len() as f64;
        (0..self.d)
            .map(|i| {
                if self.subset.contains(&i) {
                    1.0 / k
                } else {
                    0.0
                }
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrapVerdict {
    Excluded,
    CriticalExcluded,
    /// The exclusion criteria are silent; this is not a convergence claim.
    NotExcluded,
}

/// Whether `ẽ_I` is ruled out as a limit of the Pólya urn with rule `f`.
pub fn trap_exclusion(q: &TrapQuery) -> Result<TrapVerdict> {
    let missing = |what| UrnError::MissingShapeData {
        shape: q.f.spec_string(),
        what,
    };
    let k = q.subset.len() as f64;
    let d0 =
        q.f.right_deriv_0()
            .ok_or_else(|| missing("a right derivative at 0"))?;
    if d0 > k * q.f.eval(1.0 / k) {
        return Ok(TrapVerdict::Excluded);
    }
    if q.d == 2 && (d0 - 1.0).abs() <= 1e-12 {
        let l1 =
            q.f.left_deriv_1()
                .ok_or_else(|| missing("a left derivative at 1"))?;
        let s0 =
            q.f.right_second_deriv_0()
                .ok_or_else(|| missing("a right second derivative at 0"))?;
        if l1 + s0 / 2.0 > 1.0 {
            return Ok(TrapVerdict::CriticalExcluded);
        }
    }
    Ok(TrapVerdict::NotExcluded)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BanditMartingale {
    /// `L̃_n`, `n = 0..=horizon`.
    pub ln: Vec<f64>,
    /// `h̃(Ỹ_n)`, `n = 0..horizon`.
    pub h_tilde: Vec<f64>,
    /// `κ_d / Y¹_n`, a non-rigorous proxy for the shape of the bound on
    /// `P(L̃_∞ = 0 | F_n)`.
    pub bound_proxy: Vec<f64>,
    pub kappa_d: f64,
}

/// `h̃(y) = 1 − f(y¹) / (y¹ Tr f̃(y))`.
pub fn h_tilde(f: &ShapeFunction, y: &[f64]) -> f64 {
    let total: f64 = y.iter().map(|v| f.eval(*v)).sum();
    1.0 - f.eval(y[0]) / (y[0] * total)
}

/// Rebuilds `L̃_n = Ỹ¹_n / ∏_{k≤n} (1 − h̃(Ỹ_{k−1})/(k + Tr Y_0))` along a
/// trajectory recorded at every step.
pub fn bandit_martingale_diagnostic(
    traj: &Trajectory,
    f: &ShapeFunction,
) -> Result<BanditMartingale> {
    if traj
        .checkpoints
        .iter()
        .enumerate()
        .any(|(k, c)| c.n != k as u64 + 1)
    {
        return Err(UrnError::invalid(
            "trajectory",
            "must be recorded at every step",
        ));
    }
    let d = traj.dim();
    let tr = traj.final_state.tr_y0;
    let kappa_d = (d as f64 - 1.0) / f.eval(1.0 / d as f64).powi(2);
    let path: Vec<&[f64]> = std::iter::once(traj.initial.as_slice())
        .chain(traj.checkpoints.iter().map(|c| c.y.as_slice()))
        .collect();
    if path.iter().any(|y| !(y[0] > 0.0)) {
        return Err(UrnError::ModelContract(
            "first colour vanished under the identity model, the trajectory is corrupted".into(),
        ));
    }
    let mut ln = Vec::with_capacity(path.len());
    let mut hs = Vec::with_capacity(path.len());
    let mut bound = Vec::with_capacity(path.len());
    let mut prod = 1.0;
    ln.push(path[0][0]);
    bound.push(kappa_d / (path[0][0] * tr));
    for (k, y) in path.iter().enumerate().skip(1) {
        let h = h_tilde(f, path[k - 1]);
        hs.push(h);
        prod *= 1.0 - h / (k as f64 + tr);
        ln.push(y[0] / prod);
        bound.push(kappa_d / (y[0] * (k as f64 + tr)));
    }
    Ok(BanditMartingale {
        ln,
        h_tilde: hs,
        bound_proxy: bound,
        kappa_d,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MartingaleBucket {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub mean_increment: f64,
    pub standard_error: f64,
    pub z: f64,
}

/// Mean of `L̃_{n+1} − L̃_n` conditional on `L̃_n` falling in quantile
/// buckets, pooled over all steps and runs.
pub fn martingale_bucket_test(paths: &[BanditMartingale], buckets: usize) -> Vec<MartingaleBucket> {
    let mut pairs: Vec<(f64, f64)> = paths
        .iter()
        .flat_map(|p| p.ln.windows(2).map(|w| (w[0], w[1] - w[0])))
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let per = pairs.len().div_ceil(buckets.max(1));
    pairs
        .chunks(per.max(1))
        .map(|chunk| {
            let inc: Vec<f64> = chunk.iter().map(|p| p.1).collect();
            let m = crate::stats::mean(&inc);
            let se = if inc.len() > 1 {
                (crate::stats::variance(&inc) / inc.len() as f64).sqrt()
            } else {
                f64::NAN
            };
            MartingaleBucket {
                lo: chunk[0].0,
                hi: chunk[chunk.len() - 1].0,
                count: chunk.len(),
                mean_increment: m,
                standard_error: se,
                z: if se > 0.0 { m / se } else { 0.0 },
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::urn::{run_trajectory, RecordingPolicy};

    #[test]
    fn moments_by_hand() {
        assert_eq!(beta_moment(1, 1.0, 1.0).unwrap(), 0.5);
        assert!((beta_moment(2, 1.0, 1.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((beta_moment(2, 2.0, 3.0).unwrap() - 0.2).abs() < 1e-15);
        assert!(beta_moment(0, 1.0, 1.0).is_err());
    }

    #[test]
    fn trap_verdicts() {
        let q = |f: ShapeFunction, i: Vec<usize>, d| {
            trap_exclusion(&TrapQuery::new(i, d, f).unwrap()).unwrap()
        };
        assert_eq!(q(ShapeFunction::sqrt(), vec![0], 2), TrapVerdict::Excluded);
        assert_eq!(
            q(ShapeFunction::power(2.0).unwrap(), vec![0], 2),
            TrapVerdict::NotExcluded
        );
        assert_eq!(
            q(ShapeFunction::identity(), vec![0], 2),
            TrapVerdict::NotExcluded
        );
        for i in [vec![0], vec![1], vec![0, 2], vec![1, 2]] {
            assert_eq!(
                q(ShapeFunction::power(0.7).unwrap(), i, 3),
                TrapVerdict::Excluded
            );
        }
        assert!(TrapQuery::new(vec![0, 1], 2, ShapeFunction::identity()).is_err());
    }

    #[test]
    fn critical_branch() {
        // f(y) = y + y²(1 − y)·c keeps f'(0) = 1 and f''(0) = 2c
        let x: Vec<f64> = (0..=200).map(|k| k as f64 / 200.0).collect();
        let c = 0.5;
        let fv: Vec<f64> = x.iter().map(|y| y + c * y * y * (1.0 - y)).collect();
        let df: Vec<f64> = x
            .iter()
            .map(|y| 1.0 + c * (2.0 * y - 3.0 * y * y))
            .collect();
        let mut t = crate::shape::Tabulated::new(x, fv, df).unwrap();
        t.right_second_deriv_0 = Some(2.0 * c);
        let f = ShapeFunction::tabulated(t).unwrap();
        let v = trap_exclusion(&TrapQuery::new(vec![0], 2, f).unwrap()).unwrap();
        // f'_l(1) = 1 − c, f''_r(0)/2 = c: sum 1 is not > 1
        assert_eq!(v, TrapVerdict::NotExcluded);
    }

    #[test]
    fn identity_martingale_is_the_composition() {
        let s = UrnState::new(vec![1.0, 2.0]).unwrap();
        let f = ShapeFunction::identity();
        let t = run_trajectory(
            &s,
            &DrawingRule::frequency(f.clone()),
            &AdditionModel::identity(2).unwrap(),
            200,
            &mut stream_rng(4, 0),
            &RecordingPolicy::Every(1),
        )
        .unwrap();
        let m = bandit_martingale_diagnostic(&t, &f).unwrap();
        assert!(m.h_tilde.iter().all(|h| h.abs() < 1e-15));
        assert!((m.ln[200] - t.final_y()[0]).abs() < 1e-15);
        assert_eq!(m.kappa_d, 1.0 / 0.25);
    }

    #[test]
    fn sparse_trajectory_rejected() {
        let s = UrnState::new(vec![1.0, 1.0]).unwrap();
        let f = ShapeFunction::identity();
        let t = run_trajectory(
            &s,
            &DrawingRule::frequency(f.clone()),
            &AdditionModel::identity(2).unwrap(),
            50,
            &mut stream_rng(4, 0),
            &RecordingPolicy::Every(5),
        )
        .unwrap();
        assert!(bandit_martingale_diagnostic(&t, &f).is_err());
    }
}
