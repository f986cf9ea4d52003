use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore};

use crate::error::{Result, UrnError};
use crate::finance::FinanceModel;
use crate::linalg::{max_column_sum_error, Matrix};

/// Sampler for a user-defined addition rule.
///
/// Implementations must be stateless: the same instance is shared by every
/// trajectory of a batch.
pub trait CustomAddition: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn sample(&self, rng: &mut dyn RngCore, out: &mut Matrix) -> Result<()>;
    /// Exact conditional compensator `E[D]`, when known.
    fn compensator(&self) -> Option<Matrix> {
        None
    }
    fn column_second_moment(&self, _j: usize) -> Option<Matrix> {
        None
    }
}

#[derive(Clone, Debug)]
pub enum AdditionModel {
    /// `D = I_d`: one ball of the drawn colour.
    Identity {
        d: usize,
    },
    /// Deterministic co-stochastic matrix.
    Balanced(Matrix),
    Finance(FinanceModel),
    Custom {
        rule: Arc<dyn CustomAddition>,
        compensator: Matrix,
        second_moments: Vec<Matrix>,
        estimated: bool,
    },
}

impl AdditionModel {
    pub fn identity(d: usize) -> Result<Self> {
        if d < 2 {
            return Err(UrnError::invalid("d", "need at least two colours"));
        }
        Ok(AdditionModel::Identity { d })
    }

    pub fn balanced(h: Matrix) -> Result<Self> {
        if h.nrows() != h.ncols() || h.nrows() < 2 {
            return Err(UrnError::invalid("H", "must be square with d >= 2"));
        }
        if h.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(UrnError::invalid(
                "H",
                "entries must be finite and nonnegative",
            ));
        }
        let err = max_column_sum_error(&h);
        if err > 1e-12 {
            return Err(UrnError::invalid(
                "H",
                format!("columns must sum to 1 (error {err:.3e})"),
            ));
        }
        Ok(AdditionModel::Balanced(h))
    }

    /// Two-colour co-stochastic matrix `[[p1, 1−p2], [1−p1, p2]]`.
    pub fn two_colour(p1: f64, p2: f64) -> Result<Self> {
        Self::balanced(Matrix::from_row_slice(2, 2, &[p1, 1.0 - p2, 1.0 - p1, p2]))
    }

    pub fn finance(p: Vec<f64>) -> Result<Self> {
        Ok(AdditionModel::Finance(FinanceModel::new(
            crate::finance::PerformanceModel::new(p)?,
        )))
    }

    /// Wraps a custom sampler. Missing compensator and second moments are
    /// estimated from `samples` draws.
    pub fn custom<R: RngCore>(
        rule: Arc<dyn CustomAddition>,
        samples: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let d = rule.dim();
        if d < 2 {
            return Err(UrnError::invalid("d", "need at least two colours"));
        }
        let exact_h = rule.compensator();
        let exact_c: Option<Vec<Matrix>> = (0..d).map(|j| rule.column_second_moment(j)).collect();
        let estimated = exact_h.is_none() || exact_c.is_none();
        let (compensator, second_moments) = if estimated {
            if samples == 0 {
                return Err(UrnError::invalid(
                    "samples",
                    "needed to estimate the compensator",
                ));
            }
            let mut h = Matrix::zeros(d, d);
            let mut c = vec![Matrix::zeros(d, d); d];
            let mut m = Matrix::zeros(d, d);
            for _ in 0..samples {
                rule.sample(rng, &mut m)?;
                check_nonnegative(&m)?;
                h += &m;
                for (j, cj) in c.iter_mut().enumerate() {
                    let col = m.column(j);
                    *cj += col * col.transpose();
                }
            }
            let s = samples as f64;
            (
                exact_h.unwrap_or(h / s),
                exact_c.unwrap_or_else(|| c.into_iter().map(|x| x / s).collect()),
            )
        } else {
            (exact_h.unwrap(), exact_c.unwrap())
        };
        Ok(AdditionModel::Custom {
            rule,
            compensator,
            second_moments,
            estimated,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            AdditionModel::Identity { d } => *d,
            AdditionModel::Balanced(h) => h.nrows(),
            AdditionModel::Finance(m) => m.dim(),
            AdditionModel::Custom { rule, .. } => rule.dim(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            AdditionModel::Identity { .. } => "identity",
            AdditionModel::Balanced(_) => "deterministic_balanced",
            AdditionModel::Finance(_) => "bernoulli_finance",
            AdditionModel::Custom { .. } => "custom",
        }
    }

    /// Whether every sampled `D` has unit column sums by construction.
    pub fn exactly_balanced(&self) -> bool {
        !matches!(self, AdditionModel::Custom { .. })
    }

    /// Samples a full addition matrix. Does not advance any trial state.
    pub fn sample_into<R: Rng>(&mut self, rng: &mut R, out: &mut Matrix) -> Result<()> {
        match self {
            AdditionModel::Identity { d } => {
                *out = Matrix::identity(*d, *d);
            }
            AdditionModel::Balanced(h) => out.copy_from(h),
            AdditionModel::Finance(m) => m.sample_into(rng, out),
            AdditionModel::Custom { rule, .. } => {
                rule.sample(rng, out)?;
            }
        }
        Ok(())
    }

    /// Samples `D` and adds its column `j` to `y`. `scratch` is only used by
    /// custom models.
    #[inline]
    pub(crate) fn add_drawn_column<R: Rng>(
        &mut self,
        j: usize,
        rng: &mut R,
        y: &mut [f64],
        scratch: &mut Matrix,
    ) -> Result<()> {
        match self {
            AdditionModel::Identity { .. } => y[j] += 1.0,
            AdditionModel::Balanced(h) => {
                for (i, yi) in y.iter_mut().enumerate() {
                    *yi += h[(i, j)];
                }
            }
            AdditionModel::Finance(m) => m.add_column(j, rng, y),
            AdditionModel::Custom { rule, .. } => {
                rule.sample(rng, scratch)?;
                check_nonnegative(scratch)?;
                for (i, yi) in y.iter_mut().enumerate() {
                    *yi += scratch[(i, j)];
                }
            }
        }
        Ok(())
    }

    /// Updates per-trajectory state once colour `j` has been drawn.
    #[inline]
    pub(crate) fn after_draw(&mut self, j: usize) {
        if let AdditionModel::Finance(m) = self {
            m.after_draw(j);
        }
    }

    /// Conditional compensator `H_{n+1} = E[D_{n+1} | F_n]`.
    pub fn compensator(&self) -> Matrix {
        match self {
            AdditionModel::Identity { d } => Matrix::identity(*d, *d),
            AdditionModel::Balanced(h) => h.clone(),
            AdditionModel::Finance(m) => m.compensator(),
            AdditionModel::Custom { compensator, .. } => compensator.clone(),
        }
    }

    /// Limit generating matrix `H`.
    pub fn limit(&self) -> Matrix {
        match self {
            AdditionModel::Finance(m) => m.limit(),
            _ => self.compensator(),
        }
    }

    /// Current `E[D^{·j} (D^{·j})ᵗ | F_n]`.
    pub fn column_second_moment(&self, j: usize) -> Matrix {
        match self {
            AdditionModel::Identity { d } => {
                let mut c = Matrix::zeros(*d, *d);
                c[(j, j)] = 1.0;
                c
            }
            AdditionModel::Balanced(h) => {
                let col = h.column(j);
                col * col.transpose()
            }
            AdditionModel::Finance(m) => m.column_second_moment(j),
            AdditionModel::Custom { second_moments, .. } => second_moments[j].clone(),
        }
    }

    /// Limits `C^j` of the column second moments.
    pub fn limit_second_moments(&self) -> Vec<Matrix> {
        match self {
            AdditionModel::Finance(m) => crate::finance::limit_second_moments(&m.performance.p),
            _ => (0..self.dim())
                .map(|j| self.column_second_moment(j))
                .collect(),
        }
    }

    /// Whether the compensator is a Monte Carlo estimate.
    pub fn compensator_estimated(&self) -> bool {
        matches!(
            self,
            AdditionModel::Custom {
                estimated: true,
                ..
            }
        )
    }

    /// Fresh copy with per-trajectory state reset.
    pub fn fresh(&self) -> Self {
        match self {
            AdditionModel::Finance(m) => {
                AdditionModel::Finance(FinanceModel::new(m.performance.clone()))
            }
            other => other.clone(),
        }
    }
}

fn check_nonnegative(m: &Matrix) -> Result<()> {
    if let Some(v) = m.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(UrnError::ModelContract(format!(
            "sampled addition matrix has entry {v}, entries must be finite and nonnegative"
        )));
    }
    Ok(())
}
