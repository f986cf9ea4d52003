//! Deterministic side: the mean field `h(y) = y − H f̃(y)/Tr f̃(y)`, its
//! zeros on the simplex and their stability.

mod barycenter;
mod flow;
mod general;
mod scan;
mod two_dim;

use serde::{Deserialize, Serialize};

use crate::error::{Result, UrnError};
use crate::linalg::{max_column_sum_error, Eigenvalue, Matrix};
use crate::shape::ShapeFunction;

pub use barycenter::{
    barycenter_stability, jacobian_phi_at_barycenter, BarycenterJacobian, BarycenterStability,
};
pub use flow::{ode_flow, FlowTrajectory};
pub use general::{equilibria_general, tangent_jacobian, GeneralOptions};
pub use scan::{scan_alpha, AlphaGrid, ScanRow, ScanTable};
pub use two_dim::{
    equilibria_2d, h1, h1_deriv, h1_second_deriv, h1_second_deriv_power, interval_star,
    raw_root_count, TANGENCY_TOL,
};

/// `(f, H)` pair defining the mean field on the simplex `S_d`.
#[derive(Clone, Debug)]
pub struct MeanFieldModel {
    pub f: ShapeFunction,
    pub h: Matrix,
}

impl MeanFieldModel {
    pub fn new(f: ShapeFunction, h: Matrix) -> Result<Self> {
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
        Ok(MeanFieldModel { f, h })
    }

    /// `H = [[p1, 1−p2], [1−p1, p2]]`.
    pub fn two_dim(f: ShapeFunction, p1: f64, p2: f64) -> Result<Self> {
        check_p(p1, p2)?;
        Self::new(
            f,
            Matrix::from_row_slice(2, 2, &[p1, 1.0 - p2, 1.0 - p1, p2]),
        )
    }

    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn is_identity_h(&self) -> bool {
        self.h == Matrix::identity(self.dim(), self.dim())
    }

    pub fn is_bistochastic(&self) -> bool {
        let d = self.dim();
        (0..d).all(|i| (self.h.row(i).sum() - 1.0).abs() <= 1e-12)
    }

    /// `f̃(y) / Tr f̃(y)`.
    pub fn drawing_law(&self, y: &[f64]) -> Result<Vec<f64>> {
        let w: Vec<f64> = y.iter().map(|v| self.f.eval(*v)).collect();
        let total: f64 = w.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(UrnError::DegenerateMeanField(y.to_vec()));
        }
        Ok(w.into_iter().map(|v| v / total).collect())
    }

    /// `φ_H(y) = H f̃(y) / Tr f̃(y)`.
    pub fn phi(&self, y: &[f64]) -> Result<Vec<f64>> {
        let q = self.drawing_law(y)?;
        let d = self.dim();
        Ok((0..d)
            .map(|i| (0..d).map(|j| self.h[(i, j)] * q[j]).sum())
            .collect())
    }
}

pub(crate) fn check_p(p1: f64, p2: f64) -> Result<()> {
    if !(p1 > 0.0 && p1 < 1.0) || !(p2 > 0.0 && p2 < 1.0) {
        return Err(UrnError::invalid(
            "p",
            format!("need 0 < p1, p2 < 1, got ({p1}, {p2})"),
        ));
    }
    Ok(())
}

/// `h(y) = y − φ_H(y)`.
pub fn mean_field(model: &MeanFieldModel, y: &[f64]) -> Result<Vec<f64>> {
    if y.len() != model.dim() {
        return Err(UrnError::invalid("y", "dimension differs from H"));
    }
    let phi = model.phi(y)?;
    Ok(y.iter().zip(phi).map(|(a, b)| a - b).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Attractive,
    Repulsive,
    Degenerate,
    /// Boundary point of a general-`d` model with `H ≠ I`.
    Unclassified,
}

impl Stability {
    pub fn as_str(self) -> &'static str {
        match self {
            Stability::Attractive => "attractive",
            Stability::Repulsive => "repulsive",
            Stability::Degenerate => "degenerate",
            Stability::Unclassified => "unclassified",
        }
    }
}

/// Side from which a tangent (degenerate) root attracts the flow.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttractsFrom {
    Above,
    Below,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumPoint {
    pub y: Vec<f64>,
    pub stability: Stability,
    /// `(h¹)'(y*)`, two-colour case only.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub h1_deriv: Option<f64>,
    /// `(h¹)''(y*)`, reported for degenerate two-colour roots.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub h1_second_deriv: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub attracts_from: Option<AttractsFrom>,
    /// Eigenvalues of the tangent Jacobian of `h`.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub jacobian_spectrum: Option<Vec<Eigenvalue>>,
    /// `‖h(y*)‖_∞`.
    pub residual: f64,
    /// True when two nearly tangent roots were reported as one.
    #[serde(default)]
    pub merged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub d: usize,
    pub points: Vec<EquilibriumPoint>,
    /// Starts that converged nowhere (general solver only).
    #[serde(default)]
    pub discarded_starts: usize,
}

impl EquilibriumReport {
    pub fn count(&self) -> usize {
        self.points.len()
    }

    pub fn first_coordinates(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.y[0]).collect()
    }

    pub fn with_stability(&self, s: Stability) -> impl Iterator<Item = &EquilibriumPoint> {
        self.points.iter().filter(move |p| p.stability == s)
    }
}
