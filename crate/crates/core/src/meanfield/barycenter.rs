use serde::{Deserialize, Serialize};

use crate::error::{Result, UrnError};
use crate::linalg::{eigenvalues, restrict, tangent_basis, Matrix};
use crate::shape::ShapeFunction;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarycenterJacobian {
    /// Diagonal entry of `Dφ` at `1/d · 1`.
    pub a: f64,
    /// Off-diagonal entry.
    pub b: f64,
    /// Eigenvalue on `1^⊥`, `a − b = f'(1/d) / (d f(1/d))`.
    pub lambda1: f64,
}

/// Jacobian of `y ↦ f̃(y)/Tr f̃(y)` at the barycentre of `S_d`.
pub fn jacobian_phi_at_barycenter(f: &ShapeFunction, d: usize) -> Result<BarycenterJacobian> {
    if d < 2 {
        return Err(UrnError::invalid("d", "need d >= 2"));
    }
    let x = 1.0 / d as f64;
    let (fx, dfx) = (f.eval(x), f.deriv(x));
    if !(fx > 0.0) {
        return Err(UrnError::DegenerateMeanField(vec![x; d]));
    }
    let df = d as f64;
    let a = dfx * (df - 1.0) / (df * df * fx);
    let b = -a / (df - 1.0);
    Ok(BarycenterJacobian {
        a,
        b,
        lambda1: a - b,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BarycenterStability {
    Attractive,
    Unstable,
    Boundary,
}

/// Compares `Re μ_max` of `H|_{1^⊥}` with `1/λ₁`.
pub fn barycenter_stability(f: &ShapeFunction, h: &Matrix) -> Result<BarycenterStability> {
    let d = h.nrows();
    if h.ncols() != d || d < 2 {
        return Err(UrnError::invalid("H", "must be square with d >= 2"));
    }
    let rows = (0..d)
        .map(|i| (h.row(i).sum() - 1.0).abs())
        .fold(0.0, f64::max);
    let cols = (0..d)
        .map(|j| (h.column(j).sum() - 1.0).abs())
        .fold(0.0, f64::max);
    if rows > 1e-12 || cols > 1e-12 || h.iter().any(|v| *v < 0.0) {
        return Err(UrnError::ModelContract(
            "H must be nonnegative and bi-stochastic".into(),
        ));
    }
    let radius = eigenvalues(h)
        .iter()
        .map(|e| e.re.hypot(e.im))
        .fold(0.0, f64::max);
    if radius > 1.0 + 1e-10 {
        return Err(UrnError::ModelContract(format!(
            "spectral radius of H is {radius} > 1"
        )));
    }
    let lambda1 = jacobian_phi_at_barycenter(f, d)?.lambda1;
    let mu_max = eigenvalues(&restrict(h, &tangent_basis(d)))
        .iter()
        .map(|e| e.re)
        .fold(f64::NEG_INFINITY, f64::max);
    // attractive iff 1 − λ₁ Re μ > 0 for every μ
    let margin = 1.0 - lambda1 * mu_max;
    Ok(if margin.abs() <= 1e-10 {
        BarycenterStability::Boundary
    } else if margin > 0.0 {
        BarycenterStability::Attractive
    } else {
        BarycenterStability::Unstable
    })
}
