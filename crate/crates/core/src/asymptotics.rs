//! Rate regimes at an attractive equilibrium: the second eigenvalue `λ`, the
//! limit noise covariance `Γ`, the tangent covariance `Σ` and the
//! normalisation `v_n`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, UrnError};
use crate::linalg::{
    eigenvalues, lyapunov_residual, min_symmetric_eigenvalue, restrict, serde_rows,
    solve_continuous_lyapunov, tangent_basis, Matrix,
};
use crate::meanfield::MeanFieldModel;
use crate::shape::ShapeFunction;
use crate::urn::AdditionModel;

pub const DEFAULT_ETA: f64 = 0.05;
const REGIME_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecondEigenvalue {
    pub lambda: f64,
    /// `Sp(Dh(y*)|_{S_2}) = {1, 1 − λ}`.
    pub spectrum: [f64; 2],
}

/// `λ = [f'(y)(p1 − y) + f'(1−y)(y − 1 + p2)] / [f(y) + f(1−y)]` at `y = y*¹`.
pub fn second_eigenvalue(f: &ShapeFunction, p1: f64, p2: f64, y_star1: f64) -> SecondEigenvalue {
    let y = y_star1;
    let lambda =
        (f.deriv(y) * (p1 - y) + f.deriv(1.0 - y) * (y - 1.0 + p2)) / (f.eval(y) + f.eval(1.0 - y));
    SecondEigenvalue {
        lambda,
        spectrum: [1.0, 1.0 - lambda],
    }
}

/// Limits `C^j` of `E[D^{·j} (D^{·j})ᵗ | F_{n−1}]`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseModel {
    pub cj: Vec<Matrix>,
}

impl NoiseModel {
    pub fn new(cj: Vec<Matrix>) -> Result<Self> {
        let d = cj.len();
        for (j, c) in cj.iter().enumerate() {
            if c.shape() != (d, d) {
                return Err(UrnError::invalid(
                    "C",
                    format!("C^{} must be {d}x{d}", j + 1),
                ));
            }
            if (c - c.transpose()).amax() > 1e-10 {
                return Err(UrnError::invalid(
                    "C",
                    format!("C^{} is not symmetric", j + 1),
                ));
            }
            if min_symmetric_eigenvalue(c) < -1e-10 {
                return Err(UrnError::invalid(
                    "C",
                    format!("C^{} is not positive semidefinite", j + 1),
                ));
            }
        }
        Ok(NoiseModel { cj })
    }

    pub fn from_model(model: &AdditionModel) -> Result<Self> {
        Self::new(model.limit_second_moments())
    }

    pub fn dim(&self) -> usize {
        self.cj.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaResult {
    #[serde(with = "serde_rows")]
    pub gamma: Matrix,
    pub min_eigenvalue: f64,
    /// False when `Γ` fails to be symmetric PSD, which means the noise model
    /// does not fit the equilibrium.
    pub consistent: bool,
}

/// `Γ = Σ_j φ_j(y*) C^j − y* y*ᵗ` with `φ = f̃/Tr f̃`.
pub fn limit_gamma(f: &ShapeFunction, y_star: &[f64], noise: &NoiseModel) -> Result<GammaResult> {
    let d = y_star.len();
    if noise.dim() != d {
        return Err(UrnError::invalid("noise", "dimension differs from y*"));
    }
    let w: Vec<f64> = y_star.iter().map(|v| f.eval(*v)).collect();
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(UrnError::DegenerateMeanField(y_star.to_vec()));
    }
    let mut gamma = Matrix::zeros(d, d);
    for (c, wj) in noise.cj.iter().zip(&w) {
        gamma += c * (wj / total);
    }
    let y = Matrix::from_column_slice(d, 1, y_star);
    gamma -= &y * y.transpose();
    let min_eigenvalue = min_symmetric_eigenvalue(&gamma);
    let consistent = (&gamma - gamma.transpose()).amax() <= 1e-10 && min_eigenvalue >= -1e-10;
    Ok(GammaResult {
        gamma,
        min_eigenvalue,
        consistent,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaResult {
    /// `Σ` on an orthonormal basis of `1^⊥`.
    #[serde(with = "serde_rows")]
    pub sigma_tangent: Matrix,
    #[serde(with = "serde_rows")]
    pub gamma_tangent: Matrix,
    pub residual: f64,
}

/// Solves `(J − I/2) Σ + Σ (J − I/2)ᵗ = Γ_t` for a tangent Jacobian `J`.
pub fn asymptotic_sigma_tangent(
    jacobian_tangent: &Matrix,
    gamma_tangent: &Matrix,
) -> Result<SigmaResult> {
    let k = jacobian_tangent.nrows();
    let worst = eigenvalues(jacobian_tangent)
        .iter()
        .map(|e| e.re)
        .fold(f64::INFINITY, f64::min);
    if !(worst > 0.5 + REGIME_TOL) {
        return Err(UrnError::RegimeMismatch(format!(
            "tangent Jacobian has an eigenvalue with real part {worst} <= 1/2; use the log_clt or as_rate predictions"
        )));
    }
    let a = jacobian_tangent - Matrix::identity(k, k) * 0.5;
    let sigma = solve_continuous_lyapunov(&a, gamma_tangent)?;
    let residual = lyapunov_residual(&a, &sigma, gamma_tangent);
    Ok(SigmaResult {
        sigma_tangent: sigma,
        gamma_tangent: gamma_tangent.clone(),
        residual,
    })
}

/// As [`asymptotic_sigma_tangent`] with `Dh(y*)` and `Γ` given as `d×d`
/// matrices, restricted to `1^⊥`.
pub fn asymptotic_sigma(dh: &Matrix, gamma: &Matrix) -> Result<SigmaResult> {
    let q = tangent_basis(dh.nrows());
    asymptotic_sigma_tangent(&restrict(dh, &q), &restrict(gamma, &q))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Clt,
    LogClt,
    AsRate,
    Outside,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Clt => "clt",
            Regime::LogClt => "log_clt",
            Regime::AsRate => "as_rate",
            Regime::Outside => "outside",
        }
    }
}

/// `v_n` of the regime.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Normalization {
    One,
    LogN,
    Power { exponent: f64 },
    None,
}

impl Normalization {
    pub fn at(&self, n: f64) -> f64 {
        match self {
            Normalization::One => 1.0,
            Normalization::LogN => n.ln(),
            Normalization::Power { exponent } => n.powf(*exponent),
            Normalization::None => f64::NAN,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeInfo {
    pub regime: Regime,
    pub v_n: Normalization,
    /// Exponent `λ` of the almost-sure rate `n^λ`, in the `as_rate` regime.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rate_exponent: Option<f64>,
}

pub fn classify_regime(lambda: f64, eta: f64) -> RegimeInfo {
    if !lambda.is_finite() || lambda >= 1.0 {
        return RegimeInfo {
            regime: Regime::Outside,
            v_n: Normalization::None,
            rate_exponent: None,
        };
    }
    if (lambda - 0.5).abs() <= REGIME_TOL {
        RegimeInfo {
            regime: Regime::LogClt,
            v_n: Normalization::LogN,
            rate_exponent: None,
        }
    } else if lambda < 0.5 {
        RegimeInfo {
            regime: Regime::Clt,
            v_n: Normalization::One,
            rate_exponent: None,
        }
    } else {
        RegimeInfo {
            regime: Regime::AsRate,
            v_n: Normalization::Power {
                exponent: 1.0 - 2.0 * lambda + eta,
            },
            rate_exponent: Some(lambda),
        }
    }
}

/// `n · Var(x_n)` for the linearised tangent recursion
/// `x_{k+1} = x_k (1 − a/(k+1+T)) + ε_{k+1}/(k+1+T)`, `Var ε = γ`, `x_0 = 0`.
///
/// This is what a Monte Carlo variance at a finite horizon should approach
/// when the CLT limit is reached slowly (`a` close to 1/2).
pub fn finite_horizon_variance(a: f64, gamma_t: f64, horizon: u64, tr_y0: f64) -> f64 {
    let mut v = 0.0;
    for k in 0..horizon {
        let s = k as f64 + 1.0 + tr_y0;
        let c = 1.0 - a / s;
        v = v * c * c + gamma_t / (s * s);
    }
    (horizon as f64 + tr_y0) * v
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CltPrediction {
    pub y_star: Vec<f64>,
    pub lambda: f64,
    pub spectrum: [f64; 2],
    pub regime: Regime,
    pub v_n: Normalization,
    #[serde(with = "serde_rows")]
    pub gamma: Matrix,
    pub gamma_consistent: bool,
    /// Variance `γ_t` of the noise along the tangent direction `(1, −1)/√2`.
    pub gamma_tangent: f64,
    /// `Σ` on the tangent direction; absent outside the CLT regime. In the
    /// `log_clt` regime this is the `√(n / log n)` limit `γ_t`.
    pub sigma_tangent: Option<f64>,
    /// Limit variance of `√n (Ỹ¹_n − y*¹)`, i.e. `σ²_t / 2`.
    pub sigma2_coordinate: Option<f64>,
    pub lyapunov_residual: Option<f64>,
    /// Linearised prediction of `n Var(Ỹ¹_n)` at `horizon`, when supplied.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub finite_horizon: Option<FiniteHorizon>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteHorizon {
    pub horizon: u64,
    pub sigma2_coordinate: f64,
}

/// Full prediction for a two-colour model at the root `y*¹`.
pub fn clt_prediction_2d(
    f: &ShapeFunction,
    p1: f64,
    p2: f64,
    noise: &NoiseModel,
    y_star1: f64,
    eta: f64,
    horizon: Option<(u64, f64)>,
) -> Result<CltPrediction> {
    let y_star = vec![y_star1, 1.0 - y_star1];
    let ev = second_eigenvalue(f, p1, p2, y_star1);
    let info = classify_regime(ev.lambda, eta);
    let g = limit_gamma(f, &y_star, noise)?;
    let q = tangent_basis(2);
    let gamma_t = restrict(&g.gamma, &q)[(0, 0)];
    let (sigma_t, residual) = match info.regime {
        Regime::Clt => {
            let j = Matrix::from_element(1, 1, 1.0 - ev.lambda);
            let s = asymptotic_sigma_tangent(&j, &Matrix::from_element(1, 1, gamma_t))?;
            (Some(s.sigma_tangent[(0, 0)]), Some(s.residual))
        }
        Regime::LogClt => (Some(gamma_t), None),
        _ => (None, None),
    };
    let finite_horizon = match (info.regime, horizon) {
        (Regime::Clt, Some((n, tr_y0))) => Some(FiniteHorizon {
            horizon: n,
            sigma2_coordinate: finite_horizon_variance(1.0 - ev.lambda, gamma_t, n, tr_y0) / 2.0,
        }),
        _ => None,
    };
    Ok(CltPrediction {
        y_star,
        lambda: ev.lambda,
        spectrum: ev.spectrum,
        regime: info.regime,
        v_n: info.v_n,
        gamma: g.gamma,
        gamma_consistent: g.consistent,
        gamma_tangent: gamma_t,
        sigma_tangent: sigma_t,
        sigma2_coordinate: sigma_t.map(|s| s / 2.0),
        lyapunov_residual: residual,
        finite_horizon,
    })
}

#[derive(Clone, Debug)]
pub struct RegvarSurrogate {
    pub alpha: f64,
    pub model: MeanFieldModel,
    /// The CLT for the raw-mass rule needs `α > 1/2`.
    pub clt_admissible: bool,
}

/// Power-law surrogate `y^α` of a regularly varying shape.
pub fn regvar_effective_model(f: &ShapeFunction, h: Matrix) -> Result<RegvarSurrogate> {
    let alpha = f.regvar_index().ok_or_else(|| UrnError::MissingShapeData {
        shape: f.spec_string(),
        what: "a regular-variation index",
    })?;
    if !(alpha > 0.0) {
        return Err(UrnError::ModelContract(format!(
            "regular-variation index must be > 0, got {alpha}"
        )));
    }
    Ok(RegvarSurrogate {
        alpha,
        model: MeanFieldModel::new(ShapeFunction::power(alpha)?, h)?,
        clt_admissible: alpha > 0.5,
    })
}

/// `log(f(t y)/f(y)) / log t`, a numerical check of a declared index.
pub fn empirical_regvar_index(f: &ShapeFunction, y: f64, t: f64) -> f64 {
    (f.eval(t * y) / f.eval(y)).ln() / t.ln()
}
