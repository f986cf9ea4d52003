use rand::Rng;

use crate::error::{Result, UrnError};
use crate::linalg::{eigenvalues, max_dist, tangent_basis, Eigenvalue, Matrix, Vector};
use crate::meanfield::barycenter::jacobian_phi_at_barycenter;
use crate::meanfield::{
    mean_field, EquilibriumPoint, EquilibriumReport, MeanFieldModel, Stability,
};

const FD_STEP: f64 = 1e-6;
const CERTIFY_TOL: f64 = 1e-10;
const DEDUP_TOL: f64 = 1e-8;
const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug)]
pub struct GeneralOptions {
    /// Damping `τ` of `y ← (1−τ) y + τ φ_H(y)`.
    pub damping: f64,
    pub max_iter: usize,
    pub newton_iter: usize,
}

impl Default for GeneralOptions {
    fn default() -> Self {
        GeneralOptions {
            damping: 0.5,
            max_iter: 20_000,
            newton_iter: 100,
        }
    }
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn uniform_simplex<R: Rng>(d: usize, rng: &mut R) -> Vec<f64> {
    let e: Vec<f64> = (0..d).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Face barycentres `ẽ_I` for `|I| ≤ 2`, then the full barycentre.
fn structured_starts(d: usize) -> Vec<Vec<f64>> {
    let mut out = vec![vec![1.0 / d as f64; d]];
    for i in 0..d {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        out.push(e);
        for j in i + 1..d {
            let mut e = vec![0.0; d];
            e[i] = 0.5;
            e[j] = 0.5;
            out.push(e);
        }
    }
    out
}

fn project(y: &mut [f64]) {
    y.iter_mut().for_each(|v| *v = v.max(0.0));
    let s: f64 = y.iter().sum();
    y.iter_mut().for_each(|v| *v /= s);
}

fn damped_fixed_point(
    model: &MeanFieldModel,
    start: &[f64],
    opts: &GeneralOptions,
) -> Option<Vec<f64>> {
    let tau = opts.damping;
    let mut y = start.to_vec();
    for _ in 0..opts.max_iter {
        let phi = model.phi(&y).ok()?;
        let next: Vec<f64> = y
            .iter()
            .zip(&phi)
            .map(|(a, b)| (1.0 - tau) * a + tau * b)
            .collect();
        let moved = max_dist(&next, &y);
        y = next;
        if moved < 1e-15 {
            break;
        }
    }
    project(&mut y);
    Some(y)
}

/// Newton on the tangent hyperplane with backtracking, kept inside the simplex.
fn newton(model: &MeanFieldModel, start: &[f64], opts: &GeneralOptions) -> Option<Vec<f64>> {
    let d = model.dim();
    let q = tangent_basis(d);
    let mut y = start.to_vec();
    let mut hy = mean_field(model, &y).ok()?;
    for _ in 0..opts.newton_iter {
        let res = sup_norm(&hy);
        if res < 1e-14 {
            break;
        }
        let j = central_jacobian(model, &y, &q)?;
        let rhs = -(q.transpose() * Vector::from_column_slice(&hy));
        let step = j.lu().solve(&rhs)?;
        let dir = &q * step;
        // largest feasible fraction of the step
        let mut t: f64 = 1.0;
        for i in 0..d {
            if dir[i] < 0.0 {
                t = t.min(0.999 * y[i] / -dir[i]);
            }
        }
        if !(t > 0.0) {
            return None;
        }
        let mut accepted = false;
        for _ in 0..40 {
            let cand: Vec<f64> = (0..d).map(|i| y[i] + t * dir[i]).collect();
            if let Ok(hc) = mean_field(model, &cand) {
                if sup_norm(&hc) < res {
                    y = cand;
                    hy = hc;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    project(&mut y);
    Some(y)
}

/// Jacobian of `h` on the tangent basis `q` by central differences; `None`
/// when a stencil point leaves the domain of `f`.
fn central_jacobian(model: &MeanFieldModel, y: &[f64], q: &Matrix) -> Option<Matrix> {
    let d = model.dim();
    let min = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let e = FD_STEP.min(min / 2.0).max(1e-300);
    let mut cols = Matrix::zeros(d, d - 1);
    for k in 0..d - 1 {
        let plus: Vec<f64> = (0..d).map(|i| y[i] + e * q[(i, k)]).collect();
        let minus: Vec<f64> = (0..d).map(|i| y[i] - e * q[(i, k)]).collect();
        let hp = mean_field(model, &plus).ok()?;
        let hm = mean_field(model, &minus).ok()?;
        for i in 0..d {
            cols[(i, k)] = (hp[i] - hm[i]) / (2.0 * e);
        }
    }
    Some(q.transpose() * cols)
}

/// Tangent Jacobian of `h` at `y` and whether `y` is on the boundary.
///
/// Interior points use central differences on an orthonormal basis of `1^⊥`.
/// At the barycentre of a bi-stochastic model the exact form
/// `I − λ₁ H|_{1^⊥}` is used. At boundary points, directions inside the
/// supporting face use central differences and the escape directions
/// `e_j − ẽ_S` use one-sided differences.
pub fn tangent_jacobian(model: &MeanFieldModel, y: &[f64]) -> Result<(Matrix, bool)> {
    let d = model.dim();
    let q = tangent_basis(d);
    let bary = vec![1.0 / d as f64; d];
    if model.is_bistochastic() && max_dist(y, &bary) < 1e-12 {
        let jac = jacobian_phi_at_barycenter(&model.f, d)?;
        let hq = q.transpose() * &model.h * &q;
        return Ok((Matrix::identity(d - 1, d - 1) - hq * jac.lambda1, false));
    }
    let support: Vec<usize> = (0..d).filter(|i| y[*i] > BOUNDARY_TOL).collect();
    if support.len() == d {
        return central_jacobian(model, y, &q)
            .map(|j| (j, false))
            .ok_or_else(|| UrnError::DegenerateMeanField(y.to_vec()));
    }
    // basis: in-face tangent directions, then escape directions
    let s = support.len();
    let mut basis = Matrix::zeros(d, d - 1);
    let qs = tangent_basis(s.max(2));
    for k in 0..s.saturating_sub(1) {
        for (a, &i) in support.iter().enumerate() {
            basis[(i, k)] = qs[(a, k)];
        }
    }
    let outside: Vec<usize> = (0..d).filter(|i| y[*i] <= BOUNDARY_TOL).collect();
    for (m, &j) in outside.iter().enumerate() {
        let col = s.saturating_sub(1) + m;
        basis[(j, col)] = 1.0;
        for &i in &support {
            basis[(i, col)] = -1.0 / s as f64;
        }
    }
    let h0 = mean_field(model, y)?;
    let face_min = support.iter().map(|i| y[*i]).fold(f64::INFINITY, f64::min);
    let e = FD_STEP.min(face_min / 4.0);
    let mut images = Matrix::zeros(d, d - 1);
    for k in 0..d - 1 {
        let col = basis.column(k);
        let plus: Vec<f64> = (0..d).map(|i| y[i] + e * col[i]).collect();
        let hp = mean_field(model, &plus)?;
        if k < s.saturating_sub(1) {
            let minus: Vec<f64> = (0..d).map(|i| y[i] - e * col[i]).collect();
            let hm = mean_field(model, &minus)?;
            for i in 0..d {
                images[(i, k)] = (hp[i] - hm[i]) / (2.0 * e);
            }
        } else {
            for i in 0..d {
                images[(i, k)] = (hp[i] - h0[i]) / e;
            }
        }
    }
    // coordinates of the images in the (non-orthogonal) basis
    let coords = basis
        .clone()
        .svd(true, true)
        .solve(&images, 1e-14)
        .map_err(|e| UrnError::Internal(e.to_string()))?;
    Ok((coords, true))
}

fn label(spectrum: &[Eigenvalue]) -> Stability {
    if spectrum.iter().all(|e| e.re > 1e-8) {
        Stability::Attractive
    } else if spectrum.iter().any(|e| e.re < -1e-8) {
        Stability::Repulsive
    } else {
        Stability::Degenerate
    }
}

/// Zeros of `h` on `S_d` from damped fixed-point and tangent Newton
/// iterations started at `starts` random points, the barycentre and every
/// `ẽ_I` with `|I| ≤ 2`.
pub fn equilibria_general<R: Rng>(
    model: &MeanFieldModel,
    starts: usize,
    rng: &mut R,
    opts: &GeneralOptions,
) -> Result<EquilibriumReport> {
    let d = model.dim();
    let mut candidates = structured_starts(d);
    candidates.extend((0..starts).map(|_| uniform_simplex(d, rng)));
    let mut found: Vec<Vec<f64>> = Vec::new();
    let mut discarded = 0;
    for start in &candidates {
        let mut any = false;
        let limits = [
            damped_fixed_point(model, start, opts),
            newton(model, start, opts),
        ];
        for y in limits.into_iter().flatten() {
            let Ok(hy) = mean_field(model, &y) else {
                continue;
            };
            if sup_norm(&hy) < CERTIFY_TOL {
                any = true;
                if !found.iter().any(|p| max_dist(p, &y) < DEDUP_TOL) {
                    found.push(y);
                }
            }
        }
        if !any {
            discarded += 1;
        }
    }
    found.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.partial_cmp(y).unwrap())
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let identity_h = model.is_identity_h();
    let mut points = Vec::with_capacity(found.len());
    for y in found {
        let residual = sup_norm(&mean_field(model, &y)?);
        let (jac, boundary) = tangent_jacobian(model, &y)?;
        let spectrum = eigenvalues(&jac);
        let stability = if boundary && !identity_h {
            Stability::Unclassified
        } else {
            label(&spectrum)
        };
        points.push(EquilibriumPoint {
            y,
            stability,
            h1_deriv: None,
            h1_second_deriv: None,
            attracts_from: None,
            jacobian_spectrum: Some(spectrum),
            residual,
            merged: false,
        });
    }
    Ok(EquilibriumReport {
        d,
        points,
        discarded_starts: discarded,
    })
}
