//! Small dense linear algebra on top of nalgebra: tangent-space bases of the
//! simplex, spectra, and the continuous Lyapunov solver.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, UrnError};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Complex eigenvalue in a serialisable form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
}

/// Orthonormal basis of the hyperplane `1^⊥` (Helmert construction), as a
/// `d × (d-1)` matrix. For `d = 2` the single column is `(1, -1)/√2`.
pub fn tangent_basis(d: usize) -> Matrix {
    let mut q = Matrix::zeros(d, d.saturating_sub(1));
    for k in 1..d {
        // column k-1: (1,...,1,-k,0,...)/sqrt(k(k+1))
        let norm = ((k * (k + 1)) as f64).sqrt();
        for i in 0..k {
            q[(i, k - 1)] = 1.0 / norm;
        }
        q[(k, k - 1)] = -(k as f64) / norm;
    }
    q
}

/// `Qᵗ M Q` for an orthonormal basis `Q`.
pub fn restrict(m: &Matrix, q: &Matrix) -> Matrix {
    q.transpose() * m * q
}

pub fn eigenvalues(m: &Matrix) -> Vec<Eigenvalue> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    if m.nrows() == 1 {
        return vec![Eigenvalue {
            re: m[(0, 0)],
            im: 0.0,
        }];
    }
    let mut ev: Vec<Eigenvalue> = m
        .clone()
        .complex_eigenvalues()
        .iter()
        .map(|c| Eigenvalue { re: c.re, im: c.im })
        .collect();
    ev.sort_by(|a, b| {
        a.re.partial_cmp(&b.re)
            .unwrap()
            .then(a.im.partial_cmp(&b.im).unwrap())
    });
    ev
}

pub fn min_symmetric_eigenvalue(m: &Matrix) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Largest singular value.
pub fn operator_norm(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .singular_values()
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

pub fn column_sums(m: &Matrix) -> Vec<f64> {
    (0..m.ncols()).map(|j| m.column(j).sum()).collect()
}

pub fn max_column_sum_error(m: &Matrix) -> f64 {
    column_sums(m)
        .into_iter()
        .map(|s| (s - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Solves `A X + X Aᵗ = Q` by vectorisation, `(I⊗A + A⊗I) vec X = vec Q`.
///
/// Intended for the small dimensions met here (`d − 1 ≤ ~20`).
pub fn solve_continuous_lyapunov(a: &Matrix, q: &Matrix) -> Result<Matrix> {
    let n = a.nrows();
    if a.ncols() != n || q.shape() != (n, n) {
        return Err(UrnError::invalid(
            "lyapunov",
            "A and Q must be square and of equal size",
        ));
    }
    let id = Matrix::identity(n, n);
    let op = id.kronecker(a) + a.kronecker(&id);
    let rhs = DVector::from_column_slice(q.as_slice());
    let sol = op.lu().solve(&rhs).ok_or_else(|| {
        UrnError::invalid(
            "lyapunov",
            "A and -A share an eigenvalue; no unique solution",
        )
    })?;
    let x = Matrix::from_column_slice(n, n, sol.as_slice());
    Ok((&x + x.transpose()) * 0.5)
}

pub fn lyapunov_residual(a: &Matrix, x: &Matrix, q: &Matrix) -> f64 {
    (a * x + x * a.transpose() - q).amax()
}

/// Max-norm distance.
pub fn max_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Serialises a matrix as a list of rows.
pub mod serde_rows {
    use super::Matrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
        m.row_iter().map(|r| r.iter().cloned().collect()).collect()
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Matrix, String> {
        let n = rows.len();
        let c = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != c) {
            return Err("ragged matrix rows".into());
        }
        Ok(Matrix::from_fn(n, c, |i, j| rows[i][j]))
    }

    pub fn serialize<S: Serializer>(m: &Matrix, s: S) -> Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tangent_basis_is_orthonormal_and_orthogonal_to_ones() {
        for d in 2..6 {
            let q = tangent_basis(d);
            let g = q.transpose() * &q;
            assert!((g - Matrix::identity(d - 1, d - 1)).amax() < 1e-14);
            let ones = Vector::from_element(d, 1.0);
            assert!((q.transpose() * ones).amax() < 1e-14);
        }
        let q2 = tangent_basis(2);
        assert!((q2[(0, 0)] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((q2[(1, 0)] + std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn lyapunov_scalar() {
        let a = Matrix::from_element(1, 1, 0.5);
        let q = Matrix::from_element(1, 1, 1.0);
        let x = solve_continuous_lyapunov(&a, &q).unwrap();
        assert!((x[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn eigenvalues_of_rotation() {
        let m = Matrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let ev = eigenvalues(&m);
        assert!(ev
            .iter()
            .all(|e| e.re.abs() < 1e-12 && (e.im.abs() - 1.0).abs() < 1e-12));
    }
}
