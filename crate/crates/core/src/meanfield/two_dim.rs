use crate::error::{Result, UrnError};
use crate::meanfield::{
    check_p, mean_field, AttractsFrom, EquilibriumPoint, EquilibriumReport, MeanFieldModel,
    Stability,
};
use crate::shape::ShapeFunction;

const GRID: usize = 10_000;
const ROOT_TOL: f64 = 1e-12;
const DEGENERACY_TOL: f64 = 1e-8;
/// An extremum of `h¹` closer than this to zero is treated as a tangency.
pub const TANGENCY_TOL: f64 = 1e-4;
/// Only roots this close together are merged at a tangency.
const MERGE_GAP: f64 = 0.02;

/// `h¹(y) = y − (p1 f(y) + (1−p2) f(1−y)) / (f(y) + f(1−y))`.
#[inline]
pub fn h1(f: &ShapeFunction, p1: f64, p2: f64, y: f64) -> f64 {
    let (a, b) = (f.eval(y), f.eval(1.0 - y));
    y - (p1 * a + (1.0 - p2) * b) / (a + b)
}

/// `(h¹)'(y)` at any `y ∈ (0, 1)` by the quotient rule.
pub fn h1_deriv(f: &ShapeFunction, p1: f64, p2: f64, y: f64) -> f64 {
    let (a, b) = (f.eval(y), f.eval(1.0 - y));
    let (da, db) = (f.deriv(y), -f.deriv(1.0 - y));
    let num = p1 * a + (1.0 - p2) * b;
    let dnum = p1 * da + (1.0 - p2) * db;
    let den = a + b;
    1.0 - (dnum * den - num * (da + db)) / (den * den)
}

/// Closed form of `(h¹)''` for `f(y) = y^α`.
pub fn h1_second_deriv_power(alpha: f64, p1: f64, p2: f64, y: f64) -> f64 {
    let z = 1.0 - y;
    let s = y.powf(alpha) + z.powf(alpha);
    let bracket = (alpha - 1.0) * (1.0 - 2.0 * y) * s
        - 2.0 * alpha * y * z * (y.powf(alpha - 1.0) - z.powf(alpha - 1.0));
    (1.0 - p1 - p2) * alpha * y.powf(alpha - 2.0) * z.powf(alpha - 2.0) * bracket / (s * s * s)
}

/// `(h¹)''(y)`: closed form for powers, central differences otherwise.
pub fn h1_second_deriv(f: &ShapeFunction, p1: f64, p2: f64, y: f64) -> f64 {
    match f.power_exponent() {
        Some(alpha) => h1_second_deriv_power(alpha, p1, p2, y),
        None => {
            let e = 1e-5_f64.min(y / 2.0).min((1.0 - y) / 2.0);
            (h1_deriv(f, p1, p2, y + e) - h1_deriv(f, p1, p2, y - e)) / (2.0 * e)
        }
    }
}

/// `closure(I*) = [p1 ∧ (1−p2), p1 ∨ (1−p2)]`.
pub fn interval_star(p1: f64, p2: f64) -> (f64, f64) {
    let q = 1.0 - p2;
    (p1.min(q), p1.max(q))
}

fn bisect<F: Fn(f64) -> f64>(g: F, mut lo: f64, mut hi: f64) -> f64 {
    let mut glo = g(lo);
    while hi - lo > ROOT_TOL {
        let mid = 0.5 * (lo + hi);
        let gm = g(mid);
        if gm == 0.0 {
            return mid;
        }
        if (gm < 0.0) == (glo < 0.0) {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn grid(lo: f64, hi: f64) -> impl Iterator<Item = f64> {
    (0..=GRID).map(move |k| lo + (hi - lo) * k as f64 / GRID as f64)
}

/// Sign-change roots of `h¹` on `closure(I*)`, without tangency merging.
fn raw_roots(f: &ShapeFunction, p1: f64, p2: f64) -> Vec<f64> {
    let (lo, hi) = interval_star(p1, p2);
    if hi - lo < ROOT_TOL {
        return vec![p1];
    }
    let g = |y: f64| h1(f, p1, p2, y);
    let mut roots = Vec::new();
    let mut prev_y = lo;
    let mut prev = g(lo);
    if prev == 0.0 {
        roots.push(lo);
    }
    for y in grid(lo, hi).skip(1) {
        let v = g(y);
        if v == 0.0 {
            roots.push(y);
        } else if prev != 0.0 && (v < 0.0) != (prev < 0.0) {
            roots.push(bisect(g, prev_y, y));
        }
        prev_y = y;
        prev = v;
    }
    roots
}

/// Number of sign changes of `h¹` on `closure(I*)`.
pub fn raw_root_count(f: &ShapeFunction, p1: f64, p2: f64) -> usize {
    raw_roots(f, p1, p2).len()
}

/// Interior critical points of `h¹` where `|h¹| < TANGENCY_TOL`.
fn near_tangencies(f: &ShapeFunction, p1: f64, p2: f64) -> Vec<f64> {
    let (lo, hi) = interval_star(p1, p2);
    if hi - lo < ROOT_TOL {
        return Vec::new();
    }
    let dg = |y: f64| h1_deriv(f, p1, p2, y);
    let mut out = Vec::new();
    let mut prev_y = lo;
    let mut prev = dg(lo);
    for y in grid(lo, hi).skip(1) {
        let v = dg(y);
        if prev != 0.0 && v != 0.0 && (v < 0.0) != (prev < 0.0) {
            let c = bisect(dg, prev_y, y);
            if h1(f, p1, p2, c).abs() < TANGENCY_TOL {
                out.push(c);
            }
        }
        prev_y = y;
        prev = v;
    }
    out
}

fn classify(f: &ShapeFunction, p1: f64, p2: f64, y: f64, merged: bool) -> Result<EquilibriumPoint> {
    let model = MeanFieldModel::two_dim(f.clone(), p1, p2)?;
    let point = [y, 1.0 - y];
    let residual = mean_field(&model, &point)?
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    let d1 = h1_deriv(f, p1, p2, y);
    let (stability, second, side) = if d1 > DEGENERACY_TOL {
        (Stability::Attractive, None, None)
    } else if d1 < -DEGENERACY_TOL {
        (Stability::Repulsive, None, None)
    } else {
        let s = h1_second_deriv(f, p1, p2, y);
        // ẏ ≈ −s (y − y*)² / 2 pushes down on both sides
        let side = if s > 0.0 {
            Some(AttractsFrom::Above)
        } else if s < 0.0 {
            Some(AttractsFrom::Below)
        } else {
            None
        };
        (Stability::Degenerate, Some(s), side)
    };
    Ok(EquilibriumPoint {
        y: point.to_vec(),
        stability,
        h1_deriv: Some(d1),
        h1_second_deriv: second,
        attracts_from: side,
        jacobian_spectrum: None,
        residual,
        merged,
    })
}

/// All zeros of `h¹` in `closure(I*)` with stability labels.
///
/// Two roots closer than `MERGE_GAP` whose intervening extremum of `h¹` lies
/// within `TANGENCY_TOL` of zero are reported as one degenerate root at the
/// extremum; an extremum touching zero without a sign change is reported the
/// same way.
pub fn equilibria_2d(f: &ShapeFunction, p1: f64, p2: f64) -> Result<EquilibriumReport> {
    check_p(p1, p2)?;
    let roots = raw_roots(f, p1, p2);
    if roots.is_empty() {
        return Err(UrnError::Internal(format!(
            "no sign change of h1 found on closure(I*) for p = ({p1}, {p2})"
        )));
    }
    let mut located: Vec<(f64, bool)> = roots.iter().map(|r| (*r, false)).collect();
    for c in near_tangencies(f, p1, p2) {
        let below = located.iter().rposition(|(r, m)| !m && *r < c);
        let above = located.iter().position(|(r, m)| !m && *r > c);
        match (below, above) {
            (Some(i), Some(k)) if k == i + 1 && located[k].0 - located[i].0 < MERGE_GAP => {
                located.splice(i..=k, [(c, true)]);
            }
            _ => {
                let near_root = located.iter().any(|(r, _)| (r - c).abs() < ROOT_TOL * 10.0);
                if !near_root && !has_sign_change_between(&located, c) {
                    located.push((c, true));
                    located.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
                }
            }
        }
    }
    let points = located
        .into_iter()
        .map(|(y, merged)| classify(f, p1, p2, y, merged))
        .collect::<Result<Vec<_>>>()?;
    Ok(EquilibriumReport {
        d: 2,
        points,
        discarded_starts: 0,
    })
}

/// True if `c` sits strictly between two adjacent roots less than
/// `MERGE_GAP` apart (handled by merging, not touching).
fn has_sign_change_between(located: &[(f64, bool)], c: f64) -> bool {
    located
        .windows(2)
        .any(|w| w[0].0 < c && c < w[1].0 && w[1].0 - w[0].0 < MERGE_GAP)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complementary_p_gives_single_root() {
        for f in [
            ShapeFunction::identity(),
            ShapeFunction::power(4.0).unwrap(),
            ShapeFunction::sqrt(),
        ] {
            let r = equilibria_2d(&f, 0.3, 0.7).unwrap();
            assert_eq!(r.count(), 1);
            assert!((r.points[0].y[0] - 0.3).abs() < 1e-12);
            assert_eq!(r.points[0].stability, Stability::Attractive);
        }
    }

    #[test]
    fn derivative_matches_eigenvalue_form_at_roots() {
        let f = ShapeFunction::power(2.3).unwrap();
        let (p1, p2) = (0.8, 0.6);
        for p in equilibria_2d(&f, p1, p2).unwrap().points {
            let y = p.y[0];
            let lam = (f.deriv(y) * (p1 - y) + f.deriv(1.0 - y) * (y - 1.0 + p2))
                / (f.eval(y) + f.eval(1.0 - y));
            assert!((p.h1_deriv.unwrap() - (1.0 - lam)).abs() < 1e-9);
        }
    }

    #[test]
    fn second_derivative_closed_form_matches_differences() {
        let (p1, p2) = (0.7, 0.75);
        for alpha in [1.5, 3.09, 4.0] {
            let f = ShapeFunction::power(alpha).unwrap();
            for y in [0.2, 0.45, 0.6002, 0.8] {
                let e = 1e-5;
                let fd = (h1_deriv(&f, p1, p2, y + e) - h1_deriv(&f, p1, p2, y - e)) / (2.0 * e);
                let cf = h1_second_deriv_power(alpha, p1, p2, y);
                assert!(
                    (fd - cf).abs() < 1e-5 * (1.0 + cf.abs()),
                    "alpha {alpha} y {y}: {fd} vs {cf}"
                );
            }
        }
    }

    #[test]
    fn three_roots_alternate() {
        let f = ShapeFunction::power(4.0).unwrap();
        let r = equilibria_2d(&f, 0.7, 0.75).unwrap();
        let labels: Vec<Stability> = r.points.iter().map(|p| p.stability).collect();
        assert_eq!(
            labels,
            vec![
                Stability::Attractive,
                Stability::Repulsive,
                Stability::Attractive
            ]
        );
        assert!(r.points.iter().all(|p| p.residual < 1e-10));
    }

    #[test]
    fn tangency_reports_two_roots() {
        let f = ShapeFunction::power(3.09).unwrap();
        assert_eq!(raw_root_count(&f, 0.7, 0.75), 3);
        let r = equilibria_2d(&f, 0.7, 0.75).unwrap();
        assert_eq!(r.count(), 2);
        assert_eq!(r.points[1].stability, Stability::Degenerate);
        assert!(r.points[1].merged);
        assert!(r.points[1].h1_second_deriv.unwrap() > 0.0);
    }
}
