//! Property suites over random configurations.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use urnlab::asymptotics::{asymptotic_sigma_tangent, classify_regime, Regime};
use urnlab::finance::{limit_h, sample_addition_matrix, TrialState};
use urnlab::linalg::{column_sums, lyapunov_residual, solve_continuous_lyapunov, Matrix};
use urnlab::meanfield::{equilibria_2d, equilibria_general, GeneralOptions, MeanFieldModel};
use urnlab::rng::stream_rng;
use urnlab::urn::{
    draw_probabilities, step, AdditionModel, DrawingRule, RuleKind, UrnEngine, UrnState,
};
use urnlab::ShapeFunction;

fn shape() -> impl Strategy<Value = ShapeFunction> {
    prop_oneof![
        Just(ShapeFunction::identity()),
        Just(ShapeFunction::sqrt()),
        (0.2f64..6.0).prop_map(|a| ShapeFunction::power(a).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn balanced_trace_is_exact(
        p in prop::collection::vec(0.05f64..0.95, 2..5),
        f in shape(),
        seed in any::<u64>(),
    ) {
        let d = p.len();
        let y0: Vec<f64> = (0..d).map(|i| 0.5 + i as f64).collect();
        let tr0: f64 = y0.iter().sum();
        for model in [AdditionModel::finance(p.clone()).unwrap(), AdditionModel::balanced(limit_h(&p)).unwrap()] {
            let mut e = UrnEngine::new(UrnState::new(y0.clone()).unwrap(), DrawingRule::frequency(f.clone()), model).unwrap();
            let mut rng = stream_rng(seed, 0);
            for _ in 0..2000 {
                e.advance(&mut rng).unwrap();
            }
            let s = e.state();
            prop_assert!((s.trace() - (2000.0 + tr0)).abs() < 1e-9);
            prop_assert!(s.y.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn draw_probabilities_normalise(
        y in prop::collection::vec(0.0f64..50.0, 2..8),
        f in shape(),
        raw in any::<bool>(),
    ) {
        prop_assume!(y.iter().any(|v| *v > 1e-3));
        let state = UrnState::new(y).unwrap();
        let kind = if raw { RuleKind::SkewedRaw } else { RuleKind::SkewedFrequency };
        let rule = DrawingRule::new(kind, f).unwrap();
        let pr = draw_probabilities(&state, &rule).unwrap();
        prop_assert!((pr.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(pr.iter().all(|q| *q >= 0.0));
    }

    #[test]
    fn addition_matrices_are_column_stochastic(
        pi in prop::collection::vec(0.0f64..1.0, 2..7),
        bits in prop::collection::vec(any::<bool>(), 7),
    ) {
        let trial = TrialState::from_pi(pi.clone()).unwrap();
        let t: Vec<f64> = (0..pi.len()).map(|i| bits[i] as u8 as f64).collect();
        let m = sample_addition_matrix(&trial, &t);
        for s in column_sums(&m) {
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
        prop_assert!(m.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn lyapunov_residual_is_tiny(n in 1usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // A = shift·I + small random part, all eigenvalues to the right of 1/2
        let mut a = Matrix::from_fn(n, n, |_, _| rng.gen_range(-0.3..0.3));
        for i in 0..n {
            a[(i, i)] += 1.5;
        }
        let b = Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let q = &b * b.transpose();
        let x = solve_continuous_lyapunov(&a, &q).unwrap();
        prop_assert!(lyapunov_residual(&a, &x, &q) < 1e-10);
    }
}

/// `Σ = ∫_0^∞ e^{−Bt} Γ e^{−Bᵗt} dt` with `B = J − I/2`, integrated as the ODE
/// `Σ' = Γ − BΣ − ΣBᵗ` to its fixed point.
#[test]
fn lyapunov_matches_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for n in 1..4 {
        let j = Matrix::from_fn(
            n,
            n,
            |r, c| if r == c { 1.2 } else { 0.0 } + rng.gen_range(-0.2..0.2),
        );
        let g = Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let gamma = &g * g.transpose() + Matrix::identity(n, n) * 0.1;
        let direct = asymptotic_sigma_tangent(&j, &gamma).unwrap().sigma_tangent;
        let b = &j - Matrix::identity(n, n) * 0.5;
        let rhs = |s: &Matrix| &gamma - &b * s - s * b.transpose();
        let mut s = Matrix::zeros(n, n);
        let dt = 0.01;
        for _ in 0..10_000 {
            let k1 = rhs(&s);
            let k2 = rhs(&(&s + &k1 * (dt / 2.0)));
            let k3 = rhs(&(&s + &k2 * (dt / 2.0)));
            let k4 = rhs(&(&s + &k3 * dt));
            s += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        }
        assert!((&s - &direct).amax() < 1e-8, "n={n}: {s} vs {direct}");
    }
}

#[test]
fn regime_boundaries() {
    assert_eq!(classify_regime(0.2, 0.05).regime, Regime::Clt);
    assert_eq!(classify_regime(0.5, 0.05).regime, Regime::LogClt);
    assert_eq!(classify_regime(0.75, 0.05).regime, Regime::AsRate);
    assert_eq!(classify_regime(1.0, 0.05).regime, Regime::Outside);
    assert_eq!(classify_regime(f64::NAN, 0.05).regime, Regime::Outside);
}

/// The general-`d` solver agrees with the two-colour scan on random
/// configurations away from tangencies.
#[test]
fn general_solver_matches_two_colour() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut compared = 0;
    let mut skipped = 0;
    while compared < 50 {
        let p1 = rng.gen_range(0.05..0.95);
        let p2 = rng.gen_range(0.05..0.95);
        let alpha = rng.gen_range(0.3..6.0);
        let f = ShapeFunction::power(alpha).unwrap();
        let two = equilibria_2d(&f, p1, p2).unwrap();
        let roots = two.first_coordinates();
        if two.points.iter().any(|e| e.merged) || roots.windows(2).any(|w| w[1] - w[0] < 0.02) {
            skipped += 1;
            continue;
        }
        let model = MeanFieldModel::new(f, limit_h(&[p1, p2])).unwrap();
        let gen = equilibria_general(
            &model,
            40,
            &mut stream_rng(1, compared),
            &GeneralOptions::default(),
        )
        .unwrap();
        let g = gen.first_coordinates();
        assert_eq!(
            g.len(),
            roots.len(),
            "p=({p1},{p2}) α={alpha}: {g:?} vs {roots:?}"
        );
        for (a, b) in g.iter().zip(&roots) {
            assert!(
                (a - b).abs() < 1e-8,
                "p=({p1},{p2}) α={alpha}: {g:?} vs {roots:?}"
            );
        }
        for (a, b) in gen.points.iter().zip(&two.points) {
            assert_eq!(a.stability, b.stability, "p=({p1},{p2}) α={alpha}");
        }
        compared += 1;
    }
    assert!(skipped < 50, "too many near-tangent draws skipped");
}

#[test]
fn identity_model_trace() {
    // Identity model: trace after n draws is n + Tr Y0 for every shape.
    let mut rng = stream_rng(3, 0);
    let mut e = UrnEngine::new(
        UrnState::new(vec![0.3, 0.3, 0.4]).unwrap(),
        DrawingRule::frequency(ShapeFunction::power(3.0).unwrap()),
        AdditionModel::identity(3).unwrap(),
    )
    .unwrap();
    for _ in 0..10_000 {
        e.advance(&mut rng).unwrap();
    }
    assert!((e.state().trace() - 10_001.0).abs() < 1e-9);
}

/// `ΔM_{n+1}` has mean zero given the past; pooled over a finance path the
/// sample mean sits within a few standard errors of zero.
#[test]
fn martingale_increments_are_centred() {
    let mut rng = stream_rng(21, 0);
    let rule = DrawingRule::frequency(ShapeFunction::sqrt());
    let mut model = AdditionModel::finance(vec![0.7, 0.75]).unwrap();
    let mut state = UrnState::new(vec![1.0, 1.0]).unwrap();
    let mut xs = Vec::new();
    for _ in 0..40_000 {
        let (next, rec) = step(&state, &rule, &mut model, &mut rng).unwrap();
        xs.push(rec.martingale_increment[0]);
        state = next;
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let sd = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!(
        m.abs() < 4.0 * sd / n.sqrt(),
        "mean {m}, se {}",
        sd / n.sqrt()
    );
}
