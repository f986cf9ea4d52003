use serde::{Deserialize, Serialize};

use crate::error::{Result, UrnError};
use crate::shape::ShapeFunction;
use crate::urn::state::UrnState;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    /// `P(X = e^i) ∝ f(Ỹ^i)`, the reinforced empirical frequency.
    SkewedFrequency,
    /// `P(X = e^i) ∝ f(Y^i)` on raw masses, renormalised afterwards.
    SkewedRaw,
}

#[derive(Clone, Debug)]
pub struct DrawingRule {
    pub kind: RuleKind,
    pub f: ShapeFunction,
}

impl DrawingRule {
    pub fn new(kind: RuleKind, f: ShapeFunction) -> Result<Self> {
        if kind == RuleKind::SkewedRaw && f.domain_max().is_finite() {
            return Err(UrnError::invalid(
                "rule",
                format!(
                    "shape {} is only defined on [0, {}] but raw masses are unbounded",
                    f.spec_string(),
                    f.domain_max()
                ),
            ));
        }
        Ok(DrawingRule { kind, f })
    }

    pub fn frequency(f: ShapeFunction) -> Self {
        DrawingRule {
            kind: RuleKind::SkewedFrequency,
            f,
        }
    }

    /// Writes unnormalised drawing weights into `out` and returns their sum.
    #[inline]
    pub fn weights_into(&self, state: &UrnState, out: &mut [f64]) -> Result<f64> {
        let mut total = 0.0;
        match self.kind {
            RuleKind::SkewedFrequency => {
                let inv = 1.0 / state.scale();
                for (w, y) in out.iter_mut().zip(&state.y) {
                    *w = self.f.eval(y * inv);
                    total += *w;
                }
            }
            RuleKind::SkewedRaw => {
                for (w, y) in out.iter_mut().zip(&state.y) {
                    *w = self.f.eval(*y);
                    total += *w;
                }
            }
        }
        if !(total > 0.0) || !total.is_finite() {
            return Err(UrnError::DegenerateRule);
        }
        Ok(total)
    }
}

/// Conditional law of the next draw given the current composition.
pub fn draw_probabilities(state: &UrnState, rule: &DrawingRule) -> Result<Vec<f64>> {
    let mut w = vec![0.0; state.dim()];
    let total = rule.weights_into(state, &mut w)?;
    w.iter_mut().for_each(|v| *v /= total);
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn at(ynorm: &[f64]) -> UrnState {
        // Tr(Y0) = 1 and n = 0 makes Ỹ = Y
        UrnState::new(ynorm.to_vec()).unwrap()
    }

    #[test]
    fn symmetric_state_gives_uniform_law() {
        for f in [
            ShapeFunction::identity(),
            ShapeFunction::sqrt(),
            ShapeFunction::power(3.0).unwrap(),
        ] {
            let p = draw_probabilities(&at(&[0.5, 0.5]), &DrawingRule::frequency(f)).unwrap();
            assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn squared_rule_hand_value() {
        let rule = DrawingRule::frequency(ShapeFunction::power(2.0).unwrap());
        let p = draw_probabilities(&at(&[1.0 / 3.0, 2.0 / 3.0]), &rule).unwrap();
        assert!((p[0] - 0.2).abs() < 1e-15);
        assert!((p[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn identity_rule_is_proportional() {
        let p = draw_probabilities(
            &at(&[0.3, 0.7]),
            &DrawingRule::frequency(ShapeFunction::identity()),
        )
        .unwrap();
        assert!((p[0] - 0.3).abs() < 1e-15 && (p[1] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn raw_rule_rejects_bounded_domain() {
        let x = vec![0.0, 0.5, 1.0];
        let t = crate::shape::Tabulated::new(x.clone(), x.clone(), vec![1.0; 3]).unwrap();
        let f = ShapeFunction::tabulated(t).unwrap();
        assert!(DrawingRule::new(RuleKind::SkewedRaw, f).is_err());
    }

    proptest! {
        #[test]
        fn probabilities_are_normalised(
            y in proptest::collection::vec(0.0f64..50.0, 2..6),
            alpha in 0.2f64..5.0,
            n in 0u64..1000,
        ) {
            prop_assume!(y.iter().any(|v| *v > 1e-6));
            let mut s = UrnState::new(y.clone()).unwrap();
            // pretend n draws happened with balanced additions
            s.n = n;
            let scale = s.scale();
            let tr: f64 = y.iter().sum();
            s.y.iter_mut().for_each(|v| *v *= scale / tr);
            let rule = DrawingRule::frequency(ShapeFunction::power(alpha).unwrap());
            let p = draw_probabilities(&s, &rule).unwrap();
            prop_assert!(p.iter().all(|v| *v >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn raw_power_rule_is_scale_invariant(
            y in proptest::collection::vec(0.01f64..20.0, 2..5),
            alpha in 0.2f64..4.0,
            t in 0.01f64..100.0,
        ) {
            let rule = DrawingRule::new(RuleKind::SkewedRaw, ShapeFunction::power(alpha).unwrap()).unwrap();
            let p = draw_probabilities(&UrnState::new(y.clone()).unwrap(), &rule).unwrap();
            let scaled: Vec<f64> = y.iter().map(|v| v * t).collect();
            let q = draw_probabilities(&UrnState::new(scaled).unwrap(), &rule).unwrap();
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
