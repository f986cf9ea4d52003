use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UrnError};
use crate::linalg::{Matrix, Vector};
use crate::shape::ShapeFunction;
use crate::urn::model::AdditionModel;
use crate::urn::rule::{DrawingRule, RuleKind};
use crate::urn::state::UrnState;

/// Bookkeeping for one transition `Y_n → Y_{n+1}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StepRecord {
    /// Zero-based index of the drawn colour.
    pub drawn_color: usize,
    #[serde(with = "crate::linalg::serde_rows")]
    pub d_sample: Matrix,
    /// `ΔM_{n+1} = D X − H_{n+1} φ`.
    pub martingale_increment: Vec<f64>,
    /// `X − φ`.
    pub drawing_increment: Vec<f64>,
    pub remainder: Vec<f64>,
}

/// A single urn evolving in place. Keeps drawing counts for `N_n / n`.
#[derive(Clone, Debug)]
pub struct UrnEngine {
    state: UrnState,
    rule: DrawingRule,
    model: AdditionModel,
    counts: Vec<u64>,
    weights: Vec<f64>,
    scratch: Matrix,
}

impl UrnEngine {
    pub fn new(state: UrnState, rule: DrawingRule, model: AdditionModel) -> Result<Self> {
        let d = state.dim();
        if model.dim() != d {
            return Err(UrnError::invalid(
                "model",
                format!(
                    "model has dimension {} but the urn has {d} colours",
                    model.dim()
                ),
            ));
        }
        state.validate()?;
        Ok(UrnEngine {
            state,
            rule,
            model,
            counts: vec![0; d],
            weights: vec![0.0; d],
            scratch: Matrix::zeros(d, d),
        })
    }

    pub fn state(&self) -> &UrnState {
        &self.state
    }

    pub fn rule(&self) -> &DrawingRule {
        &self.rule
    }

    pub fn model(&self) -> &AdditionModel {
        &self.model
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn into_parts(self) -> (UrnState, AdditionModel, Vec<u64>) {
        (self.state, self.model, self.counts)
    }

    /// `Ñ_n = N_n / n`; zeros before the first draw.
    pub fn drawing_frequencies(&self) -> Vec<f64> {
        let n = self.state.n.max(1) as f64;
        self.counts.iter().map(|c| *c as f64 / n).collect()
    }

    #[inline]
    fn draw<R: Rng>(&mut self, rng: &mut R) -> Result<usize> {
        let total = self.rule.weights_into(&self.state, &mut self.weights)?;
        let u = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        let last = self.weights.len() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return Ok(i);
            }
        }
        // u lands at the top edge only through round-off; pick the last
        // colour with positive weight
        Ok((0..=last)
            .rev()
            .find(|i| self.weights[*i] > 0.0)
            .unwrap_or(last))
    }

    /// One draw and addition. Returns the drawn colour.
    #[inline]
    pub fn advance<R: Rng>(&mut self, rng: &mut R) -> Result<usize> {
        let j = self.draw(rng)?;
        self.model
            .add_drawn_column(j, rng, &mut self.state.y, &mut self.scratch)?;
        self.model.after_draw(j);
        self.counts[j] += 1;
        self.state.n += 1;
        Ok(j)
    }

    /// One step with the full martingale/remainder bookkeeping. Consumes the
    /// random stream exactly like [`advance`](Self::advance).
    pub fn step_recorded<R: Rng>(&mut self, rng: &mut R) -> Result<StepRecord> {
        let d = self.state.dim();
        let h_next = self.model.compensator();
        let h_lim = self.model.limit();
        let phi = {
            let total = self.rule.weights_into(&self.state, &mut self.weights)?;
            Vector::from_iterator(d, self.weights.iter().map(|w| w / total))
        };
        let j = self.draw(rng)?;
        let mut dm = Matrix::zeros(d, d);
        self.model.sample_into(rng, &mut dm)?;
        if let Some(v) = dm.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(UrnError::ModelContract(format!(
                "sampled addition matrix has entry {v}, entries must be finite and nonnegative"
            )));
        }
        let compensated = &h_next * &phi;
        let martingale_increment: Vec<f64> = (0..d).map(|i| dm[(i, j)] - compensated[i]).collect();
        let drawing_increment: Vec<f64> = (0..d).map(|i| f64::from(i == j) - phi[i]).collect();
        let remainder = match self.rule.kind {
            RuleKind::SkewedFrequency => (&compensated - &h_lim * &phi).iter().cloned().collect(),
            RuleKind::SkewedRaw => {
                let surrogate = surrogate_shape(&self.rule.f);
                let ytilde = self.state.normalized();
                let w: Vec<f64> = ytilde.iter().map(|v| surrogate.eval(*v)).collect();
                let tw: f64 = w.iter().sum();
                let psi = Vector::from_iterator(d, w.iter().map(|v| v / tw));
                (&compensated - &h_lim * psi).iter().cloned().collect()
            }
        };
        for i in 0..d {
            self.state.y[i] += dm[(i, j)];
        }
        self.model.after_draw(j);
        self.counts[j] += 1;
        self.state.n += 1;
        Ok(StepRecord {
            drawn_color: j,
            d_sample: dm,
            martingale_increment,
            drawing_increment,
            remainder,
        })
    }
}

/// Power law with the declared regular-variation index, or `f` itself.
fn surrogate_shape(f: &ShapeFunction) -> ShapeFunction {
    f.regvar_index()
        .and_then(|a| ShapeFunction::power(a).ok())
        .unwrap_or_else(|| f.clone())
}

/// Functional form of one transition: returns the next state and its record.
/// The model is taken mutably because finance trial counters advance.
pub fn step<R: Rng>(
    state: &UrnState,
    rule: &DrawingRule,
    model: &mut AdditionModel,
    rng: &mut R,
) -> Result<(UrnState, StepRecord)> {
    let mut engine = UrnEngine::new(state.clone(), rule.clone(), model.clone())?;
    let record = engine.step_recorded(rng)?;
    let (next, m, _) = engine.into_parts();
    *model = m;
    Ok((next, record))
}
