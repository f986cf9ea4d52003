use serde::{Deserialize, Serialize};

use crate::error::{Result, UrnError};

/// Urn composition `Y_n` after `n` draws, together with `Tr(Y_0)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UrnState {
    pub n: u64,
    pub y: Vec<f64>,
    pub tr_y0: f64,
}

impl UrnState {
    pub fn new(y0: Vec<f64>) -> Result<Self> {
        if y0.len() < 2 {
            return Err(UrnError::invalid("y0", "need at least two colours"));
        }
        if y0.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(UrnError::invalid(
                "y0",
                "entries must be finite and nonnegative",
            ));
        }
        if !y0.iter().any(|v| *v > 0.0) {
            return Err(UrnError::invalid(
                "y0",
                "at least one entry must be positive",
            ));
        }
        let tr_y0 = y0.iter().sum();
        Ok(UrnState { n: 0, y: y0, tr_y0 })
    }

    pub fn dim(&self) -> usize {
        self.y.len()
    }

    pub fn trace(&self) -> f64 {
        self.y.iter().sum()
    }

    /// `n + Tr(Y_0)`, the normalisation of the composition.
    #[inline]
    pub fn scale(&self) -> f64 {
        self.n as f64 + self.tr_y0
    }

    /// `Ỹ_n = Y_n / (n + Tr(Y_0))`.
    pub fn normalized(&self) -> Vec<f64> {
        let s = self.scale();
        self.y.iter().map(|v| v / s).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.y.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(UrnError::ModelContract(format!(
                "composition left the nonnegative orthant at n = {}",
                self.n
            )));
        }
        if !self.y.iter().any(|v| *v > 0.0) {
            return Err(UrnError::ModelContract(format!(
                "urn went extinct at n = {}",
                self.n
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_extinct_and_negative() {
        assert!(UrnState::new(vec![0.0, 0.0]).is_err());
        assert!(UrnState::new(vec![1.0, -0.5]).is_err());
        assert!(UrnState::new(vec![1.0]).is_err());
        let s = UrnState::new(vec![0.0, 2.5]).unwrap();
        assert_eq!(s.tr_y0, 2.5);
        assert_eq!(s.normalized(), vec![0.0, 1.0]);
    }
}
