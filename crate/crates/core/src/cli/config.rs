use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, UrnError};
use crate::finance::limit_h;
use crate::linalg::{serde_rows, Matrix};
use crate::shape::ShapeFunction;
use crate::urn::{AdditionModel, DrawingRule, RecordingPolicy, RuleKind, UrnState};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum ModelKind {
    Identity,
    /// Deterministic co-stochastic columns, `H` given directly or built from `p`.
    Balanced,
    Finance,
}

/// One experiment. Every field is optional in the file so that inline flags
/// can fill the gaps; subcommands check what they need.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<RuleKind>,
    /// `identity | power:<α> | sqrt | custom:<path>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoints: Option<RecordingPolicy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// `start:stop:step`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub starts: Option<usize>,
    /// Write one CSV per run as well as the final points.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paths: Option<bool>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UrnError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| UrnError::Config(format!("invalid config {}: {e}", path.display())))?;
        if cfg.schema != SCHEMA_VERSION {
            return Err(UrnError::Config(format!(
                "config {} has schema {}, this build reads schema {SCHEMA_VERSION}",
                path.display(),
                cfg.schema
            )));
        }
        Ok(cfg)
    }

    /// Hex SHA-256 of the resolved config in canonical JSON.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    fn need<T: Clone>(v: &Option<T>, name: &str) -> Result<T> {
        v.clone()
            .ok_or_else(|| UrnError::Config(format!("`{name}` is required for this command")))
    }

    pub fn shape(&self) -> Result<ShapeFunction> {
        ShapeFunction::parse(&Self::need(&self.f, "f")?)
    }

    /// `p`, or `(p1, p2)`.
    pub fn probabilities(&self) -> Result<Option<Vec<f64>>> {
        match (&self.p, self.p1, self.p2) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => Err(UrnError::Config(
                "give either `p` or `p1`/`p2`, not both".into(),
            )),
            (Some(p), None, None) => Ok(Some(p.clone())),
            (None, Some(a), Some(b)) => Ok(Some(vec![a, b])),
            (None, None, None) => Ok(None),
            _ => Err(UrnError::Config("`p1` and `p2` go together".into())),
        }
    }

    pub fn two_colour(&self) -> Result<(f64, f64)> {
        match self.probabilities()? {
            Some(p) if p.len() == 2 => Ok((p[0], p[1])),
            Some(_) => Err(UrnError::Scope(
                "this command needs exactly two colours".into(),
            )),
            None => Err(UrnError::Config(
                "`p1` and `p2` are required for this command".into(),
            )),
        }
    }

    fn h_matrix(&self) -> Result<Option<Matrix>> {
        self.h
            .as_ref()
            .map(|rows| {
                serde_rows::from_rows(rows).map_err(|e| UrnError::Config(format!("`h`: {e}")))
            })
            .transpose()
    }

    /// Number of colours implied by the config, if any field fixes it.
    pub fn dim(&self) -> Result<Option<usize>> {
        let mut dims = Vec::new();
        if let Some(p) = self.probabilities()? {
            dims.push(("p", p.len()));
        }
        if let Some(h) = &self.h {
            dims.push(("h", h.len()));
        }
        if let Some(y) = &self.y0 {
            dims.push(("y0", y.len()));
        }
        if let Some((name, d)) = dims.iter().find(|(_, d)| *d != dims[0].1) {
            return Err(UrnError::Config(format!(
                "`{name}` has {d} colours, `{}` has {}",
                dims[0].0, dims[0].1
            )));
        }
        Ok(dims.first().map(|x| x.1))
    }

    pub fn model_kind(&self) -> Result<ModelKind> {
        Ok(match self.model {
            Some(k) => k,
            None if self.h.is_some() => ModelKind::Balanced,
            None if self.probabilities()?.is_some() => ModelKind::Finance,
            None => ModelKind::Identity,
        })
    }

    pub fn addition_model(&self) -> Result<AdditionModel> {
        let d = self.dim()?.unwrap_or(2);
        match self.model_kind()? {
            ModelKind::Identity => AdditionModel::identity(d),
            ModelKind::Balanced => match (self.h_matrix()?, self.probabilities()?) {
                (Some(h), _) => AdditionModel::balanced(h),
                (None, Some(p)) => AdditionModel::balanced(limit_h(&p)),
                (None, None) => Err(UrnError::Config("balanced model needs `h` or `p`".into())),
            },
            ModelKind::Finance => {
                AdditionModel::finance(self.probabilities()?.ok_or_else(|| {
                    UrnError::Config("finance model needs `p` or `p1`/`p2`".into())
                })?)
            }
        }
    }

    /// Mean-field matrix `H`: given, built from `p`, or the identity.
    pub fn mean_field_h(&self) -> Result<Matrix> {
        if let Some(h) = self.h_matrix()? {
            return Ok(h);
        }
        if self.model_kind()? != ModelKind::Identity {
            if let Some(p) = self.probabilities()? {
                return Ok(limit_h(&p));
            }
        }
        let d = self.dim()?.unwrap_or(2);
        Ok(Matrix::identity(d, d))
    }

    pub fn drawing_rule(&self) -> Result<DrawingRule> {
        DrawingRule::new(
            self.rule.unwrap_or(RuleKind::SkewedFrequency),
            self.shape()?,
        )
    }

    pub fn initial(&self) -> Result<UrnState> {
        let d = self.dim()?.unwrap_or(2);
        UrnState::new(self.y0.clone().unwrap_or_else(|| vec![1.0; d]))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn policy(&self) -> RecordingPolicy {
        self.checkpoints.clone().unwrap_or_default()
    }

    pub fn output_dir(&self, command: &str) -> PathBuf {
        self.output
            .clone()
            .unwrap_or_else(|| PathBuf::from("urnlab-out").join(command))
    }
}
