//! Reinforcement functions `f` used by the skewed drawing rules.
//!
//! Every shape satisfies `f(0) = 0`, `f(1) = 1`, is non-decreasing and
//! positive on `(0, 1]`. Power laws `y^α` are the workhorse; tabulated and
//! user-supplied shapes cover everything else.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Result, UrnError};

/// Curvature class, which decides which stability results apply.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Curvature {
    StrictlyConcave,
    StrictlyConvex,
    Linear,
    Unknown,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeTag {
    Identity,
    Power(f64),
    Concave,
    Convex,
    Custom,
}

/// User-supplied reinforcement function.
///
/// One-sided derivative data is optional; operations that need it report
/// [`UrnError::MissingShapeData`] instead of guessing.
pub trait CustomShape: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn eval(&self, y: f64) -> f64;
    fn deriv(&self, y: f64) -> f64;
    fn right_deriv_0(&self) -> Option<f64> {
        None
    }
    fn left_deriv_1(&self) -> Option<f64> {
        None
    }
    fn right_second_deriv_0(&self) -> Option<f64> {
        None
    }
    fn curvature(&self) -> Curvature {
        Curvature::Unknown
    }
    /// Upper end of the domain; `f64::INFINITY` for shapes usable on raw masses.
    fn domain_max(&self) -> f64 {
        1.0
    }
    /// Index of regular variation at infinity, if declared.
    fn regvar_index(&self) -> Option<f64> {
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum PowMode {
    Square,
    Cube,
    Quartic,
    Sqrt,
    General,
}

#[derive(Clone)]
enum Kind {
    Identity,
    Power { alpha: f64, mode: PowMode },
    Tabulated(Arc<Tabulated>),
    Custom(Arc<dyn CustomShape>),
}

#[derive(Clone)]
pub struct ShapeFunction {
    kind: Kind,
}

impl fmt::Debug for ShapeFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ShapeFunction({})", self.spec_string())
    }
}

impl ShapeFunction {
    pub fn identity() -> Self {
        ShapeFunction {
            kind: Kind::Identity,
        }
    }

    pub fn power(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(UrnError::invalid(
                "alpha",
                format!("power exponent must be > 0, got {alpha}"),
            ));
        }
        if alpha == 1.0 {
            return Ok(Self::identity());
        }
        let mode = if alpha == 2.0 {
            PowMode::Square
        } else if alpha == 3.0 {
            PowMode::Cube
        } else if alpha == 4.0 {
            PowMode::Quartic
        } else if alpha == 0.5 {
            PowMode::Sqrt
        } else {
            PowMode::General
        };
        Ok(ShapeFunction {
            kind: Kind::Power { alpha, mode },
        })
    }

    pub fn sqrt() -> Self {
        Self::power(0.5).expect("0.5 is a valid exponent")
    }

    pub fn custom(shape: Arc<dyn CustomShape>) -> Result<Self> {
        let f = ShapeFunction {
            kind: Kind::Custom(shape),
        };
        f.validate()?;
        Ok(f)
    }

    pub fn tabulated(table: Tabulated) -> Result<Self> {
        let f = ShapeFunction {
            kind: Kind::Tabulated(Arc::new(table)),
        };
        f.validate()?;
        Ok(f)
    }

    /// Parses `identity | power:<α> | sqrt | custom:<path>`.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        match spec {
            "identity" | "id" => return Ok(Self::identity()),
            "sqrt" => return Ok(Self::sqrt()),
            _ => {}
        }
        if let Some(rest) = spec.strip_prefix("power:") {
            let alpha: f64 = rest
                .trim()
                .parse()
                .map_err(|_| UrnError::Config(format!("bad power exponent in `{spec}`")))?;
            return Self::power(alpha);
        }
        if let Some(path) = spec.strip_prefix("custom:") {
            return Self::tabulated(Tabulated::from_json_file(Path::new(path))?);
        }
        Err(UrnError::Config(format!(
            "unknown shape `{spec}` (expected identity | power:<a> | sqrt | custom:<path>)"
        )))
    }

    pub fn spec_string(&self) -> String {
        match &self.kind {
            Kind::Identity => "identity".to_string(),
            Kind::Power { alpha, .. } => format!("power:{alpha}"),
            Kind::Tabulated(t) => format!("custom:{}", t.source),
            Kind::Custom(c) => format!("custom:{}", c.name()),
        }
    }

    #[inline]
    pub fn eval(&self, y: f64) -> f64 {
        match &self.kind {
            Kind::Identity => y,
            Kind::Power { alpha, mode } => {
                if y <= 0.0 {
                    return 0.0;
                }
                match mode {
                    PowMode::Square => y * y,
                    PowMode::Cube => y * y * y,
                    PowMode::Quartic => {
                        let s = y * y;
                        s * s
                    }
                    PowMode::Sqrt => y.sqrt(),
                    PowMode::General => y.powf(*alpha),
                }
            }
            Kind::Tabulated(t) => t.eval(y),
            Kind::Custom(c) => c.eval(y),
        }
    }

    pub fn deriv(&self, y: f64) -> f64 {
        match &self.kind {
            Kind::Identity => 1.0,
            Kind::Power { alpha, .. } => {
                if y <= 0.0 {
                    return power_deriv_at_zero(*alpha);
                }
                alpha * y.powf(alpha - 1.0)
            }
            Kind::Tabulated(t) => t.deriv(y),
            Kind::Custom(c) => c.deriv(y),
        }
    }

    /// `f'_r(0)`, possibly `+∞`.
    pub fn right_deriv_0(&self) -> Option<f64> {
        match &self.kind {
            Kind::Identity => Some(1.0),
            Kind::Power { alpha, .. } => Some(power_deriv_at_zero(*alpha)),
            Kind::Tabulated(t) => Some(t.right_deriv_0.unwrap_or(t.df[0])),
            Kind::Custom(c) => c.right_deriv_0(),
        }
    }

    /// `f'_l(1)`.
    pub fn left_deriv_1(&self) -> Option<f64> {
        match &self.kind {
            Kind::Identity => Some(1.0),
            Kind::Power { alpha, .. } => Some(*alpha),
            Kind::Tabulated(t) => t.left_deriv_1.or_else(|| t.deriv_at_one()),
            Kind::Custom(c) => c.left_deriv_1(),
        }
    }

    /// `f''_r(0)`; `None` where it is undefined.
    pub fn right_second_deriv_0(&self) -> Option<f64> {
        match &self.kind {
            Kind::Identity => Some(0.0),
            Kind::Power { alpha, .. } => {
                let a = *alpha;
                if a > 2.0 {
                    Some(0.0)
                } else if a == 2.0 {
                    Some(2.0)
                } else if a > 1.0 {
                    Some(f64::INFINITY)
                } else {
                    // α < 1: f'' → −∞, not a usable one-sided value
                    None
                }
            }
            Kind::Tabulated(t) => t.right_second_deriv_0,
            Kind::Custom(c) => c.right_second_deriv_0(),
        }
    }

    pub fn curvature(&self) -> Curvature {
        match &self.kind {
            Kind::Identity => Curvature::Linear,
            Kind::Power { alpha, .. } if *alpha < 1.0 => Curvature::StrictlyConcave,
            Kind::Power { .. } => Curvature::StrictlyConvex,
            Kind::Tabulated(t) => t.curvature,
            Kind::Custom(c) => c.curvature(),
        }
    }

    pub fn tag(&self) -> ShapeTag {
        match &self.kind {
            Kind::Identity => ShapeTag::Identity,
            Kind::Power { alpha, .. } => ShapeTag::Power(*alpha),
            _ => match self.curvature() {
                Curvature::StrictlyConcave => ShapeTag::Concave,
                Curvature::StrictlyConvex => ShapeTag::Convex,
                Curvature::Linear => ShapeTag::Identity,
                Curvature::Unknown => ShapeTag::Custom,
            },
        }
    }

    pub fn domain_max(&self) -> f64 {
        match &self.kind {
            Kind::Identity | Kind::Power { .. } => f64::INFINITY,
            Kind::Tabulated(t) => t.domain_max(),
            Kind::Custom(c) => c.domain_max(),
        }
    }

    pub fn regvar_index(&self) -> Option<f64> {
        match &self.kind {
            Kind::Identity => Some(1.0),
            Kind::Power { alpha, .. } => Some(*alpha),
            Kind::Tabulated(t) => t.regvar_index,
            Kind::Custom(c) => c.regvar_index(),
        }
    }

    /// Exponent when the shape is exactly `y^α` (identity counts as α = 1).
    pub fn power_exponent(&self) -> Option<f64> {
        match &self.kind {
            Kind::Identity => Some(1.0),
            Kind::Power { alpha, .. } => Some(*alpha),
            _ => None,
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.kind, Kind::Identity)
    }

    /// Checks `f(0)=0`, `f(1)=1`, monotonicity and positivity on a grid.
    pub fn validate(&self) -> Result<()> {
        let name = self.spec_string();
        let bad = |reason: String| UrnError::invalid("shape", format!("{name}: {reason}"));
        if self.eval(0.0).abs() > 1e-12 {
            return Err(bad(format!("f(0) = {} != 0", self.eval(0.0))));
        }
        if (self.eval(1.0) - 1.0).abs() > 1e-9 {
            return Err(bad(format!("f(1) = {} != 1", self.eval(1.0))));
        }
        let mut prev = 0.0;
        for k in 1..=1000 {
            let y = k as f64 / 1000.0;
            let v = self.eval(y);
            if !(v > 0.0) || !v.is_finite() {
                return Err(bad(format!("f({y}) = {v} is not positive")));
            }
            if v + 1e-12 < prev {
                return Err(bad(format!("f decreases near y = {y}")));
            }
            prev = v;
        }
        Ok(())
    }
}

fn power_deriv_at_zero(alpha: f64) -> f64 {
    if alpha < 1.0 {
        f64::INFINITY
    } else if alpha == 1.0 {
        1.0
    } else {
        0.0
    }
}

/// Shape given by samples of `f` and `f'`, interpolated by cubic Hermite splines.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tabulated {
    pub x: Vec<f64>,
    pub f: Vec<f64>,
    pub df: Vec<f64>,
    #[serde(default)]
    pub right_deriv_0: Option<f64>,
    #[serde(default)]
    pub left_deriv_1: Option<f64>,
    #[serde(default)]
    pub right_second_deriv_0: Option<f64>,
    #[serde(default = "unknown_curvature")]
    pub curvature: Curvature,
    #[serde(default)]
    pub regvar_index: Option<f64>,
    #[serde(skip)]
    pub source: String,
}

fn unknown_curvature() -> Curvature {
    Curvature::Unknown
}

impl Tabulated {
    pub fn new(x: Vec<f64>, f: Vec<f64>, df: Vec<f64>) -> Result<Self> {
        let t = Tabulated {
            x,
            f,
            df,
            right_deriv_0: None,
            left_deriv_1: None,
            right_second_deriv_0: None,
            curvature: Curvature::Unknown,
            regvar_index: None,
            source: "table".into(),
        };
        t.check()?;
        Ok(t)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            UrnError::Config(format!("cannot read shape table {}: {e}", path.display()))
        })?;
        let mut t: Tabulated = serde_json::from_str(&text)
            .map_err(|e| UrnError::Config(format!("bad shape table {}: {e}", path.display())))?;
        t.source = path.display().to_string();
        t.check()?;
        Ok(t)
    }

    fn check(&self) -> Result<()> {
        let n = self.x.len();
        if n < 2 || self.f.len() != n || self.df.len() != n {
            return Err(UrnError::invalid(
                "table",
                "x, f, df must have equal length >= 2",
            ));
        }
        if self.x[0] != 0.0 {
            return Err(UrnError::invalid("table", "grid must start at 0"));
        }
        if self.x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(UrnError::invalid(
                "table",
                "grid must be strictly increasing",
            ));
        }
        if *self.x.last().unwrap() < 1.0 {
            return Err(UrnError::invalid("table", "grid must cover [0, 1]"));
        }
        Ok(())
    }

    fn domain_max(&self) -> f64 {
        *self.x.last().unwrap()
    }

    fn segment(&self, y: f64) -> usize {
        match self.x.binary_search_by(|v| v.partial_cmp(&y).unwrap()) {
            Ok(i) => i.min(self.x.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.x.len() - 2),
        }
    }

    fn eval(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        let y = y.min(self.domain_max());
        let i = self.segment(y);
        let (x0, x1) = (self.x[i], self.x[i + 1]);
        let h = x1 - x0;
        let t = (y - x0) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.f[i] + h10 * h * self.df[i] + h01 * self.f[i + 1] + h11 * h * self.df[i + 1]
    }

    fn deriv(&self, y: f64) -> f64 {
        let y = y.clamp(0.0, self.domain_max());
        let i = self.segment(y);
        let (x0, x1) = (self.x[i], self.x[i + 1]);
        let h = x1 - x0;
        let t = (y - x0) / h;
        let t2 = t * t;
        let d00 = 6.0 * t2 - 6.0 * t;
        let d10 = 3.0 * t2 - 4.0 * t + 1.0;
        let d01 = -6.0 * t2 + 6.0 * t;
        let d11 = 3.0 * t2 - 2.0 * t;
        (d00 * self.f[i] + d01 * self.f[i + 1]) / h + d10 * self.df[i] + d11 * self.df[i + 1]
    }

    fn deriv_at_one(&self) -> Option<f64> {
        self.x.iter().position(|&v| v == 1.0).map(|i| self.df[i])
    }
}
