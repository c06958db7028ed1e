//! Planar vector fields with analytic Jacobians.
//!
//! Built-in models are addressed by name and a parameter map:
//!
//! | name            | parameters | equations                                        |
//! |-----------------|------------|--------------------------------------------------|
//! | `vanderpol`     | `mu`       | ẋ = y, ẏ = μ(1 − x²)y − x                        |
//! | `stuart_landau` | `omega`    | ẋ = x(1 − r²) − ωy, ẏ = y(1 − r²) + ωx            |
//! | `brusselator`   | `a`, `b`   | ẋ = a − (b + 1)x + x²y, ẏ = bx − x²y              |

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::linalg::{Mat2, Vec2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelKind {
    VanDerPol { mu: f64 },
    StuartLandau { omega: f64 },
    Brusselator { a: f64, b: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OscillatorModel {
    kind: ModelKind,
}

impl OscillatorModel {
    pub const NAMES: [&'static str; 3] = ["vanderpol", "stuart_landau", "brusselator"];

    pub fn van_der_pol(mu: f64) -> Self {
        Self { kind: ModelKind::VanDerPol { mu } }
    }

    pub fn stuart_landau(omega: f64) -> Self {
        Self { kind: ModelKind::StuartLandau { omega } }
    }

    pub fn brusselator(a: f64, b: f64) -> Self {
        Self { kind: ModelKind::Brusselator { a, b } }
    }

    /// Builds a model from its registered name. Missing parameters take the
    /// defaults `mu = 1`, `omega = 1`, `a = 1`, `b = 3`.
    pub fn from_name(name: &str, params: &BTreeMap<String, f64>) -> Result<Self> {
        let allowed: &[&str] = match name {
            "vanderpol" => &["mu"],
            "stuart_landau" => &["omega"],
            "brusselator" => &["a", "b"],
            other => return Err(Error::Config(format!("unknown model '{other}'"))),
        };
        if let Some(bad) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::Config(format!("model '{name}' has no parameter '{bad}'")));
        }
        if let Some((k, v)) = params.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Config(format!("parameter '{k}' is not finite ({v})")));
        }
        let get = |k: &str, default: f64| params.get(k).copied().unwrap_or(default);
        let model = match name {
            "vanderpol" => Self::van_der_pol(get("mu", 1.0)),
            "stuart_landau" => Self::stuart_landau(get("omega", 1.0)),
            _ => Self::brusselator(get("a", 1.0), get("b", 3.0)),
        };
        Ok(model)
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            ModelKind::VanDerPol { .. } => "vanderpol",
            ModelKind::StuartLandau { .. } => "stuart_landau",
            ModelKind::Brusselator { .. } => "brusselator",
        }
    }

    pub fn params(&self) -> BTreeMap<String, f64> {
        let pairs: Vec<(&str, f64)> = match self.kind {
            ModelKind::VanDerPol { mu } => vec![("mu", mu)],
            ModelKind::StuartLandau { omega } => vec![("omega", omega)],
            ModelKind::Brusselator { a, b } => vec![("a", a), ("b", b)],
        };
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    pub const fn dimension(&self) -> usize {
        2
    }

    /// f(x). Unchecked; callers on hot paths use this directly.
    #[inline]
    pub fn field(&self, p: Vec2) -> Vec2 {
        let Vec2 { x, y } = p;
        match self.kind {
            ModelKind::VanDerPol { mu } => Vec2::new(y, mu * (1.0 - x * x) * y - x),
            ModelKind::StuartLandau { omega } => {
                let g = 1.0 - (x * x + y * y);
                Vec2::new(x * g - omega * y, y * g + omega * x)
            }
            ModelKind::Brusselator { a, b } => {
                let x2y = x * x * y;
                Vec2::new(a - (b + 1.0) * x + x2y, b * x - x2y)
            }
        }
    }

    /// Df(x), row-major.
    #[inline]
    pub fn jacobian(&self, p: Vec2) -> Mat2 {
        let Vec2 { x, y } = p;
        match self.kind {
            ModelKind::VanDerPol { mu } => Mat2::new(0.0, 1.0, -2.0 * mu * x * y - 1.0, mu * (1.0 - x * x)),
            ModelKind::StuartLandau { omega } => {
                let g = 1.0 - (x * x + y * y);
                Mat2::new(g - 2.0 * x * x, -2.0 * x * y - omega, -2.0 * x * y + omega, g - 2.0 * y * y)
            }
            ModelKind::Brusselator { b, .. } => Mat2::new(-(b + 1.0) + 2.0 * x * y, x * x, b - 2.0 * x * y, -x * x),
        }
    }

    /// ∇·f(x), written as the trace of [`Self::jacobian`] so the two agree bit for bit.
    #[inline]
    pub fn divergence(&self, p: Vec2) -> f64 {
        self.jacobian(p).trace()
    }

    pub fn eval_field(&self, x: Vec2) -> Result<Vec2> {
        x.ensure_finite()?;
        Ok(self.field(x))
    }

    pub fn eval_jacobian(&self, x: Vec2) -> Result<Mat2> {
        x.ensure_finite()?;
        Ok(self.jacobian(x))
    }

    pub fn eval_divergence(&self, x: Vec2) -> Result<f64> {
        x.ensure_finite()?;
        Ok(self.divergence(x))
    }

    /// Lie bracket `[f, f⊥](x) = (∇·f) f⊥ − (A + Aᵀ) f⊥`.
    pub fn lie_bracket(&self, x: Vec2) -> Vec2 {
        let fp = self.field(x).perp();
        let a = self.jacobian(x);
        fp.scale(a.trace()) - a.symmetrized().mul_vec(fp)
    }
}

impl fmt::Display for OscillatorModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.name())?;
        for (i, (k, v)) in self.params().iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{k}={v}")?;
        }
        write!(f, ")")
    }
}
