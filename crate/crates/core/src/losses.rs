//! Supervised margin and distance losses `L(y, t)`, their shifted versions
//! `L*(y, t) = L(y, t) - L(y, 0)`, Lipschitz constants and subgradients in `t`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Hinge,
    Pinball,
    EpsInsensitive,
    LeastSquares,
}

/// A convex supervised loss. Construct through the validating constructors or
/// deserialize from `{"kind": "...", "params": {...}}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LossSpec", into = "LossSpec")]
pub enum LossFunction {
    Hinge,
    Pinball { tau: f64 },
    EpsInsensitive { eps: f64 },
    LeastSquares,
}

/// Wire form of a loss.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSpec {
    pub kind: LossKind,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl TryFrom<LossSpec> for LossFunction {
    type Error = Error;

    fn try_from(spec: LossSpec) -> Result<Self> {
        let param = |name: &str| {
            spec.params.get(name).copied().ok_or_else(|| {
                Error::Config(format!("{:?} loss requires parameter {name:?}", spec.kind))
            })
        };
        let allowed: &[&str] = match spec.kind {
            LossKind::Pinball => &["tau"],
            LossKind::EpsInsensitive => &["eps"],
            LossKind::Hinge | LossKind::LeastSquares => &[],
        };
        if let Some(extra) = spec.params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::Config(format!(
                "unknown parameter {extra:?} for {:?} loss",
                spec.kind
            )));
        }
        match spec.kind {
            LossKind::Hinge => Ok(Self::Hinge),
            LossKind::LeastSquares => Ok(Self::LeastSquares),
            LossKind::Pinball => Self::pinball(param("tau")?),
            LossKind::EpsInsensitive => Self::eps_insensitive(param("eps")?),
        }
    }
}

impl From<LossFunction> for LossSpec {
    fn from(loss: LossFunction) -> Self {
        let mut params = BTreeMap::new();
        match loss {
            LossFunction::Pinball { tau } => {
                params.insert("tau".to_owned(), tau);
            }
            LossFunction::EpsInsensitive { eps } => {
                params.insert("eps".to_owned(), eps);
            }
            LossFunction::Hinge | LossFunction::LeastSquares => {}
        }
        Self {
            kind: loss.kind(),
            params,
        }
    }
}

impl std::fmt::Display for LossFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Hinge => write!(f, "hinge"),
            Self::Pinball { tau } => write!(f, "pinball(tau={tau})"),
            Self::EpsInsensitive { eps } => write!(f, "eps_insensitive(eps={eps})"),
            Self::LeastSquares => write!(f, "least_squares"),
        }
    }
}

impl LossFunction {
    pub fn pinball(tau: f64) -> Result<Self> {
        if tau > 0.0 && tau < 1.0 {
            Ok(Self::Pinball { tau })
        } else {
            Err(Error::Config(format!(
                "pinball tau must lie in (0, 1), got {tau}"
            )))
        }
    }

    pub fn eps_insensitive(eps: f64) -> Result<Self> {
        if eps >= 0.0 && eps.is_finite() {
            Ok(Self::EpsInsensitive { eps })
        } else {
            Err(Error::Config(format!(
                "epsilon must be finite and >= 0, got {eps}"
            )))
        }
    }

    pub fn kind(&self) -> LossKind {
        match self {
            Self::Hinge => LossKind::Hinge,
            Self::Pinball { .. } => LossKind::Pinball,
            Self::EpsInsensitive { .. } => LossKind::EpsInsensitive,
            Self::LeastSquares => LossKind::LeastSquares,
        }
    }

    /// Rejects targets outside the loss's label set (hinge needs `y ∈ {-1, +1}`).
    pub fn check_target(&self, y: f64) -> Result<()> {
        match self {
            Self::Hinge if y != 1.0 && y != -1.0 => Err(Error::Domain(format!(
                "hinge loss needs labels in {{-1, +1}}, got {y}"
            ))),
            _ if !y.is_finite() => Err(Error::Domain(format!("non-finite target {y}"))),
            _ => Ok(()),
        }
    }

    pub fn check_targets(&self, ys: &[f64]) -> Result<()> {
        ys.iter().try_for_each(|&y| self.check_target(y))
    }

    pub fn value(&self, y: f64, t: f64) -> Result<f64> {
        self.check_target(y)?;
        Ok(self.eval(y, t))
    }

    /// `L(y, t) - L(y, 0)`.
    pub fn shifted_value(&self, y: f64, t: f64) -> Result<f64> {
        self.check_target(y)?;
        Ok(self.eval_shifted(y, t))
    }

    /// Loss value without target validation; callers check targets once up front.
    pub(crate) fn eval(&self, y: f64, t: f64) -> f64 {
        match *self {
            Self::Hinge => (1.0 - y * t).max(0.0),
            Self::Pinball { tau } => {
                let r = y - t;
                if r >= 0.0 {
                    tau * r
                } else {
                    (tau - 1.0) * r
                }
            }
            Self::EpsInsensitive { eps } => ((y - t).abs() - eps).max(0.0),
            Self::LeastSquares => (y - t) * (y - t),
        }
    }

    pub(crate) fn eval_shifted(&self, y: f64, t: f64) -> f64 {
        self.eval(y, t) - self.eval(y, 0.0)
    }

    /// Uniform Lipschitz constant `|L|₁` of `t ↦ L(y, t)`, shared by `L*`.
    pub fn lipschitz_constant(&self) -> Result<f64> {
        match *self {
            Self::Hinge | Self::EpsInsensitive { .. } => Ok(1.0),
            Self::Pinball { tau } => Ok(tau.max(1.0 - tau)),
            Self::LeastSquares => Err(Error::Unsupported(
                "least squares is only locally Lipschitz".into(),
            )),
        }
    }

    pub fn is_lipschitz(&self) -> bool {
        !matches!(self, Self::LeastSquares)
    }

    /// An element of `∂_t L(y, t)`. At kinks the zero subgradient is returned.
    pub fn subgradient(&self, y: f64, t: f64) -> Result<f64> {
        self.check_target(y)?;
        Ok(match *self {
            Self::Hinge => {
                if y * t < 1.0 {
                    -y
                } else {
                    0.0
                }
            }
            Self::Pinball { tau } => {
                if t < y {
                    -tau
                } else if t > y {
                    1.0 - tau
                } else {
                    0.0
                }
            }
            Self::EpsInsensitive { eps } => {
                let r = t - y;
                if r > eps {
                    1.0
                } else if r < -eps {
                    -1.0
                } else {
                    0.0
                }
            }
            Self::LeastSquares => 2.0 * (t - y),
        })
    }
}
