//! Composition of regional predictors: `f(x) = Σ_b w_b(x) f_b(x)` with weights
//! that sum to one at every `x` and vanish outside the regions covering `x`.
//!
//! The composed function is generally not an element of any RKHS, so
//! [`ComposedModel`] offers pointwise evaluation only, with no RKHS norm.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regionalization::Regionalization;
use crate::solver::LocalModel;

/// Pointwise weight rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightScheme {
    /// Equal split among the covering regions.
    IndicatorAverage,
    /// `w_b(x) = θ_b 1_{X_b}(x) / Σ_β θ_β 1_{X_β}(x)`.
    ThetaWeighted { thetas: Vec<f64> },
}

impl WeightScheme {
    fn validate(&self, regions: usize) -> Result<()> {
        if let Self::ThetaWeighted { thetas } = self {
            if thetas.len() != regions {
                return Err(Error::Config(format!(
                    "{} thetas for {regions} regions",
                    thetas.len()
                )));
            }
            if let Some(t) = thetas.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
                return Err(Error::Config(format!("thetas must be positive, got {t}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComposedModel {
    regionalization: Regionalization,
    locals: Vec<LocalModel>,
    scheme: WeightScheme,
}

impl ComposedModel {
    pub fn new(
        regionalization: Regionalization,
        locals: Vec<LocalModel>,
        scheme: WeightScheme,
    ) -> Result<Self> {
        let b = regionalization.region_count();
        if locals.len() != b {
            return Err(Error::Config(format!(
                "{} local models for {b} regions",
                locals.len()
            )));
        }
        scheme.validate(b)?;
        if let Some(l) = locals
            .iter()
            .find(|l| l.expansion.dim() != regionalization.dim)
        {
            return Err(Error::Dimension {
                index: l.region_index,
                expected: regionalization.dim,
                found: l.expansion.dim(),
            });
        }
        Ok(Self {
            regionalization,
            locals,
            scheme,
        })
    }

    pub fn regionalization(&self) -> &Regionalization {
        &self.regionalization
    }

    pub fn locals(&self) -> &[LocalModel] {
        &self.locals
    }

    pub fn scheme(&self) -> &WeightScheme {
        &self.scheme
    }

    pub fn region_count(&self) -> usize {
        self.locals.len()
    }

    pub fn dim(&self) -> usize {
        self.regionalization.dim
    }

    /// Covering regions of `x` with their weights; every other weight is zero.
    pub fn active_weights(&self, x: &[f64]) -> Result<Vec<(usize, f64)>> {
        let members = self.regionalization.membership(x)?;
        Ok(match &self.scheme {
            WeightScheme::IndicatorAverage => {
                let w = 1.0 / members.len() as f64;
                members.into_iter().map(|b| (b, w)).collect()
            }
            WeightScheme::ThetaWeighted { thetas } => {
                let total: f64 = members.iter().map(|&b| thetas[b]).sum();
                members
                    .into_iter()
                    .map(|b| (b, thetas[b] / total))
                    .collect()
            }
        })
    }

    /// The full weight vector `(w_1(x), …, w_B(x))`.
    pub fn weights_at(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut weights = vec![0.0; self.region_count()];
        for (b, w) in self.active_weights(x)? {
            weights[b] = w;
        }
        Ok(weights)
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        let active = self.active_weights(x)?;
        if let [(b, _)] = active.as_slice() {
            return Ok(self.locals[*b].expansion.eval_unchecked(x));
        }
        Ok(active
            .into_iter()
            .map(|(b, w)| w * self.locals[b].expansion.eval_unchecked(x))
            .sum())
    }

    /// Elementwise [`predict`](Self::predict); a bad row aborts with its index.
    pub fn predict_batch<X: AsRef<[f64]>>(&self, xs: &[X]) -> Result<Vec<f64>> {
        xs.iter()
            .enumerate()
            .map(|(i, x)| {
                let x = x.as_ref();
                if x.len() != self.dim() {
                    return Err(Error::Dimension {
                        index: i,
                        expected: self.dim(),
                        found: x.len(),
                    });
                }
                self.predict(x)
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: Self = serde_json::from_str(text)?;
        Self::new(raw.regionalization, raw.locals, raw.scheme)
    }
}
