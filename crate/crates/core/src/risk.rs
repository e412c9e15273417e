//! Empirical and Monte Carlo risks.
//!
//! Risks here are plain sample means of `L(y, f(x))` or of the shifted loss
//! `L*(y, f(x)) = L(y, f(x)) - L(y, 0)`. The shifted form stays finite for
//! heavy-tailed responses because `|L*(y, t)| ≤ |L|₁ |t|`; the unshifted form
//! needs `E|Y| < ∞` and is refused for Cauchy-noise generators.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Cauchy, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::composer::ComposedModel;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernels::KernelExpansion;
use crate::losses::LossFunction;
use crate::regionalization::Regionalization;
use crate::solver::LocalModel;

/// Anything that maps an input vector to a real prediction.
pub trait Predictor {
    fn dim(&self) -> usize;
    fn predict(&self, x: &[f64]) -> Result<f64>;
}

impl Predictor for ComposedModel {
    fn dim(&self) -> usize {
        ComposedModel::dim(self)
    }
    fn predict(&self, x: &[f64]) -> Result<f64> {
        ComposedModel::predict(self, x)
    }
}

impl Predictor for LocalModel {
    fn dim(&self) -> usize {
        self.expansion.dim()
    }
    fn predict(&self, x: &[f64]) -> Result<f64> {
        LocalModel::predict(self, x)
    }
}

impl Predictor for KernelExpansion {
    fn dim(&self) -> usize {
        KernelExpansion::dim(self)
    }
    fn predict(&self, x: &[f64]) -> Result<f64> {
        self.eval(x)
    }
}

/// Wraps a closure as a [`Predictor`].
pub struct FnPredictor<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[f64]) -> f64> Predictor for FnPredictor<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::Dimension {
                index: 0,
                expected: self.dim,
                found: x.len(),
            });
        }
        Ok((self.f)(x))
    }
}

fn pointwise_loss<P: Predictor + ?Sized>(
    model: &P,
    loss: &LossFunction,
    x: &[f64],
    y: f64,
    shifted: bool,
) -> Result<f64> {
    let t = model.predict(x)?;
    Ok(if shifted {
        loss.eval_shifted(y, t)
    } else {
        loss.eval(y, t)
    })
}

/// `(1/n) Σ_i L(y_i, f(x_i))`, or with `L*` when `shifted`. Sample weights are ignored.
pub fn empirical_risk<P: Predictor + ?Sized>(
    model: &P,
    data: &Dataset,
    loss: &LossFunction,
    shifted: bool,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Domain("empirical risk of an empty sample".into()));
    }
    loss.check_targets(data.targets())?;
    let mut total = 0.0;
    for (i, x) in data.points().enumerate() {
        total += pointwise_loss(model, loss, x, data.target(i), shifted)?;
    }
    Ok(total / data.len() as f64)
}

/// Empirical risk over the points covered by `region`; `None` when there are none.
pub fn regional_risk<P: Predictor + ?Sized>(
    model: &P,
    data: &Dataset,
    regions: &Regionalization,
    loss: &LossFunction,
    region: usize,
    shifted: bool,
) -> Result<Option<f64>> {
    if region >= regions.region_count() {
        return Err(Error::Domain(format!(
            "region {region} out of range for {} regions",
            regions.region_count()
        )));
    }
    loss.check_targets(data.targets())?;
    let mut total = 0.0;
    let mut count = 0usize;
    for (i, x) in data.points().enumerate() {
        if regions.membership(x)?.contains(&region) {
            total += pointwise_loss(model, loss, x, data.target(i), shifted)?;
            count += 1;
        }
    }
    Ok((count > 0).then(|| total / count as f64))
}

/// Per-cell point counts and mean losses, keyed by the overlap cell index set.
pub fn cell_risks<P: Predictor + ?Sized>(
    model: &P,
    data: &Dataset,
    regions: &Regionalization,
    loss: &LossFunction,
    shifted: bool,
) -> Result<BTreeMap<Vec<usize>, (usize, f64)>> {
    loss.check_targets(data.targets())?;
    let mut sums: BTreeMap<Vec<usize>, (usize, f64)> = BTreeMap::new();
    for (i, x) in data.points().enumerate() {
        let cell = regions.overlap_cell(x)?;
        let l = pointwise_loss(model, loss, x, data.target(i), shifted)?;
        let entry = sums.entry(cell).or_insert((0, 0.0));
        entry.0 += 1;
        entry.1 += l;
    }
    Ok(sums
        .into_iter()
        .map(|(cell, (n, s))| (cell, (n, s / n as f64)))
        .collect())
}

/// Monte Carlo mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

impl Estimate {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            mean,
            stderr: (var / n as f64).sqrt(),
            samples: n,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    /// `y = m(x) + noise`, `x ~ U[0,1]^d`, with a median function `m` that
    /// oscillates on `x₁ < 1/2` and is linear on `x₁ ≥ 1/2`.
    PiecewiseMedianRegression,
    /// Labels ±1 with equal probability, `x = y·margin·e₁ + noise`.
    TwoClusterClassification,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Gaussian,
    Cauchy,
}

fn default_scale() -> f64 {
    0.3
}

fn default_dim() -> usize {
    1
}

fn default_margin() -> f64 {
    1.0
}

/// Synthetic distribution with a known Bayes predictor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticGenerator {
    pub kind: GeneratorKind,
    pub noise: NoiseKind,
    /// Noise scale (regression) or cluster spread (classification); 0 means noiseless.
    #[serde(default = "default_scale")]
    pub scale: f64,
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Cluster offset along the first axis (classification only).
    #[serde(default = "default_margin")]
    pub margin: f64,
}

impl SyntheticGenerator {
    pub fn regression(noise: NoiseKind, scale: f64) -> Self {
        Self {
            kind: GeneratorKind::PiecewiseMedianRegression,
            noise,
            scale,
            dim: 1,
            margin: default_margin(),
        }
    }

    pub fn classification(noise: NoiseKind, scale: f64, margin: f64) -> Self {
        Self {
            kind: GeneratorKind::TwoClusterClassification,
            noise,
            scale,
            dim: 1,
            margin,
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if !(self.scale >= 0.0 && self.scale.is_finite()) {
            problems.push(format!(
                "generator.scale must be finite and >= 0, got {}",
                self.scale
            ));
        }
        if self.dim == 0 {
            problems.push("generator.dim must be >= 1".to_owned());
        }
        if !self.margin.is_finite() {
            problems.push("generator.margin must be finite".to_owned());
        }
        problems
    }

    pub fn is_heavy_tailed(&self) -> bool {
        self.noise == NoiseKind::Cauchy && self.scale > 0.0
    }

    fn draw_noise<R: Rng>(&self, rng: &mut R) -> f64 {
        let z: f64 = match self.noise {
            NoiseKind::Gaussian => rng.sample(StandardNormal),
            NoiseKind::Cauchy => Cauchy::new(0.0, 1.0).expect("unit cauchy").sample(rng),
        };
        self.scale * z
    }

    /// Conditional median of `Y` given `x` (regression).
    pub fn median(&self, x: &[f64]) -> f64 {
        let t = x[0];
        if t < 0.5 {
            0.5 * (4.0 * std::f64::consts::PI * t).sin()
        } else {
            t - 0.5
        }
    }

    /// Standardized noise quantile.
    fn noise_quantile(&self, tau: f64) -> f64 {
        match self.noise {
            NoiseKind::Gaussian => Normal::new(0.0, 1.0)
                .expect("standard normal")
                .inverse_cdf(tau),
            NoiseKind::Cauchy => (std::f64::consts::PI * (tau - 0.5)).tan(),
        }
    }

    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Dataset {
        let mut rows = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            match self.kind {
                GeneratorKind::PiecewiseMedianRegression => {
                    let x: Vec<f64> = (0..self.dim).map(|_| rng.gen::<f64>()).collect();
                    ys.push(self.median(&x) + self.draw_noise(rng));
                    rows.push(x);
                }
                GeneratorKind::TwoClusterClassification => {
                    let y = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                    let x: Vec<f64> = (0..self.dim)
                        .map(|j| {
                            let center = if j == 0 { y * self.margin } else { 0.0 };
                            center + self.draw_noise(rng)
                        })
                        .collect();
                    ys.push(y);
                    rows.push(x);
                }
            }
        }
        if rows.is_empty() {
            return Dataset::empty(self.dim);
        }
        Dataset::from_rows(&rows, &ys).expect("generated rows share a dimension")
    }

    fn check_loss(&self, loss: &LossFunction) -> Result<()> {
        match (self.kind, loss) {
            (GeneratorKind::PiecewiseMedianRegression, LossFunction::Pinball { .. })
            | (GeneratorKind::TwoClusterClassification, LossFunction::Hinge) => Ok(()),
            _ => Err(Error::Config(format!(
                "no Bayes oracle for {loss} under a {:?} generator",
                self.kind
            ))),
        }
    }

    /// The Bayes predictor: the conditional τ-quantile for pinball losses,
    /// the sign of `P(Y = 1 | x) - 1/2` for the hinge loss.
    pub fn bayes_prediction(&self, x: &[f64], loss: &LossFunction) -> Result<f64> {
        self.check_loss(loss)?;
        Ok(match *loss {
            LossFunction::Pinball { tau } => self.median(x) + self.scale * self.noise_quantile(tau),
            _ => {
                if x[0] >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
        })
    }
}

fn check_samples(samples: usize, minimum: usize) -> Result<()> {
    if samples < minimum {
        return Err(Error::Config(format!(
            "Monte Carlo estimates need at least {minimum} samples, got {samples}"
        )));
    }
    Ok(())
}

pub const MIN_ORACLE_SAMPLES: usize = 10_000;

/// Shifted Bayes risk `E L*(Y, f_Bayes(X))` by Monte Carlo.
pub fn bayes_risk_oracle(
    gen: &SyntheticGenerator,
    loss: &LossFunction,
    mc_samples: usize,
    seed: u64,
) -> Result<Estimate> {
    gen.check_loss(loss)?;
    check_samples(mc_samples, MIN_ORACLE_SAMPLES)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = gen.sample(mc_samples, &mut rng);
    let values: Vec<f64> = (0..data.len())
        .map(|i| {
            let x = data.point(i);
            let t = gen.bayes_prediction(x, loss)?;
            Ok(loss.eval_shifted(data.target(i), t))
        })
        .collect::<Result<_>>()?;
    Ok(Estimate::from_values(&values))
}

/// Risk of `model` under the generator's distribution. Unshifted risk is
/// refused for heavy-tailed noise, where it may be infinite.
pub fn generator_risk<P: Predictor + ?Sized>(
    model: &P,
    gen: &SyntheticGenerator,
    loss: &LossFunction,
    samples: usize,
    seed: u64,
    shifted: bool,
) -> Result<Estimate> {
    if !shifted && gen.is_heavy_tailed() {
        return Err(Error::Unsupported(
            "unshifted risk is undefined under heavy-tailed (cauchy) noise; use the shifted loss"
                .into(),
        ));
    }
    check_samples(samples, 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = gen.sample(samples, &mut rng);
    loss.check_targets(data.targets())?;
    let values: Vec<f64> = data
        .points()
        .enumerate()
        .map(|(i, x)| pointwise_loss(model, loss, x, data.target(i), shifted))
        .collect::<Result<_>>()?;
    Ok(Estimate::from_values(&values))
}

/// Model risk, Bayes risk and their difference on one common Monte Carlo sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcessRisk {
    pub model: Estimate,
    pub bayes: Estimate,
    pub excess: Estimate,
}

/// `R_{L*}(f) - R*_{L*}` estimated with paired samples, so the standard error
/// reflects only the spread of `L*(y, f(x)) - L*(y, f_Bayes(x))`.
pub fn excess_risk<P: Predictor + ?Sized>(
    model: &P,
    gen: &SyntheticGenerator,
    loss: &LossFunction,
    eval_samples: usize,
    seed: u64,
) -> Result<ExcessRisk> {
    gen.check_loss(loss)?;
    check_samples(eval_samples, 2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = gen.sample(eval_samples, &mut rng);
    let mut model_values = Vec::with_capacity(eval_samples);
    let mut bayes_values = Vec::with_capacity(eval_samples);
    let mut diffs = Vec::with_capacity(eval_samples);
    for (i, x) in data.points().enumerate() {
        let y = data.target(i);
        let m = pointwise_loss(model, loss, x, y, true)?;
        let b = loss.eval_shifted(y, gen.bayes_prediction(x, loss)?);
        model_values.push(m);
        bayes_values.push(b);
        diffs.push(m - b);
    }
    Ok(ExcessRisk {
        model: Estimate::from_values(&model_values),
        bayes: Estimate::from_values(&bayes_values),
        excess: Estimate::from_values(&diffs),
    })
}
