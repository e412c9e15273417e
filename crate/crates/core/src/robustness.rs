//! ε-contamination of regional training measures and the maxbias bound
//!
//! ```text
//!     ‖f̃ - f‖∞ ≤ 2 |L|₁ Σ_b ‖w_b‖∞ (ε_b / λ_b) ‖k_b‖²∞
//! ```
//!
//! for the composed predictor trained on `(1-ε_b) P_b + ε_b P̃_b` in every
//! region versus the one trained on `P_b`. Mixtures are realized exactly through
//! sample weights, so the contaminated subsample is literally such a mixture.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::composer::{ComposedModel, WeightScheme};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::losses::LossFunction;
use crate::regionalization::{fit_regions, Regionalization, RegionalizationSpec};
use crate::risk::{NoiseKind, SyntheticGenerator};
use crate::solver::{train_local, LocalModel, SolverConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct ContaminationSpec {
    pub epsilons: Vec<f64>,
    /// One contaminating sample per region; weights are renormalized.
    pub contaminants: Vec<Dataset>,
    pub seed: u64,
}

fn check_epsilon(eps: f64) -> Result<()> {
    if !(0.0..0.5).contains(&eps) {
        return Err(Error::Config(format!(
            "contamination level must lie in [0, 0.5), got {eps}"
        )));
    }
    Ok(())
}

/// Per region, the mixture `(1-ε_b)·clean_b + ε_b·contaminant_b`. An empty
/// clean region carries no mass and stays empty.
pub fn contaminate(
    clean: &[Dataset],
    spec: &ContaminationSpec,
    regions: &Regionalization,
) -> Result<Vec<Dataset>> {
    let b_count = regions.region_count();
    if clean.len() != b_count
        || spec.epsilons.len() != b_count
        || spec.contaminants.len() != b_count
    {
        return Err(Error::Config(format!(
            "{b_count} regions but {} clean samples, {} epsilons and {} contaminants",
            clean.len(),
            spec.epsilons.len(),
            spec.contaminants.len()
        )));
    }
    let mut out = Vec::with_capacity(b_count);
    for (b, ((sub, &eps), bad)) in clean
        .iter()
        .zip(&spec.epsilons)
        .zip(&spec.contaminants)
        .enumerate()
    {
        check_epsilon(eps)?;
        if sub.is_empty() {
            out.push(sub.clone());
            continue;
        }
        if (sub.total_weight() - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!(
                "clean sample of region {b} has total weight {}",
                sub.total_weight()
            )));
        }
        if bad.dim() != sub.dim() {
            return Err(Error::Dimension {
                index: b,
                expected: sub.dim(),
                found: bad.dim(),
            });
        }
        for (i, x) in bad.points().enumerate() {
            if !regions.membership(x)?.contains(&b) {
                return Err(Error::Domain(format!(
                    "contaminant point {i} lies outside region {b}"
                )));
            }
        }
        if eps == 0.0 {
            out.push(sub.clone());
            continue;
        }
        let bad_total = bad.total_weight();
        if bad.is_empty() || bad_total <= 0.0 {
            return Err(Error::Config(format!(
                "region {b} has contamination level {eps} but no contaminant mass"
            )));
        }
        let mut mixed = Dataset::empty(sub.dim());
        for (i, x) in sub.points().enumerate() {
            mixed.push(x, sub.target(i), (1.0 - eps) * sub.weight(i))?;
        }
        for (i, x) in bad.points().enumerate() {
            mixed.push(x, bad.target(i), eps * bad.weight(i) / bad_total)?;
        }
        out.push(mixed);
    }
    Ok(out)
}

/// `2 |L|₁ Σ_b ‖w_b‖∞ (ε_b/λ_b) ‖k_b‖²∞`; weight norms default to 1.
pub fn maxbias_bound(
    loss: &LossFunction,
    kernels: &[Kernel],
    lambdas: &[f64],
    epsilons: &[f64],
    weight_sup_norms: Option<&[f64]>,
) -> Result<f64> {
    let lip = loss.lipschitz_constant()?;
    let b = kernels.len();
    if lambdas.len() != b || epsilons.len() != b || weight_sup_norms.is_some_and(|w| w.len() != b) {
        return Err(Error::Config(
            "maxbias bound needs one kernel, lambda, epsilon and weight norm per region".into(),
        ));
    }
    let mut total = 0.0;
    for i in 0..b {
        let lambda = lambdas[i];
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        check_epsilon(epsilons[i])?;
        let w = weight_sup_norms.map_or(1.0, |w| w[i]);
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::Config(format!(
                "weight sup norm must lie in [0, 1], got {w}"
            )));
        }
        let k = kernels[i].sup_norm_bound();
        total += w * epsilons[i] / lambda * k * k;
    }
    Ok(2.0 * lip * total)
}

/// `max_x |f(x) - f̃(x)|` over `grid`, a lower bound for the sup-norm distance.
pub fn empirical_maxbias<X: AsRef<[f64]>>(
    clean: &ComposedModel,
    contaminated: &ComposedModel,
    grid: &[X],
) -> Result<f64> {
    if clean.regionalization() != contaminated.regionalization() {
        return Err(Error::Domain(
            "models use different regionalizations".into(),
        ));
    }
    if clean.scheme() != contaminated.scheme() {
        return Err(Error::Domain("models use different weight schemes".into()));
    }
    let a = clean.predict_batch(grid)?;
    let b = contaminated.predict_batch(grid)?;
    Ok(a.iter()
        .zip(&b)
        .map(|(u, v)| (u - v).abs())
        .fold(0.0, f64::max))
}

const PRIMES: [u32; 10] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29];

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let base = base as u64;
    let mut scale = 1.0 / base as f64;
    let mut value = 0.0;
    while i > 0 {
        value += (i % base) as f64 * scale;
        i /= base;
        scale /= base as f64;
    }
    value
}

/// First `n` points of the Halton sequence (skipping the origin) mapped onto a box.
pub fn halton_grid(lower: &[f64], upper: &[f64], n: usize) -> Result<Vec<Vec<f64>>> {
    if lower.len() != upper.len() || lower.len() > PRIMES.len() {
        return Err(Error::Config(format!(
            "halton grid supports up to {} dimensions with matching bounds",
            PRIMES.len()
        )));
    }
    Ok((1..=n as u64)
        .map(|i| {
            lower
                .iter()
                .zip(upper)
                .zip(PRIMES)
                .map(|((l, u), p)| l + (u - l) * radical_inverse(i, p))
                .collect()
        })
        .collect())
}

fn default_trials() -> usize {
    100
}
fn default_tol() -> f64 {
    1e-3
}
fn default_clean_samples() -> usize {
    120
}
fn default_region_samples() -> usize {
    40
}
fn default_max_epsilon() -> f64 {
    0.4
}
fn default_lambda_range() -> [f64; 2] {
    [0.05, 2.0]
}
fn default_max_regions() -> usize {
    3
}
fn default_taus() -> Vec<f64> {
    vec![0.25, 0.5, 0.75]
}
fn default_grid_points() -> usize {
    2048
}

/// Parameter ranges for randomized dominance trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustnessConfig {
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Solver tolerance; the dominance check allows `2·tol` of slack.
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_clean_samples")]
    pub clean_samples: usize,
    #[serde(default = "default_region_samples")]
    pub region_samples: usize,
    #[serde(default = "default_max_epsilon")]
    pub max_epsilon: f64,
    #[serde(default = "default_lambda_range")]
    pub lambda_range: [f64; 2],
    #[serde(default = "default_max_regions")]
    pub max_regions: usize,
    #[serde(default = "default_taus")]
    pub taus: Vec<f64>,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
}

impl Default for RobustnessConfig {
    fn default() -> Self {
        Self {
            trials: default_trials(),
            tol: default_tol(),
            clean_samples: default_clean_samples(),
            region_samples: default_region_samples(),
            max_epsilon: default_max_epsilon(),
            lambda_range: default_lambda_range(),
            max_regions: default_max_regions(),
            taus: default_taus(),
            grid_points: default_grid_points(),
        }
    }
}

impl RobustnessConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.trials == 0 {
            problems.push("robustness.trials must be >= 1".to_owned());
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            problems.push(format!("robustness.tol must be positive, got {}", self.tol));
        }
        if self.clean_samples < 2 {
            problems.push("robustness.clean_samples must be >= 2".to_owned());
        }
        if self.region_samples < 5 * self.max_regions.max(1) {
            problems.push("robustness.region_samples must allow 5 points per region".to_owned());
        }
        if !(0.0..0.5).contains(&self.max_epsilon) {
            problems.push(format!(
                "robustness.max_epsilon must lie in [0, 0.5), got {}",
                self.max_epsilon
            ));
        }
        let [lo, hi] = self.lambda_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            problems.push(format!(
                "robustness.lambda_range must satisfy 0 < lo <= hi, got [{lo}, {hi}]"
            ));
        }
        if self.max_regions == 0 {
            problems.push("robustness.max_regions must be >= 1".to_owned());
        }
        if self.taus.is_empty() || self.taus.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
            problems.push("robustness.taus must be a nonempty list in (0, 1)".to_owned());
        }
        if self.grid_points == 0 {
            problems.push("robustness.grid_points must be >= 1".to_owned());
        }
        problems
    }
}

/// Outcome of one randomized trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: u64,
    pub loss: LossFunction,
    pub regions: usize,
    pub epsilons: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub bound: f64,
    pub empirical: f64,
    pub slack: f64,
    /// Largest certified solver error of the composed difference, at most `slack`.
    pub certified_error: f64,
    pub pass: bool,
    /// `Σ_b 1/λ_b`, which dominates the bound whenever `2|L|₁ ε_b ≤ 1`.
    pub inverse_lambda_sum: f64,
    pub example_pass: bool,
}

fn train_all(
    subs: &[Dataset],
    loss: LossFunction,
    kernels: &[Kernel],
    lambdas: &[f64],
    solver: &SolverConfig,
) -> Result<Vec<LocalModel>> {
    subs.iter()
        .enumerate()
        .map(|(b, s)| {
            let mut m = train_local(s, loss, kernels[b], lambdas[b], solver)?;
            m.region_index = b;
            Ok(m)
        })
        .collect()
}

fn contaminant_for(sub: &Dataset, loss: &LossFunction, rng: &mut ChaCha8Rng) -> Dataset {
    if sub.is_empty() {
        return Dataset::empty(sub.dim());
    }
    let k = rng.gen_range(1..=sub.len().min(5));
    let mut bad = Dataset::empty(sub.dim());
    for i in index::sample(rng, sub.len(), k) {
        let y = sub.target(i);
        let y = match loss {
            LossFunction::Hinge => -y,
            _ => y + 10.0,
        };
        bad.push(sub.point(i), y, 1.0 / k as f64)
            .expect("same dimension");
    }
    bad
}

/// One randomized dominance trial; the RNG stream is `(master_seed, trial)`.
pub fn run_trial(cfg: &RobustnessConfig, master_seed: u64, trial: u64) -> Result<TrialResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial);

    let loss = if rng.gen_bool(0.5) {
        LossFunction::Hinge
    } else {
        LossFunction::pinball(cfg.taus[rng.gen_range(0..cfg.taus.len())])?
    };
    let mut gen = match loss {
        LossFunction::Hinge => {
            SyntheticGenerator::classification(NoiseKind::Gaussian, rng.gen_range(0.5..1.5), 1.0)
        }
        _ => {
            let noise = if rng.gen_bool(0.5) {
                NoiseKind::Gaussian
            } else {
                NoiseKind::Cauchy
            };
            SyntheticGenerator::regression(noise, rng.gen_range(0.1..0.5))
        }
    };
    gen.dim = rng.gen_range(1..=2);

    let target = rng.gen_range(1..=cfg.max_regions);
    let overlap = if rng.gen_bool(0.5) {
        0.0
    } else {
        rng.gen_range(0.0..0.3)
    };
    let region_sample = gen.sample(cfg.region_samples, &mut rng);
    let regions = fit_regions(
        &region_sample,
        &RegionalizationSpec::voronoi(target, overlap, 5, rng.gen()),
    )?;
    let b_count = regions.region_count();

    let clean_data = gen.sample(cfg.clean_samples, &mut rng);
    let clean = regions.assign_subsamples(&clean_data)?;
    let epsilons: Vec<f64> = (0..b_count)
        .map(|_| rng.gen_range(0.0..=cfg.max_epsilon))
        .collect();
    let [lo, hi] = cfg.lambda_range;
    let lambdas: Vec<f64> = (0..b_count).map(|_| rng.gen_range(lo..=hi)).collect();
    let kernels: Vec<Kernel> = (0..b_count)
        .map(|_| Kernel::gaussian(rng.gen_range(0.3..1.0)))
        .collect::<Result<_>>()?;
    let contaminants: Vec<Dataset> = clean
        .iter()
        .map(|s| contaminant_for(s, &loss, &mut rng))
        .collect();
    let spec = ContaminationSpec {
        epsilons: epsilons.clone(),
        contaminants,
        seed: master_seed,
    };
    let dirty = contaminate(&clean, &spec, &regions)?;

    let solver = SolverConfig {
        tol: cfg.tol,
        seed: rng.gen(),
        ..SolverConfig::default()
    };
    let clean_locals = train_all(&clean, loss, &kernels, &lambdas, &solver)?;
    let dirty_locals = train_all(&dirty, loss, &kernels, &lambdas, &solver)?;
    let certified_error = clean_locals
        .iter()
        .zip(&dirty_locals)
        .map(|(a, b)| a.certified_distance() + b.certified_distance())
        .fold(0.0, f64::max);
    let (lower, upper) = regions.inflated_bounds();
    let clean_model = ComposedModel::new(
        regions.clone(),
        clean_locals,
        WeightScheme::IndicatorAverage,
    )?;
    let dirty_model = ComposedModel::new(regions, dirty_locals, WeightScheme::IndicatorAverage)?;

    let grid = halton_grid(&lower, &upper, cfg.grid_points)?;
    let empirical = empirical_maxbias(&clean_model, &dirty_model, &grid)?;
    let bound = maxbias_bound(&loss, &kernels, &lambdas, &epsilons, None)?;
    let slack = 2.0 * cfg.tol;
    let inverse_lambda_sum: f64 = lambdas.iter().map(|l| 1.0 / l).sum();
    Ok(TrialResult {
        trial,
        loss,
        regions: b_count,
        epsilons,
        lambdas,
        bound,
        empirical,
        slack,
        certified_error,
        pass: empirical <= bound + slack,
        inverse_lambda_sum,
        example_pass: bound <= inverse_lambda_sum,
    })
}

/// All trials, in trial order regardless of how they were scheduled.
pub fn run_trials(cfg: &RobustnessConfig, master_seed: u64) -> Result<Vec<TrialResult>> {
    let problems = cfg.validate();
    if !problems.is_empty() {
        return Err(Error::Validation(problems));
    }
    (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| run_trial(cfg, master_seed, t))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_regions() -> (Regionalization, Vec<Dataset>) {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 19.0]).collect();
        let ys: Vec<f64> = (0..20)
            .map(|i| if i % 3 == 0 { 1.0 } else { -1.0 })
            .collect();
        let data = Dataset::from_rows(&rows, &ys).unwrap();
        let reg = fit_regions(&data, &RegionalizationSpec::voronoi(2, 0.2, 3, 4)).unwrap();
        let subs = reg.assign_subsamples(&data).unwrap();
        (reg, subs)
    }

    fn flipped(sub: &Dataset) -> Dataset {
        let mut bad = Dataset::empty(1);
        for i in 0..2 {
            bad.push(sub.point(i), -sub.target(i), 1.0).unwrap();
        }
        bad
    }

    #[test]
    fn mixture_weights() {
        let (reg, clean) = two_regions();
        let bad: Vec<Dataset> = clean.iter().map(flipped).collect();
        let spec = ContaminationSpec {
            epsilons: vec![0.1, 0.0],
            contaminants: bad,
            seed: 0,
        };
        let out = contaminate(&clean, &spec, &reg).unwrap();
        assert_eq!(out[1], clean[1]);
        let n = clean[0].len();
        assert_eq!(out[0].len(), n + 2);
        for i in 0..n {
            assert_eq!(out[0].weight(i), 0.9 * clean[0].weight(i));
        }
        let bad_mass: f64 = (n..n + 2).map(|i| out[0].weight(i)).sum();
        assert!((bad_mass - 0.1).abs() < 1e-15);
        for d in &out {
            assert!((d.total_weight() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn contamination_errors() {
        let (reg, clean) = two_regions();
        let bad: Vec<Dataset> = clean.iter().map(flipped).collect();
        let mut spec = ContaminationSpec {
            epsilons: vec![0.5, 0.0],
            contaminants: bad.clone(),
            seed: 0,
        };
        assert!(matches!(
            contaminate(&clean, &spec, &reg),
            Err(Error::Config(_))
        ));
        spec.epsilons = vec![0.1, 0.1];
        // region 1's contaminant placed in region 0
        spec.contaminants = vec![bad[0].clone(), bad[0].clone()];
        let far = Dataset::from_rows(&[vec![0.0]], &[1.0]).unwrap();
        if !reg.membership(&[0.0]).unwrap().contains(&1) {
            spec.contaminants[1] = far;
            assert!(matches!(
                contaminate(&clean, &spec, &reg),
                Err(Error::Domain(_))
            ));
        }
        spec.contaminants = vec![Dataset::empty(1), bad[1].clone()];
        assert!(matches!(
            contaminate(&clean, &spec, &reg),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn bound_values() {
        let g = Kernel::gaussian(1.0).unwrap();
        let hinge = LossFunction::Hinge;
        let b = maxbias_bound(&hinge, &[g, g], &[0.5, 1.0], &[0.1, 0.2], None).unwrap();
        assert!((b - 0.8).abs() < 1e-15);
        assert_eq!(
            maxbias_bound(&hinge, &[g, g], &[0.5, 1.0], &[0.0, 0.0], None).unwrap(),
            0.0
        );
        let half =
            maxbias_bound(&hinge, &[g, g], &[0.5, 1.0], &[0.1, 0.2], Some(&[0.5, 0.5])).unwrap();
        assert!((half - 0.4).abs() < 1e-15);
        assert!(matches!(
            maxbias_bound(&LossFunction::LeastSquares, &[g], &[1.0], &[0.1], None),
            Err(Error::Unsupported(_))
        ));
        assert!(matches!(
            maxbias_bound(&hinge, &[g], &[0.0], &[0.1], None),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn identical_models_have_no_bias() {
        let (reg, clean) = two_regions();
        let k = Kernel::gaussian(0.5).unwrap();
        let solver = SolverConfig::with_tol(1e-4);
        let locals = train_all(&clean, LossFunction::Hinge, &[k, k], &[0.3, 0.3], &solver).unwrap();
        let m = ComposedModel::new(reg.clone(), locals, WeightScheme::IndicatorAverage).unwrap();
        let grid = halton_grid(&[0.0], &[1.0], 256).unwrap();
        assert_eq!(empirical_maxbias(&m, &m, &grid).unwrap(), 0.0);

        let other = SolverConfig { seed: 99, ..solver };
        let locals = train_all(&clean, LossFunction::Hinge, &[k, k], &[0.3, 0.3], &other).unwrap();
        let m2 = ComposedModel::new(reg, locals, WeightScheme::IndicatorAverage).unwrap();
        assert!(empirical_maxbias(&m, &m2, &grid).unwrap() <= 2e-4);

        let (reg3, clean3) = {
            let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 19.0]).collect();
            let data = Dataset::from_rows(&rows, &[1.0; 20]).unwrap();
            let r = fit_regions(&data, &RegionalizationSpec::voronoi(1, 0.0, 1, 0)).unwrap();
            let s = r.assign_subsamples(&data).unwrap();
            (r, s)
        };
        let locals = train_all(&clean3, LossFunction::Hinge, &[k], &[0.3], &solver).unwrap();
        let m3 = ComposedModel::new(reg3, locals, WeightScheme::IndicatorAverage).unwrap();
        assert!(matches!(
            empirical_maxbias(&m, &m3, &grid),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn halton_points() {
        let g = halton_grid(&[0.0, -1.0], &[1.0, 1.0], 4).unwrap();
        assert_eq!(g[0], vec![0.5, -1.0 + 2.0 / 3.0]);
        assert_eq!(g[1], vec![0.25, -1.0 + 4.0 / 3.0]);
        assert_eq!(g[2], vec![0.75, -1.0 + 2.0 / 9.0]);
        assert!(halton_grid(&[0.0], &[1.0], 2048)
            .unwrap()
            .iter()
            .all(|p| (0.0..1.0).contains(&p[0])));
    }

    #[test]
    fn trials_are_reproducible_and_pass() {
        let cfg = RobustnessConfig {
            trials: 6,
            ..RobustnessConfig::default()
        };
        let a = run_trials(&cfg, 11).unwrap();
        let b = run_trials(&cfg, 11).unwrap();
        assert_eq!(a, b);
        for r in &a {
            assert!(r.pass, "{r:?}");
            assert!(r.example_pass);
            assert!(r.certified_error <= r.slack);
        }
        assert_eq!(run_trial(&cfg, 11, 3).unwrap(), a[3]);
    }

    #[test]
    fn zero_contamination_trial() {
        let cfg = RobustnessConfig {
            trials: 3,
            max_epsilon: 0.0,
            ..RobustnessConfig::default()
        };
        for r in run_trials(&cfg, 5).unwrap() {
            assert_eq!(r.bound, 0.0);
            assert!(r.empirical <= r.slack);
            assert!(r.pass);
        }
    }

    proptest! {
        #[test]
        fn bound_monotonicity(
            e1 in 0.0f64..0.49, e2 in 0.0f64..0.49, de in 0.0f64..0.2,
            l1 in 0.01f64..5.0, l2 in 0.01f64..5.0, dl in 0.0f64..3.0,
            tau in 0.05f64..0.95,
        ) {
            let g = Kernel::gaussian(1.0).unwrap();
            let loss = LossFunction::pinball(tau).unwrap();
            let base = maxbias_bound(&loss, &[g, g], &[l1, l2], &[e1, e2], None).unwrap();
            let more_eps = maxbias_bound(&loss, &[g, g], &[l1, l2], &[(e1 + de).min(0.499), e2], None).unwrap();
            let more_lambda = maxbias_bound(&loss, &[g, g], &[l1 + dl, l2], &[e1, e2], None).unwrap();
            prop_assert!(more_eps >= base);
            prop_assert!(more_lambda <= base);
        }

        #[test]
        fn mixtures_sum_to_one(e0 in 0.0f64..0.499, e1 in 0.0f64..0.499) {
            let (reg, clean) = two_regions();
            let bad: Vec<Dataset> = clean.iter().map(flipped).collect();
            let spec = ContaminationSpec { epsilons: vec![e0, e1], contaminants: bad, seed: 0 };
            for d in contaminate(&clean, &spec, &reg).unwrap() {
                prop_assert!((d.total_weight() - 1.0).abs() < 1e-12);
            }
        }
    }
}
