//! Configuration, the split/fit/train/compose pipeline, and the consistency
//! and robustness experiments with their CSV reports.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::composer::{ComposedModel, WeightScheme};
use crate::data::{load_labeled_csv, load_points_csv, Dataset};
use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::losses::LossFunction;
use crate::regionalization::{fit_regions, RegionalizationSpec};
use crate::risk::{
    empirical_risk, excess_risk, regional_risk, SyntheticGenerator, MIN_ORACLE_SAMPLES,
};
use crate::robustness::{run_trials, RobustnessConfig, TrialResult};
use crate::solver::{train_local, SolverConfig};

/// Where training and evaluation data come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Generator(SyntheticGenerator),
    /// A CSV file with header `x1,…,xd,y`.
    Csv(PathBuf),
}

/// `λ(n) = c · n^(-p)`, applied per region to the regional sample size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaSchedule {
    pub c: f64,
    pub p: f64,
}

impl Default for LambdaSchedule {
    fn default() -> Self {
        Self { c: 1.0, p: 0.25 }
    }
}

impl LambdaSchedule {
    pub fn lambda(&self, n: usize) -> f64 {
        self.c * (n.max(1) as f64).powf(-self.p)
    }
}

fn default_experiment_id() -> String {
    "experiment".to_owned()
}
fn default_n() -> usize {
    1000
}
fn default_region_fraction() -> f64 {
    0.2
}
fn default_sample_sizes() -> Vec<usize> {
    vec![200, 800, 3200]
}
fn default_repetitions() -> usize {
    10
}
fn default_mc_samples() -> usize {
    100_000
}
fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_experiment_id")]
    pub experiment_id: String,
    pub data: DataSource,
    /// Total sample size drawn from a generator by `train`.
    #[serde(default = "default_n")]
    pub n: usize,
    pub regionalization: RegionalizationSpec,
    pub kernel: Kernel,
    pub loss: LossFunction,
    #[serde(default)]
    pub lambda_schedule: LambdaSchedule,
    /// Share of the data reserved for fitting the regions.
    #[serde(default = "default_region_fraction")]
    pub region_fraction: f64,
    #[serde(default = "default_weights")]
    pub weights: WeightScheme,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Training sizes `n = |D_n|` for the consistency experiment.
    #[serde(default = "default_sample_sizes")]
    pub sample_sizes: Vec<usize>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub seed: u64,
    /// Monte Carlo sample size for population risks.
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
    /// Evaluate the shifted loss `L*` rather than `L`.
    #[serde(default = "default_true")]
    pub shifted: bool,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub robustness: RobustnessConfig,
}

fn default_weights() -> WeightScheme {
    WeightScheme::IndicatorAverage
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Checks every field and reports all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let LambdaSchedule { c, p } = self.lambda_schedule;
        if !(c > 0.0 && c.is_finite()) {
            problems.push(format!("lambda_schedule.c must be positive, got {c}"));
        }
        if !(p > 0.0 && p < 0.5) {
            problems.push(format!("lambda_schedule.p must lie in (0, 0.5), got {p}"));
        }
        if !(self.region_fraction > 0.0 && self.region_fraction < 1.0) {
            problems.push(format!(
                "region_fraction must lie in (0, 1), got {}",
                self.region_fraction
            ));
        }
        if self.n < 2 {
            problems.push("n must be >= 2".to_owned());
        }
        if self.sample_sizes.is_empty() {
            problems.push("sample_sizes must not be empty".to_owned());
        }
        if self.sample_sizes.contains(&0) {
            problems.push("sample_sizes must be positive".to_owned());
        }
        if self.sample_sizes.windows(2).any(|w| w[0] >= w[1]) {
            problems.push("sample_sizes must be strictly increasing".to_owned());
        }
        if self.repetitions == 0 {
            problems.push("repetitions must be >= 1".to_owned());
        }
        if self.mc_samples < MIN_ORACLE_SAMPLES {
            problems.push(format!(
                "mc_samples must be >= {MIN_ORACLE_SAMPLES}, got {}",
                self.mc_samples
            ));
        }
        if let WeightScheme::ThetaWeighted { thetas } = &self.weights {
            if thetas.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
                problems.push("weights.thetas must be positive".to_owned());
            }
        }
        if let DataSource::Generator(gen) = &self.data {
            problems.extend(gen.validate());
        }
        problems.extend(self.regionalization.validate());
        problems.extend(self.solver.validate());
        problems.extend(self.robustness.validate());
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(canonical.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    fn generator(&self) -> Result<&SyntheticGenerator> {
        match &self.data {
            DataSource::Generator(g) => Ok(g),
            DataSource::Csv(_) => Err(Error::Config(
                "this command needs a generator data source".into(),
            )),
        }
    }

    /// The training data: a generator draw of `n` points, or the CSV file.
    pub fn load_data(&self) -> Result<Dataset> {
        match &self.data {
            DataSource::Generator(g) => {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, 0));
                Ok(g.sample(self.n, &mut rng))
            }
            DataSource::Csv(path) => load_labeled_csv(path),
        }
    }
}

/// Independent child seed for `stream`.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng.gen()
}

/// Seeded random split into `r` region-fitting indices and the rest, each sorted.
pub fn split_indices(n: usize, r: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut region: Vec<usize> = idx[..r.min(n)].to_vec();
    let mut train: Vec<usize> = idx[r.min(n)..].to_vec();
    region.sort_unstable();
    train.sort_unstable();
    (region, train)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub region: usize,
    pub n_b: usize,
    pub lambda: f64,
    pub objective: f64,
    pub shifted_objective: f64,
    pub duality_gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: ComposedModel,
    pub regions: Vec<RegionReport>,
    pub region_indices: Vec<usize>,
    pub train_indices: Vec<usize>,
}

/// Splits `data`, fits the regions on `r` points, trains one model per region
/// on the rest with `λ_b = c · n_b^(-p)`, and composes them.
pub fn train_pipeline(
    data: &Dataset,
    cfg: &ExperimentConfig,
    r: usize,
    split_seed: u64,
) -> Result<TrainOutcome> {
    if r == 0 || r >= data.len() {
        return Err(Error::Config(format!(
            "region sample size {r} must lie strictly between 0 and the sample size {}",
            data.len()
        )));
    }
    let (region_indices, train_indices) = split_indices(data.len(), r, split_seed);
    let regions = fit_regions(&data.subset(&region_indices), &cfg.regionalization)?;
    let subsamples = regions.assign_subsamples(&data.subset(&train_indices))?;
    let trained: Vec<_> = subsamples
        .par_iter()
        .enumerate()
        .map(|(b, sub)| {
            let lambda = cfg.lambda_schedule.lambda(sub.len());
            let mut m = train_local(sub, cfg.loss, cfg.kernel, lambda, &cfg.solver)?;
            m.region_index = b;
            let report = RegionReport {
                region: b,
                n_b: sub.len(),
                lambda,
                objective: m.objective,
                shifted_objective: m.shifted_objective,
                duality_gap: m.duality_gap,
                iterations: m.iterations,
                converged: m.converged,
            };
            Ok((m, report))
        })
        .collect::<Result<_>>()?;
    let (locals, reports): (Vec<_>, Vec<_>) = trained.into_iter().unzip();
    let model = ComposedModel::new(regions, locals, cfg.weights.clone())?;
    Ok(TrainOutcome {
        model,
        regions: reports,
        region_indices,
        train_indices,
    })
}

/// Trains on the configured data with `r = round(N · region_fraction)`.
pub fn train(cfg: &ExperimentConfig) -> Result<TrainOutcome> {
    let data = cfg.load_data()?;
    let r = (data.len() as f64 * cfg.region_fraction).round() as usize;
    train_pipeline(&data, cfg, r, derive_seed(cfg.seed, 1))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReportRow {
    pub region: usize,
    pub n_b: usize,
    pub lambda: f64,
    pub objective: f64,
    pub shifted_objective: f64,
    pub duality_gap: f64,
    pub iterations: usize,
    pub converged: bool,
    pub seed: u64,
    pub config_hash: String,
}

pub fn train_report_rows(outcome: &TrainOutcome, cfg: &ExperimentConfig) -> Vec<TrainReportRow> {
    let hash = cfg.hash();
    outcome
        .regions
        .iter()
        .map(|r| TrainReportRow {
            region: r.region,
            n_b: r.n_b,
            lambda: r.lambda,
            objective: r.objective,
            shifted_objective: r.shifted_objective,
            duality_gap: r.duality_gap,
            iterations: r.iterations,
            converged: r.converged,
            seed: cfg.seed,
            config_hash: hash.clone(),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    /// `all`, `region_<b>` or `population`.
    pub scope: String,
    pub n: usize,
    pub risk: f64,
    pub bayes: Option<f64>,
    pub excess: Option<f64>,
    pub stderr: Option<f64>,
    pub shifted: bool,
    pub seed: u64,
    pub config_hash: String,
}

/// Risk of `model` on the configured data: empirical and per-region risks for
/// a CSV source; a Monte Carlo population estimate for a generator.
pub fn evaluate(model: &ComposedModel, cfg: &ExperimentConfig) -> Result<Vec<EvalRow>> {
    let hash = cfg.hash();
    let row = |scope: String, n, risk, bayes, excess, stderr| EvalRow {
        scope,
        n,
        risk,
        bayes,
        excess,
        stderr,
        shifted: cfg.shifted,
        seed: cfg.seed,
        config_hash: hash.clone(),
    };
    match &cfg.data {
        DataSource::Csv(path) => {
            let data = load_labeled_csv(path)?;
            let mut rows = vec![row(
                "all".into(),
                data.len(),
                empirical_risk(model, &data, &cfg.loss, cfg.shifted)?,
                None,
                None,
                None,
            )];
            let counts = model.regionalization().counts(&data)?;
            for (b, &count) in counts.iter().enumerate() {
                if let Some(risk) = regional_risk(
                    model,
                    &data,
                    model.regionalization(),
                    &cfg.loss,
                    b,
                    cfg.shifted,
                )? {
                    rows.push(row(format!("region_{b}"), count, risk, None, None, None));
                }
            }
            Ok(rows)
        }
        DataSource::Generator(gen) => {
            if !cfg.shifted && gen.is_heavy_tailed() {
                return Err(Error::Unsupported(
                    "unshifted risk is undefined under heavy-tailed (cauchy) noise; use the shifted loss".into(),
                ));
            }
            let est = excess_risk(
                model,
                gen,
                &cfg.loss,
                cfg.mc_samples,
                derive_seed(cfg.seed, 2),
            )?;
            let (risk, bayes) = if cfg.shifted {
                (est.model.mean, est.bayes.mean)
            } else {
                let offset = zero_risk(gen, &cfg.loss, cfg.mc_samples, derive_seed(cfg.seed, 2));
                (est.model.mean + offset, est.bayes.mean + offset)
            };
            Ok(vec![row(
                "population".into(),
                cfg.mc_samples,
                risk,
                Some(bayes),
                Some(est.excess.mean),
                Some(est.excess.stderr),
            )])
        }
    }
}

/// `(1/m) Σ L(y_i, 0)` on the same draw `excess_risk` uses for this seed.
fn zero_risk(gen: &SyntheticGenerator, loss: &LossFunction, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = gen.sample(samples, &mut rng);
    data.targets()
        .iter()
        .map(|&y| loss.eval(y, 0.0))
        .sum::<f64>()
        / samples as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRow {
    pub experiment_id: String,
    pub n: usize,
    /// Repetition index, or `median` on summary rows.
    pub repetition: String,
    /// `c · n^(-p)` at the total training size.
    pub lambda: f64,
    /// Regional `λ_b`, semicolon separated.
    pub lambda_regions: String,
    pub region_count: usize,
    pub risk: f64,
    pub bayes: f64,
    pub excess: f64,
    pub stderr: f64,
    pub seed: u64,
    pub config_hash: String,
}

/// Result of the decreasing-excess check.
#[derive(Clone, Debug, PartialEq)]
pub struct TrendVerdict {
    pub first_median: f64,
    pub first_stderr: f64,
    pub last_median: f64,
    pub last_stderr: f64,
    pub all_finite: bool,
    pub halved: bool,
    pub small: bool,
}

impl TrendVerdict {
    pub fn pass(&self) -> bool {
        self.all_finite && self.halved && self.small
    }
}

/// Threshold for the absolute excess at the largest sample size.
pub const TREND_ABSOLUTE: f64 = 0.1;

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let m = values.len();
    if m % 2 == 1 {
        values[m / 2]
    } else {
        0.5 * (values[m / 2 - 1] + values[m / 2])
    }
}

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(f64::to_string)
        .collect::<Vec<_>>()
        .join(";")
}

/// One repetition at one sample size: the region sample is on top of `n`
/// training points, so `|D_n| = n` exactly.
fn consistency_run(
    cfg: &ExperimentConfig,
    gen: &SyntheticGenerator,
    size_index: usize,
    rep: usize,
    hash: &str,
) -> Result<ConsistencyRow> {
    let n = cfg.sample_sizes[size_index];
    let f = cfg.region_fraction;
    let r = ((n as f64 * f / (1.0 - f)).round() as usize).max(1);
    let seed = derive_seed(cfg.seed, 1000 + (size_index as u64) * 100_000 + rep as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0));
    let data = gen.sample(n + r, &mut rng);
    let outcome = train_pipeline(&data, cfg, r, derive_seed(seed, 1))?;
    let est = excess_risk(
        &outcome.model,
        gen,
        &cfg.loss,
        cfg.mc_samples,
        derive_seed(seed, 2),
    )?;
    let lambdas: Vec<f64> = outcome.regions.iter().map(|r| r.lambda).collect();
    Ok(ConsistencyRow {
        experiment_id: cfg.experiment_id.clone(),
        n,
        repetition: rep.to_string(),
        lambda: cfg.lambda_schedule.lambda(n),
        lambda_regions: join(&lambdas),
        region_count: outcome.model.region_count(),
        risk: est.model.mean,
        bayes: est.bayes.mean,
        excess: est.excess.mean,
        stderr: est.excess.stderr,
        seed,
        config_hash: hash.to_owned(),
    })
}

/// Excess shifted risk across sample sizes and repetitions, followed by one
/// `median` row per sample size.
pub fn consistency(cfg: &ExperimentConfig) -> Result<Vec<ConsistencyRow>> {
    let gen = cfg.generator()?;
    if !cfg.shifted && gen.is_heavy_tailed() {
        return Err(Error::Unsupported(
            "unshifted risk is undefined under heavy-tailed (cauchy) noise; use the shifted loss"
                .into(),
        ));
    }
    let hash = cfg.hash();
    let jobs: Vec<(usize, usize)> = (0..cfg.sample_sizes.len())
        .flat_map(|s| (0..cfg.repetitions).map(move |r| (s, r)))
        .collect();
    let mut rows: Vec<ConsistencyRow> = jobs
        .par_iter()
        .map(|&(s, r)| consistency_run(cfg, gen, s, r, &hash))
        .collect::<Result<_>>()?;
    for &n in &cfg.sample_sizes {
        let group: Vec<&ConsistencyRow> = rows.iter().filter(|r| r.n == n).collect();
        let mut risk: Vec<f64> = group.iter().map(|r| r.risk).collect();
        let mut bayes: Vec<f64> = group.iter().map(|r| r.bayes).collect();
        let mut excess: Vec<f64> = group.iter().map(|r| r.excess).collect();
        let mut stderr: Vec<f64> = group.iter().map(|r| r.stderr).collect();
        let mut region_count: Vec<f64> = group.iter().map(|r| r.region_count as f64).collect();
        let summary = ConsistencyRow {
            experiment_id: cfg.experiment_id.clone(),
            n,
            repetition: "median".to_owned(),
            lambda: cfg.lambda_schedule.lambda(n),
            lambda_regions: String::new(),
            region_count: median(&mut region_count).round() as usize,
            risk: median(&mut risk),
            bayes: median(&mut bayes),
            excess: median(&mut excess),
            stderr: median(&mut stderr),
            seed: cfg.seed,
            config_hash: hash.clone(),
        };
        rows.push(summary);
    }
    Ok(rows)
}

/// The median excess at the largest size, widened by three standard errors,
/// must be below half the smallest size's median narrowed by three standard
/// errors, and below [`TREND_ABSOLUTE`].
pub fn trend_check(rows: &[ConsistencyRow]) -> Result<TrendVerdict> {
    let summaries: Vec<&ConsistencyRow> =
        rows.iter().filter(|r| r.repetition == "median").collect();
    let (first, last) = match (summaries.first(), summaries.last()) {
        (Some(a), Some(b)) if summaries.len() >= 2 => (*a, *b),
        _ => {
            return Err(Error::Domain(
                "trend check needs summaries for at least two sample sizes".into(),
            ))
        }
    };
    let all_finite = rows.iter().all(|r| {
        r.risk.is_finite() && r.bayes.is_finite() && r.excess.is_finite() && r.stderr.is_finite()
    });
    let upper = last.excess + 3.0 * last.stderr;
    Ok(TrendVerdict {
        first_median: first.excess,
        first_stderr: first.stderr,
        last_median: last.excess,
        last_stderr: last.stderr,
        all_finite,
        halved: upper < 0.5 * (first.excess - 3.0 * first.stderr),
        small: upper < TREND_ABSOLUTE,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub trial: u64,
    pub loss: String,
    #[serde(rename = "B")]
    pub regions: usize,
    pub epsilons: String,
    pub lambdas: String,
    pub bound: f64,
    pub empirical: f64,
    pub slack: f64,
    pub pass: bool,
    pub certified_error: f64,
    pub inverse_lambda_sum: f64,
    pub example_pass: bool,
    pub grid: String,
    pub seed: u64,
    pub config_hash: String,
}

pub fn robustness(cfg: &ExperimentConfig) -> Result<(Vec<TrialResult>, Vec<RobustnessRow>)> {
    let trials = run_trials(&cfg.robustness, cfg.seed)?;
    let hash = cfg.hash();
    let grid = format!(
        "halton:{}:inflated_bounding_box",
        cfg.robustness.grid_points
    );
    let rows = trials
        .iter()
        .map(|t| RobustnessRow {
            trial: t.trial,
            loss: t.loss.to_string(),
            regions: t.regions,
            epsilons: join(&t.epsilons),
            lambdas: join(&t.lambdas),
            bound: t.bound,
            empirical: t.empirical,
            slack: t.slack,
            pass: t.pass,
            certified_error: t.certified_error,
            inverse_lambda_sum: t.inverse_lambda_sum,
            example_pass: t.example_pass,
            grid: grid.clone(),
            seed: cfg.seed,
            config_hash: hash.clone(),
        })
        .collect();
    Ok((trials, rows))
}

/// Predictions for the points in `input`, written as `x1,…,xd,prediction`.
pub fn predict_file(model: &ComposedModel, input: &Path, output: &Path) -> Result<usize> {
    let (dim, rows) = load_points_csv(input)?;
    if dim != model.dim() {
        return Err(Error::Dimension {
            index: 0,
            expected: model.dim(),
            found: dim,
        });
    }
    let predictions = model.predict_batch(&rows)?;
    let mut wtr = csv::Writer::from_writer(create(output)?);
    let mut header: Vec<String> = (1..=model.dim()).map(|j| format!("x{j}")).collect();
    header.push("prediction".into());
    wtr.write_record(&header)?;
    for (x, p) in rows.iter().zip(&predictions) {
        let mut rec: Vec<String> = x.iter().map(f64::to_string).collect();
        rec.push(p.to_string());
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(predictions.len())
}

fn create(path: &Path) -> Result<fs::File> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    Ok(fs::File::create(path)?)
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(create(path)?);
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_model(path: &Path, model: &ComposedModel) -> Result<()> {
    let mut file = create(path)?;
    file.write_all(model.to_json()?.as_bytes())?;
    file.write_all(b"\n")?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ComposedModel> {
    ComposedModel::from_json(&fs::read_to_string(path)?)
}

/// Runs `f` on a pool of `jobs` threads, or on the global pool when `None`.
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(0) => Err(Error::Config("--jobs must be >= 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}
