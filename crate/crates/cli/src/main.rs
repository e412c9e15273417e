use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use localsvm::experiments::{self, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "localsvm",
    version,
    about = "Localized SVMs: train, predict, evaluate and run experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to the configured one, then the current directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    /// Exit nonzero when a check fails.
    #[arg(long)]
    strict: bool,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)
            .with_context(|| format!("loading config {}", self.config.display()))?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }

    fn out_dir(&self, cfg: &ExperimentConfig) -> PathBuf {
        self.out
            .clone()
            .or_else(|| cfg.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("."))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Split, fit regions, train local models and write model.json and train_report.csv.
    Train(Common),
    /// Predict for every row of an input CSV and write predictions.csv.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// CSV with header x1,...,xd (a trailing y column is ignored).
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Risk of a saved model on the configured data; writes eval.csv.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
    },
    /// Excess shifted risk across sample sizes; writes consistency.csv.
    Consistency(Common),
    /// Randomized contamination trials against the maxbias bound; writes robustness.csv.
    Robustness(Common),
}

fn failed(strict: bool) -> ExitCode {
    if strict {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    }
}

fn train(args: &Common) -> Result<ExitCode> {
    let cfg = args.load()?;
    let out = args.out_dir(&cfg);
    let outcome = experiments::with_jobs(args.jobs, || experiments::train(&cfg))??;
    experiments::write_model(&out.join("model.json"), &outcome.model)?;
    experiments::write_csv(
        &out.join("train_report.csv"),
        &experiments::train_report_rows(&outcome, &cfg),
    )?;
    for r in &outcome.regions {
        println!(
            "region {}: n_b={} lambda={} objective={} converged={}",
            r.region, r.n_b, r.lambda, r.objective, r.converged
        );
    }
    println!("wrote {}", out.join("model.json").display());
    Ok(if outcome.regions.iter().all(|r| r.converged) {
        ExitCode::SUCCESS
    } else {
        eprintln!("some regional solvers did not reach the tolerance");
        failed(args.strict)
    })
}

fn predict(model: &Path, input: &Path, out: &Path) -> Result<ExitCode> {
    let model = experiments::load_model(model)
        .with_context(|| format!("loading model {}", model.display()))?;
    let path = out.join("predictions.csv");
    let n = experiments::predict_file(&model, input, &path)
        .with_context(|| format!("predicting for {}", input.display()))?;
    println!("wrote {n} predictions to {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn eval(args: &Common, model: &Path) -> Result<ExitCode> {
    let cfg = args.load()?;
    let out = args.out_dir(&cfg);
    let model = experiments::load_model(model)
        .with_context(|| format!("loading model {}", model.display()))?;
    let rows = experiments::with_jobs(args.jobs, || experiments::evaluate(&model, &cfg))??;
    experiments::write_csv(&out.join("eval.csv"), &rows)?;
    for r in &rows {
        println!("{}: n={} risk={}", r.scope, r.n, r.risk);
    }
    Ok(ExitCode::SUCCESS)
}

fn consistency(args: &Common) -> Result<ExitCode> {
    let cfg = args.load()?;
    let out = args.out_dir(&cfg);
    let rows = experiments::with_jobs(args.jobs, || experiments::consistency(&cfg))??;
    experiments::write_csv(&out.join("consistency.csv"), &rows)?;
    for r in rows.iter().filter(|r| r.repetition == "median") {
        println!(
            "n={}: median excess {} (stderr {})",
            r.n, r.excess, r.stderr
        );
    }
    let verdict = experiments::trend_check(&rows)?;
    println!(
        "trend: finite={} halved={} below {}={}",
        verdict.all_finite,
        verdict.halved,
        experiments::TREND_ABSOLUTE,
        verdict.small
    );
    Ok(if verdict.pass() {
        ExitCode::SUCCESS
    } else {
        failed(args.strict)
    })
}

fn robustness(args: &Common) -> Result<ExitCode> {
    let cfg = args.load()?;
    let out = args.out_dir(&cfg);
    let (trials, rows) = experiments::with_jobs(args.jobs, || experiments::robustness(&cfg))??;
    experiments::write_csv(&out.join("robustness.csv"), &rows)?;
    let violations = trials.iter().filter(|t| !t.pass).count();
    let example = trials.iter().filter(|t| !t.example_pass).count();
    println!(
        "{} trials, {violations} dominance violations, {example} bounds above the inverse-lambda sum",
        trials.len()
    );
    Ok(if violations == 0 && example == 0 {
        ExitCode::SUCCESS
    } else {
        failed(args.strict)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(args) => train(args),
        Command::Predict { model, input, out } => predict(model, input, out),
        Command::Eval { common, model } => eval(common, model),
        Command::Consistency(args) => consistency(args),
        Command::Robustness(args) => robustness(args),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
