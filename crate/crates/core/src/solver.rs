//! Regional kernel machines: minimizers of
//!
//! ```text
//!     Σ_i w_i L(y_i, f(x_i)) + λ ‖f‖²_H
//! ```
//!
//! over the RKHS of a bounded kernel, for sample weights summing to one.
//!
//! The problem is solved in its dual. Writing each loss as a maximum of affine
//! pieces, `L(y, t) = max_{v ∈ [lo, hi]} v (y - t) - c|v| - q v²`, the minimizer
//! has the representer form `f = (2λ)⁻¹ Σ_i β_i k(·, x_i)` and the dual
//!
//! ```text
//!     D(β) = Σ_i [β_i y_i - c|β_i| - q β_i² / w_i] - (4λ)⁻¹ βᵀ G β,
//!     β_i ∈ [w_i lo_i, w_i hi_i],
//! ```
//!
//! is a concave box-constrained quadratic. Exact coordinate maximization in a
//! seeded random order drives it up; each coordinate step is closed form. The
//! duality gap `P(β) - D(β)` is accumulated from per-point Fenchel–Young terms,
//! each nonnegative, and bounds the primal suboptimality. Because the primal is
//! `2λ`-strongly convex in `f`, a gap `g` certifies `‖f - f*‖_H ≤ √(g/λ)`, and
//! with `‖k‖∞ = 1` the same bound holds in sup norm. The solver stops once that
//! certified distance is at most `tol`.
//!
//! Minimizing with `L` or with the shifted loss `L*` gives the same function:
//! the two objectives differ by the constant `Σ_i w_i L(y_i, 0)`. The solver
//! works with `L` and reports both objective values.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernels::{Kernel, KernelExpansion};
use crate::losses::LossFunction;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Hard cap on coordinate-ascent epochs.
    pub max_iters: usize,
    /// Target bound on the RKHS (and sup-norm) distance to the exact minimizer.
    pub tol: f64,
    /// Epochs without progress in either the dual objective or the duality gap before giving up.
    pub window: usize,
    /// Seeds the coordinate order.
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 50_000,
            tol: 1e-5,
            window: 200,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            problems.push(format!("solver.tol must be positive, got {}", self.tol));
        }
        if self.window == 0 {
            problems.push("solver.window must be >= 1".to_owned());
        }
        if self.max_iters < self.window {
            problems.push(format!(
                "solver.max_iters ({}) must be >= solver.window ({})",
                self.max_iters, self.window
            ));
        }
        problems
    }
}

/// One trained regional predictor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalModel {
    pub region_index: usize,
    pub lambda: f64,
    pub loss: LossFunction,
    pub expansion: KernelExpansion,
    /// `Σ w_i L(y_i, f(x_i)) + λ‖f‖²_H` on the training subsample.
    pub objective: f64,
    /// Same with `L*` in place of `L`.
    pub shifted_objective: f64,
    /// Upper bound on `objective - min objective`.
    pub duality_gap: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Trained on an empty subsample; the expansion is the zero function.
    pub empty: bool,
}

impl LocalModel {
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.expansion.eval(x)
    }

    /// Certified bound on `‖f - f*‖_H`, hence on the sup-norm distance too.
    pub fn certified_distance(&self) -> f64 {
        (self.duality_gap.max(0.0) / self.lambda).sqrt()
    }

    pub fn rkhs_norm(&self) -> f64 {
        self.expansion.rkhs_norm()
    }
}

/// Diagnostics of one solve.
#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    /// Best primal objective after each epoch; nonincreasing.
    pub best_objective_history: Vec<f64>,
    pub iterations: usize,
    pub duality_gap: f64,
    pub converged: bool,
}

/// Dual box and penalty of one sample point.
#[derive(Clone, Copy, Debug)]
struct DualPiece {
    lo: f64,
    hi: f64,
    l1: f64,
    /// Coefficient of `β²` in the dual penalty (`q / w`).
    quad: f64,
}

fn dual_piece(loss: &LossFunction, y: f64, w: f64) -> DualPiece {
    match *loss {
        LossFunction::Hinge => {
            let (lo, hi) = if y > 0.0 { (0.0, w) } else { (-w, 0.0) };
            DualPiece {
                lo,
                hi,
                l1: 0.0,
                quad: 0.0,
            }
        }
        LossFunction::Pinball { tau } => DualPiece {
            lo: w * (tau - 1.0),
            hi: w * tau,
            l1: 0.0,
            quad: 0.0,
        },
        LossFunction::EpsInsensitive { eps } => DualPiece {
            lo: -w,
            hi: w,
            l1: eps,
            quad: 0.0,
        },
        LossFunction::LeastSquares => DualPiece {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
            l1: 0.0,
            quad: 0.25 / w,
        },
    }
}

/// `w L(y, f) - [β (y - f) - c|β| - q β²/w] ≥ 0`, arranged as a sum of
/// nonnegative parts so the total gap keeps full relative precision.
fn gap_term(loss: &LossFunction, y: f64, w: f64, beta: f64, f: f64) -> f64 {
    match *loss {
        LossFunction::Hinge => {
            let m = 1.0 - y * f;
            let u = beta * y;
            if m > 0.0 {
                (w - u) * m
            } else {
                u * (-m)
            }
        }
        LossFunction::Pinball { tau } => {
            let r = y - f;
            if r > 0.0 {
                (w * tau - beta) * r
            } else {
                (beta - w * (tau - 1.0)) * (-r)
            }
        }
        LossFunction::EpsInsensitive { eps } => {
            let r = y - f;
            let a = r.abs();
            let b = beta.abs();
            if a > eps {
                let s = r.signum();
                (w - s * beta) * (a - eps) + eps * (b - s * beta)
            } else {
                b * (eps - a) + (b * a - beta * r)
            }
        }
        LossFunction::LeastSquares => {
            let d = w * (y - f) - 0.5 * beta;
            d * d / w
        }
    }
}

fn soft_threshold(v: f64, c: f64) -> f64 {
    if v > c {
        v - c
    } else if v < -c {
        v + c
    } else {
        0.0
    }
}

struct Problem<'a> {
    loss: LossFunction,
    lambda: f64,
    points: Vec<&'a [f64]>,
    y: Vec<f64>,
    w: Vec<f64>,
    gram: Vec<f64>,
    pieces: Vec<DualPiece>,
}

impl Problem<'_> {
    fn n(&self) -> usize {
        self.y.len()
    }

    fn row(&self, i: usize) -> &[f64] {
        let n = self.n();
        &self.gram[i * n..(i + 1) * n]
    }

    /// `f(x_j) = (2λ)⁻¹ Σ_i β_i G_ij`, recomputed from scratch.
    fn fitted(&self, beta: &[f64]) -> Vec<f64> {
        let scale = 0.5 / self.lambda;
        (0..self.n())
            .map(|j| {
                scale
                    * self
                        .row(j)
                        .iter()
                        .zip(beta)
                        .map(|(g, b)| g * b)
                        .sum::<f64>()
            })
            .collect()
    }

    fn primal(&self, beta: &[f64], f: &[f64]) -> f64 {
        let mut risk = 0.0;
        let mut reg = 0.0;
        for i in 0..self.n() {
            risk += self.w[i] * self.loss.eval(self.y[i], f[i]);
            reg += beta[i] * f[i];
        }
        risk + 0.5 * reg
    }

    fn dual(&self, beta: &[f64], f: &[f64]) -> f64 {
        let mut total = 0.0;
        for i in 0..self.n() {
            let p = self.pieces[i];
            let b = beta[i];
            total += b * self.y[i] - p.l1 * b.abs() - p.quad * b * b - 0.5 * b * f[i];
        }
        total
    }

    fn gap(&self, beta: &[f64], f: &[f64]) -> f64 {
        (0..self.n())
            .map(|i| gap_term(&self.loss, self.y[i], self.w[i], beta[i], f[i]).max(0.0))
            .sum()
    }
}

fn validate_inputs(subsample: &Dataset, loss: &LossFunction, lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    loss.check_targets(subsample.targets())?;
    if !subsample.is_empty() {
        let total = subsample.total_weight();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "sample weights must sum to 1, got {total}"
            )));
        }
    }
    Ok(())
}

/// Trains one regional model; see [`train_local_with_report`].
pub fn train_local(
    subsample: &Dataset,
    loss: LossFunction,
    kernel: Kernel,
    lambda: f64,
    cfg: &SolverConfig,
) -> Result<LocalModel> {
    train_local_with_report(subsample, loss, kernel, lambda, cfg).map(|(m, _)| m)
}

pub fn train_local_with_report(
    subsample: &Dataset,
    loss: LossFunction,
    kernel: Kernel,
    lambda: f64,
    cfg: &SolverConfig,
) -> Result<(LocalModel, SolveReport)> {
    let problems = cfg.validate();
    if !problems.is_empty() {
        return Err(Error::Validation(problems));
    }
    validate_inputs(subsample, &loss, lambda)?;

    let active: Vec<usize> = (0..subsample.len())
        .filter(|&i| subsample.weight(i) > 0.0)
        .collect();
    if active.is_empty() {
        let model = LocalModel {
            region_index: 0,
            lambda,
            loss,
            expansion: KernelExpansion::zero(kernel, subsample.dim()),
            objective: 0.0,
            shifted_objective: 0.0,
            duality_gap: 0.0,
            iterations: 0,
            converged: true,
            empty: true,
        };
        let report = SolveReport {
            best_objective_history: Vec::new(),
            iterations: 0,
            duality_gap: 0.0,
            converged: true,
        };
        return Ok((model, report));
    }

    let points: Vec<&[f64]> = active.iter().map(|&i| subsample.point(i)).collect();
    let y: Vec<f64> = active.iter().map(|&i| subsample.target(i)).collect();
    let w: Vec<f64> = active.iter().map(|&i| subsample.weight(i)).collect();
    let gram = kernel
        .gram_matrix(points.iter().copied())?
        .as_slice()
        .to_vec();
    let pieces = y
        .iter()
        .zip(&w)
        .map(|(&yi, &wi)| dual_piece(&loss, yi, wi))
        .collect();
    let problem = Problem {
        loss,
        lambda,
        points,
        y,
        w,
        gram,
        pieces,
    };

    let n = problem.n();
    let target_gap = lambda * cfg.tol * cfg.tol;
    let half_inv_lambda = 0.5 / lambda;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut beta = vec![0.0; n];
    let mut f = vec![0.0; n];

    let mut best_primal = problem.primal(&beta, &f);
    let mut last_improvement = 0;
    let mut history = Vec::new();
    let mut gap = problem.gap(&beta, &f);
    let mut best_beta = beta.clone();
    let mut best_gap = gap;
    let mut best_dual = problem.dual(&beta, &f);
    let mut converged = gap <= target_gap;
    let mut epochs = 0;

    while !converged && epochs < cfg.max_iters {
        epochs += 1;
        order.shuffle(&mut rng);
        for &i in &order {
            let piece = problem.pieces[i];
            let gii = problem.gram[i * n + i];
            let curvature = gii * 0.5 * half_inv_lambda + piece.quad;
            let linear = problem.y[i] - f[i] + beta[i] * gii * half_inv_lambda;
            let target =
                (soft_threshold(linear, piece.l1) / (2.0 * curvature)).clamp(piece.lo, piece.hi);
            let delta = target - beta[i];
            if delta != 0.0 {
                beta[i] = target;
                let step = delta * half_inv_lambda;
                for (fj, g) in f.iter_mut().zip(problem.row(i)) {
                    *fj += step * g;
                }
            }
        }

        best_primal = best_primal.min(problem.primal(&beta, &f));
        history.push(best_primal);

        gap = problem.gap(&beta, &f);
        if gap < best_gap {
            best_gap = gap;
            best_beta.copy_from_slice(&beta);
            last_improvement = epochs;
        }
        let dual = problem.dual(&beta, &f);
        if dual > best_dual {
            best_dual = dual;
            last_improvement = epochs;
        }
        if gap <= target_gap {
            // confirm against freshly recomputed fitted values
            f = problem.fitted(&beta);
            gap = problem.gap(&beta, &f);
            converged = gap <= target_gap;
        }
        if epochs - last_improvement >= cfg.window {
            break;
        }
    }

    // A converged iterate carries its own certificate; otherwise fall back to
    // the iterate with the smallest gap.
    let (final_beta, duality_gap) = if converged {
        (beta, gap)
    } else {
        let f_best = problem.fitted(&best_beta);
        let gap_best = problem.gap(&best_beta, &f_best);
        converged = gap_best <= target_gap;
        (best_beta, gap_best)
    };

    let mut centers = Vec::new();
    let mut coefficients = Vec::new();
    for (i, &b) in final_beta.iter().enumerate() {
        if b != 0.0 {
            centers.extend_from_slice(problem.points[i]);
            coefficients.push(b * half_inv_lambda);
        }
    }
    let expansion = KernelExpansion::from_flat(kernel, subsample.dim(), centers, coefficients);
    let mut model = LocalModel {
        region_index: 0,
        lambda,
        loss,
        expansion,
        objective: 0.0,
        shifted_objective: 0.0,
        duality_gap,
        iterations: epochs,
        converged,
        empty: false,
    };
    model.objective = objective(&model, subsample, false)?;
    model.shifted_objective = objective(&model, subsample, true)?;
    let report = SolveReport {
        best_objective_history: history,
        iterations: epochs,
        duality_gap,
        converged,
    };
    Ok((model, report))
}

/// `Σ_i w_i L(y_i, f(x_i)) + λ‖f‖²_H`, or the same with `L*` when `shifted`.
pub fn objective(model: &LocalModel, subsample: &Dataset, shifted: bool) -> Result<f64> {
    if subsample.dim() != model.expansion.dim() && !subsample.is_empty() {
        return Err(Error::Dimension {
            index: 0,
            expected: model.expansion.dim(),
            found: subsample.dim(),
        });
    }
    model.loss.check_targets(subsample.targets())?;
    let mut risk = 0.0;
    for (i, x) in subsample.points().enumerate() {
        let y = subsample.target(i);
        let t = model.expansion.eval_unchecked(x);
        let l = if shifted {
            model.loss.eval_shifted(y, t)
        } else {
            model.loss.eval(y, t)
        };
        risk += subsample.weight(i) * l;
    }
    Ok(risk + model.lambda * model.expansion.rkhs_norm_squared().max(0.0))
}

/// Exact least-squares minimizer: solves `(W G + λ I) α = W y`.
pub fn closed_form_ridge(subsample: &Dataset, kernel: Kernel, lambda: f64) -> Result<LocalModel> {
    if subsample.is_empty() {
        return Err(Error::Domain(
            "closed-form ridge needs a nonempty subsample".into(),
        ));
    }
    validate_inputs(subsample, &LossFunction::LeastSquares, lambda)?;
    let n = subsample.len();
    let gram = kernel.gram_matrix(subsample.points())?;
    let mut system = DMatrix::from_fn(n, n, |i, j| subsample.weight(i) * gram.get(i, j));
    for i in 0..n {
        system[(i, i)] += lambda;
    }
    let rhs = DVector::from_fn(n, |i, _| subsample.weight(i) * subsample.target(i));
    let alpha = match system.clone().lu().solve(&rhs) {
        Some(a) => a,
        None => {
            for i in 0..n {
                system[(i, i)] += 1e-12;
            }
            system
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::Numerical("ridge system is singular".into()))?
        }
    };
    let expansion = KernelExpansion::from_flat(
        kernel,
        subsample.dim(),
        subsample.raw_points().to_vec(),
        alpha.iter().copied().collect(),
    );
    let mut model = LocalModel {
        region_index: 0,
        lambda,
        loss: LossFunction::LeastSquares,
        expansion,
        objective: 0.0,
        shifted_objective: 0.0,
        duality_gap: 0.0,
        iterations: 0,
        converged: true,
        empty: false,
    };
    model.objective = objective(&model, subsample, false)?;
    model.shifted_objective = objective(&model, subsample, true)?;
    Ok(model)
}
