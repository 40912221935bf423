//! Outer predictor-corrector loops.
//!
//! Every outer iteration takes a predictor step (`σ = 0`, adaptive `α`)
//! followed by a corrector step (`σ = 1`, `α = 1`). The three modes differ
//! only in how the search direction is produced:
//!
//! * `Corrected` pairs an inexact `dy` with an error-adjustment vector `v`
//!   so that `A Δx = 0` holds exactly and iterates stay primal feasible.
//! * `Uncorrected` uses the inexact `dy` as is; primal infeasibility
//!   accumulates by at most `2δ` per outer iteration.
//! * `Exact` solves the normal equations directly.

use std::io::Write;
use std::path::Path;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::error::{IpmError, Result};
use crate::linalg::{hadamard, norm2, sub, Cholesky};
use crate::model::{neighborhood_check, residuals, LinearProgram, PrimalDualPoint, Residuals};
use crate::normal_eq::{
    build_normal_matrix, build_p, complete_step_corrected, complete_step_uncorrected, corrected_cross_bound,
    exact_cross_bound, exact_step_with, normal_matvec, pinv_ad_norm, scaled_correction_norm, scaling_d2, StepDirection,
};
use crate::pcg::{self, PcgSettings, SolveReport};
use crate::rng;
use crate::sketch::SketchOptions;

/// Duality-decrease constant of the error-adjusted method.
pub const C0_CORRECTED: f64 = 0.14;
/// Neighborhood radius at the start of every outer iteration.
pub const THETA_START: f64 = 0.25;
/// Neighborhood radius allowed after a predictor step.
pub const THETA_PREDICTOR: f64 = 0.5;
const MAX_BACKTRACKS: usize = 6;
/// Relative slack on cross-term monitors, covering rounding in `‖Δx∘Δs‖₂`.
const MONITOR_SLACK: f64 = 1e-9;

/// `√0.14 − 1/256`, the duality-decrease constant without error adjustment.
pub fn c0_uncorrected() -> f64 {
    0.14_f64.sqrt() - 1.0 / 256.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Corrected,
    Uncorrected,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Pcg,
    Direct,
    Perturb,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IpmConfig {
    pub epsilon: f64,
    pub mode: Mode,
    pub solver: SolverKind,
    pub zeta: f64,
    pub eta: f64,
    pub sketch_cols_override: Option<usize>,
    /// Defaults to `ceil(3·(√n/0.14)·ln(μ₀/ε)) + 10`.
    pub max_outer: Option<usize>,
    pub seed: u64,
    /// Linear-solver accuracy `δ`. Defaults to `ε/2⁷` (corrected) or
    /// `min(√ε/2⁶, εC₀/(2√n·ln(μ₀/ε)))` (uncorrected).
    pub solver_tolerance: Option<f64>,
    /// Turn neighborhood and cross-term monitor violations into errors.
    pub strict_monitors: bool,
}

impl IpmConfig {
    pub fn new(epsilon: f64, mode: Mode, solver: SolverKind) -> Self {
        Self {
            epsilon,
            mode,
            solver,
            zeta: 0.5,
            eta: 0.1,
            sketch_cols_override: None,
            max_outer: None,
            seed: 0,
            solver_tolerance: None,
            strict_monitors: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(IpmError::InvalidParameter(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.max_outer == Some(0) {
            return Err(IpmError::InvalidParameter("max_outer must be at least 1".into()));
        }
        if let Some(t) = self.solver_tolerance {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(IpmError::InvalidParameter(format!("solver tolerance must be nonnegative, got {t}")));
            }
        }
        if self.solver == SolverKind::Pcg && self.mode != Mode::Exact {
            crate::sketch::sketch_dims(1, self.zeta, self.eta, &SketchOptions::default())?;
        }
        Ok(())
    }

    pub fn pcg_settings(&self) -> PcgSettings {
        PcgSettings {
            zeta: self.zeta,
            eta: self.eta,
            sketch: SketchOptions {
                cols_override: self.sketch_cols_override,
                ..SketchOptions::default()
            },
            max_iters: None,
        }
    }

    /// The solver accuracy used for this run.
    pub fn tolerance(&self, n: usize, mu0: f64) -> f64 {
        if let Some(t) = self.solver_tolerance {
            return t;
        }
        match self.mode {
            Mode::Corrected => self.epsilon / 128.0,
            Mode::Uncorrected => uncorrected_tolerance(self.epsilon, n, mu0),
            Mode::Exact => 0.0,
        }
    }

    pub fn outer_limit(&self, n: usize, mu0: f64) -> usize {
        self.max_outer.unwrap_or_else(|| default_max_outer(n, mu0, self.epsilon))
    }
}

/// `min(√ε/2⁶, εC₀/(2√n·max(1, ln(μ₀/ε))))`
pub fn uncorrected_tolerance(epsilon: f64, n: usize, mu0: f64) -> f64 {
    let log_term = (mu0 / epsilon).ln().max(1.0);
    (epsilon.sqrt() / 64.0).min(epsilon * c0_uncorrected() / (2.0 * (n as f64).sqrt() * log_term))
}

pub fn default_max_outer(n: usize, mu0: f64, epsilon: f64) -> usize {
    let log_term = (mu0 / epsilon).ln().max(0.0);
    (3.0 * ((n as f64).sqrt() / C0_CORRECTED) * log_term).ceil() as usize + 10
}

/// `min(1/2, √(μ / (16‖Δx̃∘Δs̃‖₂)))`, with `1/2` when the cross term vanishes.
pub fn predictor_step_size(mu: f64, cross_norm: f64) -> f64 {
    if cross_norm <= 0.0 {
        return 0.5;
    }
    (mu / (16.0 * cross_norm)).sqrt().min(0.5)
}

/// Closed-form solution of `μ_{k+1} ≤ (1 − c0/√n)μ_k + c1·ε`:
/// `ε·c1/(c0/√n) + (1 − c0/√n)^k·μ₀`.
pub fn recurrence_bound(mu0: f64, n: usize, c0: f64, c1: f64, eps: f64, k: usize) -> Result<f64> {
    let rate = c0 / (n as f64).sqrt();
    if !(c0 > 0.0 && c0 < 1.0) {
        return Err(IpmError::InvalidParameter(format!("c0 must lie in (0, 1), got {c0}")));
    }
    if !(c1 >= 0.0 && c1 < rate) {
        return Err(IpmError::InvalidParameter(format!("c1 must lie in [0, c0/sqrt(n)), got {c1}")));
    }
    Ok(eps * c1 / rate + (1.0 - rate).powi(k as i32) * mu0)
}

/// One outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    /// `μ_k` at the start of the iteration
    pub mu: f64,
    pub alpha: f64,
    pub backtracks: usize,
    pub cross_norm: f64,
    /// Cross-term bound for the predictor direction, when computable.
    pub cross_bound: Option<f64>,
    pub predictor_inner: usize,
    pub corrector_inner: usize,
    /// `‖v‖₂` (corrected) or `‖f‖₂ = ‖AD²Aᵀdy − p‖₂` (otherwise), predictor
    pub predictor_error: f64,
    pub corrector_error: f64,
    pub mu_predictor: f64,
    /// `‖x∘s − μ1‖₂ / μ` after the predictor
    pub theta_predictor: f64,
    pub mu_next: f64,
    pub theta_corrector: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    /// `|μ̃(α) − (1 − α(1−σ))μ + (α/n)vᵀ1| / μ`, worst of both phases (corrected only)
    pub mu_identity_gap: Option<f64>,
    /// whether `μ̃(α) ≥ (1 − α(1−σ))μ` held in both phases (uncorrected only)
    pub mu_gap_sign_ok: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
}

impl IterationTrace {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn mean_inner_iterations(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        let total: usize = self.records.iter().map(|r| r.predictor_inner + r.corrector_inner).sum();
        total as f64 / (2 * self.records.len()) as f64
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub point: PrimalDualPoint,
    pub residuals: Residuals,
    pub trace: IterationTrace,
    pub converged: bool,
    pub outer_iterations: usize,
    /// solver accuracy `δ` that was used
    pub tolerance: f64,
}

struct Phase {
    step: StepDirection,
    inner: usize,
    error_norm: f64,
    factor: Option<Cholesky>,
}

struct Driver<'a> {
    lp: &'a LinearProgram,
    cfg: &'a IpmConfig,
    mode: Mode,
    delta: f64,
    settings: PcgSettings,
}

impl Driver<'_> {
    fn direction(&self, p: &PrimalDualPoint, sigma: f64, call: u64) -> Result<Phase> {
        let lp = self.lp;
        if self.mode == Mode::Exact {
            let chol = Cholesky::factor(&build_normal_matrix(lp, p)?)?;
            let step = exact_step_with(lp, p, sigma, &chol)?;
            return Ok(Phase {
                error_norm: step.residual_norm,
                step,
                inner: 0,
                factor: Some(chol),
            });
        }
        let seed_for = |label| rng::derive_seed(self.cfg.seed, label, call);
        let corrected = self.mode == Mode::Corrected;
        let report: SolveReport = match (self.cfg.solver, corrected) {
            (SolverKind::Pcg, true) => pcg::solve_v(lp, p, sigma, self.delta, &self.settings, seed_for(rng::SKETCH))?,
            (SolverKind::Pcg, false) => pcg::solve(lp, p, sigma, self.delta, &self.settings, seed_for(rng::SKETCH))?,
            (SolverKind::Direct, _) => pcg::direct_solve(lp, p, sigma, corrected)?,
            (SolverKind::Perturb, true) => pcg::perturbation_solve_v(lp, p, sigma, self.delta, seed_for(rng::PERTURB_V))?,
            (SolverKind::Perturb, false) => pcg::perturbation_solve(lp, p, sigma, self.delta, seed_for(rng::PERTURB_V))?,
        };
        let factor = match self.cfg.solver {
            SolverKind::Pcg => None,
            _ => Some(Cholesky::factor(&build_normal_matrix(lp, p)?)?),
        };
        if corrected {
            let v = report.v.clone().unwrap_or_else(|| vec![0.0; lp.n()]);
            let step = complete_step_corrected(lp, p, sigma, &report.dy, &v)?;
            Ok(Phase {
                error_norm: norm2(&v),
                step,
                inner: report.inner_iterations,
                factor,
            })
        } else {
            let step = complete_step_uncorrected(lp, p, sigma, &report.dy)?;
            Ok(Phase {
                error_norm: step.residual_norm,
                step,
                inner: report.inner_iterations,
                factor,
            })
        }
    }

    /// Cross-term bound for the direction at `p` with `N₂` radius `theta`.
    fn cross_bound(&self, p: &PrimalDualPoint, theta: f64, phase: &Phase) -> Result<Option<f64>> {
        let (n, mu, sigma) = (p.n(), p.mu(), phase.step.sigma);
        Ok(match self.mode {
            Mode::Exact => Some(exact_cross_bound(theta, n, sigma, mu)),
            Mode::Corrected => {
                let v = phase.step.correction.as_deref().unwrap_or(&[]);
                let w = if v.is_empty() { 0.0 } else { scaled_correction_norm(p, v) };
                Some(corrected_cross_bound(theta, n, sigma, mu, w))
            }
            Mode::Uncorrected => match &phase.factor {
                Some(chol) => {
                    let f = sub(&normal_matvec(self.lp, &scaling_d2(p), &phase.step.dy)?, &build_p(self.lp, p, sigma)?);
                    let g = pinv_ad_norm(chol, &f)?;
                    Some(crate::normal_eq::uncorrected_cross_bound(theta, n, sigma, mu, g))
                }
                None => None,
            },
        })
    }

    fn identity_checks(&self, p: &PrimalDualPoint, next: &PrimalDualPoint, alpha: f64, phase: &Phase) -> (Option<f64>, Option<bool>) {
        let mu = p.mu();
        let sigma = phase.step.sigma;
        let exact_mu = (1.0 - alpha * (1.0 - sigma)) * mu;
        let observed = next.mu();
        match self.mode {
            Mode::Corrected => {
                let v_sum: f64 = phase.step.correction.as_deref().map(|v| v.iter().sum()).unwrap_or(0.0);
                let predicted = exact_mu - alpha * v_sum / p.n() as f64;
                (Some((observed - predicted).abs() / mu), None)
            }
            Mode::Uncorrected => (None, Some(observed >= exact_mu * (1.0 - 1e-12) - 1e-300)),
            Mode::Exact => (None, None),
        }
    }

    fn violation(&self, k: usize, what: String) -> Result<()> {
        warn!("iteration {k}: {what}");
        if self.cfg.strict_monitors {
            Err(IpmError::MonitorViolation { iteration: k, what })
        } else {
            Ok(())
        }
    }

    fn run(&self, start: &PrimalDualPoint) -> Result<SolveOutcome> {
        let lp = self.lp;
        let eps = self.cfg.epsilon;
        let n = lp.n();
        let mu0 = start.mu();
        let limit = self.cfg.outer_limit(n, mu0);

        let check = neighborhood_check(start, THETA_START);
        if !check.member {
            return Err(IpmError::InvalidStart {
                theta: THETA_START,
                distance: check.distance,
                bound: THETA_START * check.mu,
            });
        }

        let mut trace = IterationTrace::default();
        let mut p = start.clone();
        let mut k = 0usize;
        while p.mu() > 2.0 * eps {
            if k >= limit {
                warn!("no convergence after {k} outer iterations, mu = {:.3e}", p.mu());
                return self.finish(p, trace, false);
            }
            let mu = p.mu();
            let theta_in = neighborhood_check(&p, THETA_START).distance / mu;

            // predictor
            let pred = self.direction(&p, 0.0, 2 * k as u64)?;
            let cross = norm2(&hadamard(&pred.step.dx, &pred.step.ds)?);
            let cross_bound = self.cross_bound(&p, theta_in, &pred)?;
            if let Some(b) = cross_bound {
                if cross > b * (1.0 + MONITOR_SLACK) {
                    self.violation(k, format!("predictor cross term {cross:.6e} exceeds bound {b:.6e}"))?;
                }
            }
            let mut alpha = predictor_step_size(mu, cross);
            let mut backtracks = 0usize;
            let mid = loop {
                let candidate = p.step(alpha, &pred.step.dx, &pred.step.dy, &pred.step.ds);
                let inside = match &candidate {
                    Ok(c) => neighborhood_check(c, THETA_PREDICTOR).member,
                    Err(_) => false,
                };
                if inside || backtracks == MAX_BACKTRACKS {
                    break candidate?;
                }
                backtracks += 1;
                alpha *= 0.5;
                warn!("iteration {k}: predictor left N2({THETA_PREDICTOR}), backtracking to alpha = {alpha:.4e}");
            };
            let theta_predictor = neighborhood_check(&mid, THETA_PREDICTOR).distance / mid.mu();
            if theta_predictor > THETA_PREDICTOR {
                self.violation(k, format!("predictor iterate outside N2(0.5), theta = {theta_predictor:.4}"))?;
            }
            let (gap_p, sign_p) = self.identity_checks(&p, &mid, alpha, &pred);

            // corrector
            let corr = self.direction(&mid, 1.0, 2 * k as u64 + 1)?;
            let next = mid.step(1.0, &corr.step.dx, &corr.step.dy, &corr.step.ds)?;
            let theta_corrector = neighborhood_check(&next, THETA_START).distance / next.mu();
            if theta_corrector > THETA_START {
                self.violation(k, format!("corrector iterate outside N2(0.25), theta = {theta_corrector:.4}"))?;
            }
            let (gap_c, sign_c) = self.identity_checks(&mid, &next, 1.0, &corr);

            let res = residuals(lp, &next)?;
            let record = IterationRecord {
                k,
                mu,
                alpha,
                backtracks,
                cross_norm: cross,
                cross_bound,
                predictor_inner: pred.inner,
                corrector_inner: corr.inner,
                predictor_error: pred.error_norm,
                corrector_error: corr.error_norm,
                mu_predictor: mid.mu(),
                theta_predictor,
                mu_next: next.mu(),
                theta_corrector,
                primal_infeasibility: res.primal_infeasibility,
                dual_infeasibility: res.dual_infeasibility,
                mu_identity_gap: gap_p.zip(gap_c).map(|(a, b)| a.max(b)),
                mu_gap_sign_ok: sign_p.zip(sign_c).map(|(a, b)| a && b),
            };
            debug!(
                "k={k} mu={mu:.4e} alpha={alpha:.4} mu_next={:.4e} inner=({}, {})",
                record.mu_next, record.predictor_inner, record.corrector_inner
            );
            trace.records.push(record);
            p = next;
            k += 1;
        }
        self.finish(p, trace, true)
    }

    fn finish(&self, point: PrimalDualPoint, trace: IterationTrace, converged: bool) -> Result<SolveOutcome> {
        Ok(SolveOutcome {
            residuals: residuals(self.lp, &point)?,
            outer_iterations: trace.records.len(),
            point,
            trace,
            converged,
            tolerance: self.delta,
        })
    }
}

fn run_mode(lp: &LinearProgram, start: &PrimalDualPoint, cfg: &IpmConfig, mode: Mode) -> Result<SolveOutcome> {
    cfg.validate()?;
    crate::error::check_len("start x", lp.n(), start.x.len())?;
    crate::error::check_len("start y", lp.m(), start.y.len())?;
    let resolved = IpmConfig { mode, ..cfg.clone() };
    let driver = Driver {
        lp,
        cfg: &resolved,
        mode,
        delta: resolved.tolerance(lp.n(), start.mu()),
        settings: resolved.pcg_settings(),
    };
    driver.run(start)
}

/// Error-adjusted inexact predictor-corrector.
pub fn run_corrected(lp: &LinearProgram, start: &PrimalDualPoint, cfg: &IpmConfig) -> Result<SolveOutcome> {
    run_mode(lp, start, cfg, Mode::Corrected)
}

/// Inexact predictor-corrector without error adjustment.
pub fn run_uncorrected(lp: &LinearProgram, start: &PrimalDualPoint, cfg: &IpmConfig) -> Result<SolveOutcome> {
    run_mode(lp, start, cfg, Mode::Uncorrected)
}

/// Predictor-corrector with direct normal-equation solves.
pub fn run_exact(lp: &LinearProgram, start: &PrimalDualPoint, cfg: &IpmConfig) -> Result<SolveOutcome> {
    run_mode(lp, start, cfg, Mode::Exact)
}

/// Dispatches on `cfg.mode`.
pub fn run(lp: &LinearProgram, start: &PrimalDualPoint, cfg: &IpmConfig) -> Result<SolveOutcome> {
    run_mode(lp, start, cfg, cfg.mode)
}
