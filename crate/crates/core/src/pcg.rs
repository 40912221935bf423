//! Sketch-preconditioned conjugate gradient for the normal equations.
//!
//! The preconditioner is `Q^{-1/2} = U_Q Σ^{-1} U_Qᵀ` where `ADW = U_Q Σ V_Qᵀ`,
//! so that `Q = (ADW)(ADW)ᵀ`. CG runs on the symmetric system
//! `Q^{-1/2} AD²Aᵀ Q^{-1/2} z = Q^{-1/2} p` and returns `dy = Q^{-1/2} z`.

use std::time::{Duration, Instant};

use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_len, IpmError, Result};
use crate::linalg::{add, dot, norm2, pinv_apply, sub, thin_svd, Cholesky, DenseMatrix, ThinSvd};
use crate::model::{LinearProgram, PrimalDualPoint};
use crate::normal_eq::{a_sinv, build_normal_matrix, build_p, normal_matvec, scaling_d, scaling_d2};
use crate::rng;
use crate::sketch::{build_sketch, SketchMatrix, SketchOptions};

/// `sigma_min / sigma_max` of `ADW` below which the sketch is redrawn.
const ADW_RANK_TOL: f64 = 1e-12;
const MAX_RESKETCH: usize = 3;
const CAP_MULTIPLIER: usize = 10;
/// Neighborhood radius used for the `‖Q^{-1/2}p‖₂` bound in the iteration cap.
const CAP_THETA: f64 = 0.5;

/// Parameters shared by every PCG-backed solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcgSettings {
    pub zeta: f64,
    pub eta: f64,
    pub sketch: SketchOptions,
    /// Overrides the derived iteration cap.
    pub max_iters: Option<usize>,
}

impl Default for PcgSettings {
    fn default() -> Self {
        Self {
            zeta: 0.5,
            eta: 0.1,
            sketch: SketchOptions::default(),
            max_iters: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Preconditioner {
    pub u_q: DenseMatrix,
    pub inv_sqrt_sigma: Vec<f64>,
    pub source_sketch: SketchMatrix,
    pub adw_svd: ThinSvd,
    /// Number of redraws needed before `ADW` had full row rank.
    pub resketches: usize,
}

impl Preconditioner {
    pub fn m(&self) -> usize {
        self.u_q.rows()
    }

    fn apply_diag(&self, v: &[f64], diag: impl Fn(usize) -> f64) -> Result<Vec<f64>> {
        let mut c = self.u_q.matvec_t(v)?;
        for (i, ci) in c.iter_mut().enumerate() {
            *ci *= diag(i);
        }
        self.u_q.matvec(&c)
    }

    /// `Q^{-1/2} v`
    pub fn apply_inv_sqrt(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.apply_diag(v, |i| self.inv_sqrt_sigma[i])
    }

    /// `Q^{1/2} v`
    pub fn apply_sqrt(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.apply_diag(v, |i| self.adw_svd.sigma[i])
    }

    /// `σ_max(Q^{1/2}) = σ_max(ADW)`
    pub fn sigma_max_sqrt_q(&self) -> f64 {
        self.adw_svd.sigma_max()
    }

    /// Dense `Q^{-1/2}`, for diagnostics and tests.
    pub fn inv_sqrt_matrix(&self) -> DenseMatrix {
        let m = self.m();
        let cols: Vec<Vec<f64>> = (0..m)
            .map(|j| {
                let mut e = vec![0.0; m];
                e[j] = 1.0;
                self.apply_inv_sqrt(&e).expect("square by construction")
            })
            .collect();
        DenseMatrix::from_columns(&cols, m)
    }

    /// `(XS)^{1/2} W (ADW)† r`, the error-adjustment vector for residual `r`.
    pub fn correction_vector(&self, p0: &PrimalDualPoint, r: &[f64]) -> Result<Vec<f64>> {
        let z = pinv_apply(&self.adw_svd, r, crate::linalg::DEFAULT_RANK_TOL)?;
        let mut v = self.source_sketch.apply(&z)?;
        for (vi, (x, s)) in v.iter_mut().zip(p0.x.iter().zip(&p0.s)) {
            *vi *= (x * s).sqrt();
        }
        Ok(v)
    }
}

/// Sketches `AD`, factors `ADW`, and forms `Q^{-1/2}`.
///
/// A sketch wider than `n` falls back to `W = I_n`. If `ADW` is rank
/// deficient the sketch is redrawn with a fresh seed up to three times.
pub fn build_preconditioner(
    lp: &LinearProgram,
    p0: &PrimalDualPoint,
    settings: &PcgSettings,
    seed: u64,
) -> Result<Preconditioner> {
    let ad = lp.a.scale_columns(&scaling_d(p0))?;
    let mut last_ratio = 0.0;
    for attempt in 0..=MAX_RESKETCH {
        let sketch_seed = if attempt == 0 {
            seed
        } else {
            rng::derive_seed(seed, "resketch", attempt as u64)
        };
        let sketch = match build_sketch(lp.n(), lp.m(), settings.zeta, settings.eta, sketch_seed, &settings.sketch) {
            Ok(w) => w,
            Err(IpmError::SketchTooWide { .. }) => SketchMatrix::identity(lp.n()),
            Err(e) => return Err(e),
        };
        if sketch.n_cols() < lp.m() {
            return Err(IpmError::RankDeficient { ratio: 0.0 });
        }
        let adw = sketch.right_multiply(&ad)?;
        let svd = thin_svd(&adw)?;
        last_ratio = if svd.sigma_max() > 0.0 {
            svd.sigma_min() / svd.sigma_max()
        } else {
            0.0
        };
        if last_ratio > ADW_RANK_TOL {
            return Ok(Preconditioner {
                u_q: svd.u.clone(),
                inv_sqrt_sigma: svd.sigma.iter().map(|s| 1.0 / s).collect(),
                source_sketch: sketch,
                adw_svd: svd,
                resketches: attempt,
            });
        }
        if sketch.is_identity() {
            break;
        }
    }
    Err(IpmError::RankDeficient { ratio: last_ratio })
}

/// Outcome of one linear solve.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub dy: Vec<f64>,
    pub v: Option<Vec<f64>>,
    pub inner_iterations: usize,
    /// `‖Q^{-1/2}(AD²Aᵀdy − rhs)‖₂` at exit (zero for direct solves)
    pub preconditioned_residual: f64,
    /// `‖AD²Aᵀdy − rhs‖₂`
    pub plain_residual: f64,
    /// `‖Q^{-1/2} rhs‖₂`, when a preconditioner was used
    pub preconditioned_rhs_norm: Option<f64>,
    /// preconditioned residual norms, index `t` after `t` iterations
    pub residual_history: Vec<f64>,
    pub wall_time: Duration,
}

struct CgSnapshot<'a> {
    r: &'a [f64],
    r_norm: f64,
}

struct CgRun {
    z: Vec<f64>,
    iterations: usize,
    history: Vec<f64>,
}

/// CG on `Q^{-1/2} M Q^{-1/2} z = Q^{-1/2} rhs` from `z = 0`, where `M = AD²Aᵀ`.
///
/// `stop` sees the recurrence residual; once it returns true the residual is
/// recomputed from scratch and CG restarts from the current iterate if the
/// true residual disagrees. Nonpositive curvature restarts once, then errors.
fn run_cg(
    precond: &Preconditioner,
    lp: &LinearProgram,
    d2: &[f64],
    rhs: &[f64],
    max_iters: usize,
    mut stop: impl FnMut(&CgSnapshot<'_>) -> Result<bool>,
) -> Result<CgRun> {
    let m = lp.m();
    let op = |v: &[f64]| -> Result<Vec<f64>> {
        let t = precond.apply_inv_sqrt(v)?;
        let t = normal_matvec(lp, d2, &t)?;
        precond.apply_inv_sqrt(&t)
    };
    let b = precond.apply_inv_sqrt(rhs)?;
    let mut z = vec![0.0; m];
    let mut r = b.clone();
    let mut history = vec![norm2(&r)];
    let mut iterations = 0usize;
    let mut restarted = false;

    'outer: loop {
        let mut dir = r.clone();
        let mut rr = dot(&r, &r);
        loop {
            let r_norm = rr.sqrt();
            if stop(&CgSnapshot { r: &r, r_norm })? {
                // confirm against the true residual
                let true_r = sub(&b, &op(&z)?);
                let true_norm = norm2(&true_r);
                let consistent = stop(&CgSnapshot {
                    r: &true_r,
                    r_norm: true_norm,
                })?;
                if consistent {
                    *history.last_mut().expect("non-empty") = true_norm;
                    return Ok(CgRun { z, iterations, history });
                }
                r = true_r;
                continue 'outer;
            }
            if iterations >= max_iters {
                return Err(IpmError::ConvergenceFailure {
                    iterations,
                    last: r_norm,
                    history,
                });
            }
            let q = op(&dir)?;
            let curvature = dot(&dir, &q);
            if !(curvature > 0.0) || !curvature.is_finite() {
                if restarted {
                    return Err(IpmError::CgBreakdown {
                        iteration: iterations,
                        curvature,
                    });
                }
                restarted = true;
                r = sub(&b, &op(&z)?);
                continue 'outer;
            }
            let step = rr / curvature;
            crate::linalg::axpy(step, &dir, &mut z);
            crate::linalg::axpy(-step, &q, &mut r);
            iterations += 1;
            let rr_new = dot(&r, &r);
            history.push(rr_new.sqrt());
            let beta = rr_new / rr;
            rr = rr_new;
            for (d, ri) in dir.iter_mut().zip(&r) {
                *d = ri + beta * *d;
            }
        }
    }
}

/// Runs PCG until `‖Q^{-1/2}(AD²Aᵀdy − rhs)‖₂ ≤ target · ‖Q^{-1/2}rhs‖₂`.
pub fn pcg_solve(
    precond: &Preconditioner,
    lp: &LinearProgram,
    p0: &PrimalDualPoint,
    rhs: &[f64],
    target: f64,
    max_iters: usize,
) -> Result<SolveReport> {
    check_len("pcg_solve rhs", lp.m(), rhs.len())?;
    let started = Instant::now();
    let d2 = scaling_d2(p0);
    let rhs_norm = norm2(&precond.apply_inv_sqrt(rhs)?);
    let threshold = target * rhs_norm;
    let run = run_cg(precond, lp, &d2, rhs, max_iters, |snap| Ok(snap.r_norm <= threshold))?;
    finish(precond, lp, &d2, rhs, run, None, Some(rhs_norm), started)
}

fn finish(
    precond: &Preconditioner,
    lp: &LinearProgram,
    d2: &[f64],
    rhs: &[f64],
    run: CgRun,
    v: Option<Vec<f64>>,
    rhs_norm: Option<f64>,
    started: Instant,
) -> Result<SolveReport> {
    let dy = precond.apply_inv_sqrt(&run.z)?;
    if dy.iter().any(|t| !t.is_finite()) {
        return Err(IpmError::NonFinite("PCG iterate"));
    }
    let r = sub(&normal_matvec(lp, d2, &dy)?, rhs);
    Ok(SolveReport {
        plain_residual: norm2(&r),
        preconditioned_residual: norm2(&precond.apply_inv_sqrt(&r)?),
        dy,
        v,
        inner_iterations: run.iterations,
        preconditioned_rhs_norm: rhs_norm,
        residual_history: run.history,
        wall_time: started.elapsed(),
    })
}

/// Bound on `‖Q^{-1/2}p‖₂` for iterates in `N₂(θ)`:
/// `σ√(2nμ/(1−θ)) + √(2nμ)`.
pub fn preconditioned_rhs_bound(sigma: f64, theta: f64, n: usize, mu: f64) -> f64 {
    let two_n_mu = 2.0 * n as f64 * mu;
    sigma * (two_n_mu / (1.0 - theta)).sqrt() + two_n_mu.sqrt()
}

/// `10 · ceil(ln(δ / B) / ln ζ)` with `B` the `‖Q^{-1/2}p‖₂` bound at `θ = 1/2`.
pub fn iteration_cap(settings: &PcgSettings, sigma: f64, n: usize, mu: f64, delta: f64) -> usize {
    if let Some(cap) = settings.max_iters {
        return cap;
    }
    let bound = preconditioned_rhs_bound(sigma, CAP_THETA, n, mu).max(f64::MIN_POSITIVE);
    let steps = ((delta / bound).ln() / settings.zeta.ln()).ceil();
    let steps = if steps.is_finite() && steps > 1.0 { steps as usize } else { 1 };
    CAP_MULTIPLIER * steps
}

/// Inexact solve with both guarantees
/// `‖dy − M⁻¹p‖_M ≤ δ` and `‖M dy − p‖₂ ≤ δ`, `M = AD²Aᵀ`.
///
/// Stops once the preconditioned residual is below
/// `min(δ/√(1+ζ/2), δ/σ_max(Q^{1/2}))`.
pub fn solve(
    lp: &LinearProgram,
    p0: &PrimalDualPoint,
    sigma: f64,
    delta: f64,
    settings: &PcgSettings,
    seed: u64,
) -> Result<SolveReport> {
    let started = Instant::now();
    let precond = build_preconditioner(lp, p0, settings, seed)?;
    let p = build_p(lp, p0, sigma)?;
    let d2 = scaling_d2(p0);
    let rhs_norm = norm2(&precond.apply_inv_sqrt(&p)?);
    let threshold = (delta / (1.0 + settings.zeta / 2.0).sqrt()).min(delta / precond.sigma_max_sqrt_q());
    let cap = iteration_cap(settings, sigma, lp.n(), p0.mu(), delta);
    let run = run_cg(&precond, lp, &d2, &p, cap, |snap| Ok(snap.r_norm <= threshold))?;
    finish(&precond, lp, &d2, &p, run, None, Some(rhs_norm), started)
}

/// Inexact solve returning `(dy, v)` with `AD²Aᵀdy = p + AS⁻¹v` and `‖v‖₂ ≤ δ`.
///
/// `v = (XS)^{1/2} W (ADW)† (AD²Aᵀdy − p)` is evaluated every iteration
/// and CG stops as soon as its norm is within `δ`.
pub fn solve_v(
    lp: &LinearProgram,
    p0: &PrimalDualPoint,
    sigma: f64,
    delta: f64,
    settings: &PcgSettings,
    seed: u64,
) -> Result<SolveReport> {
    let started = Instant::now();
    let precond = build_preconditioner(lp, p0, settings, seed)?;
    let p = build_p(lp, p0, sigma)?;
    let d2 = scaling_d2(p0);
    let rhs_norm = norm2(&precond.apply_inv_sqrt(&p)?);
    let cap = iteration_cap(settings, sigma, lp.n(), p0.mu(), delta);
    let run = run_cg(&precond, lp, &d2, &p, cap, |snap| {
        // r̃ = Q^{-1/2}(p − M dy), so M dy − p = −Q^{1/2} r̃
        let plain: Vec<f64> = precond.apply_sqrt(snap.r)?.into_iter().map(|t| -t).collect();
        let v = precond.correction_vector(p0, &plain)?;
        Ok(norm2(&v) <= delta)
    })?;
    let dy = precond.apply_inv_sqrt(&run.z)?;
    let r = sub(&normal_matvec(lp, &d2, &dy)?, &p);
    let v = precond.correction_vector(p0, &r)?;
    finish(&precond, lp, &d2, &p, run, Some(v), Some(rhs_norm), started)
}

/// Direct Cholesky solve of `AD²Aᵀdy = p`; `v = 0` is attached when `with_v`.
pub fn direct_solve(lp: &LinearProgram, p0: &PrimalDualPoint, sigma: f64, with_v: bool) -> Result<SolveReport> {
    let started = Instant::now();
    let p = build_p(lp, p0, sigma)?;
    let m = build_normal_matrix(lp, p0)?;
    let dy = Cholesky::factor(&m)?.solve(&p)?;
    let r = sub(&m.matvec(&dy)?, &p);
    Ok(SolveReport {
        plain_residual: norm2(&r),
        preconditioned_residual: 0.0,
        dy,
        v: with_v.then(|| vec![0.0; lp.n()]),
        inner_iterations: 0,
        preconditioned_rhs_norm: None,
        residual_history: Vec::new(),
        wall_time: started.elapsed(),
    })
}

/// Draws `v` uniformly from the sphere of radius `δ` and solves
/// `AD²Aᵀdy = p + AS⁻¹v` directly.
pub fn perturbation_solve_v(
    lp: &LinearProgram,
    p0: &PrimalDualPoint,
    sigma: f64,
    delta: f64,
    seed: u64,
) -> Result<SolveReport> {
    let started = Instant::now();
    let mut r = rng::stream(seed, rng::PERTURB_V, 0);
    let v: Vec<f64> = if delta > 0.0 {
        let g: Vec<f64> = (0..lp.n()).map(|_| StandardNormal.sample(&mut r)).collect();
        let nrm = norm2(&g);
        g.into_iter().map(|t| t * delta / nrm).collect()
    } else {
        vec![0.0; lp.n()]
    };
    let p = build_p(lp, p0, sigma)?;
    let rhs = add(&p, &a_sinv(lp, p0, &v)?);
    let m = build_normal_matrix(lp, p0)?;
    let dy = Cholesky::factor(&m)?.solve(&rhs)?;
    let r = sub(&m.matvec(&dy)?, &p);
    Ok(SolveReport {
        plain_residual: norm2(&r),
        preconditioned_residual: 0.0,
        dy,
        v: Some(v),
        inner_iterations: 0,
        preconditioned_rhs_norm: None,
        residual_history: Vec::new(),
        wall_time: started.elapsed(),
    })
}

/// Uncorrected counterpart of [`perturbation_solve_v`]: returns
/// `dy = (AD²Aᵀ)⁻¹(p + f)` with `f` along a uniformly random direction,
/// scaled so that `max(‖f‖₂, ‖dy − (AD²Aᵀ)⁻¹p‖_{AD²Aᵀ}) = δ`.
pub fn perturbation_solve(
    lp: &LinearProgram,
    p0: &PrimalDualPoint,
    sigma: f64,
    delta: f64,
    seed: u64,
) -> Result<SolveReport> {
    let started = Instant::now();
    let p = build_p(lp, p0, sigma)?;
    let m = build_normal_matrix(lp, p0)?;
    let chol = Cholesky::factor(&m)?;
    let mut rhs = p.clone();
    if delta > 0.0 {
        let mut r = rng::stream(seed, rng::PERTURB_V, 0);
        let u: Vec<f64> = (0..lp.m()).map(|_| StandardNormal.sample(&mut r)).collect();
        let nrm = norm2(&u);
        let u: Vec<f64> = u.into_iter().map(|t| t / nrm).collect();
        let energy = dot(&u, &chol.solve(&u)?).max(0.0).sqrt();
        let t = delta / energy.max(1.0);
        crate::linalg::axpy(t, &u, &mut rhs);
    }
    let dy = chol.solve(&rhs)?;
    let r = sub(&m.matvec(&dy)?, &p);
    Ok(SolveReport {
        plain_residual: norm2(&r),
        preconditioned_residual: 0.0,
        dy,
        v: None,
        inner_iterations: 0,
        preconditioned_rhs_norm: None,
        residual_history: Vec::new(),
        wall_time: started.elapsed(),
    })
}
