//! Normal-equation assembly and step completion.
//!
//! The scaling `D² = X S⁻¹` is only ever held as the vector `x_i / s_i`.

use crate::error::{check_len, IpmError, Result};
use crate::linalg::{norm2, sub, Cholesky, DenseMatrix};
use crate::model::{LinearProgram, PrimalDualPoint};

/// Lower clamp applied to `s_i` before inversion.
pub const S_FLOOR: f64 = 1e-300;
/// `s_i < NEAR_BOUNDARY_REL · max(s)` marks an iterate as close to the boundary.
pub const NEAR_BOUNDARY_REL: f64 = 1e-14;
/// Tolerance for `‖AD²Aᵀdy − p − AS⁻¹v‖₂ ≤ tol·(1 + ‖p‖₂)` in [`complete_step_corrected`].
pub const PAIR_TOL: f64 = 1e-6;

/// Search direction with its solver metadata.
#[derive(Debug, Clone)]
pub struct StepDirection {
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
    pub ds: Vec<f64>,
    pub sigma: f64,
    /// Error-adjustment vector `v`, present for corrected steps.
    pub correction: Option<Vec<f64>>,
    /// `‖AD²Aᵀdy − p‖₂`
    pub residual_norm: f64,
}

#[inline]
fn floored(s: f64) -> f64 {
    s.max(S_FLOOR)
}

/// `x_i / s_i`
pub fn scaling_d2(p: &PrimalDualPoint) -> Vec<f64> {
    p.x.iter().zip(&p.s).map(|(x, s)| x / floored(*s)).collect()
}

/// `√(x_i / s_i)`
pub fn scaling_d(p: &PrimalDualPoint) -> Vec<f64> {
    scaling_d2(p).into_iter().map(f64::sqrt).collect()
}

pub fn inv_s(p: &PrimalDualPoint) -> Vec<f64> {
    p.s.iter().map(|s| 1.0 / floored(*s)).collect()
}

pub fn near_boundary(p: &PrimalDualPoint) -> bool {
    let smax = p.s.iter().fold(0.0_f64, |m, v| m.max(*v));
    p.s.iter().any(|&v| v < NEAR_BOUNDARY_REL * smax)
}

/// `p = −σμ A S⁻¹ 1 + A x`
pub fn build_p(lp: &LinearProgram, p0: &PrimalDualPoint, sigma: f64) -> Result<Vec<f64>> {
    check_len("build_p x", lp.n(), p0.n())?;
    let smu = sigma * p0.mu();
    let t: Vec<f64> = p0.x.iter().zip(&p0.s).map(|(x, s)| x - smu / floored(*s)).collect();
    lp.a.matvec(&t)
}

/// `A D² Aᵀ`
pub fn build_normal_matrix(lp: &LinearProgram, p0: &PrimalDualPoint) -> Result<DenseMatrix> {
    lp.a.weighted_gram(&scaling_d2(p0))
}

/// `A D² Aᵀ y` without forming the matrix.
pub fn normal_matvec(lp: &LinearProgram, d2: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    let mut t = lp.a.matvec_t(y)?;
    for (ti, di) in t.iter_mut().zip(d2) {
        *ti *= di;
    }
    lp.a.matvec(&t)
}

/// `A S⁻¹ v`
pub fn a_sinv(lp: &LinearProgram, p0: &PrimalDualPoint, v: &[f64]) -> Result<Vec<f64>> {
    check_len("a_sinv", lp.n(), v.len())?;
    let t: Vec<f64> = v.iter().zip(&p0.s).map(|(v, s)| v / floored(*s)).collect();
    lp.a.matvec(&t)
}

/// Shared part of both step systems: `ds = −Aᵀdy`,
/// `dx = −x + σμS⁻¹1 − D²ds`.
fn base_step(lp: &LinearProgram, p0: &PrimalDualPoint, sigma: f64, dy: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_len("step dy", lp.m(), dy.len())?;
    let ds: Vec<f64> = lp.a.matvec_t(dy)?.into_iter().map(|v| -v).collect();
    let smu = sigma * p0.mu();
    let dx = p0
        .x
        .iter()
        .zip(&p0.s)
        .zip(&ds)
        .map(|((x, s), d)| {
            let s = floored(*s);
            -x + smu / s - (x / s) * d
        })
        .collect();
    Ok((dx, ds))
}

/// Completes an inexact dual step without error adjustment.
pub fn complete_step_uncorrected(
    lp: &LinearProgram,
    p0: &PrimalDualPoint,
    sigma: f64,
    dy: &[f64],
) -> Result<StepDirection> {
    let (dx, ds) = base_step(lp, p0, sigma, dy)?;
    let p = build_p(lp, p0, sigma)?;
    let mdy = normal_matvec(lp, &scaling_d2(p0), dy)?;
    Ok(StepDirection {
        dx,
        dy: dy.to_vec(),
        ds,
        sigma,
        correction: None,
        residual_norm: norm2(&sub(&mdy, &p)),
    })
}

/// Completes an error-adjusted step: `dx` additionally loses `S⁻¹v`.
///
/// The pair `(dy, v)` must satisfy `AD²Aᵀdy = p + AS⁻¹v`; otherwise the step
/// would not keep `A dx = 0` and an [`IpmError::InconsistentPair`] is returned.
pub fn complete_step_corrected(
    lp: &LinearProgram,
    p0: &PrimalDualPoint,
    sigma: f64,
    dy: &[f64],
    v: &[f64],
) -> Result<StepDirection> {
    check_len("complete_step_corrected v", lp.n(), v.len())?;
    let (mut dx, ds) = base_step(lp, p0, sigma, dy)?;
    let p = build_p(lp, p0, sigma)?;
    let mdy = normal_matvec(lp, &scaling_d2(p0), dy)?;
    let r = sub(&mdy, &p);
    let mismatch = norm2(&sub(&r, &a_sinv(lp, p0, v)?));
    let tolerance = PAIR_TOL * (1.0 + norm2(&p));
    if !(mismatch <= tolerance) {
        return Err(IpmError::InconsistentPair {
            residual: mismatch,
            tolerance,
        });
    }
    for ((dxi, vi), si) in dx.iter_mut().zip(v).zip(&p0.s) {
        *dxi -= vi / floored(*si);
    }
    Ok(StepDirection {
        dx,
        dy: dy.to_vec(),
        ds,
        sigma,
        correction: Some(v.to_vec()),
        residual_norm: norm2(&r),
    })
}

/// Exact Newton step from a direct SPD solve of the normal equations.
pub fn exact_step(lp: &LinearProgram, p0: &PrimalDualPoint, sigma: f64) -> Result<StepDirection> {
    let chol = Cholesky::factor(&build_normal_matrix(lp, p0)?)?;
    exact_step_with(lp, p0, sigma, &chol)
}

/// [`exact_step`] reusing an existing factorization of `AD²Aᵀ`.
pub fn exact_step_with(lp: &LinearProgram, p0: &PrimalDualPoint, sigma: f64, chol: &Cholesky) -> Result<StepDirection> {
    let p = build_p(lp, p0, sigma)?;
    let dy = chol.solve(&p)?;
    complete_step_uncorrected(lp, p0, sigma, &dy)
}

// ---------------------------------------------------------------------------
// monitor bounds on ‖Δx∘Δs‖₂

fn centrality_term(theta: f64, n: usize, sigma: f64) -> f64 {
    theta * theta + n as f64 * (1.0 - sigma) * (1.0 - sigma)
}

/// Exact-step bound `(θ² + n(1−σ)²) / (2^{3/2}(1−θ)) · μ` for iterates in `N₂(θ)`.
pub fn exact_cross_bound(theta: f64, n: usize, sigma: f64, mu: f64) -> f64 {
    centrality_term(theta, n, sigma) / (2f64.powf(1.5) * (1.0 - theta)) * mu
}

/// Cross-term bound for uncorrected inexact steps; `pinv_f` is `‖(AD)†f‖₂`.
pub fn uncorrected_cross_bound(theta: f64, n: usize, sigma: f64, mu: f64, pinv_f: f64) -> f64 {
    let root = (centrality_term(theta, n, sigma) * mu / (1.0 - theta)).sqrt();
    exact_cross_bound(theta, n, sigma, mu) + 2.0 * root * pinv_f + pinv_f * pinv_f
}

/// Cross-term bound for error-adjusted steps; `scaled_v` is `‖(XS)^{-1/2}v‖₂`.
pub fn corrected_cross_bound(theta: f64, n: usize, sigma: f64, mu: f64, scaled_v: f64) -> f64 {
    let root = (centrality_term(theta, n, sigma) * mu / (1.0 - theta)).sqrt();
    exact_cross_bound(theta, n, sigma, mu) + 3.0 * root * scaled_v + 2.0 * scaled_v * scaled_v
}

/// `‖(AD)†f‖₂ = √(fᵀ(AD²Aᵀ)⁻¹f)` for full-row-rank `AD`.
pub fn pinv_ad_norm(chol: &Cholesky, f: &[f64]) -> Result<f64> {
    let z = chol.solve(f)?;
    Ok(crate::linalg::dot(f, &z).max(0.0).sqrt())
}

/// `‖(XS)^{-1/2} v‖₂`
pub fn scaled_correction_norm(p0: &PrimalDualPoint, v: &[f64]) -> f64 {
    v.iter()
        .zip(p0.x.iter().zip(&p0.s))
        .map(|(vi, (x, s))| vi * vi / (x * s))
        .sum::<f64>()
        .sqrt()
}
