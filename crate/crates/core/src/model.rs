//! Standard-form LP data and primal-dual iterates.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, IpmError, Result};
use crate::linalg::{dot, norm2, sub, thin_svd, DenseMatrix};

/// Relative `sigma_m / sigma_1` threshold below which `A` is treated as rank deficient.
pub const RANK_TOL: f64 = 1e-8;

/// `min cᵀx  s.t.  Ax = b, x ≥ 0`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub a: DenseMatrix,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl LinearProgram {
    /// Checks shapes and finiteness. Rank is checked separately by
    /// [`LinearProgram::check_full_row_rank`] since reductions accept tall inputs.
    pub fn new(a: DenseMatrix, b: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        check_len("LinearProgram b", a.rows(), b.len())?;
        check_len("LinearProgram c", a.cols(), c.len())?;
        if b.iter().chain(&c).any(|v| !v.is_finite()) {
            return Err(IpmError::NonFinite("LinearProgram b/c"));
        }
        Ok(Self { a, b, c })
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.a.rows()
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.a.cols()
    }

    /// Requires `m ≤ n` and `sigma_m / sigma_1 > RANK_TOL`.
    pub fn check_full_row_rank(&self) -> Result<()> {
        if self.m() > self.n() {
            return Err(IpmError::RankDeficient { ratio: 0.0 });
        }
        if self.m() == 0 {
            return Ok(());
        }
        let svd = thin_svd(&self.a)?;
        let ratio = if svd.sigma_max() > 0.0 {
            svd.sigma_min() / svd.sigma_max()
        } else {
            0.0
        };
        if ratio > RANK_TOL {
            Ok(())
        } else {
            Err(IpmError::RankDeficient { ratio })
        }
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        dot(&self.c, x)
    }
}

/// Strictly interior iterate `(x, y, s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimalDualPoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub s: Vec<f64>,
}

impl PrimalDualPoint {
    /// Validates finiteness and `x, s > 0`; a violation is reported as
    /// [`IpmError::LeftInterior`] with the first offending index.
    pub fn new(x: Vec<f64>, y: Vec<f64>, s: Vec<f64>) -> Result<Self> {
        check_len("PrimalDualPoint s", x.len(), s.len())?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(IpmError::NonFinite("PrimalDualPoint y"));
        }
        check_interior("x", &x)?;
        check_interior("s", &s)?;
        Ok(Self { x, y, s })
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn mu(&self) -> f64 {
        duality_measure(self)
    }

    /// `(x + α dx, y + α dy, s + α ds)`, validated.
    pub fn step(&self, alpha: f64, dx: &[f64], dy: &[f64], ds: &[f64]) -> Result<Self> {
        let mv = |base: &[f64], d: &[f64]| -> Vec<f64> { base.iter().zip(d).map(|(b, d)| b + alpha * d).collect() };
        Self::new(mv(&self.x, dx), mv(&self.y, dy), mv(&self.s, ds))
    }
}

fn check_interior(which: &'static str, v: &[f64]) -> Result<()> {
    match v.iter().position(|&t| !(t > 0.0) || !t.is_finite()) {
        Some(index) => Err(IpmError::LeftInterior {
            which,
            index,
            value: v[index],
        }),
        None => Ok(()),
    }
}

/// `μ = xᵀs / n`
pub fn duality_measure(p: &PrimalDualPoint) -> f64 {
    dot(&p.x, &p.s) / p.n() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborhoodCheck {
    pub member: bool,
    /// `‖x∘s − μ1‖₂`
    pub distance: f64,
    pub mu: f64,
}

/// Membership in `N₂(θ) = {‖x∘s − μ1‖₂ ≤ θμ, (x, s) > 0}`.
pub fn neighborhood_check(p: &PrimalDualPoint, theta: f64) -> NeighborhoodCheck {
    let mu = p.mu();
    let distance = centrality_distance(&p.x, &p.s, mu);
    let interior = p.x.iter().chain(&p.s).all(|&v| v > 0.0);
    NeighborhoodCheck {
        member: interior && distance <= theta * mu,
        distance,
        mu,
    }
}

/// `‖x∘s − μ1‖₂`
pub fn centrality_distance(x: &[f64], s: &[f64], mu: f64) -> f64 {
    x.iter()
        .zip(s)
        .map(|(a, b)| {
            let d = a * b - mu;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// `‖Ax − b‖₂`
    pub primal_infeasibility: f64,
    /// `‖Aᵀy + s − c‖₂`
    pub dual_infeasibility: f64,
    pub duality_measure: f64,
}

pub fn residuals(lp: &LinearProgram, p: &PrimalDualPoint) -> Result<Residuals> {
    check_len("residuals x", lp.n(), p.x.len())?;
    check_len("residuals y", lp.m(), p.y.len())?;
    let ax = lp.a.matvec(&p.x)?;
    let primal = norm2(&sub(&ax, &lp.b));
    let mut dual = lp.a.matvec_t(&p.y)?;
    for ((d, s), c) in dual.iter_mut().zip(&p.s).zip(&lp.c) {
        *d += s - c;
    }
    Ok(Residuals {
        primal_infeasibility: primal,
        dual_infeasibility: norm2(&dual),
        duality_measure: p.mu(),
    })
}
