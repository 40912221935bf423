//! Reformulations that turn tall or exactly low-rank constraint matrices into
//! full-row-rank short-and-fat ones.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, IpmError, Result};
use crate::linalg::{norm2, orthonormal_basis, solve_spd, thin_svd, DenseMatrix};
use crate::model::{LinearProgram, PrimalDualPoint, RANK_TOL};
use crate::rng;

/// Pivot threshold relative to the largest row norm in [`low_rank_reduce`].
pub const PIVOT_REL_TOL: f64 = 1e-10;
/// Oversampling of the range finder.
pub const OVERSAMPLING: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReductionKind {
    DualSplit,
    LowRank,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionRecord {
    pub kind: ReductionKind,
    pub z: Option<DenseMatrix>,
    pub kept_rows: Option<Vec<usize>>,
    /// `(m, n)` of the original constraint matrix
    pub original_shape: (usize, usize),
    /// `(γ⁺, γ⁻)` added to the split cost by [`split_start`]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_shift: Option<Vec<f64>>,
}

/// Rewrites `min cᵀx, Ax = b, x ≥ 0` with tall `A` (`m > n`, rank `n`) as
/// the dual problem in standard form over `(y⁺, y⁻, s)`:
/// `min (−b, b, 0)ᵀ(y⁺, y⁻, s)` subject to `[Aᵀ, −Aᵀ, I_n](y⁺, y⁻, s) = c`.
pub fn dual_reformulate(lp: &LinearProgram) -> Result<(LinearProgram, ReductionRecord)> {
    let (m, n) = (lp.m(), lp.n());
    if m <= n {
        return Err(IpmError::InvalidParameter(format!(
            "dual reformulation expects a tall matrix, got {m}x{n}"
        )));
    }
    let svd = thin_svd(&lp.a)?;
    let ratio = if svd.sigma_max() > 0.0 {
        svd.sigma_min() / svd.sigma_max()
    } else {
        0.0
    };
    if ratio <= RANK_TOL {
        return Err(IpmError::RankDeficient { ratio });
    }
    let width = 2 * m + n;
    let mut a = DenseMatrix::zeros(n, width);
    for j in 0..n {
        for i in 0..m {
            let v = lp.a.get(i, j);
            a.set(j, i, v);
            a.set(j, m + i, -v);
        }
        a.set(j, 2 * m + j, 1.0);
    }
    let mut cost = Vec::with_capacity(width);
    cost.extend(lp.b.iter().map(|v| -v));
    cost.extend_from_slice(&lp.b);
    cost.extend(std::iter::repeat_n(0.0, n));
    let reduced = LinearProgram::new(a, lp.c.clone(), cost)?;
    Ok((
        reduced,
        ReductionRecord {
            kind: ReductionKind::DualSplit,
            z: None,
            kept_rows: None,
            original_shape: (m, n),
            cost_shift: None,
        },
    ))
}

fn expect_kind(record: &ReductionRecord, kind: ReductionKind) -> Result<()> {
    if record.kind == kind {
        Ok(())
    } else {
        Err(IpmError::InvalidParameter(format!("expected a {kind:?} record, got {:?}", record.kind)))
    }
}

/// `(y, s) = (y⁺ − y⁻, s)` from a primal point of the dual reformulation.
pub fn recover_dual(record: &ReductionRecord, reduced_x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    expect_kind(record, ReductionKind::DualSplit)?;
    let (m, n) = record.original_shape;
    check_len("recover_dual x", 2 * m + n, reduced_x.len())?;
    let y = (0..m).map(|i| reduced_x[i] - reduced_x[m + i]).collect();
    Ok((y, reduced_x[2 * m..].to_vec()))
}

/// Original primal `x = −ȳ` from the dual multipliers of the reformulation.
pub fn recover_primal(record: &ReductionRecord, reduced_y: &[f64]) -> Result<Vec<f64>> {
    expect_kind(record, ReductionKind::DualSplit)?;
    check_len("recover_primal y", record.original_shape.1, reduced_y.len())?;
    Ok(reduced_y.iter().map(|v| -v).collect())
}

/// Interior start for the dual reformulation built from an interior start of
/// the original LP.
///
/// The split forces `s̄(y⁺) + s̄(y⁻) = 0`, so the reformulated dual has no
/// strictly feasible point. The returned program therefore adds
/// `γ⁺ᵀy⁺ + γ⁻ᵀy⁻` to the cost with `γ± = μ/y±`, where
/// `y⁺ = max(y, 0) + shift` and `y⁻ = max(−y, 0) + shift`. The start
/// `(y⁺, y⁻, s; −x; γ⁺, γ⁻, x)` then has the same `μ` and the same distance
/// to the central path as the original point. The optimal value moves by at
/// most `Σγ±·y±` evaluated at the optimum. The shift is stored in the record.
pub fn split_start(
    original: &LinearProgram,
    reduced: &LinearProgram,
    record: &mut ReductionRecord,
    start: &PrimalDualPoint,
    shift: f64,
) -> Result<(LinearProgram, PrimalDualPoint)> {
    expect_kind(record, ReductionKind::DualSplit)?;
    let (m, n) = record.original_shape;
    check_len("split_start x", n, start.x.len())?;
    check_len("split_start y", m, start.y.len())?;
    if !(shift > 0.0) {
        return Err(IpmError::InvalidParameter(format!("shift must be positive, got {shift}")));
    }
    let mu = start.mu();
    let y_plus: Vec<f64> = start.y.iter().map(|v| v.max(0.0) + shift).collect();
    let y_minus: Vec<f64> = start.y.iter().map(|v| (-v).max(0.0) + shift).collect();
    let g_plus: Vec<f64> = y_plus.iter().map(|v| mu / v).collect();
    let g_minus: Vec<f64> = y_minus.iter().map(|v| mu / v).collect();

    let mut cost = reduced.c.clone();
    for i in 0..m {
        cost[i] += g_plus[i];
        cost[m + i] += g_minus[i];
    }
    let lp = LinearProgram::new(reduced.a.clone(), original.c.clone(), cost)?;
    let x: Vec<f64> = y_plus.iter().chain(&y_minus).chain(&start.s).copied().collect();
    let s: Vec<f64> = g_plus.iter().chain(&g_minus).chain(&start.x).copied().collect();
    let y: Vec<f64> = start.x.iter().map(|v| -v).collect();
    record.cost_shift = Some(g_plus.into_iter().chain(g_minus).collect());
    Ok((lp, PrimalDualPoint::new(x, y, s)?))
}

/// Orthonormal `Z` (`m × min(ℓ+2, m)`) approximately spanning the range of `a`,
/// from one Gaussian sample `Y = AG` followed by QR.
pub fn randomized_range_finder(a: &DenseMatrix, ell: usize, seed: u64) -> Result<DenseMatrix> {
    let (m, n) = (a.rows(), a.cols());
    if ell == 0 || ell > m.min(n) {
        return Err(IpmError::InvalidParameter(format!(
            "range finder needs 1 <= ell <= min(m, n) = {}, got {ell}",
            m.min(n)
        )));
    }
    let width = (ell + OVERSAMPLING).min(m);
    let mut r = rng::stream(seed, rng::RANGE_FINDER, 0);
    let g: Vec<f64> = (0..n * width).map(|_| StandardNormal.sample(&mut r)).collect();
    let g = DenseMatrix::from_row_major(n, width, g)?;
    let (z, _) = orthonormal_basis(&a.matmul(&g)?, PIVOT_REL_TOL)?;
    Ok(z)
}

/// Indices of `k`-many linearly independent rows found by Gaussian
/// elimination with partial pivoting.
fn independent_rows(rows: &[Vec<f64>]) -> Vec<usize> {
    let threshold = PIVOT_REL_TOL * rows.iter().map(|r| norm2(r)).fold(0.0, f64::max);
    let mut work: Vec<Vec<f64>> = rows.to_vec();
    let mut remaining: Vec<usize> = (0..rows.len()).collect();
    let mut kept = Vec::new();
    let cols = rows.first().map_or(0, Vec::len);
    for col in 0..cols {
        if remaining.is_empty() {
            break;
        }
        let (pos, &pivot_row) = remaining
            .iter()
            .enumerate()
            .max_by(|a, b| work[*a.1][col].abs().total_cmp(&work[*b.1][col].abs()))
            .expect("non-empty");
        let pivot = work[pivot_row][col];
        if !(pivot.abs() > threshold) {
            continue;
        }
        remaining.swap_remove(pos);
        kept.push(pivot_row);
        let pivot_vals = work[pivot_row].clone();
        for &r in &remaining {
            let factor = work[r][col] / pivot;
            if factor != 0.0 {
                for (w, p) in work[r][col..].iter_mut().zip(&pivot_vals[col..]) {
                    *w -= factor * p;
                }
            }
        }
    }
    kept.sort_unstable();
    kept
}

/// Replaces `Ax = b` (rank `k`) by `k` independent rows of `ZᵀAx = Zᵀb`,
/// where `Z` spans the range of `A`. The feasible set is unchanged.
pub fn low_rank_reduce(lp: &LinearProgram, k: usize, seed: u64) -> Result<(LinearProgram, ReductionRecord)> {
    let z = randomized_range_finder(&lp.a, k, seed)?;
    let zt = z.transpose();
    let za = zt.matmul(&lp.a)?;
    let zb = zt.matvec(&lp.b)?;
    let kept = independent_rows(&za.to_rows());
    if kept.len() != k {
        return Err(IpmError::RankMismatch {
            expected: k,
            found: kept.len(),
        });
    }
    let rows: Vec<Vec<f64>> = kept.iter().map(|&i| za.row(i).to_vec()).collect();
    let reduced = LinearProgram::new(
        DenseMatrix::from_rows(&rows)?,
        kept.iter().map(|&i| zb[i]).collect(),
        lp.c.clone(),
    )?;
    Ok((
        reduced,
        ReductionRecord {
            kind: ReductionKind::LowRank,
            z: Some(z),
            kept_rows: Some(kept),
            original_shape: (lp.m(), lp.n()),
            cost_shift: None,
        },
    ))
}

/// Carries an interior start over to a row-reduced program: `x` and `s` are
/// kept and `y` is the least-squares solution of `Āᵀy = c − s`.
pub fn reduced_start(reduced: &LinearProgram, start: &PrimalDualPoint) -> Result<PrimalDualPoint> {
    check_len("reduced_start x", reduced.n(), start.x.len())?;
    let rhs: Vec<f64> = reduced.c.iter().zip(&start.s).map(|(c, s)| c - s).collect();
    let gram = reduced.a.weighted_gram(&vec![1.0; reduced.n()])?;
    let y = solve_spd(&gram, &reduced.a.matvec(&rhs)?)?;
    PrimalDualPoint::new(start.x.clone(), y, start.s.clone())
}

/// Maps a point of the reduced program back to the original variables.
///
/// For the dual split, `x = −ȳ`, `y = y⁺ − y⁻` and `s` is the slack block.
/// For a row reduction, `x` and `s` are unchanged and `y = Z Sᵀȳ` where `S`
/// selects the kept rows, so that `Aᵀy = Āᵀȳ`.
pub fn map_back(record: &ReductionRecord, reduced: &PrimalDualPoint) -> Result<PrimalDualPoint> {
    match record.kind {
        ReductionKind::DualSplit => {
            let (y, s) = recover_dual(record, &reduced.x)?;
            let x = recover_primal(record, &reduced.y)?;
            PrimalDualPoint::new(x, y, s)
        }
        ReductionKind::LowRank => {
            let (Some(z), Some(kept)) = (&record.z, &record.kept_rows) else {
                return Err(IpmError::InvalidParameter("low-rank record lacks Z or kept rows".into()));
            };
            check_len("map_back y", kept.len(), reduced.y.len())?;
            let mut full = vec![0.0; z.cols()];
            for (&i, &v) in kept.iter().zip(&reduced.y) {
                full[i] = v;
            }
            PrimalDualPoint::new(reduced.x.clone(), z.matvec(&full)?, reduced.s.clone())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rank_two(m: usize, n: usize, seed: u64) -> DenseMatrix {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let mut v = || r.random_range(-1.0..1.0);
        let (u1, v1, u2, v2): (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) = (
            (0..m).map(|_| v()).collect(),
            (0..n).map(|_| v()).collect(),
            (0..m).map(|_| v()).collect(),
            (0..n).map(|_| v()).collect(),
        );
        DenseMatrix::from_fn(m, n, |i, j| u1[i] * v1[j] + u2[i] * v2[j])
    }

    fn projection_residual(a: &DenseMatrix, z: &DenseMatrix) -> f64 {
        let proj = z.matmul(&z.transpose().matmul(a).unwrap()).unwrap();
        crate::linalg::spectral_norm(&a.sub(&proj).unwrap()).unwrap()
    }

    #[test]
    fn range_finder_captures_exact_rank() {
        let a = rank_two(6, 9, 1);
        let z = randomized_range_finder(&a, 2, 7).unwrap();
        assert_eq!((z.rows(), z.cols()), (6, 4));
        let gram = z.transpose().matmul(&z).unwrap();
        assert!(gram.sub(&DenseMatrix::identity(4)).unwrap().frobenius_norm() < 1e-10);
        let norm = crate::linalg::spectral_norm(&a).unwrap();
        assert!(projection_residual(&a, &z) <= 1e-8 * norm);
    }

    #[test]
    fn range_finder_fixed_point() {
        let q = crate::linalg::orthonormal_columns(&rank_two(5, 2, 3).transpose().transpose()).unwrap();
        let z = randomized_range_finder(&q, 2, 0).unwrap();
        assert!(projection_residual(&q, &z) < 1e-12);
    }

    #[test]
    fn dual_shapes() {
        let mut r = ChaCha8Rng::seed_from_u64(2);
        let a = DenseMatrix::from_fn(100, 5, |_, _| r.random_range(-1.0..1.0));
        let lp = LinearProgram::new(a, vec![1.0; 100], vec![1.0; 5]).unwrap();
        let (red, rec) = dual_reformulate(&lp).unwrap();
        assert_eq!((red.m(), red.n()), (5, 205));
        assert!(red.check_full_row_rank().is_ok());
        assert_eq!(rec.original_shape, (100, 5));
        assert_eq!(&red.c[..100], &vec![-1.0; 100][..]);
    }

    #[test]
    fn wrong_rank_is_reported() {
        let a = rank_two(4, 8, 5);
        let lp = LinearProgram::new(a, vec![0.0; 4], vec![1.0; 8]).unwrap();
        assert!(matches!(
            low_rank_reduce(&lp, 1, 0),
            Err(IpmError::RankMismatch { expected: 1, found: 2 })
        ));
        assert!(matches!(low_rank_reduce(&lp, 2, 0), Ok((red, _)) if red.m() == 2));
    }
}
