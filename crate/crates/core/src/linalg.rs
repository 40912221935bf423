//! Dense linear algebra kernels.
//!
//! Everything here works on row-major [`DenseMatrix`] values and plain
//! `&[f64]` vectors. The factorizations are small and self-contained:
//! a one-sided Jacobi thin SVD, a Cholesky solver with one step of
//! iterative refinement, and a modified Gram-Schmidt orthonormalizer.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, IpmError, Result};

/// Row-major dense matrix of finite `f64` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let n = d.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in d.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    /// Builds a matrix from row-major data, rejecting non-finite entries.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_len("DenseMatrix::from_row_major", rows * cols, data.len())?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(IpmError::NonFinite("DenseMatrix entries"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            check_len("DenseMatrix::from_rows", c, row.len())?;
            data.extend_from_slice(row);
        }
        Self::from_row_major(r, c, data)
    }

    pub(crate) fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Assembles a matrix from column vectors of equal length.
    pub fn from_columns(cols: &[Vec<f64>], rows: usize) -> Self {
        Self::from_fn(rows, cols.len(), |i, j| cols[j][i])
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// `self * x`
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("matvec", self.cols, x.len())?;
        Ok((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }

    /// `selfᵀ * y`
    pub fn matvec_t(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_len("matvec_t", self.rows, y.len())?;
        let mut out = vec![0.0; self.cols];
        for (i, &yi) in y.iter().enumerate() {
            if yi != 0.0 {
                axpy(yi, self.row(i), &mut out);
            }
        }
        Ok(out)
    }

    pub fn matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        check_len("matmul", self.cols, rhs.rows)?;
        let mut out = DenseMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a != 0.0 {
                    axpy(a, rhs.row(k), out_row);
                }
            }
        }
        Ok(out)
    }

    /// `self * diag(d)`
    pub fn scale_columns(&self, d: &[f64]) -> Result<DenseMatrix> {
        check_len("scale_columns", self.cols, d.len())?;
        let mut out = self.clone();
        for i in 0..self.rows {
            for (v, &dj) in out.data[i * self.cols..(i + 1) * self.cols].iter_mut().zip(d) {
                *v *= dj;
            }
        }
        Ok(out)
    }

    /// `self * diag(d) * selfᵀ`, symmetric by construction.
    pub fn weighted_gram(&self, d: &[f64]) -> Result<DenseMatrix> {
        check_len("weighted_gram", self.cols, d.len())?;
        let m = self.rows;
        let mut out = DenseMatrix::zeros(m, m);
        let mut scaled = vec![0.0; self.cols];
        for i in 0..m {
            for ((s, &a), &w) in scaled.iter_mut().zip(self.row(i)).zip(d) {
                *s = a * w;
            }
            for j in i..m {
                let v = dot(&scaled, self.row(j));
                out.data[i * m + j] = v;
                out.data[j * m + i] = v;
            }
        }
        Ok(out)
    }

    pub fn sub(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        check_len("sub rows", self.rows, rhs.rows)?;
        check_len("sub cols", self.cols, rhs.cols)?;
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect();
        Ok(DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.rows != self.cols {
            return false;
        }
        let scale = self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
        (0..self.rows).all(|i| (i + 1..self.cols).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol * scale))
    }
}

// ---------------------------------------------------------------------------
// vector helpers

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(alpha: f64, a: &[f64]) -> Vec<f64> {
    a.iter().map(|x| alpha * x).collect()
}

/// Element-wise product `u ∘ v`.
pub fn hadamard(u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    check_len("hadamard", u.len(), v.len())?;
    Ok(u.iter().zip(v).map(|(a, b)| a * b).collect())
}

/// `‖x‖_M = √(xᵀMx)` for symmetric positive definite `M`.
///
/// Quadratic forms in `[-1e-12, 0)` are treated as rounding noise and clamp to zero.
pub fn energy_norm(x: &[f64], m: &DenseMatrix) -> Result<f64> {
    let mx = m.matvec(x)?;
    let q = dot(x, &mx);
    if q < -1e-12 {
        return Err(IpmError::NotPositiveDefinite { value: q });
    }
    Ok(q.max(0.0).sqrt())
}

// ---------------------------------------------------------------------------
// thin SVD

/// `M = U diag(sigma) Vᵀ` with `r = min(rows, cols)`.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    /// rows × r, orthonormal columns
    pub u: DenseMatrix,
    /// nonincreasing, nonnegative
    pub sigma: Vec<f64>,
    /// r × cols, orthonormal rows
    pub vt: DenseMatrix,
}

impl ThinSvd {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma.first().copied().unwrap_or(0.0)
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigma.last().copied().unwrap_or(0.0)
    }

    /// `U diag(sigma) Vᵀ`
    pub fn reconstruct(&self) -> DenseMatrix {
        let us = self.u.scale_columns(&self.sigma).expect("shape fixed at construction");
        us.matmul(&self.vt).expect("shape fixed at construction")
    }
}

const JACOBI_MAX_SWEEPS: usize = 80;
const JACOBI_TOL: f64 = 1e-15;
/// Singular values below this fraction of `sigma_max` get their left vector
/// rebuilt by orthonormal completion.
const NULL_SIGMA_REL: f64 = 1e-13;

/// Thin SVD by one-sided (Hestenes) Jacobi on the narrower side of `m`.
pub fn thin_svd(m: &DenseMatrix) -> Result<ThinSvd> {
    if m.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(IpmError::NonFinite("thin_svd input"));
    }
    if m.rows() >= m.cols() {
        let cols: Vec<Vec<f64>> = (0..m.cols()).map(|j| m.column(j)).collect();
        let (u, sigma, v) = jacobi_svd_columns(cols, m.rows())?;
        Ok(ThinSvd {
            u,
            sigma,
            vt: v.transpose(),
        })
    } else {
        // SVD of Mᵀ = U' Σ V'ᵀ, so M = V' Σ U'ᵀ.
        let cols: Vec<Vec<f64>> = (0..m.rows()).map(|i| m.row(i).to_vec()).collect();
        let (u_t, sigma, v_t) = jacobi_svd_columns(cols, m.cols())?;
        Ok(ThinSvd {
            u: v_t,
            sigma,
            vt: u_t.transpose(),
        })
    }
}

/// Orthogonalizes `cols` (q vectors of length p, q ≤ p) by plane rotations.
/// Returns `(U: p×q, sigma, V: q×q)` with `G = U diag(sigma) Vᵀ`.
fn jacobi_svd_columns(mut cols: Vec<Vec<f64>>, p: usize) -> Result<(DenseMatrix, Vec<f64>, DenseMatrix)> {
    let q = cols.len();
    let mut v: Vec<Vec<f64>> = (0..q)
        .map(|j| {
            let mut e = vec![0.0; q];
            e[j] = 1.0;
            e
        })
        .collect();

    let mut converged = q < 2;
    let mut last_off = 0.0;
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        if converged {
            break;
        }
        let mut off = 0.0_f64;
        for i in 0..q {
            for j in i + 1..q {
                let alpha = dot(&cols[i], &cols[i]);
                let beta = dot(&cols[j], &cols[j]);
                let gamma = dot(&cols[i], &cols[j]);
                if alpha == 0.0 || beta == 0.0 || gamma == 0.0 {
                    continue;
                }
                let rel = gamma.abs() / (alpha * beta).sqrt();
                if rel <= JACOBI_TOL {
                    continue;
                }
                off = off.max(rel);
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, i, j, c, s);
                rotate(&mut v, i, j, c, s);
            }
        }
        last_off = off;
        converged = off <= JACOBI_TOL;
    }
    if !converged {
        return Err(IpmError::SvdNonConvergence {
            sweeps: JACOBI_MAX_SWEEPS,
            residual: last_off,
        });
    }

    let mut order: Vec<(f64, usize)> = cols.iter().enumerate().map(|(j, c)| (norm2(c), j)).collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0));
    let sigma_max = order.first().map_or(0.0, |o| o.0);

    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(q);
    let mut sigma = Vec::with_capacity(q);
    let mut v_cols = Vec::with_capacity(q);
    let mut deficient = Vec::new();
    for (k, &(s, j)) in order.iter().enumerate() {
        sigma.push(s);
        v_cols.push(v[j].clone());
        if s > 0.0 && s > NULL_SIGMA_REL * sigma_max {
            u_cols.push(scale(1.0 / s, &cols[j]));
        } else {
            u_cols.push(vec![0.0; p]);
            deficient.push(k);
        }
    }
    complete_orthonormal(&mut u_cols, &deficient, p);

    Ok((
        DenseMatrix::from_columns(&u_cols, p),
        sigma,
        DenseMatrix::from_columns(&v_cols, q),
    ))
}

#[inline]
fn rotate(cols: &mut [Vec<f64>], i: usize, j: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(j);
    let (a, b) = (&mut lo[i], &mut hi[0]);
    for (x, y) in a.iter_mut().zip(b.iter_mut()) {
        let xi = *x;
        let yj = *y;
        *x = c * xi - s * yj;
        *y = s * xi + c * yj;
    }
}

/// Fills the columns listed in `slots` with unit vectors orthogonal to every
/// other column, drawing candidates from the standard basis.
fn complete_orthonormal(cols: &mut [Vec<f64>], slots: &[usize], p: usize) {
    let mut candidate = 0usize;
    for &slot in slots {
        while candidate < p {
            let mut e = vec![0.0; p];
            e[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for (k, c) in cols.iter().enumerate() {
                    if k == slot {
                        continue;
                    }
                    let proj = dot(c, &e);
                    axpy(-proj, c, &mut e);
                }
            }
            let nrm = norm2(&e);
            if nrm > 1e-8 {
                cols[slot] = scale(1.0 / nrm, &e);
                break;
            }
        }
    }
}

/// Largest singular value.
pub fn spectral_norm(m: &DenseMatrix) -> Result<f64> {
    Ok(thin_svd(m)?.sigma_max())
}

/// Default relative truncation for [`pinv_apply`].
pub const DEFAULT_RANK_TOL: f64 = 1e-12;

/// `V Σ⁺ Uᵀ rhs`, dropping singular values below `rank_tol · σ₁`.
pub fn pinv_apply(svd: &ThinSvd, rhs: &[f64], rank_tol: f64) -> Result<Vec<f64>> {
    let coeffs = svd.u.matvec_t(rhs)?;
    let cutoff = rank_tol * svd.sigma_max();
    let scaled: Vec<f64> = coeffs
        .iter()
        .zip(&svd.sigma)
        .map(|(&c, &s)| if s > cutoff && s > 0.0 { c / s } else { 0.0 })
        .collect();
    svd.vt.matvec_t(&scaled)
}

// ---------------------------------------------------------------------------
// SPD solves

/// Lower-triangular Cholesky factor `L` with `M = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
    source: DenseMatrix,
}

impl Cholesky {
    pub fn factor(m: &DenseMatrix) -> Result<Self> {
        check_len("Cholesky (square)", m.rows(), m.cols())?;
        let n = m.rows();
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = m.get(j, j);
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(IpmError::Factorization { pivot: j, value: d });
            }
            let djj = d.sqrt();
            l[j * n + j] = djj;
            for i in j + 1..n {
                let mut s = m.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / djj;
            }
        }
        Ok(Self {
            n,
            l,
            source: m.clone(),
        })
    }

    fn solve_once(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut z = rhs.to_vec();
        for i in 0..n {
            let mut s = z[i];
            for k in 0..i {
                s -= self.l[i * n + k] * z[k];
            }
            z[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in i + 1..n {
                s -= self.l[k * n + i] * z[k];
            }
            z[i] = s / self.l[i * n + i];
        }
        z
    }

    /// Solves `M x = rhs` with one step of iterative refinement.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        check_len("Cholesky::solve", self.n, rhs.len())?;
        let mut x = self.solve_once(rhs);
        let r = sub(rhs, &self.source.matvec(&x)?);
        let dx = self.solve_once(&r);
        axpy(1.0, &dx, &mut x);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(IpmError::NonFinite("Cholesky::solve"));
        }
        Ok(x)
    }
}

/// Solves `M x = rhs` for symmetric positive definite `M`.
pub fn solve_spd(m: &DenseMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    Cholesky::factor(m)?.solve(rhs)
}

// ---------------------------------------------------------------------------
// orthonormalization

/// Modified Gram-Schmidt with one reorthogonalization pass. Returns the
/// thin `Q` factor of `m` (rows × cols); requires full column rank.
pub fn orthonormal_columns(m: &DenseMatrix) -> Result<DenseMatrix> {
    let p = m.rows();
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(m.cols());
    for j in 0..m.cols() {
        let mut c = m.column(j);
        let orig = norm2(&c);
        for _ in 0..2 {
            for prev in &q {
                let proj = dot(prev, &c);
                axpy(-proj, prev, &mut c);
            }
        }
        let nrm = norm2(&c);
        if !(nrm > 1e-12 * orig.max(f64::MIN_POSITIVE)) {
            return Err(IpmError::RankMismatch {
                expected: m.cols(),
                found: j,
            });
        }
        q.push(scale(1.0 / nrm, &c));
    }
    Ok(DenseMatrix::from_columns(&q, p))
}

/// Like [`orthonormal_columns`] but never fails on dependent columns: each
/// column that collapses under projection is replaced by a unit vector
/// orthogonal to the rest. Returns `Q` and the number of columns that
/// survived (the numerical rank of `m`). Requires `cols ≤ rows`.
pub fn orthonormal_basis(m: &DenseMatrix, rel_tol: f64) -> Result<(DenseMatrix, usize)> {
    let p = m.rows();
    if m.cols() > p {
        return Err(IpmError::Dimension {
            context: "orthonormal_basis columns",
            expected: p,
            found: m.cols(),
        });
    }
    let scale_ref = (0..m.cols()).map(|j| norm2(&m.column(j))).fold(0.0, f64::max);
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(m.cols());
    let mut collapsed = Vec::new();
    for j in 0..m.cols() {
        let mut c = m.column(j);
        for _ in 0..2 {
            for prev in &q {
                let proj = dot(prev, &c);
                axpy(-proj, prev, &mut c);
            }
        }
        let nrm = norm2(&c);
        if nrm > rel_tol * scale_ref && nrm > 0.0 {
            q.push(scale(1.0 / nrm, &c));
        } else {
            collapsed.push(j);
            q.push(vec![0.0; p]);
        }
    }
    complete_orthonormal(&mut q, &collapsed, p);
    Ok((DenseMatrix::from_columns(&q, p), m.cols() - collapsed.len()))
}
