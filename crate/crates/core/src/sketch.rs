//! Sparse oblivious sketching matrices.
//!
//! `W` is `n × w` with exactly `s` nonzeros per row, each `±1/√s`, in
//! uniformly sampled distinct columns. It is stored as per-row index/sign
//! lists and never densified.

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{check_len, IpmError, Result};
use crate::linalg::{thin_svd, DenseMatrix};
use crate::model::RANK_TOL;
use crate::rng;

/// Constants and overrides for the sketch size formulas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SketchOptions {
    /// multiplier in `w = ceil(c_w · m/ζ² · ln(m/η))`
    pub c_w: f64,
    /// multiplier in `s = ceil(c_s · 1/ζ · ln(m/η))`
    pub c_s: f64,
    /// fixed `w`, bypassing the formula
    pub cols_override: Option<usize>,
}

impl Default for SketchOptions {
    fn default() -> Self {
        Self {
            c_w: 1.0,
            c_s: 1.0,
            cols_override: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SketchMatrix {
    n_rows: usize,
    n_cols: usize,
    per_row: usize,
    /// row-major `n_rows × per_row` column indices
    indices: Vec<usize>,
    /// row-major `n_rows × per_row` signs
    negative: Vec<bool>,
    scale: f64,
    seed: u64,
}

/// `(w, s)` from the sketch-size formulas, before any width check.
pub fn sketch_dims(m: usize, zeta: f64, eta: f64, opts: &SketchOptions) -> Result<(usize, usize)> {
    if !(zeta > 0.0 && zeta < 1.0) {
        return Err(IpmError::InvalidParameter(format!("zeta must lie in (0, 1), got {zeta}")));
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(IpmError::InvalidParameter(format!("eta must lie in (0, 1), got {eta}")));
    }
    if m == 0 {
        return Err(IpmError::InvalidParameter("sketch needs m ≥ 1".into()));
    }
    let log_term = (m as f64 / eta).ln();
    let w = match opts.cols_override {
        Some(w) => w,
        None => (opts.c_w * m as f64 / (zeta * zeta) * log_term).ceil() as usize,
    };
    let s = (opts.c_s / zeta * log_term).ceil().max(1.0) as usize;
    Ok((w.max(1), s.min(w.max(1))))
}

/// Builds the `n × w` sketch. Fails with [`IpmError::SketchTooWide`] when
/// `w > n`; callers fall back to [`SketchMatrix::identity`].
pub fn build_sketch(n: usize, m: usize, zeta: f64, eta: f64, seed: u64, opts: &SketchOptions) -> Result<SketchMatrix> {
    let (w, s) = sketch_dims(m, zeta, eta, opts)?;
    if w > n {
        return Err(IpmError::SketchTooWide { w, n });
    }
    let mut r = rng::stream(seed, rng::SKETCH, 0);
    let mut indices = Vec::with_capacity(n * s);
    let mut negative = Vec::with_capacity(n * s);
    for _ in 0..n {
        let mut cols = sample(&mut r, w, s).into_vec();
        cols.sort_unstable();
        for c in cols {
            indices.push(c);
            negative.push(r.random::<bool>());
        }
    }
    Ok(SketchMatrix {
        n_rows: n,
        n_cols: w,
        per_row: s,
        indices,
        negative,
        scale: 1.0 / (s as f64).sqrt(),
        seed,
    })
}

impl SketchMatrix {
    /// `W = I_n`, the exact (unsketched) case.
    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            per_row: 1,
            indices: (0..n).collect(),
            negative: vec![false; n],
            scale: 1.0,
            seed: 0,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz_per_row(&self) -> usize {
        self.per_row
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_identity(&self) -> bool {
        self.per_row == 1
            && self.n_rows == self.n_cols
            && self.scale == 1.0
            && self.indices.iter().enumerate().all(|(i, &c)| i == c)
            && self.negative.iter().all(|b| !b)
    }

    /// Nonzeros of row `i` as `(column, value)`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = i * self.per_row;
        let hi = lo + self.per_row;
        self.indices[lo..hi]
            .iter()
            .zip(&self.negative[lo..hi])
            .map(move |(&c, &neg)| (c, if neg { -self.scale } else { self.scale }))
    }

    /// `W z` for `z` of length `w`.
    pub fn apply(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_len("SketchMatrix::apply", self.n_cols, z.len())?;
        Ok((0..self.n_rows).map(|i| self.row(i).map(|(c, v)| v * z[c]).sum()).collect())
    }

    /// `Wᵀ x` for `x` of length `n`.
    pub fn apply_t(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("SketchMatrix::apply_t", self.n_rows, x.len())?;
        let mut out = vec![0.0; self.n_cols];
        for (i, &xi) in x.iter().enumerate() {
            for (c, v) in self.row(i) {
                out[c] += v * xi;
            }
        }
        Ok(out)
    }

    /// `M W` for `M` with `n` columns.
    pub fn right_multiply(&self, m: &DenseMatrix) -> Result<DenseMatrix> {
        check_len("SketchMatrix::right_multiply", self.n_rows, m.cols())?;
        let mut out = DenseMatrix::zeros(m.rows(), self.n_cols);
        for r in 0..m.rows() {
            let src = m.row(r);
            for (k, &a) in src.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (c, v) in self.row(k) {
                    out.set(r, c, out.get(r, c) + a * v);
                }
            }
        }
        Ok(out)
    }
}

/// `‖V W Wᵀ Vᵀ − I_m‖₂`, with `V` the right singular vectors of `ad` (`m × n`).
/// The identity sketch reports exactly zero.
pub fn embedding_check(w: &SketchMatrix, ad: &DenseMatrix) -> Result<f64> {
    let svd = thin_svd(ad)?;
    let ratio = if svd.sigma_max() > 0.0 {
        svd.sigma_min() / svd.sigma_max()
    } else {
        0.0
    };
    if ad.rows() > ad.cols() || ratio <= RANK_TOL {
        return Err(IpmError::RankDeficient { ratio });
    }
    if w.is_identity() {
        crate::error::check_len("embedding_check sketch rows", ad.cols(), w.n_rows())?;
        return Ok(0.0);
    }
    let b = w.right_multiply(&svd.vt)?;
    let mut g = b.matmul(&b.transpose())?;
    for i in 0..g.rows() {
        g.set(i, i, g.get(i, i) - 1.0);
    }
    crate::linalg::spectral_norm(&g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dot;

    #[test]
    fn explicit_width_and_row_structure() {
        let w = build_sketch(
            70,
            20,
            0.5,
            0.1,
            3,
            &SketchOptions {
                cols_override: Some(60),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(w.n_cols(), 60);
        let s = (2.0 * (200f64).ln()).ceil() as usize;
        assert_eq!(w.nnz_per_row(), s);
        for i in 0..w.n_rows() {
            let entries: Vec<_> = w.row(i).collect();
            assert_eq!(entries.len(), s);
            let mut cols: Vec<usize> = entries.iter().map(|e| e.0).collect();
            cols.dedup();
            assert_eq!(cols.len(), s);
            assert!(entries.iter().all(|e| e.1.abs() == 1.0 / (s as f64).sqrt()));
        }
    }

    #[test]
    fn same_seed_same_structure() {
        let opts = SketchOptions::default();
        let a = build_sketch(500, 5, 0.5, 0.2, 42, &opts).unwrap();
        let b = build_sketch(500, 5, 0.5, 0.2, 42, &opts).unwrap();
        let c = build_sketch(500, 5, 0.5, 0.2, 43, &opts).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn too_wide_is_an_error() {
        let err = build_sketch(100, 20, 0.5, 0.1, 1, &SketchOptions::default()).unwrap_err();
        assert!(matches!(err, IpmError::SketchTooWide { n: 100, .. }));
    }

    #[test]
    fn apply_and_transpose_are_adjoint() {
        let w = build_sketch(
            50,
            4,
            0.5,
            0.3,
            9,
            &SketchOptions {
                cols_override: Some(12),
                ..Default::default()
            },
        )
        .unwrap();
        let a: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..12).map(|i| (i as f64 * 1.1).cos()).collect();
        let lhs = dot(&w.apply_t(&a).unwrap(), &b);
        let rhs = dot(&a, &w.apply(&b).unwrap());
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn identity_sketch_embeds_exactly() {
        let ad = DenseMatrix::from_fn(3, 9, |i, j| ((i * 7 + j * 3) as f64).sin() + if i == j { 2.0 } else { 0.0 });
        let w = SketchMatrix::identity(9);
        assert!(w.is_identity());
        assert!(embedding_check(&w, &ad).unwrap() < 1e-14);
    }

    #[test]
    fn single_row_reduces_to_weighted_sum() {
        let ad = DenseMatrix::from_rows(&[vec![1.0, 2.0, -1.0, 0.5, 3.0, 1.5]]).unwrap();
        let w = build_sketch(
            6,
            1,
            0.5,
            0.5,
            5,
            &SketchOptions {
                cols_override: Some(3),
                ..Default::default()
            },
        )
        .unwrap();
        let v: Vec<f64> = {
            let r = ad.row(0);
            let nrm = crate::linalg::norm2(r);
            r.iter().map(|x| x / nrm).collect()
        };
        let wt_v = w.apply_t(&v).unwrap();
        let expected = (dot(&wt_v, &wt_v) - 1.0).abs();
        assert!((embedding_check(&w, &ad).unwrap() - expected).abs() < 1e-13);
    }
}
