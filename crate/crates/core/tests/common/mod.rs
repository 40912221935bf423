#![allow(dead_code)]

use ipm_lab::linalg::{self, DenseMatrix};
use ipm_lab::{LinearProgram, PrimalDualPoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize, half_width: f64) -> DenseMatrix {
    let data = (0..rows * cols).map(|_| r.random_range(-half_width..half_width)).collect();
    DenseMatrix::from_row_major(rows, cols, data).unwrap()
}

pub fn gaussian_vec(r: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| r.sample(StandardNormal)).collect()
}

/// Feasible LP with a start at exact distance `rel_dist·μ` from the central path.
pub fn off_center_instance(m: usize, n: usize, mu: f64, rel_dist: f64, seed: u64) -> (LinearProgram, PrimalDualPoint) {
    let mut r = rng(seed);
    let a = uniform_matrix(&mut r, m, n, 1.0);
    let x: Vec<f64> = (0..n).map(|_| r.random_range(0.5..2.0)).collect();
    let mut xi = gaussian_vec(&mut r, n);
    let mean = xi.iter().sum::<f64>() / n as f64;
    xi.iter_mut().for_each(|t| *t -= mean);
    let norm = linalg::norm2(&xi);
    let s: Vec<f64> = x
        .iter()
        .zip(&xi)
        .map(|(xj, t)| mu * (1.0 + rel_dist * t / norm) / xj)
        .collect();
    let y: Vec<f64> = (0..m).map(|_| r.random_range(-1.0..1.0)).collect();
    let b = a.matvec(&x).unwrap();
    let c = linalg::add(&a.matvec_t(&y).unwrap(), &s);
    (
        LinearProgram::new(a, b, c).unwrap(),
        PrimalDualPoint::new(x, y, s).unwrap(),
    )
}

pub struct Planted {
    pub lp: LinearProgram,
    pub start: PrimalDualPoint,
    pub x_star: Vec<f64>,
    pub objective: f64,
}

/// Rank-`k` `m × n` LP with a strictly complementary optimum on the basis
/// `0..k`, plus a perfectly centered start at duality measure `mu`.
pub fn planted_low_rank(m: usize, n: usize, k: usize, mu: f64, seed: u64) -> Planted {
    let mut r = rng(seed);
    let u = uniform_matrix(&mut r, m, k, 1.0);
    let v = uniform_matrix(&mut r, k, n, 1.0);
    let a = u.matmul(&v).unwrap();
    let x_star: Vec<f64> = (0..n).map(|j| if j < k { r.random_range(1.0..2.0) } else { 0.0 }).collect();
    let s_star: Vec<f64> = (0..n).map(|j| if j < k { 0.0 } else { r.random_range(1.0..2.0) }).collect();
    let y_star: Vec<f64> = (0..m).map(|_| r.random_range(-1.0..1.0)).collect();
    let b = a.matvec(&x_star).unwrap();
    let c = linalg::add(&a.matvec_t(&y_star).unwrap(), &s_star);
    let objective = linalg::dot(&c, &x_star);

    let cols_b: Vec<Vec<f64>> = (0..k).map(|j| a.column(j)).collect();
    let a_b = DenseMatrix::from_columns(&cols_b, m);
    let gram_b = a_b.transpose().matmul(&a_b).unwrap();
    // z ↦ A_B (A_BᵀA_B)⁻¹ z and w ↦ (A_BᵀA_B)⁻¹ A_Bᵀ w
    let lift = |z: &[f64]| a_b.matvec(&linalg::solve_spd(&gram_b, z).unwrap()).unwrap();
    let pinv = |w: &[f64]| linalg::solve_spd(&gram_b, &a_b.matvec_t(w).unwrap()).unwrap();

    let mut x = x_star.clone();
    let mut y = y_star.clone();
    let mut s = s_star.clone();
    for _ in 0..200 {
        let target: Vec<f64> = (0..k).map(|j| -mu / x[j]).collect();
        let delta = lift(&target);
        let shift = a.matvec_t(&delta).unwrap();
        s = linalg::sub(&s_star, &shift);
        let mut d: Vec<f64> = (0..n).map(|j| if j < k { 0.0 } else { mu / s[j] }).collect();
        let a_n_d = a.matvec(&d).unwrap();
        let d_b = pinv(&a_n_d);
        for j in 0..k {
            d[j] = -d_b[j];
        }
        x = linalg::add(&x_star, &d);
        y = linalg::add(&y_star, &delta);
    }
    for j in 0..k {
        s[j] = mu / x[j];
    }
    Planted {
        lp: LinearProgram::new(a, b, c).unwrap(),
        start: PrimalDualPoint::new(x, y, s).unwrap(),
        x_star,
        objective,
    }
}

/// Tall `m × n` LP (`m > n`, full column rank) whose only feasible point is
/// `x₀`, together with a centered interior pair `(x₀, y₀, μ/x₀)`.
pub fn tall_instance(m: usize, n: usize, mu: f64, seed: u64) -> (LinearProgram, PrimalDualPoint) {
    let mut r = rng(seed);
    let a = uniform_matrix(&mut r, m, n, 1.0);
    let x: Vec<f64> = (0..n).map(|_| r.random_range(1.0..2.0)).collect();
    let y: Vec<f64> = (0..m).map(|_| r.random_range(-1.0..1.0)).collect();
    let s: Vec<f64> = x.iter().map(|v| mu / v).collect();
    let b = a.matvec(&x).unwrap();
    let c = linalg::add(&a.matvec_t(&y).unwrap(), &s);
    (
        LinearProgram::new(a, b, c).unwrap(),
        PrimalDualPoint::new(x, y, s).unwrap(),
    )
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
