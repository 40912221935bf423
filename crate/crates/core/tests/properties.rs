mod common;

use ipm_lab::harness::{self, quantile};
use ipm_lab::io::LpFile;
use ipm_lab::linalg::{self, dot, norm2, thin_svd, DenseMatrix};
use ipm_lab::sketch::{self, SketchOptions};
use ipm_lab::{model, PrimalDualPoint};
use proptest::prelude::*;

fn vec_pair(len: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (
        prop::collection::vec(-1e3f64..1e3, len),
        prop::collection::vec(-1e3f64..1e3, len),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hadamard_cauchy_schwarz((u, v) in (1usize..60).prop_flat_map(vec_pair)) {
        let h = linalg::hadamard(&u, &v).unwrap();
        prop_assert!(norm2(&h) <= norm2(&u) * norm2(&v) * (1.0 + 1e-12));
    }

    #[test]
    fn svd_invariants_and_row_space_bound(rows in 1usize..7, extra in 0usize..6, seed in any::<u64>()) {
        let cols = rows + extra;
        let mut r = common::rng(seed);
        let m = common::uniform_matrix(&mut r, rows, cols, 5.0);
        let svd = thin_svd(&m).unwrap();
        prop_assert_eq!(svd.rank(), rows);
        prop_assert!(svd.sigma.windows(2).all(|w| w[0] >= w[1]));
        let utu = svd.u.transpose().matmul(&svd.u).unwrap();
        prop_assert!(utu.sub(&DenseMatrix::identity(rows)).unwrap().frobenius_norm() <= 1e-10);
        let err = linalg::spectral_norm(&m.sub(&svd.reconstruct()).unwrap()).unwrap();
        prop_assert!(err <= 1e-8 * svd.sigma_max());
        // x = Mᵀz lies in the row space
        let z = common::gaussian_vec(&mut r, rows);
        let x = m.matvec_t(&z).unwrap();
        prop_assert!(norm2(&m.matvec(&x).unwrap()) >= svd.sigma_min() * norm2(&x) * (1.0 - 1e-9));
    }

    #[test]
    fn energy_norm_of_identity_is_euclidean(x in prop::collection::vec(-1e3f64..1e3, 1..30)) {
        let e = linalg::energy_norm(&x, &DenseMatrix::identity(x.len())).unwrap();
        prop_assert!((e - norm2(&x)).abs() <= 1e-12 * (1.0 + norm2(&x)));
    }

    #[test]
    fn spd_solve_inverts_matvec(n in 1usize..12, seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let g = common::uniform_matrix(&mut r, n, n, 1.0);
        let mut m = g.transpose().matmul(&g).unwrap();
        for i in 0..n {
            m.set(i, i, m.get(i, i) + 1.0);
        }
        let x = common::gaussian_vec(&mut r, n);
        let b = m.matvec(&x).unwrap();
        let back = linalg::solve_spd(&m, &b).unwrap();
        let res = norm2(&linalg::sub(&m.matvec(&back).unwrap(), &b));
        prop_assert!(res <= 1e-10 * norm2(&b).max(1.0));
    }

    #[test]
    fn duality_measure_scales_and_neighborhoods_nest(
        n in 2usize..40, mu in 1e-3f64..1e3, dist in 0.0f64..0.9, t in 1e-3f64..1e3,
        th1 in 0.01f64..0.99, th2 in 0.01f64..0.99, seed in any::<u64>(),
    ) {
        let (_, p) = common::off_center_instance(1, n, mu, dist, seed);
        prop_assert!(p.mu() > 0.0);
        let scaled = PrimalDualPoint::new(p.x.iter().map(|v| t * v).collect(), p.y.clone(), p.s.clone()).unwrap();
        prop_assert!((scaled.mu() - t * p.mu()).abs() <= 1e-12 * t * p.mu());
        let (lo, hi) = if th1 <= th2 { (th1, th2) } else { (th2, th1) };
        if model::neighborhood_check(&p, lo).member {
            prop_assert!(model::neighborhood_check(&p, hi).member);
        }
        if model::neighborhood_check(&p, hi).member {
            let min_xs = p.x.iter().zip(&p.s).map(|(a, b)| a * b).fold(f64::INFINITY, f64::min);
            prop_assert!(min_xs >= (1.0 - hi) * p.mu() * (1.0 - 1e-12));
        }
    }

    #[test]
    fn sketch_rows_and_adjoint(m in 1usize..10, n in 20usize..200, seed in any::<u64>()) {
        let w_cols = (m * 4).min(n);
        let opts = SketchOptions { cols_override: Some(w_cols), ..Default::default() };
        let w = sketch::build_sketch(n, m, 0.5, 0.1, seed, &opts).unwrap();
        prop_assert_eq!(w.n_cols(), w_cols);
        for i in 0..n {
            let entries: Vec<(usize, f64)> = w.row(i).collect();
            prop_assert_eq!(entries.len(), w.nnz_per_row());
            let mut cols: Vec<usize> = entries.iter().map(|e| e.0).collect();
            cols.sort_unstable();
            cols.dedup();
            prop_assert_eq!(cols.len(), w.nnz_per_row());
            prop_assert!(entries.iter().all(|e| e.1.abs() == w.scale()));
        }
        let ones_t = w.apply_t(&vec![1.0; n]).unwrap();
        prop_assert!(ones_t.iter().all(|t| t.abs() <= n as f64 * w.scale()));
        let mut r = common::rng(seed);
        let a = common::gaussian_vec(&mut r, n);
        let b = common::gaussian_vec(&mut r, w_cols);
        let lhs = dot(&w.apply_t(&a).unwrap(), &b);
        let rhs = dot(&a, &w.apply(&b).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + norm2(&a) * norm2(&b) * w.scale() * w.nnz_per_row() as f64));
        let again = sketch::build_sketch(n, m, 0.5, 0.1, seed, &opts).unwrap();
        prop_assert_eq!(again, w);
    }

    #[test]
    fn generated_starts_are_centered_and_feasible(m in 1usize..12, extra in 0usize..30, seed in any::<u64>()) {
        let n = m + extra;
        let (lp, p) = harness::generate_synthetic_lp(m, n, seed).unwrap();
        prop_assert!((p.mu() - 20.0).abs() <= 1e-12 * 20.0);
        let nb = model::neighborhood_check(&p, 0.25);
        prop_assert!(nb.member);
        prop_assert!(nb.distance <= 1e-12 * n as f64 * 20.0);
        let res = model::residuals(&lp, &p).unwrap();
        prop_assert!(res.primal_infeasibility == 0.0);
        prop_assert!(res.dual_infeasibility <= 1e-12 * norm2(&lp.c));
        let a = LpFile::from_problem(&lp, Some(&p), None).to_json().unwrap();
        let (lp2, p2) = harness::generate_synthetic_lp(m, n, seed).unwrap();
        prop_assert_eq!(a, LpFile::from_problem(&lp2, Some(&p2), None).to_json().unwrap());
    }

    #[test]
    fn quantiles_are_ordered(mut data in prop::collection::vec(-1e6f64..1e6, 1..80)) {
        data.sort_by(f64::total_cmp);
        let (q10, q50, q90) = (quantile(&data, 0.1), quantile(&data, 0.5), quantile(&data, 0.9));
        prop_assert!(data[0] <= q10 && q10 <= q50 && q50 <= q90 && q90 <= data[data.len() - 1]);
    }
}

#[test]
fn perfect_line_has_unit_correlation() {
    let xs = [1.0, 2.0, 3.0, 4.0];
    let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x + 1.0).collect();
    let fit = harness::fit_linearity(&xs, &ys).unwrap();
    assert!((fit.pearson_r - 1.0).abs() < 1e-12);
    assert!((fit.slope - 3.0).abs() < 1e-12 && (fit.intercept - 1.0).abs() < 1e-12);
    assert!(harness::fit_linearity(&xs, &[2.0; 4]).unwrap().degenerate);
}
