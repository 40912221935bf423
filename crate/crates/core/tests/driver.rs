mod common;

use ipm_lab::driver::{self, IpmConfig, Mode, SolverKind};
use ipm_lab::{harness, model, IpmError, PrimalDualPoint};

fn cfg(eps: f64, mode: Mode, solver: SolverKind, seed: u64) -> IpmConfig {
    IpmConfig {
        seed,
        strict_monitors: true,
        ..IpmConfig::new(eps, mode, solver)
    }
}

#[test]
fn start_below_target_needs_no_iterations() {
    let (lp, start) = harness::generate_synthetic_lp(3, 10, 1).unwrap();
    let out = driver::run_exact(&lp, &start, &cfg(10.0, Mode::Exact, SolverKind::Direct, 0)).unwrap();
    assert!(out.converged);
    assert_eq!(out.outer_iterations, 0);
    assert_eq!(out.point, start);
}

#[test]
fn exact_driver_stays_in_neighborhoods() {
    for seed in 0..4 {
        let (lp, start) = harness::generate_synthetic_lp(8, 40, seed).unwrap();
        let out = driver::run_exact(&lp, &start, &cfg(1e-4, Mode::Exact, SolverKind::Direct, seed)).unwrap();
        assert!(out.converged && out.point.mu() <= 2e-4);
        for r in &out.trace.records {
            assert_eq!(r.backtracks, 0);
            assert!(r.theta_predictor <= 0.5 && r.theta_corrector <= 0.25, "{r:?}");
            assert!(r.cross_norm <= r.cross_bound.unwrap() * (1.0 + 1e-9));
            // σ = 1, α = 1 leaves μ unchanged
            assert!((r.mu_next - r.mu_predictor).abs() <= 1e-10 * r.mu_predictor);
        }
    }
}

#[test]
fn synthetic_instance_converges_within_closed_form_count() {
    for seed in 0..3 {
        let (lp, start) = harness::generate_synthetic_lp(20, 100, seed).unwrap();
        let c = IpmConfig {
            solver_tolerance: Some(1e-3),
            ..cfg(0.1, Mode::Corrected, SolverKind::Perturb, seed)
        };
        let out = driver::run_corrected(&lp, &start, &c).unwrap();
        assert!(out.converged);
        let limit = (100f64.sqrt() / 0.37 * (20.0f64 / 0.1).ln()).ceil() as usize;
        assert!(out.outer_iterations <= limit, "{} > {limit}", out.outer_iterations);
        assert!(out.residuals.primal_infeasibility <= 1e-8);
    }
}

#[test]
fn corrected_pcg_respects_correction_budget() {
    let eps = 0.01;
    let (lp, start) = harness::generate_synthetic_lp(10, 80, 3).unwrap();
    let out = driver::run_corrected(&lp, &start, &cfg(eps, Mode::Corrected, SolverKind::Pcg, 3)).unwrap();
    assert!(out.converged);
    assert_eq!(out.tolerance, eps / 128.0);
    let sqrt_n = (lp.n() as f64).sqrt();
    for r in &out.trace.records {
        assert!(r.predictor_error <= eps / 128.0 * (1.0 + 1e-9));
        assert!(r.corrector_error <= eps / 128.0 * (1.0 + 1e-9));
        assert!(r.mu_identity_gap.unwrap() <= 1e-10);
        assert!((r.mu_next - r.mu_predictor).abs() <= r.corrector_error / sqrt_n * (1.0 + 1e-9) + 1e-12 * r.mu);
        assert!(r.predictor_inner > 0);
    }
}

#[test]
fn uncorrected_driver_keeps_dual_feasibility() {
    for solver in [SolverKind::Perturb, SolverKind::Pcg] {
        let eps = 0.05;
        let (lp, start) = harness::generate_synthetic_lp(6, 40, 7).unwrap();
        let out = driver::run_uncorrected(&lp, &start, &cfg(eps, Mode::Uncorrected, solver, 7)).unwrap();
        assert!(out.converged);
        let delta = driver::uncorrected_tolerance(eps, 40, 20.0);
        assert_eq!(out.tolerance, delta);
        for r in &out.trace.records {
            assert!(r.dual_infeasibility <= 1e-10, "{r:?}");
            assert!(r.mu_gap_sign_ok.is_some());
        }
        let k = out.outer_iterations as f64;
        let infeas = out.residuals.primal_infeasibility;
        assert!(infeas < eps && infeas <= 2.0 * k * delta, "{infeas:e}");
    }
}

#[test]
fn runs_are_reproducible_from_the_seed() {
    let (lp, start) = harness::generate_synthetic_lp(5, 30, 2).unwrap();
    let c = cfg(0.01, Mode::Corrected, SolverKind::Pcg, 42);
    let a = driver::run(&lp, &start, &c).unwrap();
    let b = driver::run(&lp, &start, &c).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.point, b.point);
    let mut csv = Vec::new();
    a.trace.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(text.lines().count(), a.outer_iterations + 1);
    assert!(text.starts_with("k,mu,alpha,"));
}

#[test]
fn iteration_cap_reports_nonconvergence() {
    let (lp, start) = harness::generate_synthetic_lp(4, 20, 0).unwrap();
    let c = IpmConfig {
        max_outer: Some(2),
        ..cfg(1e-6, Mode::Exact, SolverKind::Direct, 0)
    };
    let out = driver::run(&lp, &start, &c).unwrap();
    assert!(!out.converged);
    assert_eq!(out.outer_iterations, 2);
}

#[test]
fn off_center_start_is_rejected() {
    let (lp, start) = common::off_center_instance(3, 12, 1.0, 0.4, 5);
    assert!(!model::neighborhood_check(&start, 0.25).member);
    let err = driver::run(&lp, &start, &cfg(0.1, Mode::Exact, SolverKind::Direct, 0)).unwrap_err();
    assert!(matches!(err, IpmError::InvalidStart { .. }), "{err}");
    let bad = PrimalDualPoint::new(start.x.clone(), vec![0.0; 2], start.s.clone()).unwrap();
    assert!(matches!(
        driver::run(&lp, &bad, &cfg(0.1, Mode::Exact, SolverKind::Direct, 0)),
        Err(IpmError::Dimension { .. })
    ));
    assert!(driver::run(&lp, &start, &cfg(-1.0, Mode::Exact, SolverKind::Direct, 0)).is_err());
}

#[test]
fn duality_measure_follows_the_recurrence() {
    let eps = 1e-3;
    let (lp, start) = harness::generate_synthetic_lp(10, 60, 9).unwrap();
    let out = driver::run_corrected(&lp, &start, &cfg(eps, Mode::Corrected, SolverKind::Pcg, 9)).unwrap();
    let n = lp.n();
    let rate = 0.14 / (n as f64).sqrt();
    let tol = out.tolerance;
    for r in &out.trace.records {
        assert!(r.mu_next <= (1.0 - rate) * r.mu + tol / (n as f64).sqrt());
        let bound = driver::recurrence_bound(20.0, n, 0.14, tol / (eps * (n as f64).sqrt()), eps, r.k + 1).unwrap();
        assert!(r.mu_next <= bound);
    }
}
