//! Synthetic instances and batch experiments.

use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::driver::{run, IpmConfig, Mode, SolverKind};
use crate::error::{IpmError, Result};
use crate::linalg::DenseMatrix;
use crate::model::{LinearProgram, PrimalDualPoint};
use crate::rng;

/// Environment variable capping experiment parallelism.
pub const THREADS_ENV: &str = "IPM_LAB_THREADS";
/// Fraction of failed trials at a grid point above which results are flagged.
pub const FAILURE_FLAG_FRACTION: f64 = 0.1;

/// Random LP whose start point is exactly feasible and perfectly centered.
///
/// `A ~ U[−10, 10]`, `x₀ ~ U(0, 10]`, `y₀ ~ U[−10, 10]`, `s₀ = 20/x₀`,
/// `b = Ax₀`, `c = Aᵀy₀ + s₀`.
pub fn generate_synthetic_lp(m: usize, n: usize, seed: u64) -> Result<(LinearProgram, PrimalDualPoint)> {
    if m > n {
        return Err(IpmError::InvalidParameter(format!("generator needs m <= n, got m = {m}, n = {n}")));
    }
    let mut r = rng::stream(seed, rng::INSTANCE, 0);
    let data: Vec<f64> = (0..m * n).map(|_| r.random_range(-10.0..=10.0)).collect();
    let a = DenseMatrix::from_row_major(m, n, data)?;
    let x: Vec<f64> = (0..n)
        .map(|_| loop {
            let v: f64 = r.random_range(0.0..=10.0);
            if v > 0.0 {
                break v;
            }
        })
        .collect();
    let y: Vec<f64> = (0..m).map(|_| r.random_range(-10.0..=10.0)).collect();
    let s: Vec<f64> = x.iter().map(|v| 20.0 / v).collect();
    let b = a.matvec(&x)?;
    let mut c = a.matvec_t(&y)?;
    for (ci, si) in c.iter_mut().zip(&s) {
        *ci += si;
    }
    Ok((LinearProgram::new(a, b, c)?, PrimalDualPoint::new(x, y, s)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grid {
    /// Vary `n` at fixed `ε`; regressor `√n`.
    Columns { ns: Vec<usize>, epsilon: f64 },
    /// Vary `ε` at fixed `n`; regressor `ln(1/ε)`.
    Tolerances { n: usize, epsilons: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverAccuracy {
    Fixed(f64),
    /// `δ = ε`
    EqualsEpsilon,
    /// The driver's default for the chosen mode.
    Theoretical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub figure: u8,
    pub m: usize,
    pub grid: Grid,
    pub accuracy: SolverAccuracy,
    pub repetitions: usize,
    pub mode: Mode,
    pub solver: SolverKind,
    pub zeta: f64,
    pub eta: f64,
    pub sketch_cols: Option<usize>,
    pub seed_base: u64,
    pub output: Option<PathBuf>,
}

pub const FIGURE_N_GRID: [usize; 5] = [40, 80, 160, 320, 640];
pub const FIGURE_EPS_GRID: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];

impl ExperimentPlan {
    /// Defaults for figures 1 to 4: perturbation solver for 1 and 2,
    /// PCG with `w = 60`, `ζ = 0.5` for 3 and 4.
    pub fn figure(figure: u8) -> Result<Self> {
        let columns = Grid::Columns {
            ns: FIGURE_N_GRID.to_vec(),
            epsilon: 0.1,
        };
        let tolerances = Grid::Tolerances {
            n: 70,
            epsilons: FIGURE_EPS_GRID.to_vec(),
        };
        let (m, grid, accuracy) = match figure {
            1 | 3 => (20, columns, SolverAccuracy::Fixed(1e-3)),
            2 | 4 => (30, tolerances, SolverAccuracy::EqualsEpsilon),
            _ => return Err(IpmError::InvalidParameter(format!("unknown figure {figure}, expected 1-4"))),
        };
        let pcg = figure >= 3;
        Ok(Self {
            figure,
            m,
            grid,
            accuracy,
            repetitions: 60,
            mode: Mode::Corrected,
            solver: if pcg { SolverKind::Pcg } else { SolverKind::Perturb },
            zeta: 0.5,
            eta: 0.1,
            sketch_cols: pcg.then_some(60),
            seed_base: 0,
            output: None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(IpmError::InvalidParameter("repetitions must be at least 1".into()));
        }
        let ok = match &self.grid {
            Grid::Columns { ns, epsilon } => !ns.is_empty() && ns.iter().all(|&n| n >= self.m && n > 0) && *epsilon > 0.0,
            Grid::Tolerances { n, epsilons } => {
                !epsilons.is_empty() && *n >= self.m && epsilons.iter().all(|e| *e > 0.0 && *e < 1.0)
            }
        };
        if !ok {
            return Err(IpmError::InvalidParameter("experiment grid must be nonempty with n >= m and eps > 0".into()));
        }
        Ok(())
    }

    /// `(regressor, n, ε)` for every grid point.
    pub fn points(&self) -> Vec<(f64, usize, f64)> {
        match &self.grid {
            Grid::Columns { ns, epsilon } => ns.iter().map(|&n| ((n as f64).sqrt(), n, *epsilon)).collect(),
            Grid::Tolerances { n, epsilons } => epsilons.iter().map(|&e| ((1.0 / e).ln(), *n, e)).collect(),
        }
    }

    fn config(&self, eps: f64, seed: u64) -> IpmConfig {
        let mut cfg = IpmConfig::new(eps, self.mode, self.solver);
        cfg.zeta = self.zeta;
        cfg.eta = self.eta;
        cfg.sketch_cols_override = self.sketch_cols;
        cfg.seed = seed;
        cfg.solver_tolerance = match self.accuracy {
            SolverAccuracy::Fixed(d) => Some(d),
            SolverAccuracy::EqualsEpsilon => Some(eps),
            SolverAccuracy::Theoretical => None,
        };
        cfg
    }
}

/// One row of the per-trial CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub regressor: f64,
    pub n: usize,
    pub m: usize,
    pub eps: f64,
    pub seed: u64,
    pub outer_iters: usize,
    pub primal_infeas: f64,
    pub dual_infeas: f64,
    pub mean_inner_iters: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub regressor: f64,
    pub n: usize,
    pub m: usize,
    pub eps: f64,
    pub median: f64,
    pub q10: f64,
    pub q90: f64,
    pub mean_primal_infeas: f64,
    pub mean_inner_iters: f64,
    pub failures: usize,
    pub flagged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub pearson_r: f64,
    /// set when `ys` is constant and the correlation is undefined
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub trials: Vec<TrialRecord>,
    pub summary: Vec<GridSummary>,
    /// `None` with fewer than three grid points.
    pub fit: Option<LinearFit>,
    pub flagged: bool,
}

/// Ordinary least squares `y ≈ slope·x + intercept` and Pearson correlation.
pub fn fit_linearity(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    crate::error::check_len("fit_linearity ys", xs.len(), ys.len())?;
    if xs.len() < 3 {
        return Err(IpmError::InvalidParameter(format!("linear fit needs at least 3 points, got {}", xs.len())));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx <= f64::EPSILON * mx.abs().max(1.0) {
        return Err(IpmError::DegenerateFit("regressor values are constant"));
    }
    let slope = sxy / sxx;
    let degenerate = syy <= f64::EPSILON * my.abs().max(1.0);
    Ok(LinearFit {
        slope: if degenerate { 0.0 } else { slope },
        intercept: if degenerate { my } else { my - slope * mx },
        pearson_r: if degenerate { 0.0 } else { sxy / (sxx * syy).sqrt() },
        degenerate,
    })
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&t: &usize| t > 0)
}

fn run_trial(plan: &ExperimentPlan, (regressor, n, eps): (f64, usize, f64), trial: usize) -> TrialRecord {
    let seed = plan.seed_base + trial as u64;
    let failed = |outer_iters| TrialRecord {
        regressor,
        n,
        m: plan.m,
        eps,
        seed,
        outer_iters,
        primal_infeas: f64::NAN,
        dual_infeas: f64::NAN,
        mean_inner_iters: f64::NAN,
        converged: false,
    };
    let (lp, start) = match generate_synthetic_lp(plan.m, n, seed) {
        Ok(inst) => inst,
        Err(e) => {
            log::warn!("trial n={n} eps={eps} seed={seed}: {e}");
            return failed(0);
        }
    };
    match run(&lp, &start, &plan.config(eps, seed)) {
        Ok(out) => TrialRecord {
            regressor,
            n,
            m: plan.m,
            eps,
            seed,
            outer_iters: out.outer_iterations,
            primal_infeas: out.residuals.primal_infeasibility,
            dual_infeas: out.residuals.dual_infeasibility,
            mean_inner_iters: out.trace.mean_inner_iterations(),
            converged: out.converged,
        },
        Err(e) => {
            log::warn!("trial n={n} eps={eps} seed={seed}: {e}");
            failed(0)
        }
    }
}

/// Runs every `(grid point, trial)` pair in parallel, then aggregates.
///
/// Trial `t` uses seed `seed_base + t` for both the instance and the solver,
/// so the same instances appear at every grid point of a tolerance sweep.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<ExperimentResult> {
    plan.validate()?;
    let jobs: Vec<((f64, usize, f64), usize)> = plan
        .points()
        .into_iter()
        .flat_map(|pt| (0..plan.repetitions).map(move |t| (pt, t)))
        .collect();
    let work = || -> Vec<TrialRecord> { jobs.par_iter().map(|&(pt, t)| run_trial(plan, pt, t)).collect() };
    let trials = match thread_cap() {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| IpmError::InvalidParameter(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    let result = aggregate(plan, trials)?;
    if let Some(dir) = &plan.output {
        write_outputs(&result, dir)?;
    }
    Ok(result)
}

fn aggregate(plan: &ExperimentPlan, trials: Vec<TrialRecord>) -> Result<ExperimentResult> {
    let mut summary = Vec::new();
    for (regressor, n, eps) in plan.points() {
        let group: Vec<&TrialRecord> = trials.iter().filter(|t| t.n == n && t.eps == eps).collect();
        let ok: Vec<&TrialRecord> = group.iter().copied().filter(|t| t.converged).collect();
        let mut iters: Vec<f64> = ok.iter().map(|t| t.outer_iters as f64).collect();
        iters.sort_by(f64::total_cmp);
        let mean = |f: fn(&TrialRecord) -> f64| {
            if ok.is_empty() {
                f64::NAN
            } else {
                ok.iter().map(|t| f(t)).sum::<f64>() / ok.len() as f64
            }
        };
        let failures = group.len() - ok.len();
        summary.push(GridSummary {
            regressor,
            n,
            m: plan.m,
            eps,
            median: quantile(&iters, 0.5),
            q10: quantile(&iters, 0.1),
            q90: quantile(&iters, 0.9),
            mean_primal_infeas: mean(|t| t.primal_infeas),
            mean_inner_iters: mean(|t| t.mean_inner_iters),
            failures,
            flagged: failures as f64 > FAILURE_FLAG_FRACTION * group.len() as f64,
        });
    }
    let usable: Vec<&GridSummary> = summary.iter().filter(|s| s.median.is_finite()).collect();
    let fit = if usable.len() >= 3 {
        let xs: Vec<f64> = usable.iter().map(|s| s.regressor).collect();
        let ys: Vec<f64> = usable.iter().map(|s| s.median).collect();
        Some(fit_linearity(&xs, &ys)?)
    } else {
        None
    };
    let flagged = summary.iter().any(|s| s.flagged);
    Ok(ExperimentResult {
        trials,
        summary,
        fit,
        flagged,
    })
}

#[derive(Serialize)]
struct SummaryRow {
    regressor: f64,
    n: usize,
    m: usize,
    eps: f64,
    median: f64,
    q10: f64,
    q90: f64,
    mean_primal_infeas: f64,
    mean_inner_iters: f64,
    failures: usize,
    flagged: bool,
    slope: Option<f64>,
    intercept: Option<f64>,
    pearson_r: Option<f64>,
}

/// Writes `trials.csv` and `summary.csv` into `dir`.
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("trials.csv"))?;
    for t in &result.trials {
        w.serialize(t)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    for g in &result.summary {
        w.serialize(SummaryRow {
            regressor: g.regressor,
            n: g.n,
            m: g.m,
            eps: g.eps,
            median: g.median,
            q10: g.q10,
            q90: g.q90,
            mean_primal_infeas: g.mean_primal_infeas,
            mean_inner_iters: g.mean_inner_iters,
            failures: g.failures,
            flagged: g.flagged,
            slope: result.fit.map(|f| f.slope),
            intercept: result.fit.map(|f| f.intercept),
            pearson_r: result.fit.map(|f| f.pearson_r),
        })?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{neighborhood_check, residuals};

    #[test]
    fn generated_start_is_centered_and_feasible() {
        for (m, n, seed) in [(3, 5, 1), (20, 100, 7), (30, 70, 11)] {
            let (lp, p) = generate_synthetic_lp(m, n, seed).unwrap();
            assert!((p.mu() - 20.0).abs() < 1e-12);
            let check = neighborhood_check(&p, 0.25);
            assert!(check.member);
            assert!(check.distance < 1e-12);
            let r = residuals(&lp, &p).unwrap();
            assert_eq!(r.primal_infeasibility, 0.0);
            assert!(r.dual_infeasibility < 1e-12 * crate::linalg::norm2(&lp.c));
        }
    }

    #[test]
    fn generator_is_deterministic() {
        assert_eq!(generate_synthetic_lp(4, 9, 3).unwrap(), generate_synthetic_lp(4, 9, 3).unwrap());
        assert_ne!(generate_synthetic_lp(4, 9, 3).unwrap().0, generate_synthetic_lp(4, 9, 4).unwrap().0);
        assert!(generate_synthetic_lp(5, 4, 0).is_err());
    }

    #[test]
    fn fit_cases() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x - 1.0).collect();
        let f = fit_linearity(&xs, &ys).unwrap();
        assert!((f.pearson_r - 1.0).abs() < 1e-12);
        assert!((f.slope - 3.0).abs() < 1e-12 && (f.intercept + 1.0).abs() < 1e-12);

        let f = fit_linearity(&xs, &[5.0; 4]).unwrap();
        assert!(f.degenerate);
        assert_eq!((f.slope, f.pearson_r), (0.0, 0.0));

        assert!(matches!(fit_linearity(&[2.0; 3], &[1.0, 2.0, 3.0]), Err(IpmError::DegenerateFit(_))));
        assert!(fit_linearity(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn quantiles_are_ordered() {
        let v = [1.0, 2.0, 3.0, 4.0, 10.0];
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert!((quantile(&v, 0.1) - 1.4).abs() < 1e-12);
        assert!(quantile(&v, 0.1) <= quantile(&v, 0.5) && quantile(&v, 0.5) <= quantile(&v, 0.9));
    }

    #[test]
    fn figure_defaults() {
        let p = ExperimentPlan::figure(1).unwrap();
        assert_eq!((p.m, p.repetitions, p.solver), (20, 60, SolverKind::Perturb));
        assert_eq!(p.accuracy, SolverAccuracy::Fixed(1e-3));
        let p = ExperimentPlan::figure(2).unwrap();
        assert_eq!(p.m, 30);
        assert_eq!(p.accuracy, SolverAccuracy::EqualsEpsilon);
        assert!(matches!(p.grid, Grid::Tolerances { n: 70, .. }));
        let p = ExperimentPlan::figure(3).unwrap();
        assert_eq!((p.solver, p.sketch_cols, p.zeta), (SolverKind::Pcg, Some(60), 0.5));
        assert!(ExperimentPlan::figure(5).is_err());
    }

    #[test]
    fn single_run_plan() {
        let plan = ExperimentPlan {
            repetitions: 1,
            grid: Grid::Columns { ns: vec![30], epsilon: 0.1 },
            m: 5,
            ..ExperimentPlan::figure(1).unwrap()
        };
        let res = run_experiment(&plan).unwrap();
        assert_eq!(res.trials.len(), 1);
        assert!(res.trials[0].converged);
        assert_eq!(res.summary[0].median, res.trials[0].outer_iters as f64);
        assert!(res.fit.is_none());
    }

    #[test]
    fn tables_are_written() {
        let plan = ExperimentPlan {
            repetitions: 2,
            grid: Grid::Columns { ns: vec![12, 16, 20], epsilon: 0.1 },
            m: 4,
            ..ExperimentPlan::figure(1).unwrap()
        };
        let res = run_experiment(&plan).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_outputs(&res, dir.path()).unwrap();
        let trials = std::fs::read_to_string(dir.path().join("trials.csv")).unwrap();
        assert_eq!(trials.lines().count(), 7);
        let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert!(summary.lines().next().unwrap().ends_with("slope,intercept,pearson_r"));
        assert_eq!(summary.lines().count(), 4);
    }
}
