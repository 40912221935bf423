use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::warn;

use ipm_lab::driver::{self, IpmConfig, Mode, SolverKind};
use ipm_lab::harness::{self, ExperimentPlan};
use ipm_lab::io::{self, LpFile, Provenance, SolutionFile};
use ipm_lab::reductions::{self, ReductionRecord};
use ipm_lab::IpmError;

const EXIT_CONVERGED: u8 = 0;
const EXIT_INPUT: u8 = 1;
const EXIT_NONCONVERGED: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "ipm-lab", version, about = "Inexact predictor-corrector interior point methods for LPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an LP file from its embedded interior start.
    Solve(SolveArgs),
    /// Generate a random LP with a perfectly centered feasible start.
    Gen(GenArgs),
    /// Reproduce one of the iteration-count experiments.
    Experiment(ExperimentArgs),
    /// Reduce a tall or low-rank LP to full row rank.
    Reduce(ReduceArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Corrected,
    Uncorrected,
    Exact,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Pcg,
    Direct,
    Perturb,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Dual,
    Lowrank,
}

#[derive(clap::Args)]
struct SolveArgs {
    /// LP file (JSON)
    lp: PathBuf,
    #[arg(long, value_enum, default_value = "corrected")]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "pcg")]
    solver: SolverArg,
    /// Target duality measure; the run stops once μ ≤ 2ε.
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    /// Linear-solver accuracy δ (defaults depend on the mode)
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    zeta: f64,
    #[arg(long, default_value_t = 0.1)]
    eta: f64,
    /// Fixed sketch width w
    #[arg(long)]
    sketch_cols: Option<usize>,
    #[arg(long)]
    max_outer: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Treat monitor violations as errors.
    #[arg(long)]
    strict: bool,
    /// Regenerate the start from the file's generator provenance when no init is stored.
    #[arg(long)]
    gen_start: bool,
    /// Reduction record; the solution is also reported in the original variables.
    #[arg(long)]
    record: Option<PathBuf>,
    /// Per-iteration trace (CSV)
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Solution file (JSON)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct GenArgs {
    #[arg(long)]
    m: usize,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct ExperimentArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
    figure: u8,
    #[arg(long)]
    reps: Option<usize>,
    /// Directory for trials.csv and summary.csv
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(clap::Args)]
struct ReduceArgs {
    lp: PathBuf,
    #[arg(long, value_enum)]
    kind: KindArg,
    /// Known rank of A (low-rank reduction)
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Offset added to y± when building a start for the dual split.
    #[arg(long, default_value_t = 1.0)]
    shift: f64,
    /// Reduced LP file
    #[arg(long)]
    out: PathBuf,
    /// Reduction record file
    #[arg(long)]
    record: PathBuf,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<IpmError> for Failure {
    fn from(e: IpmError) -> Self {
        let code = match e {
            IpmError::NotPositiveDefinite { .. }
            | IpmError::Factorization { .. }
            | IpmError::SvdNonConvergence { .. }
            | IpmError::CgBreakdown { .. }
            | IpmError::ConvergenceFailure { .. }
            | IpmError::InconsistentPair { .. }
            | IpmError::MonitorViolation { .. } => EXIT_NUMERICAL,
            _ => EXIT_INPUT,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn input_error(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_INPUT,
        message: message.into(),
    }
}

fn cmd_solve(args: SolveArgs) -> Result<u8, Failure> {
    let (lp, start, file) = io::read_lp(&args.lp)?;
    let start = match (start, args.gen_start, &file.provenance) {
        (Some(p), _, _) => p,
        (None, true, Some(prov)) if prov.generator == "synthetic" => {
            let (regen, p) = harness::generate_synthetic_lp(lp.m(), lp.n(), prov.seed)?;
            if regen != lp {
                return Err(input_error("file does not match its generator provenance; cannot regenerate the start"));
            }
            p
        }
        (None, true, _) => {
            return Err(input_error(
                "no init block and no synthetic provenance; a feasible interior start must be supplied in the file",
            ))
        }
        (None, false, _) => {
            return Err(input_error(
                "LP file has no init block; add {x, y, s} to the file or pass --gen-start for generated instances",
            ))
        }
    };
    lp.check_full_row_rank()?;

    let mode = match args.mode {
        ModeArg::Corrected => Mode::Corrected,
        ModeArg::Uncorrected => Mode::Uncorrected,
        ModeArg::Exact => Mode::Exact,
    };
    let solver = match args.solver {
        SolverArg::Pcg => SolverKind::Pcg,
        SolverArg::Direct => SolverKind::Direct,
        SolverArg::Perturb => SolverKind::Perturb,
    };
    let cfg = IpmConfig {
        zeta: args.zeta,
        eta: args.eta,
        sketch_cols_override: args.sketch_cols,
        max_outer: args.max_outer,
        seed: args.seed,
        solver_tolerance: args.tol,
        strict_monitors: args.strict,
        ..IpmConfig::new(args.eps, mode, solver)
    };
    let outcome = driver::run(&lp, &start, &cfg)?;

    if let Some(path) = &args.trace {
        outcome.trace.write_csv_file(path)?;
    }
    let mut solution = SolutionFile::new(&lp, &outcome, mode, solver, args.eps);
    let r = &outcome.residuals;
    println!(
        "{} after {} outer iterations: mu = {:.3e}, primal infeasibility = {:.3e}, dual infeasibility = {:.3e}, objective = {:.10e}",
        if outcome.converged { "converged" } else { "not converged" },
        outcome.outer_iterations,
        r.duality_measure,
        r.primal_infeasibility,
        r.dual_infeasibility,
        solution.objective,
    );
    if let Some(path) = &args.record {
        let record: ReductionRecord = io::read_json(path)?;
        let mapped = reductions::map_back(&record, &outcome.point)?;
        solution.reduction = Some(record);
        if let Some(out) = &args.out {
            let original = out.with_extension("original.json");
            io::write_json(&original, &mapped)?;
            println!("original-space point written to {}", original.display());
        }
    }
    if let Some(path) = &args.out {
        io::write_json(path, &solution)?;
    }
    Ok(if outcome.converged { EXIT_CONVERGED } else { EXIT_NONCONVERGED })
}

fn cmd_gen(args: GenArgs) -> Result<u8, Failure> {
    if args.m > args.n {
        return Err(input_error(format!(
            "m = {} exceeds n = {}; generate a short-and-fat instance, or use `ipm-lab reduce --kind dual` for tall problems",
            args.m, args.n
        )));
    }
    let (lp, start) = harness::generate_synthetic_lp(args.m, args.n, args.seed)?;
    let file = LpFile::from_problem(
        &lp,
        Some(&start),
        Some(Provenance {
            generator: "synthetic".into(),
            seed: args.seed,
        }),
    );
    io::write_lp(&args.out, &file)?;
    Ok(EXIT_CONVERGED)
}

fn cmd_experiment(args: ExperimentArgs) -> Result<u8, Failure> {
    let mut plan = ExperimentPlan::figure(args.figure)?;
    if let Some(reps) = args.reps {
        plan.repetitions = reps;
    }
    plan.seed_base = args.seed;
    plan.output = args.out;
    let result = harness::run_experiment(&plan)?;
    println!("regressor\tn\teps\tmedian\tq10\tq90\tinner\tfailures");
    for g in &result.summary {
        println!(
            "{:.4}\t{}\t{:e}\t{}\t{}\t{}\t{:.2}\t{}",
            g.regressor, g.n, g.eps, g.median, g.q10, g.q90, g.mean_inner_iters, g.failures
        );
    }
    if let Some(fit) = result.fit {
        println!(
            "fit: slope = {:.4}, intercept = {:.4}, pearson r = {:.4}{}",
            fit.slope,
            fit.intercept,
            fit.pearson_r,
            if fit.degenerate { " (degenerate)" } else { "" }
        );
    }
    if result.flagged {
        warn!("more than 10% of trials failed at some grid point");
        return Ok(EXIT_NONCONVERGED);
    }
    Ok(EXIT_CONVERGED)
}

fn cmd_reduce(args: ReduceArgs) -> Result<u8, Failure> {
    let (lp, start, _) = io::read_lp(&args.lp)?;
    let (reduced, record, init) = match args.kind {
        KindArg::Dual => {
            let (reduced, mut record) = reductions::dual_reformulate(&lp)?;
            match start {
                Some(p) => {
                    let (shifted, p) = reductions::split_start(&lp, &reduced, &mut record, &p, args.shift)?;
                    (shifted, record, Some(p))
                }
                None => (reduced, record, None),
            }
        }
        KindArg::Lowrank => {
            let k = args.rank.ok_or_else(|| input_error("--kind lowrank requires --rank"))?;
            let (reduced, record) = reductions::low_rank_reduce(&lp, k, args.seed)?;
            let init = start.map(|p| reductions::reduced_start(&reduced, &p)).transpose()?;
            (reduced, record, init)
        }
    };
    io::write_lp(&args.out, &LpFile::from_problem(&reduced, init.as_ref(), None))?;
    io::write_json(&args.record, &record)?;
    println!(
        "reduced {}x{} to {}x{}",
        lp.m(),
        lp.n(),
        reduced.m(),
        reduced.n()
    );
    Ok(EXIT_CONVERGED)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_CONVERGED };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Gen(a) => cmd_gen(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Reduce(a) => cmd_reduce(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
