//! Command-line driver: `check`, `solve`, `simulate` and `oracle1d`.
//!
//! Exit codes: 0 success (stabilizable / solvable), 1 input error,
//! 2 not stabilizable (or a supplied gain is not a stabilizer),
//! 3 not solvable or a result that failed verification.

pub mod problem;
pub mod report;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
use crate::inhomogeneous::{solve_eta, AffineTerms};
use crate::linalg::{Matrix, SymMatrix, Vector};
use crate::montecarlo::{closed_loop_time_constant, control_path, simulate_feedback, SimConfig};
use crate::oracle1d::{solve_1d, Case1d, Oracle1dResult, StrategySet};
use crate::riccati::{solve_gare_with_reduction, GareOutcome, GareSolution};
use crate::stabilizability::{find_stabilizer, StabilizerOutcome};
use crate::stability::{solve_lyapunov, stability_certificate};

pub use problem::{Problem, ProblemFile};
pub use report::Report;
use report::*;

/// Relative tolerance for pipeline/oracle agreement.
const ORACLE_TOL: f64 = 1e-6;

#[derive(Debug, Parser)]
#[command(name = "stochlq", version, about = "Infinite-horizon stochastic LQ control solver")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decide stabilizability and report a stabilizer.
    Check(CommonArgs),
    /// Solve the Riccati equation and synthesize the optimal strategy.
    Solve(SolveArgs),
    /// Monte Carlo cost of the optimal strategy or of a supplied feedback.
    Simulate(SimulateArgs),
    /// Closed-form scalar solution.
    Oracle1d(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Problem file (JSON).
    pub problem: PathBuf,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Simulation seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Regularization schedule, e.g. `1e-1,1e-2,1e-3`.
    #[arg(long, value_delimiter = ',')]
    pub eps_schedule: Option<Vec<f64>>,
    /// Sets the residual, range and path-settling tolerances.
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Cross-check the value with this many Monte Carlo paths.
    #[arg(long, value_name = "N")]
    pub simulate: Option<usize>,
    /// Compare with the closed-form scalar solution (n = m = 1).
    #[arg(long)]
    pub oracle: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Number of paths.
    #[arg(long)]
    pub paths: Option<usize>,
    /// Feedback gain Θ (m×n, row-major CSV) instead of the optimal one.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta: Option<Vec<f64>>,
    /// Constant open-loop term v (length m, CSV) used with `--theta`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, requires = "theta")]
    pub v: Option<Vec<f64>>,
}

/// Result of one command: exit code, report (if the input was readable) and
/// messages for standard error.
#[derive(Debug)]
pub struct Outcome {
    pub code: i32,
    pub report: Option<Report>,
    pub messages: Vec<String>,
}

impl Outcome {
    fn input_error(e: impl std::fmt::Display) -> Self {
        Self { code: 1, report: None, messages: vec![format!("error: {e}")] }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidInput(_)
        | Error::DimensionMismatch(_)
        | Error::UnsupportedDimension(_)
        | Error::UnsupportedInput(_)
        | Error::Budget { .. } => 1,
        Error::NotStabilizable => 2,
        _ => 3,
    }
}

fn load(args: &CommonArgs) -> Result<Problem, String> {
    let text = std::fs::read_to_string(&args.problem).map_err(|e| format!("{}: {e}", args.problem.display()))?;
    let mut p = ProblemFile::parse(&text).and_then(|f| f.to_problem()).map_err(|e| e.to_string())?;
    if let Some(seed) = args.seed {
        p.simulation.seed = seed;
    }
    if let Some(eps) = &args.eps_schedule {
        if eps.is_empty() || eps.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err("--eps-schedule must list positive numbers".into());
        }
        p.gare.epsilon_schedule = eps.clone();
    }
    if let Some(tol) = args.tol {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err("--tol must be positive".into());
        }
        p.gare.residual_tol = tol;
        p.gare.range_tol = tol;
        p.gare.path_tol = tol;
    }
    Ok(p)
}

/// Pipeline state shared by `solve` and `simulate`.
struct Pipeline {
    report: Report,
    solution: Option<GareSolution>,
    terms: Option<AffineTerms>,
}

impl Pipeline {
    fn new(command: &str, problem: &Problem) -> Self {
        let report = Report {
            solver: SolverInfo::default(),
            command: command.into(),
            verdict: Verdict::default(),
            problem: problem.to_file(),
            stabilizability: None,
            gare: None,
            affine: None,
            value: None,
            simulation: None,
            oracle1d: None,
            lyapunov: None,
            error: None,
        };
        Self { report, solution: None, terms: None }
    }

    fn fail(&mut self, e: &Error) -> i32 {
        self.report.error = Some(e.to_string());
        self.finish(exit_code(e))
    }

    fn finish(&mut self, code: i32) -> i32 {
        self.report.verdict.exit_code = code;
        code
    }

    /// Stabilizability check; returns the reduction stabilizer.
    fn check(&mut self, p: &Problem) -> Result<Matrix, i32> {
        let outcome = find_stabilizer(&p.sys, &p.gare.flow).map_err(|e| self.fail(&e))?;
        self.report.stabilizability = Some(StabilizabilityBlock::new(&outcome));
        self.report.verdict.stabilizable = Some(outcome.is_stabilizable());
        match outcome {
            StabilizerOutcome::Stabilizable { gamma, .. } => Ok(gamma),
            StabilizerOutcome::NotStabilizable { .. } => Err(self.finish(2)),
        }
    }

    /// Riccati solution, affine terms and value at `x0`.
    fn solve(&mut self, p: &Problem) -> Result<(), i32> {
        let sigma = self.check(p)?;
        match solve_gare_with_reduction(&p.sys, &p.weights, &sigma, &p.gare) {
            Ok(GareOutcome::Solved(sol)) => {
                self.report.gare = Some(GareBlock::solved(&sol));
                self.report.verdict.solvable = Some(true);
                self.solution = Some(*sol);
            }
            Ok(GareOutcome::Unsolvable(rep)) => {
                self.report.gare = Some(GareBlock::unsolvable(&rep));
                self.report.verdict.solvable = Some(false);
                return Err(self.finish(3));
            }
            Err(e) => {
                self.report.verdict.solvable = Some(false);
                return Err(self.fail(&e));
            }
        }
        let sol = self.solution.as_ref().expect("solution recorded above");
        let value = match &p.grid {
            None => Ok((p.x0.transpose() * sol.p.as_matrix() * &p.x0)[(0, 0)]),
            Some(g) => {
                let terms = solve_eta(&p.sys, &p.weights, sol, g).map_err(|e| self.fail(&e))?;
                let residual = terms.ode_residual().map_err(|e| self.fail(&e))?;
                self.report.affine = Some(AffineBlock::new(&terms, residual));
                let v = terms.value(&p.x0);
                self.terms = Some(terms);
                v
            }
        };
        match value {
            Ok(v) => {
                self.report.value = Some(v);
                self.report.verdict.value_defined = Some(true);
                Ok(())
            }
            Err(e) => {
                self.report.verdict.value_defined = Some(false);
                Err(self.fail(&e))
            }
        }
    }

    /// Simulates the optimal strategy and compares with `V(x0)`.
    fn simulate_optimal(&mut self, p: &Problem, paths: usize) -> Result<(), i32> {
        let theta = self.solution.as_ref().expect("solve() succeeded").theta.clone();
        let tau = closed_loop_time_constant(&p.sys, &theta).map_err(|e| self.fail(&e))?;
        let support = p.grid.as_ref().map_or(0.0, |g| g.final_time());
        let cfg = SimConfig { paths, ..p.simulation.config(tau, support) };
        let v = match &self.terms {
            Some(t) => control_path(t, &cfg),
            None => cfg.steps().map(|s| vec![Vector::zeros(p.sys.m()); s]),
        };
        let result = v
            .and_then(|v| simulate_feedback(&p.sys, &p.weights, &theta, &v, p.grid.as_ref(), &p.x0, &cfg))
            .map_err(|e| self.fail(&e))?;
        let mut block = SimulationBlock::new("optimal", &theta, &cfg, result);
        if let Some(value) = self.report.value {
            self.report.verdict.simulation_agrees = Some(block.compare(value));
        }
        self.report.simulation = Some(block);
        Ok(())
    }

    fn oracle(&mut self, p: &Problem) {
        let s = &p.sys;
        let w = &p.weights;
        let scalar = |m: &Matrix| m[(0, 0)];
        let result = solve_1d(
            scalar(&s.a),
            scalar(&s.c),
            scalar(&s.b),
            scalar(&s.d),
            scalar(w.q.as_matrix()),
            scalar(&w.s),
            scalar(w.r.as_matrix()),
        );
        let block = match result {
            Ok(r) => {
                let agreement = self.oracle_agreement(&r);
                self.report.verdict.oracle_agrees = Some(agreement.agrees);
                OracleBlock { result: Some(r), error: None, agreement: Some(agreement) }
            }
            Err(e) => OracleBlock { result: None, error: Some(e.to_string()), agreement: None },
        };
        self.report.oracle1d = Some(block);
    }

    fn oracle_agreement(&self, r: &Oracle1dResult) -> OracleAgreement {
        let stabilizable = self.report.verdict.stabilizable.unwrap_or(false);
        let solvable = self.solution.is_some();
        let verdicts_agree = if r.case == Case1d::NotStabilizable {
            !stabilizable
        } else {
            stabilizable && r.is_solvable() == solvable
        };
        let mut out =
            OracleAgreement { verdicts_agree, p_difference: None, theta_difference: None, theta_in_strategy_set: None, agrees: verdicts_agree };
        if let (Some(sol), Some(po), Some(set)) = (&self.solution, r.p, r.strategies) {
            let (p, theta) = (sol.p.as_matrix()[(0, 0)], sol.theta[(0, 0)]);
            let dp = (p - po).abs();
            let mut ok = dp <= ORACLE_TOL * (1.0 + p.abs());
            match set {
                StrategySet::Unique { theta: to } => {
                    let dt = (theta - to).abs();
                    ok &= dt <= ORACLE_TOL * (1.0 + to.abs());
                    out.theta_difference = Some(dt);
                }
                _ => {
                    let inside = set.contains(theta, 0.0);
                    ok &= inside;
                    out.theta_in_strategy_set = Some(inside);
                }
            }
            out.p_difference = Some(dp);
            out.agrees &= ok;
        }
        out
    }
}

pub fn cmd_check(args: &CommonArgs) -> Outcome {
    let problem = match load(args) {
        Ok(p) => p,
        Err(e) => return Outcome::input_error(e),
    };
    let mut pipe = Pipeline::new("check", &problem);
    let code = match pipe.check(&problem) {
        Ok(_) => pipe.finish(0),
        Err(code) => code,
    };
    Outcome { code, report: Some(pipe.report), messages: problem.warnings }
}

pub fn cmd_solve(args: &SolveArgs) -> Outcome {
    let mut problem = match load(&args.common) {
        Ok(p) => p,
        Err(e) => return Outcome::input_error(e),
    };
    if let Some(n) = args.simulate {
        problem.simulation.paths = n;
    }
    let mut pipe = Pipeline::new("solve", &problem);
    let mut code = match pipe.solve(&problem) {
        Ok(()) => 0,
        Err(code) => code,
    };
    if code == 0 {
        if let Some(n) = args.simulate {
            if let Err(c) = pipe.simulate_optimal(&problem, n) {
                code = c;
            }
        }
    }
    if args.oracle && problem.sys.n() == 1 && problem.sys.m() == 1 {
        pipe.oracle(&problem);
    }
    pipe.finish(code);
    Outcome { code, report: Some(pipe.report), messages: problem.warnings }
}

pub fn cmd_simulate(args: &SimulateArgs) -> Outcome {
    let mut problem = match load(&args.common) {
        Ok(p) => p,
        Err(e) => return Outcome::input_error(e),
    };
    if let Some(n) = args.paths {
        problem.simulation.paths = n;
    }
    let paths = problem.simulation.paths;
    let mut pipe = Pipeline::new("simulate", &problem);
    let code = match &args.theta {
        None => pipe.solve(&problem).and_then(|()| pipe.simulate_optimal(&problem, paths)).map_or_else(|c| c, |()| 0),
        Some(theta) => simulate_supplied(&mut pipe, &problem, theta, args.v.as_deref()),
    };
    pipe.finish(code);
    Outcome { code, report: Some(pipe.report), messages: problem.warnings }
}

fn simulate_supplied(pipe: &mut Pipeline, p: &Problem, theta: &[f64], v: Option<&[f64]>) -> i32 {
    let (n, m) = (p.sys.n(), p.sys.m());
    if theta.len() != n * m {
        return pipe.fail(&Error::DimensionMismatch(format!("--theta needs {} entries (m×n = {m}x{n}), got {}", n * m, theta.len())));
    }
    let theta = Matrix::from_row_slice(m, n, theta);
    let v = match v {
        None => Vector::zeros(m),
        Some(v) if v.len() == m => Vector::from_column_slice(v),
        Some(v) => return pipe.fail(&Error::DimensionMismatch(format!("--v needs {m} entries, got {}", v.len()))),
    };
    let closed = match p.sys.closed_loop(&theta) {
        Ok(c) => c,
        Err(e) => return pipe.fail(&e),
    };
    if stability_certificate(&closed).is_none() {
        let (min_eigenvalue, message) = match solve_lyapunov(&closed, &SymMatrix::identity(n)) {
            Ok(sol) => (Some(sol.min_eigenvalue()), Some("solution of the Lyapunov equation is not positive definite".into())),
            Err(e) => (None, Some(e.to_string())),
        };
        pipe.report.lyapunov =
            Some(LyapunovBlock { theta: problem::matrix_rows(&theta), certificate_found: false, min_eigenvalue, message });
        pipe.report.error = Some("supplied Θ is not a stabilizer".into());
        return 2;
    }
    let tau = match closed_loop_time_constant(&p.sys, &theta) {
        Ok(t) => t,
        Err(e) => return pipe.fail(&e),
    };
    let support = p.grid.as_ref().map_or(0.0, |g| g.final_time());
    let mut cfg = p.simulation.config(tau, support);
    // A persistent v has no integrable tail.
    cfg.report_tail = v.iter().all(|x| *x == 0.0);
    let result = cfg
        .steps()
        .and_then(|s| simulate_feedback(&p.sys, &p.weights, &theta, &vec![v; s], p.grid.as_ref(), &p.x0, &cfg));
    match result {
        Ok(r) => {
            pipe.report.simulation = Some(SimulationBlock::new("supplied", &theta, &cfg, r));
            0
        }
        Err(e) => pipe.fail(&e),
    }
}

pub fn cmd_oracle1d(args: &CommonArgs) -> Outcome {
    let problem = match load(args) {
        Ok(p) => p,
        Err(e) => return Outcome::input_error(e),
    };
    if problem.sys.n() != 1 || problem.sys.m() != 1 {
        return Outcome::input_error(Error::UnsupportedDimension("oracle1d needs n = m = 1".into()));
    }
    let mut pipe = Pipeline::new("oracle1d", &problem);
    let s = &problem.sys;
    let w = &problem.weights;
    let r = solve_1d(s.a[(0, 0)], s.c[(0, 0)], s.b[(0, 0)], s.d[(0, 0)], w.q.as_matrix()[(0, 0)], w.s[(0, 0)], w.r.as_matrix()[(0, 0)]);
    let code = match r {
        Ok(r) => {
            let code = match (r.case, r.is_solvable()) {
                (Case1d::NotStabilizable, _) => 2,
                (_, true) => 0,
                (_, false) => 3,
            };
            pipe.report.verdict.stabilizable = Some(r.case != Case1d::NotStabilizable);
            pipe.report.verdict.solvable = Some(r.is_solvable());
            pipe.report.oracle1d = Some(OracleBlock { result: Some(r), error: None, agreement: None });
            code
        }
        Err(e) => return Outcome::input_error(e),
    };
    pipe.finish(code);
    Outcome { code, report: Some(pipe.report), messages: problem.warnings }
}

pub fn execute(cli: &Cli) -> Outcome {
    let (mut outcome, out) = match &cli.command {
        Command::Check(a) => (cmd_check(a), &a.out),
        Command::Solve(a) => (cmd_solve(a), &a.common.out),
        Command::Simulate(a) => (cmd_simulate(a), &a.common.out),
        Command::Oracle1d(a) => (cmd_oracle1d(a), &a.out),
    };
    if let (Some(path), Some(report)) = (out, &outcome.report) {
        if let Err(e) = std::fs::write(path, render(report)) {
            outcome.messages.push(format!("error: {}: {e}", path.display()));
            outcome.code = 1;
        }
    }
    outcome
}

/// Pretty JSON with a trailing newline.
pub fn render(report: &Report) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

/// Parses arguments, runs the command, prints, and returns the exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    let outcome = execute(&cli);
    for m in &outcome.messages {
        eprintln!("{m}");
    }
    let to_file = match &cli.command {
        Command::Check(a) | Command::Oracle1d(a) => a.out.is_some(),
        Command::Solve(a) => a.common.out.is_some(),
        Command::Simulate(a) => a.common.out.is_some(),
    };
    if let Some(report) = &outcome.report {
        if !to_file {
            print!("{}", render(report));
        }
        if let Some(e) = &report.error {
            eprintln!("{e}");
        }
    }
    outcome.code
}
