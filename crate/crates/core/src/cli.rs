//! `liquidate` command-line front end.
//!
//! Exit codes: 0 success, 1 invalid input, 2 not converged or verification
//! failed, 3 diverged, 4 oracle precondition violated. Errors are also written
//! to stderr as one JSON object.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::dual::{eval_primal_with_slack, PrimalObjective};
use crate::model::{LiquidationProblem, Trajectory};
use crate::oracles::{
    hedge_ratio, linear_solve_quadratic, primal_perturbation_check, shooting_solve_1d, OracleError, DEFAULT_SEED,
};
use crate::presets;
use crate::problem_file::{load_problem, ProblemFileError};
use crate::solver::{solve, SolveError, SolveReport, SolverConfig, StepSize, StopReason};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;
pub const EXIT_ORACLE_PRECONDITION: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "liquidate", version, about = "Optimal liquidation with participation constraints")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a problem file and write the trajectory and report.
    Solve {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write normalized holdings for plotting.
        #[arg(long)]
        emit_plot_data: bool,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Solve, then compare against an independent oracle.
    Verify {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        oracle: OracleKind,
        /// Seed for the perturbation oracle.
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Perturbation trials.
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// Pass threshold on the trajectory gap, relative to max(1, |q0|_inf).
        /// Defaults: 1e-5 shooting, 1e-6 linear.
        #[arg(long)]
        tol_verify: Option<f64>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Solve the built-in example portfolios and write one plot-data CSV per figure.
    Figures {
        #[arg(long)]
        out: PathBuf,
        /// Number of time slices.
        #[arg(long, default_value_t = presets::DEFAULT_STEPS)]
        steps: usize,
        /// Also write each preset as a problem file.
        #[arg(long)]
        write_problems: bool,
        #[command(flatten)]
        solver: SolverArgs,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleKind {
    Shooting,
    Linear,
    Perturbation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DthetaArg {
    Auto,
    Fixed(f64),
}

impl FromStr for DthetaArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Self::Auto);
        }
        s.parse::<f64>()
            .map(Self::Fixed)
            .map_err(|_| format!("expected `auto` or a number, got `{s}`"))
    }
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Descent step, or `auto` for safety * 2/K.
    #[arg(long, default_value = "auto")]
    pub dtheta: DthetaArg,
    #[arg(long, default_value_t = 0.9)]
    pub safety: f64,
    #[arg(long, default_value_t = 1_000_000)]
    pub max_iter: usize,
    #[arg(long)]
    pub tol_grad: Option<f64>,
    #[arg(long)]
    pub tol_residual: Option<f64>,
}

impl SolverArgs {
    pub fn config(&self) -> SolverConfig {
        SolverConfig {
            dtheta: match self.dtheta {
                DthetaArg::Auto => StepSize::Auto,
                DthetaArg::Fixed(x) => StepSize::Fixed(x),
            },
            safety: self.safety,
            max_iters: self.max_iter,
            tol_grad: self.tol_grad,
            tol_residual: self.tol_residual,
        }
    }
}

/// Failure with its exit code and a JSON payload for stderr.
#[derive(Debug)]
pub struct CliFailure {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
    pub details: serde_json::Value,
}

impl CliFailure {
    fn new(code: i32, kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            code,
            kind,
            message: message.into(),
            details: serde_json::Value::Null,
        }
    }

    fn with_details(mut self, details: serde_json::Value) -> Self {
        self.details = details;
        self
    }

    pub fn to_json(&self) -> String {
        json!({
            "error": self.kind,
            "exit_code": self.code,
            "message": self.message,
            "details": self.details,
        })
        .to_string()
    }
}

impl From<ProblemFileError> for CliFailure {
    fn from(e: ProblemFileError) -> Self {
        let details = match &e {
            ProblemFileError::Parse { line, column, .. } => json!({ "line": line, "column": column }),
            ProblemFileError::Invalid(errs) => json!(errs
                .0
                .iter()
                .map(|v| json!({ "kind": v.kind(), "message": v.to_string() }))
                .collect::<Vec<_>>()),
            _ => serde_json::Value::Null,
        };
        let kind = match e {
            ProblemFileError::Io { .. } => "Io",
            ProblemFileError::Parse { .. } => "Parse",
            ProblemFileError::AmbiguousCovariance => "AmbiguousCovariance",
            ProblemFileError::Invalid(_) => "Validation",
        };
        CliFailure::new(EXIT_INVALID, kind, e.to_string()).with_details(details)
    }
}

impl From<SolveError> for CliFailure {
    fn from(e: SolveError) -> Self {
        match &e {
            SolveError::Invalid(errs) => CliFailure::new(EXIT_INVALID, "Validation", e.to_string()).with_details(json!(errs
                .0
                .iter()
                .map(|v| json!({ "kind": v.kind(), "message": v.to_string() }))
                .collect::<Vec<_>>())),
            SolveError::BadConfig(_) | SolveError::CacheMismatch { .. } => {
                CliFailure::new(EXIT_INVALID, "BadConfig", e.to_string())
            }
            SolveError::Diverged {
                iteration,
                dtheta,
                bound,
                ..
            } => CliFailure::new(EXIT_DIVERGED, "Diverged", e.to_string()).with_details(json!({
                "iteration": iteration, "dtheta": dtheta, "two_over_k": bound,
            })),
            SolveError::NotConverged(r) => CliFailure::new(EXIT_NOT_CONVERGED, "NotConverged", e.to_string())
                .with_details(json!({
                    "iterations": r.iterations,
                    "final_grad_norm": r.final_grad_norm,
                    "final_residual": r.final_residual,
                })),
        }
    }
}

impl From<OracleError> for CliFailure {
    fn from(e: OracleError) -> Self {
        if e.is_precondition() {
            CliFailure::new(EXIT_ORACLE_PRECONDITION, "OraclePrecondition", e.to_string())
        } else if let OracleError::Invalid(_) = e {
            CliFailure::new(EXIT_INVALID, "Validation", e.to_string())
        } else {
            CliFailure::new(EXIT_NOT_CONVERGED, "OracleFailure", e.to_string())
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> CliFailure {
    CliFailure::new(EXIT_INVALID, "Io", format!("{}: {e}", path.display()))
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("{}", f.to_json());
            f.code
        }
    }
}

pub fn execute(command: &Command) -> Result<(), CliFailure> {
    match command {
        Command::Solve {
            problem,
            out,
            emit_plot_data,
            solver,
        } => run_solve(problem, out, *emit_plot_data, solver),
        Command::Verify {
            problem,
            out,
            oracle,
            seed,
            trials,
            tol_verify,
            solver,
        } => run_verify(problem, out, *oracle, *seed, *trials, *tol_verify, solver),
        Command::Figures {
            out,
            steps,
            write_problems,
            solver,
        } => run_figures(out, *steps, *write_problems, solver),
    }
}

// ---------------------------------------------------------------------------
// Output formats

/// Lossless decimal for CSV cells.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// `step,time` then per asset `q,v,participation,p`. Trade rate, participation
/// and dual on row `n` refer to slice `n → n+1`; the last row leaves them empty.
pub fn trajectory_csv(problem: &LiquidationProblem, report: &SolveReport) -> String {
    let steps = problem.steps();
    let dt = problem.dt();
    let mut s = String::from("step,time");
    for a in &problem.assets {
        let _ = write!(s, ",q_{0},v_{0},participation_{0},p_{0}", a.name);
    }
    s.push('\n');
    let q = &report.q_star;
    let p = &report.p_star;
    for n in 0..=steps {
        let _ = write!(s, "{n},{}", num(problem.grid.time(n)));
        for (i, a) in problem.assets.iter().enumerate() {
            let _ = write!(s, ",{}", num(q[(n, i)]));
            if n < steps {
                let v = (q[(n, i)] - q[(n + 1, i)]) / dt;
                let _ = write!(s, ",{},{},{}", num(v), num(v.abs() / a.volume.slice(n)), num(p[(n, i)]));
            } else {
                s.push_str(",,,");
            }
        }
        s.push('\n');
    }
    s
}

fn normalizer(q0: f64, fallback: f64) -> f64 {
    if q0 != 0.0 {
        q0
    } else if fallback != 0.0 {
        fallback
    } else {
        1.0
    }
}

/// `time` then `q^i_n / q^i_0` per asset. Assets starting flat are scaled by
/// the largest initial position instead.
pub fn plotdata_csv(problem: &LiquidationProblem, q: &Trajectory) -> String {
    let mut s = String::from("time");
    for a in &problem.assets {
        let _ = write!(s, ",{}", a.name);
    }
    s.push('\n');
    let largest = problem.max_abs_q0();
    for n in 0..q.rows() {
        s.push_str(&num(problem.grid.time(n)));
        for (i, &q0) in problem.q0.iter().enumerate() {
            let _ = write!(s, ",{}", num(q[(n, i)] / normalizer(q0, largest)));
        }
        s.push('\n');
    }
    s
}

#[derive(Serialize)]
struct ReportJson<'a> {
    converged: bool,
    stop: &'static str,
    iterations: usize,
    dtheta_used: f64,
    lipschitz_k: f64,
    two_over_k: f64,
    tol_grad: f64,
    tol_residual: f64,
    final_grad_norm: f64,
    final_residual: f64,
    participation_excess: f64,
    dual_objective: f64,
    primal_objective: Option<f64>,
    j_history: &'a [f64],
    q_star: Vec<&'a [f64]>,
    p_star: Vec<&'a [f64]>,
}

fn primal_value(q: &Trajectory, problem: &LiquidationProblem, excess: f64) -> Option<f64> {
    match eval_primal_with_slack(q, problem, excess.max(0.0) * (1.0 + 1e-9)) {
        PrimalObjective::Finite(v) => Some(v),
        PrimalObjective::Infeasible { .. } => None,
    }
}

pub fn report_json(problem: &LiquidationProblem, r: &SolveReport) -> String {
    let body = ReportJson {
        converged: r.converged,
        stop: match r.stop {
            StopReason::Tolerance => "tolerance",
            StopReason::IterationCap => "iteration_cap",
        },
        iterations: r.iterations,
        dtheta_used: r.dtheta_used,
        lipschitz_k: r.lipschitz_k,
        two_over_k: 2.0 / r.lipschitz_k,
        tol_grad: r.tol_grad,
        tol_residual: r.tol_residual,
        final_grad_norm: r.final_grad_norm,
        final_residual: r.final_residual,
        participation_excess: r.participation_excess,
        dual_objective: *r.j_history.last().expect("history is never empty"),
        primal_objective: primal_value(&r.q_star, problem, r.participation_excess),
        j_history: &r.j_history,
        q_star: (0..r.q_star.rows()).map(|n| r.q_star.row(n)).collect(),
        p_star: (0..r.p_star.rows()).map(|n| r.p_star.row(n)).collect(),
    };
    serde_json::to_string_pretty(&body).expect("report serializes")
}

#[derive(Serialize)]
struct Artifact {
    file: String,
    sha256: String,
    bytes: usize,
}

#[derive(Serialize)]
struct ResolvedConfig {
    dtheta: serde_json::Value,
    safety: f64,
    max_iters: usize,
    tol_grad: Option<f64>,
    tol_residual: Option<f64>,
}

impl From<&SolverConfig> for ResolvedConfig {
    fn from(c: &SolverConfig) -> Self {
        Self {
            dtheta: match c.dtheta {
                StepSize::Auto => json!("auto"),
                StepSize::Fixed(x) => json!(x),
            },
            safety: c.safety,
            max_iters: c.max_iters,
            tol_grad: c.tol_grad,
            tol_residual: c.tol_residual,
        }
    }
}

/// Record of one invocation: inputs, resolved settings, and every file written
/// with its checksum.
#[derive(Serialize)]
pub struct RunManifest {
    command: &'static str,
    problem: Option<String>,
    config: ResolvedConfig,
    out_dir: String,
    oracle: Option<OracleKind>,
    artifacts: Vec<Artifact>,
    wall_seconds: f64,
}

struct Writer {
    dir: PathBuf,
    artifacts: Vec<Artifact>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self, CliFailure> {
        fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<(), CliFailure> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| io_failure(&path, e))?;
        self.artifacts.push(Artifact {
            file: name.to_string(),
            sha256: hex(&Sha256::digest(contents.as_bytes())),
            bytes: contents.len(),
        });
        Ok(())
    }

    fn finish(
        mut self,
        command: &'static str,
        problem: Option<&Path>,
        config: &SolverConfig,
        oracle: Option<OracleKind>,
        started: Instant,
    ) -> Result<(), CliFailure> {
        let manifest = RunManifest {
            command,
            problem: problem.map(|p| p.display().to_string()),
            config: config.into(),
            out_dir: self.dir.display().to_string(),
            oracle,
            artifacts: std::mem::take(&mut self.artifacts),
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        let path = self.dir.join("manifest.json");
        fs::write(&path, text).map_err(|e| io_failure(&path, e))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

// ---------------------------------------------------------------------------
// Commands

/// Runs the solver and turns a non-converged report into exit code 2.
fn solve_checked(problem: &LiquidationProblem, config: &SolverConfig) -> Result<SolveReport, CliFailure> {
    let report = solve(problem, config)?;
    if !report.converged {
        return Err(CliFailure::new(
            EXIT_NOT_CONVERGED,
            "NotConverged",
            format!(
                "stopped by tolerance but residual {:e} or participation excess {:e} exceeds {:e}",
                report.final_residual, report.participation_excess, report.tol_residual
            ),
        ));
    }
    Ok(report)
}

pub fn run_solve(problem_path: &Path, out: &Path, emit_plot_data: bool, args: &SolverArgs) -> Result<(), CliFailure> {
    let started = Instant::now();
    let problem = load_problem(problem_path)?;
    let config = args.config();
    // Write what we have even when the run does not converge.
    let (report, failure) = match solve(&problem, &config) {
        Ok(r) if r.converged => (r, None),
        Ok(r) => {
            let f = CliFailure::new(
                EXIT_NOT_CONVERGED,
                "NotConverged",
                format!(
                    "stopped by tolerance but residual {:e} or participation excess {:e} exceeds {:e}",
                    r.final_residual, r.participation_excess, r.tol_residual
                ),
            );
            (r, Some(f))
        }
        Err(SolveError::NotConverged(r)) => {
            let f = CliFailure::from(SolveError::NotConverged(r.clone()));
            (*r, Some(f))
        }
        Err(e) => return Err(e.into()),
    };
    let mut w = Writer::new(out)?;
    w.write("trajectory.csv", &trajectory_csv(&problem, &report))?;
    w.write("report.json", &report_json(&problem, &report))?;
    if emit_plot_data {
        w.write("plotdata.csv", &plotdata_csv(&problem, &report.q_star))?;
    }
    w.finish("solve", Some(problem_path), &config, None, started)?;
    match failure {
        Some(f) => Err(f),
        None => Ok(()),
    }
}

#[derive(Serialize)]
struct VerifyJson {
    oracle: OracleKind,
    passed: bool,
    gap_inf: f64,
    tolerance: f64,
    per_step_max_deviation: Vec<f64>,
    solver_objective: Option<f64>,
    oracle_objective: Option<f64>,
    solver_iterations: usize,
    solver_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    perturbation: Option<serde_json::Value>,
}

fn check_oracle_preconditions(problem: &LiquidationProblem, oracle: OracleKind) -> Result<(), CliFailure> {
    // Cheap shape checks first so a precondition failure does not wait on the solver.
    match oracle {
        OracleKind::Shooting if problem.dim() != 1 => Err(OracleError::Dimension {
            expected: "exactly 1",
            found: problem.dim(),
        }
        .into()),
        OracleKind::Linear => {
            for (i, a) in problem.assets.iter().enumerate() {
                if a.cost.phi != 1.0 || a.cost.psi != 0.0 {
                    return Err(OracleError::NotQuadratic {
                        asset: i,
                        phi: a.cost.phi,
                        psi: a.cost.psi,
                    }
                    .into());
                }
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

#[allow(clippy::too_many_arguments)]
pub fn run_verify(
    problem_path: &Path,
    out: &Path,
    oracle: OracleKind,
    seed: u64,
    trials: usize,
    tol_verify: Option<f64>,
    args: &SolverArgs,
) -> Result<(), CliFailure> {
    let started = Instant::now();
    let problem = load_problem(problem_path)?;
    check_oracle_preconditions(&problem, oracle)?;
    let config = args.config();
    let report = solve_checked(&problem, &config)?;
    let scale = problem.max_abs_q0().max(1.0);
    let solver_objective = primal_value(&report.q_star, &problem, report.participation_excess);

    let compare = |reference: &Trajectory, rel: f64| {
        let per_step: Vec<f64> = (0..reference.rows())
            .map(|n| {
                reference
                    .row(n)
                    .iter()
                    .zip(report.q_star.row(n))
                    .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
            })
            .collect();
        let gap = per_step.iter().fold(0.0_f64, |m, &x| m.max(x));
        let tol = rel * scale;
        VerifyJson {
            oracle,
            passed: gap <= tol,
            gap_inf: gap,
            tolerance: tol,
            per_step_max_deviation: per_step,
            solver_objective,
            oracle_objective: primal_value(reference, &problem, reference.participation_excess(&problem)),
            solver_iterations: report.iterations,
            solver_residual: report.final_residual,
            perturbation: None,
        }
    };

    let result = match oracle {
        OracleKind::Shooting => {
            let s = shooting_solve_1d(&problem, 1e-13)?;
            compare(&s.trajectory, tol_verify.unwrap_or(1e-5))
        }
        OracleKind::Linear => {
            let (q, _) = linear_solve_quadratic(&problem)?;
            compare(&q, tol_verify.unwrap_or(1e-6))
        }
        OracleKind::Perturbation => {
            let o = primal_perturbation_check(&report.q_star, &problem, trials, 1e-3, seed);
            VerifyJson {
                oracle,
                passed: o.passed,
                gap_inf: (-o.worst_margin).max(0.0),
                tolerance: 1e-10 * o.base_objective.abs().max(1.0),
                per_step_max_deviation: Vec::new(),
                solver_objective,
                oracle_objective: Some(o.base_objective),
                solver_iterations: report.iterations,
                solver_residual: report.final_residual,
                perturbation: Some(json!({
                    "trials": o.trials,
                    "effective_trials": o.effective_trials,
                    "worst_margin": o.worst_margin,
                    "seed": seed,
                })),
            }
        }
    };
    let passed = result.passed;
    let mut w = Writer::new(out)?;
    w.write(
        "verify.json",
        &serde_json::to_string_pretty(&result).expect("verify report serializes"),
    )?;
    w.finish("verify", Some(problem_path), &config, Some(oracle), started)?;
    if passed {
        Ok(())
    } else {
        Err(CliFailure::new(
            EXIT_NOT_CONVERGED,
            "VerificationFailed",
            format!("oracle gap {:e} exceeds tolerance {:e}", result.gap_inf, result.tolerance),
        ))
    }
}

/// Columns `time` then one normalized curve per entry; all curves share a grid.
fn curves_csv(problem: &LiquidationProblem, curves: &[(&str, Vec<f64>)]) -> String {
    let mut s = String::from("time");
    for (name, _) in curves {
        let _ = write!(s, ",{name}");
    }
    s.push('\n');
    for n in 0..=problem.steps() {
        s.push_str(&num(problem.grid.time(n)));
        for (_, c) in curves {
            let _ = write!(s, ",{}", num(c[n]));
        }
        s.push('\n');
    }
    s
}

fn column(q: &Trajectory, i: usize, scale: f64) -> Vec<f64> {
    (0..q.rows()).map(|n| q[(n, i)] / scale).collect()
}

pub fn run_figures(out: &Path, steps: usize, write_problems: bool, args: &SolverArgs) -> Result<(), CliFailure> {
    let started = Instant::now();
    if steps == 0 {
        return Err(CliFailure::new(EXIT_INVALID, "BadGrid", "--steps must be at least 1"));
    }
    let config = args.config();
    let mut w = Writer::new(out)?;
    let solved = |name: &str, p: &LiquidationProblem, w: &mut Writer| -> Result<SolveReport, CliFailure> {
        if write_problems {
            w.write(
                &format!("{name}.problem.json"),
                &crate::problem_file::ProblemFile::from_problem(p).to_json_pretty(),
            )?;
        }
        solve_checked(p, &config)
    };

    // Participation-cap study.
    let mut curves = Vec::new();
    let mut grid_problem = None;
    for &rho in &presets::FIG2_RHO {
        let p = presets::fig2(rho, steps);
        let name = format!("fig2_rho{:.0}", rho * 100.0);
        let r = solved(&name, &p, &mut w)?;
        curves.push((format!("rho_max_{rho}"), column(&r.q_star, 0, p.q0[0])));
        grid_problem = Some(p);
    }
    let named: Vec<(&str, Vec<f64>)> = curves.iter().map(|(n, c)| (n.as_str(), c.clone())).collect();
    w.write("fig2.csv", &curves_csv(grid_problem.as_ref().unwrap(), &named))?;

    // Two-asset portfolios against the standalone asset-1 benchmark.
    for (tag, portfolio, benchmark) in [
        ("fig3", presets::fig3(steps), presets::fig3_benchmark(steps)),
        ("fig4", presets::fig4(steps), presets::fig4_benchmark(steps)),
    ] {
        let r = solved(tag, &portfolio, &mut w)?;
        let b = solved(&format!("{tag}_benchmark"), &benchmark, &mut w)?;
        let curves = [
            ("asset1", column(&r.q_star, 0, portfolio.q0[0])),
            ("asset2", column(&r.q_star, 1, portfolio.q0[1])),
            ("asset1_standalone", column(&b.q_star, 0, benchmark.q0[0])),
        ];
        w.write(&format!("{tag}.csv"), &curves_csv(&portfolio, &curves))?;
    }

    // Hedged liquidation. Everything is scaled by the asset-1 position.
    let hedged = presets::fig5(steps);
    let benchmark = presets::fig5_benchmark(steps);
    let r = solved("fig5", &hedged, &mut w)?;
    let b = solved("fig5_benchmark", &benchmark, &mut w)?;
    let scale = hedged.q0[0];
    let ratio = hedge_ratio(&hedged, 0, presets::fig5_hedge_convention())?;
    let overlay: Vec<f64> = (0..r.q_star.rows()).map(|n| ratio * r.q_star[(n, 0)] / scale).collect();
    let curves = [
        ("asset1", column(&r.q_star, 0, scale)),
        ("asset2", column(&r.q_star, 1, scale)),
        ("asset1_unhedged", column(&b.q_star, 0, scale)),
        ("hedge_overlay", overlay),
    ];
    w.write("fig5.csv", &curves_csv(&hedged, &curves))?;

    w.finish("figures", None, &config, None, started)
}
