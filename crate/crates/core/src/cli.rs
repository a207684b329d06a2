//! Command-line front end. Exit codes: 0 success, 2 bad input or usage,
//! 3 solver did not reach optimality, 4 infeasible candidate.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infomatrix::{build_quadratic, InformationWeights};
use crate::mri::{self, AcquisitionSettings, DesignSpec, MriParameters, Norm};
use crate::relax::{self, DesignOptions, DesignResult, QuadraticProgram};
use crate::sdp::{self, ConicDocument, SolveStatus, SolverOptions};
use crate::ssmodel::{simulate, write_trajectory_csv, ModelDocument, ParameterizedModel};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;

/// Environment variable holding the solver thread count.
pub const THREADS_ENV: &str = "INFORELAX_THREADS";

#[derive(Debug, Parser)]
#[command(name = "inforelax", version, about = "Information-optimal input design with certified bounds")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a model and write the trajectory as CSV.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        /// Input vector: JSON array or whitespace/comma separated numbers.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the relaxation and recover or bound the optimal input.
    Design {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        out: PathBuf,
        /// Also simulate the resulting input and write the trajectory CSV.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Certify a candidate input against the relaxation bound.
    Certify {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        candidate: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the lifted conic problem as JSON.
    ExportProblem {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve a conic problem document.
    Solve {
        #[arg(long)]
        problem: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// `mri` for the built-in injection model, or a model JSON file.
    #[arg(long, default_value = "mri")]
    model: String,
    /// Parameter overrides for the `mri` model (JSON object).
    #[arg(long)]
    params: Option<PathBuf>,
    /// Uncertain parameters of the `mri` model, comma separated.
    #[arg(long, value_delimiter = ',')]
    theta: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum NormArg {
    L2,
    L1,
}

impl From<NormArg> for Norm {
    fn from(n: NormArg) -> Self {
        match n {
            NormArg::L2 => Norm::L2,
            NormArg::L1 => Norm::L1,
        }
    }
}

#[derive(Debug, Args)]
struct ProblemArgs {
    #[arg(long, value_enum)]
    norm: NormArg,
    /// Per-sample rate bound.
    #[arg(long, default_value_t = 1.0)]
    rate: f64,
    #[arg(long, default_value_t = 4.0)]
    l2_budget: f64,
    #[arg(long, default_value_t = 8.0)]
    l1_budget: f64,
}

#[derive(Debug, Args)]
struct SolverArgs {
    /// Relative gap and feasibility tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Print one line per solver iteration to stderr.
    #[arg(long)]
    verbose: bool,
}

impl SolverArgs {
    fn options(&self) -> Result<DesignOptions> {
        let mut solver = SolverOptions::default();
        if let Some(t) = self.tol {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::invalid(format!("--tol must lie in (0, 1), got {t}")));
            }
            solver.rel_gap_tol = t;
            solver.feas_tol = t;
        }
        if let Some(m) = self.max_iters {
            solver.max_iters = m;
        }
        solver.verbose = self.verbose;
        solver.threads = threads_from_env()?;
        solver.validate()?;
        Ok(DesignOptions {
            solver,
            ..Default::default()
        })
    }
}

fn threads_from_env() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n >= 1)
            .ok_or_else(|| Error::invalid(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))),
        Err(_) => Ok(1),
    }
}

/// JSON written by `design` and `certify`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ResultDocument {
    pub relaxation_value: f64,
    pub candidate_value: Option<f64>,
    pub ratio: Option<f64>,
    pub exact: bool,
    /// The recovered or certified input.
    pub u: Option<Vec<f64>>,
    pub status: String,
    pub eigen_ratio: Option<f64>,
    pub iterations: Option<usize>,
    pub rel_gap: Option<f64>,
    pub lifted_dim: usize,
    pub lifted_constraints: usize,
    pub wall_time_s: Option<f64>,
}

impl ResultDocument {
    pub fn from_result(r: &DesignResult) -> Self {
        Self {
            relaxation_value: r.relaxation_value,
            candidate_value: r.candidate_value,
            ratio: r.ratio,
            exact: r.exact,
            u: r.candidate_u.as_ref().map(|u| u.iter().copied().collect()),
            status: r
                .solver
                .as_ref()
                .map(|s| s.status.to_string())
                .unwrap_or_else(|| "Certified".into()),
            eigen_ratio: r.eigen_ratio,
            iterations: r.solver.as_ref().map(|s| s.iterations),
            rel_gap: r.solver.as_ref().map(|s| s.rel_gap),
            lifted_dim: r.lifted_dim,
            lifted_constraints: r.lifted_constraints,
            wall_time_s: r.solver.as_ref().map(|s| s.wall_time.as_secs_f64()),
        }
    }

    /// `value=<v> exact=<flag> ratio=<r|n/a>`
    pub fn summary_line(&self) -> String {
        let ratio = match self.ratio {
            Some(r) => format!("{r:.6}"),
            None => "n/a".into(),
        };
        format!("value={:.6e} exact={} ratio={ratio}", self.relaxation_value, self.exact)
    }
}

/// JSON written by `solve`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionDocument {
    #[serde(rename = "X")]
    pub x: Vec<Vec<f64>>,
    pub value: f64,
    pub dual_value: f64,
    pub gap: f64,
    pub status: SolveStatus,
    pub iterations: usize,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::invalid(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::invalid(format!("cannot write {}: {e}", path.display())))
}

fn with_file<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Json(j) => Error::invalid(format!("{}: {j}", path.display())),
        Error::Model(m) => Error::Model(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Reads numbers from a JSON array or from whitespace/comma separated text.
pub fn parse_vector(text: &str) -> Result<Vec<f64>> {
    let trimmed = text.trim_start();
    if trimmed.starts_with('[') {
        return Ok(serde_json::from_str::<Vec<f64>>(text)?);
    }
    let mut out = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        for tok in line.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
            let v: f64 = tok.parse().map_err(|_| {
                Error::invalid(format!("line {}: '{tok}' is not a number", line_no + 1))
            })?;
            out.push(v);
        }
    }
    Ok(out)
}

enum Source {
    Mri {
        params: MriParameters,
        settings: AcquisitionSettings,
        theta: Option<Vec<String>>,
    },
    File(ParameterizedModel),
}

fn load_source(args: &ModelArgs) -> Result<Source> {
    if args.model == "mri" {
        let params = match &args.params {
            Some(path) => with_file(path, MriParameters::from_json(&read(path)?))?,
            None => MriParameters::default(),
        };
        return Ok(Source::Mri {
            params,
            settings: AcquisitionSettings::default(),
            theta: args.theta.clone(),
        });
    }
    if args.params.is_some() || args.theta.is_some() {
        return Err(Error::invalid("--params and --theta only apply to --model mri"));
    }
    let path = Path::new(&args.model);
    let doc = with_file(path, ModelDocument::from_json(&read(path)?))?;
    Ok(Source::File(with_file(path, doc.into_model())?))
}

impl Source {
    fn model(&self) -> Result<ParameterizedModel> {
        match self {
            Source::Mri {
                params,
                settings,
                theta,
            } => {
                let names = theta
                    .clone()
                    .unwrap_or_else(|| DesignSpec::new(Norm::L2).theta_names);
                mri::build_combined_model(params, settings, &names)
            }
            Source::File(m) => Ok(m.clone()),
        }
    }

    fn spec(&self, p: &ProblemArgs) -> DesignSpec {
        let mut spec = DesignSpec::new(p.norm.into());
        spec.rate_bound = p.rate;
        spec.l2_budget = p.l2_budget;
        spec.l1_budget = p.l1_budget;
        if let Source::Mri { theta: Some(t), .. } = self {
            spec.theta_names = t.clone();
        }
        spec
    }

    fn program(&self, p: &ProblemArgs) -> Result<QuadraticProgram> {
        match self {
            Source::Mri {
                params, settings, ..
            } => Ok(mri::build_instance(params, settings, &self.spec(p))?.program),
            Source::File(m) => {
                let spec = self.spec(p);
                spec.validate()?;
                let obj = build_quadratic(m, &InformationWeights::identity(m.p()))?;
                mri::budget_program(obj, &spec)
            }
        }
    }
}

fn write_csv(model: &ParameterizedModel, u: &[f64], path: &Path) -> Result<usize> {
    let traj = simulate(model, u)?;
    let mut buf = Vec::new();
    write_trajectory_csv(model, u, &traj, &mut buf)?;
    write(path, &String::from_utf8_lossy(&buf))?;
    Ok(traj.states.nrows())
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Infeasible(_) => EXIT_INFEASIBLE,
        Error::Solver(_) | Error::Extraction { .. } | Error::Numeric(_) | Error::Internal(_) => EXIT_SOLVER,
        _ => EXIT_INPUT,
    }
}

fn run_design(
    source: &Source,
    problem: &ProblemArgs,
    opts: &DesignOptions,
) -> Result<DesignResult> {
    match source {
        Source::Mri {
            params, settings, ..
        } => {
            let spec = source.spec(problem);
            match spec.norm {
                Norm::L2 => mri::run_l2_design(params, settings, &spec, opts),
                Norm::L1 => mri::run_l1_certification(params, settings, &spec, opts),
            }
        }
        Source::File(_) => relax::design(&source.program(problem)?, opts),
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { model, input, out } => {
            let m = load_source(&model)?.model()?;
            let u = with_file(&input, parse_vector(&read(&input)?))?;
            let rows = write_csv(&m, &u, &out)?;
            println!("wrote {rows} rows to {}", out.display());
        }
        Command::Design {
            model,
            problem,
            solver,
            out,
            trajectory,
        } => {
            let opts = solver.options()?;
            let source = load_source(&model)?;
            let r = run_design(&source, &problem, &opts)?;
            let doc = ResultDocument::from_result(&r);
            write(&out, &serde_json::to_string_pretty(&doc)?)?;
            if let (Some(path), Some(u)) = (trajectory, &r.candidate_u) {
                write_csv(&source.model()?, u.as_slice(), &path)?;
            }
            println!("{}", doc.summary_line());
        }
        Command::Certify {
            model,
            problem,
            solver,
            candidate,
            out,
        } => {
            let opts = solver.options()?;
            let source = load_source(&model)?;
            let qp = source.program(&problem)?;
            let u = with_file(&candidate, parse_vector(&read(&candidate)?))?;
            let viol = qp.violations(&u, relax::CERTIFY_TOL)?;
            if !viol.is_empty() {
                return Err(Error::Infeasible(viol));
            }
            let bound = relax::design(&qp, &opts)?;
            let mut r = relax::certify(&qp, &u, bound.relaxation_value)?;
            r.solver = bound.solver;
            r.lifted_dim = bound.lifted_dim;
            r.lifted_constraints = bound.lifted_constraints;
            let value = r.candidate_value.unwrap_or(f64::NAN);
            let ratio = r.ratio.map(|x| format!("{x:.6}")).unwrap_or_else(|| "n/a".into());
            println!(
                "certified optimum in [{value:.6e}, {:.6e}] ratio={ratio}",
                r.relaxation_value
            );
            if let Some(path) = out {
                write(&path, &serde_json::to_string_pretty(&ResultDocument::from_result(&r))?)?;
            }
        }
        Command::ExportProblem {
            model,
            problem,
            out,
        } => {
            let qp = load_source(&model)?.program(&problem)?;
            let lifted = relax::relax(&qp)?;
            write(&out, &serde_json::to_string(&lifted.to_document())?)?;
            println!(
                "wrote {}x{} problem with {} constraints to {}",
                lifted.dim(),
                lifted.dim(),
                lifted.num_constraints(),
                out.display()
            );
        }
        Command::Solve {
            problem,
            solver,
            out,
        } => {
            let opts = solver.options()?;
            let doc: ConicDocument = with_file(&problem, serde_json::from_str(&read(&problem)?).map_err(Error::from))?;
            let p = doc.into_problem()?;
            let sol = sdp::solve(&p, &opts.solver)?;
            let doc = SolutionDocument {
                x: crate::linalg::to_rows(&sol.x),
                value: sol.primal_obj,
                dual_value: sol.dual_obj,
                gap: sol.rel_gap,
                status: sol.status,
                iterations: sol.iterations,
            };
            write(&out, &serde_json::to_string_pretty(&doc)?)?;
            println!(
                "status={} value={:.9e} gap={:.2e} iterations={}",
                sol.status, sol.primal_obj, sol.rel_gap, sol.iterations
            );
            if sol.status != SolveStatus::Optimal {
                return Err(Error::Solver(sol.message.unwrap_or_else(|| sol.status.to_string())));
            }
        }
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
