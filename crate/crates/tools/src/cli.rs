//! The `sinkhorn` command line.
//!
//! Exit codes: 0 on success, 1 on numerical or file failures, 2 on usage
//! errors.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::json;
use sinkhorn_core::barycenter::{
    default_barycenter_lambda, grid_cost, invert_cost_with, solve_barycenter_with, AdamState, BarycenterProblem,
};
use sinkhorn_core::oracles::{
    dense_kkt_backward, error_bound_experiment, finite_difference_loss_grad, gauge_last_zero, FdProblem,
    DENSE_ORACLE_LIMIT,
};
use sinkhorn_core::{
    implicit_backward, relative_error, sinkhorn_forward, unrolled_backward, CostMatrix, GradTriple, LinearLoss,
    Marginal, Matrix, PlanLoss, QuadraticLoss, SinkhornConfig, TransportPlan,
};

use crate::bench::{records_to_csv, records_to_jsonl, run_bench_with_progress, BenchSpec, DEFAULT_BUDGET_BYTES};
use crate::io::{format_float, read_marginal, read_matrix_csv, read_vector_csv, write_matrix_csv, write_text};

/// Largest implicit-vs-oracle relative error `gradcheck` accepts.
pub const GRADCHECK_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Parser)]
#[command(
    name = "sinkhorn",
    version,
    about = "Entropic optimal transport with implicit differentiation"
)]
struct Cli {
    /// Print reports as JSON.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the forward pass and write the transport plan.
    Solve {
        #[command(flatten)]
        problem: ProblemArgs,
        /// Plan output path; the plan goes to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the marginal residual.
        #[arg(long)]
        residual: bool,
    },
    /// Compare implicit, unrolled, dense-oracle and finite-difference gradients.
    Gradcheck {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long, value_enum, default_value_t = LossKind::Linear)]
        loss: LossKind,
        /// Seed for the random loss parameters.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Finite-difference step.
        #[arg(long, default_value_t = 1e-6)]
        h: f64,
    },
    /// Check the gradient error bounds of a truncated forward pass.
    Bound {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long)]
        tau_max: usize,
        #[arg(long, value_enum, default_value_t = LossKind::Quadratic)]
        loss: LossKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Time implicit and unrolled differentiation.
    Bench {
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        taus: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = BenchSpec::DEFAULT_LAMBDA)]
        lambda: f64,
        /// Trajectory bytes above which the unrolled method is recorded as OOM.
        #[arg(long, default_value_t = DEFAULT_BUDGET_BYTES)]
        budget_bytes: u64,
        /// CSV output path; CSV goes to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// JSON-lines output path.
        #[arg(long)]
        jsonl: Option<PathBuf>,
    },
    /// Compute a barycenter of histograms on a grid.
    Barycenter {
        #[arg(long, value_delimiter = ',', required = true)]
        inputs: Vec<PathBuf>,
        /// Barycentric weights; uniform when omitted.
        #[arg(long, value_delimiter = ',')]
        weights: Option<Vec<f64>>,
        /// `1d:N` for a line of N bins or `2d:S` for an S×S square.
        #[arg(long)]
        grid: String,
        /// Defaults to 0.002 times the largest grid cost.
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, default_value_t = 200)]
        tau: usize,
        #[arg(long, default_value_t = 500)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of inputs sampled per step.
        #[arg(long)]
        subsample: Option<usize>,
        #[arg(long, default_value_t = AdamState::DEFAULT_STEP_SIZE)]
        step_size: f64,
        /// Barycenter output path; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-step loss output path.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Fit a cost matrix whose entropic plan matches a target plan.
    InvertCost {
        #[arg(long)]
        target: PathBuf,
        #[arg(long, default_value = "uniform")]
        a: String,
        #[arg(long, default_value = "uniform")]
        b: String,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        tau: usize,
        #[arg(long)]
        steps: usize,
        #[arg(long, default_value_t = AdamState::DEFAULT_STEP_SIZE)]
        step_size: f64,
        /// Cost output path; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct ProblemArgs {
    /// Cost matrix CSV.
    #[arg(long)]
    cost: PathBuf,
    /// Row marginal CSV, or `uniform`.
    #[arg(long, default_value = "uniform")]
    a: String,
    /// Column marginal CSV, or `uniform`.
    #[arg(long, default_value = "uniform")]
    b: String,
    #[arg(long)]
    lambda: f64,
    #[arg(long)]
    tau: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LossKind {
    Linear,
    Quadratic,
}

/// A failed command; everything except usage errors exits with 1.
#[derive(Debug)]
struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

type CmdResult = Result<i32, Failure>;

struct Problem {
    cost: CostMatrix,
    a: Marginal,
    b: Marginal,
    lambda: f64,
    tau: usize,
}

impl ProblemArgs {
    fn load(&self) -> Result<Problem, Failure> {
        let cost = CostMatrix::new(read_matrix_csv(&self.cost)?)
            .map_err(|e| Failure(format!("{}: {e}", self.cost.display())))?;
        let a = read_marginal(&self.a, cost.rows())?;
        let b = read_marginal(&self.b, cost.cols())?;
        Ok(Problem {
            cost,
            a,
            b,
            lambda: self.lambda,
            tau: self.tau,
        })
    }
}

impl Problem {
    fn forward(&self, tau: usize, record: bool) -> Result<sinkhorn_core::ForwardResult, Failure> {
        let mut cfg = SinkhornConfig::new(self.lambda, tau)?;
        if record {
            cfg = cfg.recording();
        }
        Ok(sinkhorn_forward(&self.cost, &self.a, &self.b, &cfg)?)
    }

    fn fd(&self) -> FdProblem {
        FdProblem {
            cost: self.cost.clone(),
            a: self.a.clone(),
            b: self.b.clone(),
            lambda: self.lambda,
            tau: self.tau,
        }
    }
}

/// Linear weights are standard normal; the quadratic target is uniform on
/// `[0, 1/(mn))`, the scale of a plan entry.
fn make_loss(kind: LossKind, m: usize, n: usize, seed: u64) -> Box<dyn PlanLoss> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        LossKind::Linear => Box::new(LinearLoss {
            weights: Matrix::from_fn(m, n, |_, _| rng.sample(StandardNormal)),
        }),
        LossKind::Quadratic => Box::new(QuadraticLoss {
            target: Matrix::from_fn(m, n, |_, _| rng.random::<f64>() / (m * n) as f64),
        }),
    }
}

fn parse_grid(spec: &str) -> Result<(usize, usize), Failure> {
    let bad = || Failure(format!("invalid grid {spec:?}, expected 1d:N or 2d:S"));
    let (dim, size) = spec.split_once(':').ok_or_else(bad)?;
    let size: usize = size.parse().map_err(|_| bad())?;
    match dim {
        "1d" => Ok((size, 1)),
        "2d" => Ok((size * size, 2)),
        _ => Err(bad()),
    }
}

/// Gradient flattened as `(∇C, ∇a, ∇b)` with both marginal parts in the
/// last-entry-zero gauge, so all methods are comparable.
fn flatten(g: &GradTriple) -> Vec<f64> {
    let mut v = g.grad_c.as_slice().to_vec();
    v.extend(gauge_last_zero(&g.grad_a));
    v.extend(gauge_last_zero(&g.grad_b));
    v
}

fn emit_json(out: &mut dyn Write, value: &serde_json::Value) -> std::io::Result<()> {
    writeln!(out, "{}", serde_json::to_string(value).expect("json values serialize"))
}

fn solve(
    problem: &ProblemArgs,
    out_path: &Option<PathBuf>,
    residual: bool,
    json: bool,
    out: &mut dyn Write,
) -> CmdResult {
    let p = problem.load()?;
    let f = p.forward(p.tau, false)?;
    let plan = f.plan.entries();
    match out_path {
        Some(path) => write_matrix_csv(plan, path)?,
        None if !json => write!(out, "{}", crate::io::format_matrix_csv(plan))?,
        None => {}
    }
    if json {
        let mut report = json!({ "residual": f.residual, "iterations": f.iterations_run });
        if out_path.is_none() {
            let rows: Vec<&[f64]> = (0..plan.rows()).map(|i| plan.row(i)).collect();
            report["plan"] = json!(rows);
        }
        emit_json(out, &report)?;
    } else if residual {
        writeln!(out, "residual {}", format_float(f.residual))?;
    }
    Ok(0)
}

fn gradcheck(problem: &ProblemArgs, kind: LossKind, seed: u64, h: f64, json: bool, out: &mut dyn Write) -> CmdResult {
    let p = problem.load()?;
    let (m, n) = (p.cost.rows(), p.cost.cols());
    let loss = make_loss(kind, m, n, seed);
    let f = p.forward(p.tau, true)?;
    let grad_p = loss.gradient(f.plan.entries());
    let implicit = implicit_backward(&f.plan, &grad_p, p.lambda)?;
    let trajectory = f.trajectory.as_ref().expect("recording was requested");
    let u = unrolled_backward(trajectory, &p.a, &p.b, &grad_p, p.lambda)?;
    let unrolled = GradTriple {
        grad_c: u.grad_c,
        grad_a: u.grad_a,
        grad_b: u.grad_b,
    };
    let dense = if m * n <= DENSE_ORACLE_LIMIT {
        Some(dense_kkt_backward(&f.plan, &grad_p, p.lambda)?)
    } else {
        None
    };
    let fd = finite_difference_loss_grad(&p.fd(), loss.as_ref(), h)?;

    // The finite-difference oracle already reports marginal parts in the
    // last-entry-zero gauge.
    let mut methods: Vec<(&str, Vec<f64>)> = vec![("implicit", flatten(&implicit)), ("unrolled", flatten(&unrolled))];
    if let Some(d) = &dense {
        methods.push(("dense", flatten(d)));
    }
    methods.push(("finite-diff", flatten(&fd)));
    let mut pairs = Vec::new();
    for i in 0..methods.len() {
        for j in i + 1..methods.len() {
            pairs.push((methods[i].0, methods[j].0, relative_error(&methods[i].1, &methods[j].1)));
        }
    }
    let oracle_error = pairs
        .iter()
        .find(|(x, y, _)| *x == "implicit" && *y == "dense")
        .map(|&(_, _, e)| e);
    let pass = oracle_error.is_none_or(|e| e <= GRADCHECK_TOLERANCE);

    if json {
        let rows: Vec<_> = pairs
            .iter()
            .map(|(x, y, e)| json!({ "first": x, "second": y, "relative_error": e }))
            .collect();
        emit_json(
            out,
            &json!({
                "residual": f.residual,
                "pairs": rows,
                "implicit_vs_dense": oracle_error,
                "pass": pass,
            }),
        )?;
    } else {
        writeln!(out, "residual {}", format_float(f.residual))?;
        writeln!(out, "{:<12} {:<12} relative_error", "first", "second")?;
        for (x, y, e) in &pairs {
            writeln!(out, "{x:<12} {y:<12} {}", format_float(*e))?;
        }
        match oracle_error {
            Some(e) => writeln!(
                out,
                "implicit vs dense oracle: {} ({})",
                format_float(e),
                if pass { "ok" } else { "FAILED" }
            )?,
            None => writeln!(
                out,
                "dense oracle skipped: m·n = {} exceeds {DENSE_ORACLE_LIMIT}",
                m * n
            )?,
        }
    }
    Ok(if pass { 0 } else { 1 })
}

fn bound(
    problem: &ProblemArgs,
    tau_max: usize,
    kind: LossKind,
    seed: u64,
    json: bool,
    out: &mut dyn Write,
) -> CmdResult {
    let p = problem.load()?;
    let loss = make_loss(kind, p.cost.rows(), p.cost.cols(), seed);
    let (k, r) = error_bound_experiment(&p.fd(), tau_max, loss.as_ref())?;
    if json {
        emit_json(
            out,
            &json!({
                "constants": {
                    "sigma_minus": k.sigma_minus,
                    "sigma_plus": k.sigma_plus,
                    "c1": k.c1,
                    "c2": k.c2,
                    "kappa": k.kappa,
                    "epsilon": k.epsilon,
                    "lambda": k.lambda,
                },
                "marginal": { "lhs": r.marginal_lhs, "rhs": r.marginal_rhs, "pass": r.marginal_pass },
                "cost": { "lhs": r.cost_lhs, "rhs": r.cost_rhs, "pass": r.cost_pass },
            }),
        )?;
    } else {
        let verdict = |ok: bool| if ok { "pass" } else { "FAIL" };
        writeln!(
            out,
            "epsilon {} sigma_minus {} sigma_plus {} c1 {} c2 {} kappa {}",
            format_float(k.epsilon),
            format_float(k.sigma_minus),
            format_float(k.sigma_plus),
            format_float(k.c1),
            format_float(k.c2),
            format_float(k.kappa)
        )?;
        writeln!(
            out,
            "marginal lhs {} rhs {} {}",
            format_float(r.marginal_lhs),
            format_float(r.marginal_rhs),
            verdict(r.marginal_pass)
        )?;
        writeln!(
            out,
            "cost lhs {} rhs {} {}",
            format_float(r.cost_lhs),
            format_float(r.cost_rhs),
            verdict(r.cost_pass)
        )?;
    }
    Ok(if r.passed() { 0 } else { 1 })
}

fn bench(
    spec: BenchSpec,
    out_path: &Option<PathBuf>,
    jsonl: &Option<PathBuf>,
    json: bool,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> CmdResult {
    let records = run_bench_with_progress(&spec, Some(err))?;
    let csv = records_to_csv(&records);
    let lines = records_to_jsonl(&records);
    if let Some(path) = out_path {
        write_text(path, &csv)?;
    }
    if let Some(path) = jsonl {
        write_text(path, &lines)?;
    }
    if json {
        write!(out, "{lines}")?;
    } else if out_path.is_none() {
        write!(out, "{csv}")?;
    }
    Ok(0)
}

fn write_vector_out(values: &[f64], path: &Option<PathBuf>, out: &mut dyn Write) -> Result<(), Failure> {
    match path {
        Some(p) => crate::io::write_vector_csv(values, p)?,
        None => {
            for x in values {
                writeln!(out, "{}", format_float(*x))?;
            }
        }
    }
    Ok(())
}

fn run_command(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let json = cli.json;
    match cli.command {
        Command::Solve {
            problem,
            out: path,
            residual,
        } => solve(&problem, &path, residual, json, out),
        Command::Gradcheck { problem, loss, seed, h } => gradcheck(&problem, loss, seed, h, json, out),
        Command::Bound {
            problem,
            tau_max,
            loss,
            seed,
        } => bound(&problem, tau_max, loss, seed, json, out),
        Command::Bench {
            sizes,
            taus,
            reps,
            seed,
            lambda,
            budget_bytes,
            out: path,
            jsonl,
        } => {
            let spec = BenchSpec {
                sizes,
                taus,
                repetitions: reps,
                seed,
                lambda,
                budget_bytes,
            };
            bench(spec, &path, &jsonl, json, out, err)
        }
        Command::Barycenter {
            inputs,
            weights,
            grid,
            lambda,
            tau,
            steps,
            seed,
            subsample,
            step_size,
            out: path,
            trace,
        } => {
            let (n, dim) = parse_grid(&grid)?;
            let cost = grid_cost(n, dim, 2.0)?;
            let histograms = inputs
                .iter()
                .map(|p| {
                    let v = read_vector_csv(p)?;
                    Marginal::normalized(v).map_err(|e| Failure(format!("{}: {e}", p.display())))
                })
                .collect::<Result<Vec<_>, Failure>>()?;
            let weights = weights.unwrap_or_else(|| vec![1.0 / histograms.len() as f64; histograms.len()]);
            let lambda = lambda.unwrap_or_else(|| default_barycenter_lambda(&cost));
            let mut problem = BarycenterProblem::new(histograms, weights, cost, lambda, tau)?;
            if let Some(s) = subsample {
                problem = problem.with_subsample(s)?;
            }
            let (bary, losses) = solve_barycenter_with(&problem, steps, seed, step_size)?;
            write_vector_out(bary.as_slice(), &path, out)?;
            if let Some(t) = &trace {
                crate::io::write_vector_csv(&losses, t)?;
            }
            let last = losses.last().copied().unwrap_or(f64::NAN);
            if json {
                emit_json(out, &json!({ "lambda": lambda, "steps": steps, "final_loss": last }))?;
            } else if path.is_some() {
                writeln!(out, "lambda {} final_loss {}", format_float(lambda), format_float(last))?;
            }
            Ok(0)
        }
        Command::InvertCost {
            target,
            a,
            b,
            lambda,
            tau,
            steps,
            step_size,
            out: path,
            trace,
        } => {
            let entries = read_matrix_csv(&target)?;
            let a = read_marginal(&a, entries.rows())?;
            let b = read_marginal(&b, entries.cols())?;
            let plan = TransportPlan::new(entries, a.clone(), b.clone())
                .map_err(|e| Failure(format!("{}: {e}", target.display())))?;
            let (cost, losses) = invert_cost_with(&plan, &a, &b, lambda, tau, steps, step_size)?;
            match &path {
                Some(p) => write_matrix_csv(cost.entries(), p)?,
                None => write!(out, "{}", crate::io::format_matrix_csv(cost.entries()))?,
            }
            if let Some(t) = &trace {
                crate::io::write_vector_csv(&losses, t)?;
            }
            let best = losses.iter().copied().fold(f64::INFINITY, f64::min);
            if json {
                emit_json(out, &json!({ "steps": steps, "best_loss": best }))?;
            } else if path.is_some() {
                writeln!(out, "best_loss {}", format_float(best))?;
            }
            Ok(0)
        }
    }
}

/// Runs the CLI on `argv` (including the program name), writing reports to
/// `out` and diagnostics to `err`. Returns the process exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    0
                }
                _ => {
                    let _ = write!(err, "{text}");
                    2
                }
            };
        }
    };
    match run_command(cli, out, err) {
        Ok(code) => code,
        Err(Failure(message)) => {
            let _ = writeln!(err, "error: {message}");
            1
        }
    }
}

/// Runs the CLI against the process's stdout and stderr.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(argv, &mut stdout.lock(), &mut stderr.lock())
}
