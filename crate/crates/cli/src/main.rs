//! Command-line front end for the curvelab laboratory.
//!
//! Subcommands:
//!
//! * `rates`  — closed-form learning-curve exponents, as JSON for one
//!   parameter point or as a CSV sweep over the regularization exponent u;
//! * `curve`  — risk measurements for a single (n, d) cell across a filter
//!   and C_λ grid, from inline flags;
//! * `sweep`  — a full experiment plan from a JSON config, emitting the
//!   canonical sweep CSV (optionally plus plot-ready aggregates);
//! * `seq`    — exact sequence-model risk along an n-grid;
//! * `diag`   — spectral block diagnostic of an empirical Gram matrix;
//! * `slopes` — fit log–log slopes from a sweep CSV and compare them with
//!   the closed-form exponents.
//!
//! Exit codes: 0 on full success, 1 when the run completed but a cell
//! failed or a slope comparison missed its tolerance, 2 on usage or
//! execution errors.

// Validation guards are written as negated comparisons (`!(x > 0.0)`) on
// purpose: unlike the positive rewrite, they reject NaN together with the
// out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use curvelab::filter::FilterKind;
use curvelab::harness::{
    self, dimension_floor, ExperimentPlan, SweepTable, DEFAULT_C_LAMBDA, SLOPE_TOL_DESK,
    SLOPE_TOL_PAPER,
};
use curvelab::kernel::KernelSpec;
use curvelab::risk::{spectral_block_report, SequenceModel};
use curvelab::rng::{cell_hash, substream, StreamRole};
use curvelab::sphere::sample_sphere;
use curvelab::theory::{learning_curve_exponent, RateQuery};
use curvelab::FilterSpec;
use serde_json::json;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "curvelab",
    version,
    about = "Learning-curve laboratory for spectral-filter kernel regression on the sphere",
    propagate_version = true
)]
struct Cli {
    /// JSON experiment plan (required by `sweep` and `slopes`).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Master seed; overrides the plan's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = one per CPU); overrides the plan's setting.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Write the primary output to this file instead of stdout.
    #[arg(long, global = true, value_name = "FILE")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form rate exponents: one JSON prediction, or a CSV u-sweep.
    Rates(RatesArgs),
    /// Measure risk on one (n, d) cell across filters and C_λ.
    Curve(CurveArgs),
    /// Run a full experiment plan and emit the sweep CSV.
    Sweep(SweepArgs),
    /// Exact sequence-model risk along an n-grid.
    Seq(SeqArgs),
    /// Spectral block diagnostic of an empirical Gram matrix.
    Diag(DiagArgs),
    /// Fit log-log slopes from a sweep CSV and compare with predictions.
    Slopes(SlopesArgs),
}

#[derive(Args)]
struct RatesArgs {
    /// Target smoothness s >= 0.
    #[arg(long)]
    s: f64,
    /// Dimension coupling gamma > 0 (n scales as d^gamma).
    #[arg(long)]
    gamma: f64,
    /// Filter qualification: a number >= 1, or "inf".
    #[arg(long, default_value = "inf")]
    tau: String,
    /// Regularization exponent u > 0, or "inf" for interpolation.
    #[arg(long, conflicts_with = "sweep", required_unless_present = "sweep")]
    u: Option<String>,
    /// Sweep "u=START:END:STEP" and emit the exponent curve as CSV.
    #[arg(long, value_name = "SPEC")]
    sweep: Option<String>,
}

#[derive(Args)]
struct CurveArgs {
    /// Kernel id: rbf, ntk, or powser:<mu0,mu1,...>.
    #[arg(long, default_value = "rbf")]
    kernel: String,
    /// Comma-separated filter ids (krr, gf, it:<q>, gd:<eta>).
    #[arg(long, default_value = "krr", value_delimiter = ',')]
    filters: Vec<String>,
    #[arg(long)]
    gamma: f64,
    #[arg(long)]
    s: f64,
    /// Regularization exponent: lambda = C_lambda * d^(-u).
    #[arg(long)]
    u: f64,
    /// Comma-separated C_lambda grid (default: the standard ten-point grid).
    #[arg(long, value_delimiter = ',')]
    c_lambda: Option<Vec<f64>>,
    /// Training-set size; d = floor(n^(1/gamma)).
    #[arg(long)]
    n: u64,
    #[arg(long, default_value_t = 10)]
    reps: u64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 200)]
    n_test: usize,
}

#[derive(Args)]
struct SweepArgs {
    /// Also write plot-ready aggregates (curves.csv, rates.csv) to this
    /// directory.
    #[arg(long, value_name = "DIR")]
    emit_plotdata: Option<PathBuf>,
    /// Slope tolerance used for the pass column of rates.csv.
    #[arg(long, default_value_t = SLOPE_TOL_DESK)]
    tol: f64,
}

#[derive(Args)]
struct SeqArgs {
    /// Kernel id whose spherical spectrum drives the model.
    #[arg(long, default_value = "rbf")]
    kernel: String,
    /// Use the clean mu_k = d^(-k) spectrum instead of the kernel's.
    #[arg(long)]
    idealized: bool,
    /// Filter id.
    #[arg(long, default_value = "krr")]
    filter: String,
    #[arg(long)]
    gamma: f64,
    /// Source smoothness; per-degree signal energy is mu_k^s.
    #[arg(long)]
    s: f64,
    #[arg(long)]
    u: f64,
    #[arg(long, default_value_t = 1.0)]
    c_lambda: f64,
    /// Comma-separated training-set sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    n_grid: Vec<u64>,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Truncation degree of the mode list.
    #[arg(long, default_value_t = 6)]
    k_max: usize,
}

#[derive(Args)]
struct DiagArgs {
    #[arg(long, default_value = "rbf")]
    kernel: String,
    /// Sphere dimension (points live on S^(d-1)).
    #[arg(long)]
    d: usize,
    /// Number of sample points.
    #[arg(long)]
    n: usize,
    /// Leading degree blocks to resolve before the bulk.
    #[arg(long, default_value_t = 1)]
    ell: usize,
}

#[derive(Args)]
struct SlopesArgs {
    /// Sweep CSV produced by `sweep`.
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// Slope tolerance |fitted - predicted|; overrides the scale presets.
    #[arg(long)]
    tol: Option<f64>,
    /// Use the full-scale tolerance (0.3) instead of the desk-scale 0.45.
    #[arg(long)]
    paper_scale: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    match &cli.command {
        Command::Rates(args) => run_rates(&cli, args),
        Command::Curve(args) => run_curve(&cli, args),
        Command::Sweep(args) => run_sweep(&cli, args),
        Command::Seq(args) => run_seq(&cli, args),
        Command::Diag(args) => run_diag(&cli, args),
        Command::Slopes(args) => run_slopes(&cli, args),
    }
}

/// Write to --out when given, otherwise stdout.
fn emit(cli: &Cli, content: &str) -> Result<()> {
    match &cli.out {
        Some(path) => std::fs::write(path, content)
            .with_context(|| format!("writing {}", path.display()))?,
        None => print!("{content}"),
    }
    Ok(())
}

/// "inf" (any case) or a plain float.
fn parse_extended(text: &str) -> Result<f64> {
    if text.eq_ignore_ascii_case("inf") || text.eq_ignore_ascii_case("infinity") {
        return Ok(f64::INFINITY);
    }
    text.parse::<f64>().with_context(|| format!("not a number: {text:?}"))
}

fn run_rates(cli: &Cli, args: &RatesArgs) -> Result<bool> {
    let tau = parse_extended(&args.tau)?;
    if let Some(u_text) = &args.u {
        let u = parse_extended(u_text)?;
        let query = RateQuery::from_f64(args.s, args.gamma, tau, u)?;
        let prediction = learning_curve_exponent(&query)?;
        let mut text = serde_json::to_string_pretty(&prediction.to_json())?;
        text.push('\n');
        emit(cli, &text)?;
        return Ok(true);
    }
    let spec = args.sweep.as_deref().expect("clap group guarantees one of u/sweep");
    let (start, end, step) = parse_sweep_spec(spec)?;
    let mut csv = String::from("u,zeta,v1,v2,b1,b2,regime,benign,saturated\n");
    let count = ((end - start) / step).round() as usize;
    for k in 0..=count {
        let u = start + step * k as f64;
        if u <= 0.0 || u > end + step * 1e-9 {
            continue;
        }
        let query = RateQuery::from_f64(args.s, args.gamma, tau, u)?;
        let p = learning_curve_exponent(&query)?;
        let b2 = p.b2.map(|v| v.to_string()).unwrap_or_default();
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            u, p.zeta, p.v1, p.v2, p.b1, b2, p.regime, p.benign, p.saturated
        )?;
    }
    emit(cli, &csv)?;
    Ok(true)
}

/// Parse "u=START:END:STEP" (the "u=" prefix is optional).
fn parse_sweep_spec(spec: &str) -> Result<(f64, f64, f64)> {
    let body = spec.strip_prefix("u=").unwrap_or(spec);
    let parts: Vec<&str> = body.split(':').collect();
    if parts.len() != 3 {
        bail!("sweep spec must be u=START:END:STEP, got {spec:?}");
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.parse::<f64>().with_context(|| format!("bad number {p:?} in sweep spec")))
        .collect::<Result<_>>()?;
    let (start, end, step) = (nums[0], nums[1], nums[2]);
    if !(step > 0.0 && step.is_finite()) {
        bail!("sweep step must be positive, got {step}");
    }
    if end < start {
        bail!("sweep end {end} is below start {start}");
    }
    Ok((start, end, step))
}

fn run_curve(cli: &Cli, args: &CurveArgs) -> Result<bool> {
    let plan = ExperimentPlan {
        kernel: args.kernel.clone(),
        filters: args.filters.clone(),
        gamma: args.gamma,
        s: args.s,
        u: Some(args.u),
        u_grid: None,
        c_lambda: args.c_lambda.clone().unwrap_or_else(|| DEFAULT_C_LAMBDA.to_vec()),
        n_grid: vec![args.n],
        reps: args.reps,
        n_test: args.n_test,
        sigma: args.sigma,
        seed: cli.seed.unwrap_or(0),
        jobs: cli.jobs.unwrap_or(0),
    };
    let table = harness::run_plan(&plan)?;
    let ok = table.rows.iter().all(|r| r.is_ok());
    emit(cli, &table.to_csv())?;
    Ok(ok)
}

fn load_plan(cli: &Cli) -> Result<ExperimentPlan> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| anyhow!("this subcommand needs --config <FILE>"))?;
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut plan = ExperimentPlan::from_json(&text)
        .with_context(|| format!("parsing {}", path.display()))?;
    if let Some(seed) = cli.seed {
        plan.seed = seed;
    }
    if let Some(jobs) = cli.jobs {
        plan.jobs = jobs;
    }
    Ok(plan)
}

fn run_sweep(cli: &Cli, args: &SweepArgs) -> Result<bool> {
    let plan = load_plan(cli)?;
    let table = harness::run_plan(&plan)?;
    let ok = table.rows.iter().all(|r| r.is_ok());
    if let Some(dir) = &args.emit_plotdata {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))?;
        write_plotdata(&plan, &table, dir, args.tol)?;
    }
    emit(cli, &table.to_csv())?;
    Ok(ok)
}

/// Plot-ready aggregates: `curves.csv` carries mean-risk learning curves
/// (risk vs n per filter, u, C_λ); `rates.csv` carries fitted-vs-predicted
/// slope pairs (one per filter and u, at the best C_λ).
fn write_plotdata(
    plan: &ExperimentPlan,
    table: &SweepTable,
    dir: &Path,
    tol: f64,
) -> Result<()> {
    let mut curves = String::from("filter,u,c_lambda,n,d,mean_risk,sem,reps\n");
    for filter_id in &plan.filters {
        let kind = FilterKind::parse(filter_id)?;
        for &u in &plan.u_values() {
            for &c in &plan.c_lambda {
                for (n, d, mean, count) in table.mean_risk_by_n(&kind.id(), u, c) {
                    let sem = standard_error(table, &kind.id(), u, c, n);
                    writeln!(curves, "{},{},{},{},{},{},{},{}", kind.id(), u, c, n, d, mean, sem, count)?;
                }
            }
        }
    }
    std::fs::write(dir.join("curves.csv"), curves)?;

    let mut rates = String::from("filter,u,c_lambda,fitted,stderr,predicted,gap,tolerance,pass\n");
    for filter_id in &plan.filters {
        let kind = FilterKind::parse(filter_id)?;
        for &u in &plan.u_values() {
            match slope_report(plan, table, &kind, u, tol) {
                Ok((fit, cmp)) => {
                    writeln!(
                        rates,
                        "{},{},{},{},{},{},{},{},{}",
                        kind.id(),
                        u,
                        fit.c_lambda.expect("slope_report sets the selected c_lambda"),
                        cmp.fitted,
                        fit.stderr,
                        cmp.predicted,
                        cmp.gap,
                        cmp.tolerance,
                        cmp.pass
                    )?;
                }
                Err(e) => eprintln!("plotdata: skipping {} at u={u}: {e:#}", kind.id()),
            }
        }
    }
    std::fs::write(dir.join("rates.csv"), rates)?;
    Ok(())
}

/// Sample standard error of the mean over a cell's repetitions; empty when
/// there is only one.
fn standard_error(table: &SweepTable, filter: &str, u: f64, c: f64, n: u64) -> String {
    let risks: Vec<f64> = table
        .rows
        .iter()
        .filter(|r| r.is_ok() && r.filter == filter && r.u == u && r.c_lambda == c && r.n == n)
        .filter_map(|r| r.excess_risk)
        .collect();
    if risks.len() < 2 {
        return String::new();
    }
    let m = risks.len() as f64;
    let mean = risks.iter().sum::<f64>() / m;
    let var = risks.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (m - 1.0);
    ((var / m).sqrt()).to_string()
}

/// Select the best C_λ, fit the log-log slope, compare with the prediction.
fn slope_report(
    plan: &ExperimentPlan,
    table: &SweepTable,
    kind: &FilterKind,
    u: f64,
    tol: f64,
) -> Result<(harness::SlopeFit, harness::TheoryComparison)> {
    let best = harness::select_best_clambda(table, &kind.id(), u)
        .with_context(|| format!("no successful rows for {} at u={u}", kind.id()))?;
    let points: Vec<(f64, f64)> = table
        .mean_risk_by_n(&kind.id(), u, best)
        .into_iter()
        .map(|(_, d, mean, _)| (d as f64, mean))
        .collect();
    let fit = harness::fit_slope(&points)
        .with_context(|| format!("slope fit for {} at u={u}, C_lambda={best}", kind.id()))?
        .with_c_lambda(best);
    let query = plan.rate_query(kind, u)?;
    let cmp = harness::compare_to_theory(&fit, &query, tol)?;
    Ok((fit, cmp))
}

fn run_seq(cli: &Cli, args: &SeqArgs) -> Result<bool> {
    let kernel = KernelSpec::parse(&args.kernel)?;
    let filter_kind = FilterKind::parse(&args.filter)?;
    if !(args.sigma >= 0.0 && args.sigma.is_finite()) {
        bail!("sigma must be nonnegative, got {}", args.sigma);
    }
    if !(args.s >= 0.0) {
        bail!("s must be nonnegative, got {}", args.s);
    }
    if !(args.u > 0.0 && args.u.is_finite()) {
        bail!("u must be positive and finite, got {}", args.u);
    }
    if !(args.c_lambda > 0.0 && args.c_lambda.is_finite()) {
        bail!("c_lambda must be positive, got {}", args.c_lambda);
    }
    let mut csv = String::from("n,d,lambda,risk\n");
    for &n in &args.n_grid {
        let d64 = dimension_floor(n, args.gamma)?;
        if d64 < 3 {
            bail!("n={n} with gamma={} gives d={d64} < 3; raise n", args.gamma);
        }
        let d = d64 as usize;
        let noise_over_n = args.sigma * args.sigma / n as f64;
        // Per-degree signal energy mu_k^s puts unit source-condition mass at
        // each resolved degree (0^0 counts as 1, so s=0 spreads evenly).
        let model = if args.idealized {
            let energies: Vec<f64> =
                (0..=args.k_max).map(|k| (d as f64).powi(-(k as i32)).powf(args.s)).collect();
            SequenceModel::idealized(d, args.k_max, &energies, noise_over_n)?
        } else {
            let structure = kernel.eigen_structure(d, args.k_max)?;
            let energies: Vec<f64> =
                structure.eigenvalues.iter().map(|mu| mu.powf(args.s)).collect();
            SequenceModel::from_eigen_structure(&structure, &energies, noise_over_n)?
        };
        let lambda = args.c_lambda * (d as f64).powf(-args.u);
        let filter = FilterSpec::new(filter_kind.clone(), lambda)?;
        let risk = model.risk_exact(&filter)?;
        writeln!(csv, "{n},{d},{lambda},{risk}")?;
    }
    emit(cli, &csv)?;
    Ok(true)
}

fn run_diag(cli: &Cli, args: &DiagArgs) -> Result<bool> {
    let kernel = KernelSpec::parse(&args.kernel)?;
    if args.n == 0 {
        bail!("n must be positive");
    }
    let seed = cli.seed.unwrap_or(0);
    let label = format!("diag|kernel={}|d={}|n={}", args.kernel, args.d, args.n);
    let mut rng = substream(seed, cell_hash(&label), 0, StreamRole::TrainPoints);
    let points = sample_sphere(args.n, args.d, &mut rng)?;
    let gram = kernel.gram(&points);
    let report = spectral_block_report(&kernel, &gram, args.d, args.ell)?;
    let value = json!({
        "kernel": kernel.id(),
        "d": args.d,
        "n": args.n,
        "ell": args.ell,
        "degree_blocks": report
            .degree_blocks
            .iter()
            .map(|&(predicted, observed)| json!({"predicted": predicted, "observed": observed}))
            .collect::<Vec<_>>(),
        "bulk_mean": report.bulk_mean,
        "bulk_spread": report.bulk_spread,
        "bulk_cv": report.bulk_cv,
        "kappa1": report.kappa1,
        "kappa1_rel_gap": report.kappa1_rel_gap,
        "gap_ratios": report.gap_ratios,
    });
    let mut text = serde_json::to_string_pretty(&value)?;
    text.push('\n');
    emit(cli, &text)?;
    Ok(true)
}

fn run_slopes(cli: &Cli, args: &SlopesArgs) -> Result<bool> {
    let plan = load_plan(cli)?;
    let text = std::fs::read_to_string(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?;
    let table = SweepTable::from_csv(&text)?;
    let tol = args
        .tol
        .unwrap_or(if args.paper_scale { SLOPE_TOL_PAPER } else { SLOPE_TOL_DESK });
    let mut reports = Vec::new();
    let mut all_pass = true;
    for filter_id in &plan.filters {
        let kind = FilterKind::parse(filter_id)?;
        for &u in &plan.u_values() {
            let (fit, cmp) = slope_report(&plan, &table, &kind, u, tol)?;
            all_pass &= cmp.pass;
            reports.push(json!({
                "filter": kind.id(),
                "u": u,
                "c_lambda": fit.c_lambda,
                "slope": fit.slope,
                "stderr": fit.stderr,
                "ci68": [fit.ci68.0, fit.ci68.1],
                "n_points": fit.n_points,
                "predicted": cmp.predicted,
                "gap": cmp.gap,
                "tolerance": cmp.tolerance,
                "pass": cmp.pass,
            }));
        }
    }
    let mut out = serde_json::to_string_pretty(&serde_json::Value::Array(reports))?;
    out.push('\n');
    emit(cli, &out)?;
    Ok(all_pass)
}
