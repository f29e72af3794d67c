//! Plan-driven experiment sweeps.
//!
//! An [`ExperimentPlan`] names a kernel, a set of filters, the exponent
//! triple (γ, s, u) — or a u-grid — a `C_λ` grid, and an n-grid; each cell
//! gets `d = ⌊n^{1/γ}⌋` (computed exactly, never through a float power) and
//! `λ = C_λ · d^{−u}`. [`run_plan`] executes every `(cell, repetition)` in
//! parallel, reusing one eigendecomposition per repetition across the whole
//! filter × C_λ grid, and collects a canonical, byte-deterministic table.
//! [`fit_slope`], [`select_best_clambda`] and [`compare_to_theory`] turn the
//! table into log–log learning-curve slopes checked against the closed-form
//! exponents.

use crate::filter::{FilterError, FilterKind, FilterSpec};
use crate::kernel::{KernelError, KernelSpec};
use crate::rng::{cell_hash, replicate_seed_id, substream, StreamRole};
use crate::risk::RiskOperator;
use crate::target::{build_target, generate_dataset, sample_anchors, TargetError, TargetSpec};
use crate::theory::{learning_curve_exponent, RateQuery, TheoryError};
use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;

/// The `C_λ` grid used when a plan does not specify one.
pub const DEFAULT_C_LAMBDA: [f64; 10] =
    [0.001, 0.01, 0.1, 0.2, 0.4, 0.5, 0.7, 0.8, 1.0, 10.0];

/// Slope-vs-prediction tolerance at full experiment scale (n up to 5000,
/// 50 repetitions).
pub const SLOPE_TOL_PAPER: f64 = 0.3;
/// Tolerance at reduced desk scale (n ≤ 2000, ~20 repetitions), where
/// finite-dimension transients bite harder.
pub const SLOPE_TOL_DESK: f64 = 0.45;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid plan: {reason}")]
    BadPlan { reason: String },
    #[error("d = ⌊n^(1/γ)⌋ cannot be decided exactly for n={n}, γ={gamma}: both sides of the power comparison overflow")]
    DimensionAmbiguous { n: u64, gamma: f64 },
    #[error("d = ⌊n^(1/γ)⌋ exceeds 2^50 for n={n}, γ={gamma}")]
    DimensionHuge { n: u64, gamma: f64 },
    #[error("slope fit needs at least 3 points, got {got}")]
    TooFewPoints { got: usize },
    #[error("slope fit needs positive dimensions and risks, got ({d}, {risk})")]
    NonPositivePoint { d: f64, risk: f64 },
    #[error("slope fit needs at least two distinct dimensions")]
    DegenerateAbscissa,
    #[error("no successful rows to aggregate")]
    EmptyTable,
    #[error("malformed sweep CSV at line {line}: {reason}")]
    BadCsv { line: usize, reason: String },
    #[error("thread pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Theory(#[from] TheoryError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Target(#[from] TargetError),
}

fn default_c_lambda() -> Vec<f64> {
    DEFAULT_C_LAMBDA.to_vec()
}

fn default_reps() -> u64 {
    50
}

fn default_n_test() -> usize {
    1000
}

fn default_sigma() -> f64 {
    1.0
}

/// A full sweep description. Deserializes from strict JSON (unknown keys are
/// rejected so config typos fail loudly instead of silently running the
/// default).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    /// Kernel id, e.g. `rbf`, `ntk`, `powser:0.5,0.25,0.125`.
    pub kernel: String,
    /// Filter ids, e.g. `krr`, `gf`, `it:2`, `gd:0.01`.
    pub filters: Vec<String>,
    /// Dimension-to-sample coupling: d = ⌊n^{1/γ}⌋.
    pub gamma: f64,
    /// Target smoothness.
    pub s: f64,
    /// Regularization exponent for a single-curve plan (λ = C_λ d^{−u}).
    #[serde(default)]
    pub u: Option<f64>,
    /// Regularization-exponent grid for a curve-over-u plan.
    #[serde(default)]
    pub u_grid: Option<Vec<f64>>,
    /// Regularization prefactor grid.
    #[serde(default = "default_c_lambda")]
    pub c_lambda: Vec<f64>,
    /// Training-set sizes; one cell per (n, u).
    pub n_grid: Vec<u64>,
    /// Repetitions per cell.
    #[serde(default = "default_reps")]
    pub reps: u64,
    /// Test points per repetition.
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    /// Label noise standard deviation.
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Master seed; the sweep is a pure function of (plan, seed).
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; 0 means one per CPU.
    #[serde(default)]
    pub jobs: usize,
}

/// One (n, d, u) execution cell of a plan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanCell {
    pub n: u64,
    pub d: u64,
    pub u: f64,
}

impl ExperimentPlan {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let plan: Self = serde_json::from_str(text)
            .map_err(|e| HarnessError::BadPlan { reason: e.to_string() })?;
        plan.validate()?;
        Ok(plan)
    }

    /// The u values this plan sweeps (singleton for a single-curve plan).
    pub fn u_values(&self) -> Vec<f64> {
        match (&self.u, &self.u_grid) {
            (Some(u), _) => vec![*u],
            (None, Some(grid)) => grid.clone(),
            (None, None) => Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |reason: String| Err(HarnessError::BadPlan { reason });
        KernelSpec::parse(&self.kernel)?;
        if self.filters.is_empty() {
            return bad("filters must be nonempty".into());
        }
        let mut parsed_filters = Vec::new();
        for id in &self.filters {
            let kind = FilterKind::parse(id)?;
            if parsed_filters.contains(&kind.id()) {
                return bad(format!("duplicate filter {id}"));
            }
            parsed_filters.push(kind.id());
        }
        if !(self.gamma > 0.0) {
            return bad(format!("gamma must be positive, got {}", self.gamma));
        }
        crate::theory::snap_rational(self.gamma)?;
        if !(self.s >= 0.0) {
            return bad(format!("s must be nonnegative, got {}", self.s));
        }
        crate::theory::snap_rational(self.s)?;
        match (&self.u, &self.u_grid) {
            (Some(_), Some(_)) => return bad("give either u or u_grid, not both".into()),
            (None, None) => return bad("one of u or u_grid is required".into()),
            _ => {}
        }
        let us = self.u_values();
        if us.is_empty() {
            return bad("u_grid must be nonempty".into());
        }
        for &u in &us {
            if !(u > 0.0 && u.is_finite()) {
                return bad(format!("u must be positive and finite, got {u}"));
            }
            crate::theory::snap_rational(u)?;
        }
        if has_duplicate(&us) {
            return bad("duplicate u value".into());
        }
        if self.c_lambda.is_empty() {
            return bad("c_lambda grid must be nonempty".into());
        }
        for &c in &self.c_lambda {
            if !(c > 0.0 && c.is_finite()) {
                return bad(format!("c_lambda must be positive and finite, got {c}"));
            }
        }
        if has_duplicate(&self.c_lambda) {
            return bad("duplicate c_lambda value".into());
        }
        if self.n_grid.is_empty() {
            return bad("n_grid must be nonempty".into());
        }
        for &n in &self.n_grid {
            if n < 2 {
                return bad(format!("n must be at least 2, got {n}"));
            }
        }
        let mut seen = self.n_grid.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.n_grid.len() {
            return bad("duplicate n value".into());
        }
        if self.reps == 0 {
            return bad("reps must be at least 1".into());
        }
        if self.n_test < 2 {
            return bad(format!("n_test must be at least 2, got {}", self.n_test));
        }
        // Rides the target validation for σ and s ranges.
        TargetSpec::new(self.s, self.sigma, self.n_test)?;
        Ok(())
    }

    /// All (n, d, u) cells, with d derived exactly.
    pub fn cells(&self) -> Result<Vec<PlanCell>, HarnessError> {
        let mut out = Vec::new();
        for &u in &self.u_values() {
            for &n in &self.n_grid {
                out.push(PlanCell { n, d: dimension_floor(n, self.gamma)?, u });
            }
        }
        Ok(out)
    }

    /// The closed-form query matching this plan for one filter: τ comes from
    /// the filter's qualification, u must be the plan's single value.
    pub fn rate_query(&self, filter: &FilterKind, u: f64) -> Result<RateQuery, HarnessError> {
        let tau = filter.qualification().map_or(f64::INFINITY, f64::from);
        Ok(RateQuery::from_f64(self.s, self.gamma, tau, u)?)
    }

    fn cell_label(&self, n: u64, u: f64) -> String {
        format!(
            "kernel={}|gamma={}|s={}|sigma={}|ntest={}|u={}|n={}",
            self.kernel, self.gamma, self.s, self.sigma, self.n_test, u, n
        )
    }
}

fn has_duplicate(values: &[f64]) -> bool {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.windows(2).any(|w| w[0] == w[1])
}

fn checked_pow(base: u128, exp: i128) -> Option<u128> {
    u32::try_from(exp).ok().and_then(|e| base.checked_pow(e))
}

/// `d^p ≤ n^q` decided without float arithmetic; `None` when both sides
/// overflow `u128` (undecidable at this width).
fn pow_le(d: u128, p: i128, n: u128, q: i128) -> Option<bool> {
    match (checked_pow(d, p), checked_pow(n, q)) {
        (Some(a), Some(b)) => Some(a <= b),
        // One side exceeds u128::MAX, the other fits — the overflowing side
        // is strictly larger.
        (None, Some(_)) => Some(false),
        (Some(_), None) => Some(true),
        (None, None) => None,
    }
}

/// Exact `⌊n^{1/γ}⌋`: the largest d with `d^p ≤ n^q` where γ = p/q in lowest
/// terms. Float powers round the wrong way at perfect powers (8^(1/3)
/// evaluates below 2), so the comparison stays in integers.
pub fn dimension_floor(n: u64, gamma: f64) -> Result<u64, HarnessError> {
    if n == 0 {
        return Err(HarnessError::BadPlan { reason: "n must be positive".into() });
    }
    let g = crate::theory::snap_rational(gamma)?;
    if !(gamma > 0.0) {
        return Err(HarnessError::BadPlan {
            reason: format!("gamma must be positive, got {gamma}"),
        });
    }
    let (p, q) = (*g.numer(), *g.denom());
    let n_w = u128::from(n);
    let le = |d: u128| pow_le(d, p, n_w, q);
    let mut hi: u128 = 2;
    loop {
        match le(hi) {
            Some(true) => {
                hi *= 2;
                if hi > 1 << 50 {
                    return Err(HarnessError::DimensionHuge { n, gamma });
                }
            }
            Some(false) => break,
            None => return Err(HarnessError::DimensionAmbiguous { n, gamma }),
        }
    }
    // Invariant: lo satisfies d^p ≤ n^q, hi does not.
    let mut lo: u128 = 1;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        match le(mid) {
            Some(true) => lo = mid,
            Some(false) => hi = mid,
            None => return Err(HarnessError::DimensionAmbiguous { n, gamma }),
        }
    }
    Ok(lo as u64)
}

/// One measurement (or recorded failure) of one (filter, C_λ) pair on one
/// repetition of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub kernel: String,
    pub filter: String,
    pub gamma: f64,
    pub s: f64,
    pub u: f64,
    pub c_lambda: f64,
    pub n: u64,
    pub d: u64,
    pub rep: u64,
    /// Replicate seed id — reproduces this row's dataset on its own.
    pub seed: u64,
    pub excess_risk: Option<f64>,
    pub bias_sq: Option<f64>,
    pub variance: Option<f64>,
    pub mc_stderr: Option<f64>,
    /// `"ok"` or a stable failure code; failed rows keep their grid position
    /// with empty measurement fields.
    pub status: String,
}

impl SweepRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

pub const CSV_HEADER: &str =
    "kernel,filter,gamma,s,u,c_lambda,n,d,rep,seed,excess_risk,bias_sq,variance,mc_stderr,status";

fn csv_field(raw: &str) -> String {
    if raw.contains(',') || raw.contains('"') || raw.contains('\n') {
        format!("\"{}\"", raw.replace('"', "\"\""))
    } else {
        raw.to_owned()
    }
}

fn csv_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Split one CSV line with the quoting rules [`csv_field`] uses.
fn split_csv_line(line: &str) -> Result<Vec<String>, String> {
    let mut fields = Vec::new();
    let mut current = String::new();
    let mut in_quotes = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        if in_quotes {
            match c {
                '"' if chars.peek() == Some(&'"') => {
                    current.push('"');
                    chars.next();
                }
                '"' => in_quotes = false,
                _ => current.push(c),
            }
        } else {
            match c {
                '"' => in_quotes = true,
                ',' => fields.push(std::mem::take(&mut current)),
                _ => current.push(c),
            }
        }
    }
    if in_quotes {
        return Err("unterminated quote".into());
    }
    fields.push(current);
    Ok(fields)
}

/// The collected results of a sweep, canonically ordered.
#[derive(Debug, Clone, Default)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// Sort rows by (kernel, filter, u, C_λ, n, rep) — the canonical order
    /// that makes parallel and serial runs byte-identical.
    pub fn sort_canonical(&mut self) {
        self.rows.sort_by(|a, b| {
            a.kernel
                .cmp(&b.kernel)
                .then_with(|| a.filter.cmp(&b.filter))
                .then_with(|| a.u.total_cmp(&b.u))
                .then_with(|| a.c_lambda.total_cmp(&b.c_lambda))
                .then_with(|| a.n.cmp(&b.n))
                .then_with(|| a.rep.cmp(&b.rep))
        });
    }

    /// CSV with the fixed header; floats as shortest round-trip decimals,
    /// absent measurements as empty fields.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                csv_field(&r.kernel),
                csv_field(&r.filter),
                r.gamma,
                r.s,
                r.u,
                r.c_lambda,
                r.n,
                r.d,
                r.rep,
                r.seed,
                csv_opt(r.excess_risk),
                csv_opt(r.bias_sq),
                csv_opt(r.variance),
                csv_opt(r.mc_stderr),
                csv_field(&r.status),
            ));
        }
        out
    }

    /// Parse a table previously written by [`Self::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self, HarnessError> {
        let bad = |line: usize, reason: String| HarnessError::BadCsv { line, reason };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header == CSV_HEADER => {}
            Some((_, header)) => {
                return Err(bad(1, format!("unexpected header {header:?}")));
            }
            None => return Err(bad(1, "empty input".into())),
        }
        let mut rows = Vec::new();
        for (idx, line) in lines {
            if line.is_empty() {
                continue;
            }
            let lineno = idx + 1;
            let fields = split_csv_line(line).map_err(|reason| bad(lineno, reason))?;
            if fields.len() != 15 {
                return Err(bad(lineno, format!("expected 15 fields, got {}", fields.len())));
            }
            let float = |i: usize| -> Result<f64, HarnessError> {
                fields[i]
                    .parse()
                    .map_err(|_| bad(lineno, format!("bad float {:?}", fields[i])))
            };
            let int = |i: usize| -> Result<u64, HarnessError> {
                fields[i]
                    .parse()
                    .map_err(|_| bad(lineno, format!("bad integer {:?}", fields[i])))
            };
            let opt_float = |i: usize| -> Result<Option<f64>, HarnessError> {
                if fields[i].is_empty() {
                    Ok(None)
                } else {
                    float(i).map(Some)
                }
            };
            rows.push(SweepRow {
                kernel: fields[0].clone(),
                filter: fields[1].clone(),
                gamma: float(2)?,
                s: float(3)?,
                u: float(4)?,
                c_lambda: float(5)?,
                n: int(6)?,
                d: int(7)?,
                rep: int(8)?,
                seed: int(9)?,
                excess_risk: opt_float(10)?,
                bias_sq: opt_float(11)?,
                variance: opt_float(12)?,
                mc_stderr: opt_float(13)?,
                status: fields[14].clone(),
            });
        }
        Ok(Self { rows })
    }

    /// Successful rows for one (filter, u) curve.
    pub fn curve_rows(&self, filter: &str, u: f64) -> Vec<&SweepRow> {
        self.rows
            .iter()
            .filter(|r| r.is_ok() && r.filter == filter && r.u == u)
            .collect()
    }

    /// Mean excess risk per n for one (filter, u, C_λ) combination, ordered
    /// by n: (n, d, mean risk, repetitions used).
    pub fn mean_risk_by_n(
        &self,
        filter: &str,
        u: f64,
        c_lambda: f64,
    ) -> Vec<(u64, u64, f64, usize)> {
        let mut cells: Vec<(u64, u64, f64, usize)> = Vec::new();
        for r in &self.rows {
            if !(r.is_ok() && r.filter == filter && r.u == u && r.c_lambda == c_lambda) {
                continue;
            }
            let risk = r.excess_risk.expect("ok rows carry measurements");
            match cells.iter_mut().find(|(n, _, _, _)| *n == r.n) {
                Some((_, _, sum, count)) => {
                    *sum += risk;
                    *count += 1;
                }
                None => cells.push((r.n, r.d, risk, 1)),
            }
        }
        cells.sort_by_key(|&(n, _, _, _)| n);
        cells
            .into_iter()
            .map(|(n, d, sum, count)| (n, d, sum / count as f64, count))
            .collect()
    }
}

/// Everything a worker needs, parsed once.
struct PlanContext {
    plan: ExperimentPlan,
    kernel: KernelSpec,
    filters: Vec<FilterKind>,
    target_spec: TargetSpec,
}

/// Execute every (cell, repetition) of the plan. Failures become rows with a
/// status code; the sweep always runs to completion. The result is sorted
/// canonically, so worker count and scheduling never change the output.
pub fn run_plan(plan: &ExperimentPlan) -> Result<SweepTable, HarnessError> {
    plan.validate()?;
    let ctx = PlanContext {
        plan: plan.clone(),
        kernel: KernelSpec::parse(&plan.kernel)?,
        filters: plan
            .filters
            .iter()
            .map(|id| FilterKind::parse(id))
            .collect::<Result<_, _>>()?,
        target_spec: TargetSpec::new(plan.s, plan.sigma, plan.n_test)?,
    };
    let cells = plan.cells()?;
    let jobs: Vec<(PlanCell, u64)> = cells
        .iter()
        .flat_map(|&cell| (0..plan.reps).map(move |rep| (cell, rep)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.jobs)
        .build()
        .map_err(|e| HarnessError::ThreadPool(e.to_string()))?;
    let row_groups: Vec<Vec<SweepRow>> = pool.install(|| {
        jobs.par_iter().map(|&(cell, rep)| run_cell_rep(&ctx, cell, rep)).collect()
    });

    let mut table = SweepTable { rows: row_groups.into_iter().flatten().collect() };
    table.sort_canonical();
    Ok(table)
}

/// Measured columns of one row: (excess risk, bias², variance, MC stderr,
/// status), all `None` when the cell failed before evaluation.
type RowOutcome = (Option<f64>, Option<f64>, Option<f64>, Option<f64>, String);

/// One repetition of one cell: fresh anchors, target, and dataset from the
/// cell substreams, one eigendecomposition, then the full filter × C_λ grid
/// against it.
fn run_cell_rep(ctx: &PlanContext, cell: PlanCell, rep: u64) -> Vec<SweepRow> {
    let plan = &ctx.plan;
    let cell_id = cell_hash(&plan.cell_label(cell.n, cell.u));
    let seed_id = replicate_seed_id(plan.seed, cell_id, rep);

    let grid = |status: &str, fill: &dyn Fn(&FilterKind, f64) -> RowOutcome| -> Vec<SweepRow> {
        let mut rows = Vec::with_capacity(ctx.filters.len() * plan.c_lambda.len());
        for filter in &ctx.filters {
            for &c in &plan.c_lambda {
                let (excess_risk, bias_sq, variance, mc_stderr, row_status) = if status == "ok" {
                    fill(filter, c)
                } else {
                    (None, None, None, None, status.to_owned())
                };
                rows.push(SweepRow {
                    kernel: plan.kernel.clone(),
                    filter: filter.id(),
                    gamma: plan.gamma,
                    s: plan.s,
                    u: cell.u,
                    c_lambda: c,
                    n: cell.n,
                    d: cell.d,
                    rep,
                    seed: seed_id,
                    excess_risk,
                    bias_sq,
                    variance,
                    mc_stderr,
                    status: row_status,
                });
            }
        }
        rows
    };
    let fail = |status: &str| grid(status, &|_, _| unreachable!());

    if cell.d < 3 {
        return fail("dimension_too_small");
    }
    let d = cell.d as usize;
    let mut anchor_stream = substream(plan.seed, cell_id, rep, StreamRole::Anchors);
    let Ok((anchors, _)) = sample_anchors(d, &mut anchor_stream) else {
        return fail("anchors_failed");
    };
    let Ok(target) = build_target(&ctx.kernel, &ctx.target_spec, anchors) else {
        return fail("target_failed");
    };
    let Ok(dataset) = generate_dataset(
        &target,
        cell.n as usize,
        plan.sigma,
        plan.n_test,
        plan.seed,
        cell_id,
        rep,
    ) else {
        return fail("dataset_failed");
    };
    let Ok(operator) = RiskOperator::new(&ctx.kernel, &dataset) else {
        return fail("decomposition_failed");
    };

    grid("ok", &|filter, c| {
        let lambda = c * (cell.d as f64).powf(-cell.u);
        let spec = match FilterSpec::new(filter.clone(), lambda) {
            Ok(spec) => spec,
            Err(_) => return (None, None, None, None, "filter_invalid".to_owned()),
        };
        match operator.evaluate(&spec, &dataset) {
            Ok(est) => (
                Some(est.excess_risk),
                Some(est.bias_sq),
                Some(est.variance),
                Some(est.mc_stderr),
                "ok".to_owned(),
            ),
            Err(_) => (None, None, None, None, "risk_failed".to_owned()),
        }
    })
}

/// Least-squares line through (ln d, ln risk).
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Homoscedastic OLS standard error of the slope.
    pub stderr: f64,
    /// slope ± stderr.
    pub ci68: (f64, f64),
    pub n_points: usize,
    /// The C_λ the fitted curve used, when one was selected.
    pub c_lambda: Option<f64>,
}

impl SlopeFit {
    pub fn with_c_lambda(mut self, c: f64) -> Self {
        self.c_lambda = Some(c);
        self
    }
}

/// Fit ln(risk) = slope · ln(d) + intercept by ordinary least squares.
/// Needs ≥ 3 points so the residual variance has a degree of freedom.
pub fn fit_slope(points: &[(f64, f64)]) -> Result<SlopeFit, HarnessError> {
    if points.len() < 3 {
        return Err(HarnessError::TooFewPoints { got: points.len() });
    }
    for &(d, risk) in points {
        if !(d > 0.0 && risk > 0.0 && d.is_finite() && risk.is_finite()) {
            return Err(HarnessError::NonPositivePoint { d, risk });
        }
    }
    let m = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|&(d, _)| d.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, r)| r.ln()).collect();
    let x_bar = xs.iter().sum::<f64>() / m;
    let y_bar = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - x_bar).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(HarnessError::DegenerateAbscissa);
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - x_bar) * (y - y_bar)).sum();
    let slope = sxy / sxx;
    let intercept = y_bar - slope * x_bar;
    let ssr: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - (intercept + slope * x)).powi(2))
        .sum();
    let stderr = (ssr / (m - 2.0) / sxx).sqrt();
    Ok(SlopeFit {
        slope,
        intercept,
        stderr,
        ci68: (slope - stderr, slope + stderr),
        n_points: points.len(),
        c_lambda: None,
    })
}

/// The C_λ whose mean risk, averaged over the n-grid (each n's repetitions
/// averaged first), is smallest; ties go to the smaller C_λ.
pub fn select_best_clambda(
    table: &SweepTable,
    filter: &str,
    u: f64,
) -> Result<f64, HarnessError> {
    let mut grid: Vec<f64> = table
        .rows
        .iter()
        .filter(|r| r.filter == filter && r.u == u)
        .map(|r| r.c_lambda)
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut best: Option<(f64, f64)> = None;
    for &c in &grid {
        let cells = table.mean_risk_by_n(filter, u, c);
        if cells.is_empty() {
            continue;
        }
        let mean = cells.iter().map(|&(_, _, risk, _)| risk).sum::<f64>() / cells.len() as f64;
        // Strict inequality keeps the smaller C_λ on ties (grid is ascending).
        if best.is_none_or(|(_, prev)| mean < prev) {
            best = Some((c, mean));
        }
    }
    best.map(|(c, _)| c).ok_or(HarnessError::EmptyTable)
}

/// A fitted slope set against the closed-form exponent.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryComparison {
    pub fitted: f64,
    pub predicted: f64,
    /// fitted − predicted.
    pub gap: f64,
    pub tolerance: f64,
    pub pass: bool,
}

pub fn compare_to_theory(
    fit: &SlopeFit,
    query: &RateQuery,
    tolerance: f64,
) -> Result<TheoryComparison, HarnessError> {
    let predicted = learning_curve_exponent(query)?.zeta;
    let gap = fit.slope - predicted;
    Ok(TheoryComparison { fitted: fit.slope, predicted, gap, tolerance, pass: gap.abs() <= tolerance })
}
