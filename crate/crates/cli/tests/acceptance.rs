//! The project's acceptance gate: one test per release criterion, each
//! printing a single pass/fail line (visible with `--nocapture`; the test
//! harness' own ok/FAILED line mirrors it). Everything runs through public
//! APIs or the installed binary; oracles (dense solves, Gauss–Legendre
//! Gram–Schmidt, Monte Carlo) are implemented here, independent of the
//! library's code paths.
//!
//! Criterion 6 is the slow one (a reduced-scale learning-curve experiment,
//! minutes of eigendecompositions); all others finish in seconds.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use std::process::Command;

use curvelab::filter::{matrix_filter_apply, spectral_estimator, FilterKind, FilterSpec};
use curvelab::harness::{self, ExperimentPlan};
use curvelab::kernel::KernelSpec;
use curvelab::risk::{
    bias_variance_exact, spectral_block_report, RiskOperator, SequenceBlock, SequenceModel,
};
use curvelab::rng::{cell_hash, substream, StreamRole};
use curvelab::sphere::{funk_hecke_eigenvalue, sample_sphere, GegenbauerBasis};
use curvelab::target::{build_target, generate_dataset, sample_anchors, TargetSpec};
use curvelab::theory::{
    classify, gamma_threshold, learning_curve_exponent, minimax_exponent, optimal_u,
    sequence_exponent, RateQuery,
};
use curvelab::SpectralDecomposition;

const EXACT: f64 = 1e-12;
const INF: f64 = f64::INFINITY;

fn pass(criterion: u32, name: &str, detail: &str) {
    println!("acceptance {criterion} ({name}): PASS — {detail}");
}

fn query(s: f64, gamma: f64, tau: f64, u: f64) -> RateQuery {
    RateQuery::from_f64(s, gamma, tau, u).expect("grid parameters are valid")
}

fn zeta(s: f64, gamma: f64, tau: f64, u: f64) -> f64 {
    learning_curve_exponent(&query(s, gamma, tau, u)).expect("grid query succeeds").zeta
}

#[test]
fn criterion_1_closed_form_fidelity() {
    for (gamma, want) in
        [(0.3, INF), (0.5, INF), (1.2, 0.2), (1.7, 0.15), (2.0, 0.0), (2.7, 0.1)]
    {
        let got = gamma_threshold(gamma).unwrap();
        if want.is_infinite() {
            assert!(got.is_infinite() && got > 0.0, "threshold({gamma}) = {got}, want inf");
        } else {
            assert!((got - want).abs() <= EXACT, "threshold({gamma}) = {got}, want {want}");
        }
    }

    let mm = minimax_exponent(1.0, 1.5).unwrap();
    assert_eq!(mm.p, 0);
    assert!((mm.exponent + 1.0).abs() <= EXACT, "minimax exponent {}", mm.exponent);

    let z_inf = zeta(1.5, 1.5, INF, 0.5);
    assert!((z_inf + 1.5).abs() <= EXACT, "zeta at infinite qualification: {z_inf}");
    let z_one = zeta(1.5, 1.5, 1.0, 0.5);
    assert!((z_one + 1.0).abs() <= EXACT, "zeta at qualification 1: {z_one}");

    pass(
        1,
        "closed-form fidelity",
        &format!("thresholds, minimax (0, -1), exponents {z_inf} / {z_one}"),
    );
}

/// The shape/structure grids: the exponent curve's V-then-flat profile, the
/// dominance of the variance and bias terms over the qualification term past
/// the optimum, minimax attainment for benign smoothness, the gap paid by
/// non-benign smoothness under interpolation, the filter-level saturation
/// dichotomy, and the kernel/sequence exponent equivalence.
#[test]
fn criterion_2_exponent_structure() {
    let u_grid: Vec<f64> = (1..=800).map(|i| i as f64 / 100.0).collect();
    let shape_triples: Vec<(f64, f64, f64)> = {
        let mut out = Vec::new();
        for s in [0.5, 1.0, 1.5, 2.5] {
            for gamma in [0.8, 1.2, 1.5, 2.7] {
                for tau in [1.0, 2.0, INF] {
                    out.push((s, gamma, tau));
                }
            }
        }
        out
    };

    // V-then-flat: nonincreasing before the optimal u, nondecreasing from
    // there to γ, constant beyond γ (pairs straddling a kink are skipped).
    for &(s, gamma, tau) in &shape_triples {
        let u_opt = optimal_u(s, gamma, tau).unwrap();
        let mut prev: Option<(f64, f64)> = None;
        for &u in &u_grid {
            let z = zeta(s, gamma, tau, u);
            if let Some((pu, pz)) = prev {
                if u <= u_opt {
                    assert!(z <= pz + EXACT, "rising before optimum at u={u} ({s},{gamma},{tau})");
                } else if pu >= u_opt && u <= gamma {
                    assert!(z >= pz - EXACT, "falling after optimum at u={u} ({s},{gamma},{tau})");
                } else if pu >= gamma {
                    assert!((z - pz).abs() <= EXACT, "not flat past gamma at u={u}");
                }
            }
            prev = Some((u, z));
        }
    }

    // Past the optimum, the qualification-limited bias term never exceeds
    // the larger of the other three components.
    for &(s, gamma, tau) in &shape_triples {
        if tau.is_infinite() {
            continue;
        }
        let u_opt = optimal_u(s, gamma, tau).unwrap();
        for &u in &u_grid {
            if u < u_opt {
                continue;
            }
            let p = learning_curve_exponent(&query(s, gamma, tau, u)).unwrap();
            let others = p.v1.max(p.v2).max(p.b1);
            let b2 = p.b2.expect("finite qualification carries the term");
            assert!(others >= b2 - EXACT, "qualification term dominates at u={u}");
        }
    }

    // Benign smoothness (s at or below the threshold) attains the minimax
    // exponent at every u past the optimum, interpolation included.
    let mut benign_checked = 0usize;
    for &(s, gamma, tau) in &shape_triples {
        let threshold = gamma_threshold(gamma).unwrap();
        if s > threshold {
            continue;
        }
        benign_checked += 1;
        let u_opt = optimal_u(s, gamma, tau).unwrap();
        let minimax = minimax_exponent(s, gamma).unwrap().exponent;
        for &u in &u_grid {
            if u < u_opt {
                continue;
            }
            let z = zeta(s, gamma, tau, u);
            assert!(
                (z - minimax).abs() <= EXACT,
                "benign point misses minimax at u={u} ({s},{gamma},{tau})"
            );
        }
        let z = zeta(s, gamma, tau, INF);
        assert!((z - minimax).abs() <= EXACT, "benign interpolation misses minimax");
    }
    assert!(benign_checked > 0, "grid contains no benign triple");

    // Non-benign smoothness pays a strict premium over minimax somewhere in
    // the under-regularized band.
    for &(s, gamma, tau) in &shape_triples {
        let threshold = gamma_threshold(gamma).unwrap();
        if s <= threshold {
            continue;
        }
        let u_opt = optimal_u(s, gamma, tau).unwrap();
        let minimax = minimax_exponent(s, gamma).unwrap().exponent;
        let found = u_grid
            .iter()
            .any(|&u| u > u_opt && u < gamma && zeta(s, gamma, tau, u) > minimax + 1e-9);
        assert!(found, "no interpolation gap for ({s},{gamma},{tau})");
    }

    // Saturation dichotomy at the filter level: qualification τ ≥ s reaches
    // the minimax exponent at every admissible dimension scaling; τ < s
    // falls short at some scaling.
    let admissible = |s: f64, gamma: f64, tau: f64| -> bool {
        tau.is_infinite() || s > 1.0 / (2.0 * tau) || gamma > (2.0 * tau + 1.0) * s / (2.0 * tau * (1.0 + s))
    };
    let attains = |s: f64, gamma: f64, tau: f64| -> bool {
        let u_opt = optimal_u(s, gamma, tau).unwrap();
        let minimax = minimax_exponent(s, gamma).unwrap().exponent;
        (zeta(s, gamma, tau, u_opt) - minimax).abs() <= EXACT
    };
    for s in [0.5, 1.5, 3.0] {
        for tau in [1.0, 2.0, 4.0, INF] {
            let attains_everywhere = [1.5, 3.0, 6.0]
                .iter()
                .filter(|&&gamma| admissible(s, gamma, tau))
                .all(|&gamma| attains(s, gamma, tau));
            assert_eq!(
                attains_everywhere,
                tau >= s,
                "saturation dichotomy fails at s={s}, tau={tau}"
            );
        }
    }

    // The kernel exponent equals the sequence exponent with u capped at γ.
    for &(s, gamma, tau) in &shape_triples {
        for &u in &u_grid {
            let kernel = zeta(s, gamma, tau, u);
            let seq = sequence_exponent(&query(s, gamma, tau, u.min(gamma))).unwrap();
            assert!(
                (kernel - seq).abs() <= EXACT,
                "kernel/sequence mismatch at u={u} ({s},{gamma},{tau})"
            );
        }
    }

    // Spot-check the classification surface the curves rely on.
    let c = classify(&query(0.5, 1.5, INF, 0.4)).unwrap();
    assert!(c.benign && !c.saturated);

    pass(
        2,
        "exponent structure",
        &format!("{} triples × {} grid points, all exact", shape_triples.len(), u_grid.len()),
    );
}

/// Dense symmetric solve by Gaussian elimination with partial pivoting — the
/// reference for the spectral ridge filter.
fn solve_dense(a: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let n = b.len();
    let mut m = a.clone();
    let mut x = b.clone();
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if m[[r, col]].abs() > m[[piv, col]].abs() {
                piv = r;
            }
        }
        if piv != col {
            for c in 0..n {
                m.swap([col, c], [piv, c]);
            }
            x.swap(col, piv);
        }
        let diag = m[[col, col]];
        for r in col + 1..n {
            let f = m[[r, col]] / diag;
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                m[[r, c]] -= f * m[[col, c]];
            }
            x[r] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        let mut s = x[col];
        for c in col + 1..n {
            s -= m[[col, c]] * x[c];
        }
        x[col] = s / m[[col, col]];
    }
    x
}

#[test]
fn criterion_3_filter_contracts() {
    let z_grid: Vec<f64> = (0..400)
        .map(|i| {
            let t = i as f64 / 399.0;
            (1e-9f64.ln() * (1.0 - t)).exp()
        })
        .collect();
    let lambda_grid = [1e-6, 1e-4, 1e-2, 0.1, 0.3, 1.0];

    // Each variant's (z+λ)·φ stays inside its band, the effective shrinkage
    // z·φ stays in [0, 1], and the residual ψ is nonincreasing in z.
    let cases = [
        (FilterKind::Krr, 1.0, 1.0),
        (FilterKind::GradientFlow, 1.0, 1.30),
        (FilterKind::IteratedRidge { q: 2 }, 1.0, 2.0),
        (FilterKind::GradientDescent { eta: 0.1 }, 0.9, 1.35),
    ];
    for (kind, lo, hi) in &cases {
        for &lambda in &lambda_grid {
            let f = FilterSpec::new(kind.clone(), lambda).unwrap();
            let mut prev_psi = f64::INFINITY;
            for &z in &z_grid {
                let phi = f.phi(z).unwrap();
                let v = (z + lambda) * phi;
                assert!(
                    (*lo - 1e-9..=*hi + 1e-9).contains(&v),
                    "{} λ={lambda} z={z}: (z+λ)φ = {v} outside [{lo}, {hi}]",
                    kind.id()
                );
                let zphi = z * phi;
                assert!((-1e-12..=1.0 + 1e-12).contains(&zphi), "{} zφ={zphi}", kind.id());
                let psi = f.psi(z).unwrap();
                assert!(psi <= prev_psi + 1e-12, "{} ψ increased at z={z}", kind.id());
                prev_psi = psi;
            }
        }
    }

    // Ridge through the eigendecomposition equals a dense direct solve.
    let mut rng = substream(2026, cell_hash("acceptance.filter.solve"), 0, StreamRole::Aux);
    let mut worst: f64 = 0.0;
    for _trial in 0..5 {
        let b = Array2::from_shape_fn((30, 30), |_| rng.gen::<f64>() * 2.0 - 1.0);
        let a = b.t().dot(&b).mapv(|v| v / 30.0);
        let decomp = SpectralDecomposition::new(&a).unwrap();
        let v = Array1::from_shape_fn(30, |_| rng.gen::<f64>() * 2.0 - 1.0);
        for lambda in [0.1, 1.0] {
            let filter = FilterSpec::new(FilterKind::Krr, lambda).unwrap();
            let spectral = matrix_filter_apply(&filter, &decomp, &v).unwrap();
            let mut shifted = a.clone();
            for i in 0..30 {
                shifted[[i, i]] += lambda;
            }
            let direct = solve_dense(&shifted, &v);
            let rel = (&spectral - &direct).iter().map(|x| x * x).sum::<f64>().sqrt()
                / direct.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(rel < 1e-8, "ridge vs direct solve: rel {rel}");
            worst = worst.max(rel);
        }
    }

    // Small-step gradient descent tracks gradient flow on a real estimator.
    let mut rng = substream(2026, cell_hash("acceptance.filter.gdgf"), 0, StreamRole::TrainPoints);
    let x = sample_sphere(60, 8, &mut rng).unwrap();
    let mut noise = substream(2026, cell_hash("acceptance.filter.gdgf"), 0, StreamRole::Noise);
    let y: Array1<f64> = (0..60).map(|_| noise.gen::<f64>() * 2.0 - 1.0).collect();
    let mut eval_rng =
        substream(2026, cell_hash("acceptance.filter.gdgf"), 0, StreamRole::TestPoints);
    let eval = sample_sphere(50, 8, &mut eval_rng).unwrap();
    let gd = FilterSpec::new(FilterKind::GradientDescent { eta: 0.01 }, 0.02).unwrap();
    let gf = FilterSpec::new(FilterKind::GradientFlow, 0.02).unwrap();
    let via_gd = spectral_estimator(&KernelSpec::Rbf, &gd, &x, &y, &eval).unwrap();
    let via_gf = spectral_estimator(&KernelSpec::Rbf, &gf, &x, &y, &eval).unwrap();
    let y_sup = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let gap = (&via_gd - &via_gf).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(gap < 2e-2 * y_sup, "gradient descent vs flow gap {gap}");

    pass(
        3,
        "filter contracts",
        &format!("bands hold; solve gap ≤ {worst:.2e}; gd/gf gap {gap:.2e}"),
    );
}

/// Legendre polynomial and derivative at x, by the three-term recurrence.
fn legendre_with_derivative(m: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=m {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Gauss–Legendre nodes and weights on [−1, 1] via Newton iteration.
fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(m, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(m, x);
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Reference orthogonal polynomials for the sphere's degree decomposition:
/// Gram–Schmidt on {1, t, t², t³} under the weight (1−t²)^((d−3)/2),
/// normalized to 1 at t = 1. Restricted to odd d, where the weight is a
/// polynomial and Gauss–Legendre integration is exact.
fn gram_schmidt_reference(d: usize) -> Vec<Vec<f64>> {
    assert!(d >= 3 && d % 2 == 1);
    let half = (d - 3) / 2;
    let (nodes, weights) = gauss_legendre(40);
    let eval = |coeffs: &[f64], t: f64| -> f64 {
        coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    };
    let inner = |p: &[f64], q: &[f64]| -> f64 {
        nodes
            .iter()
            .zip(&weights)
            .map(|(&t, &w)| w * eval(p, t) * eval(q, t) * (1.0 - t * t).powi(half as i32))
            .sum()
    };
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for k in 0..4 {
        let mut coeffs = vec![0.0; 4];
        coeffs[k] = 1.0;
        for prev in &basis {
            let proj = inner(&coeffs, prev) / inner(prev, prev);
            for (c, p) in coeffs.iter_mut().zip(prev) {
                *c -= proj * p;
            }
        }
        basis.push(coeffs);
    }
    basis
        .into_iter()
        .map(|coeffs| {
            let at_one = eval(&coeffs, 1.0);
            coeffs.into_iter().map(|c| c / at_one).collect()
        })
        .collect()
}

#[test]
fn criterion_4_oracle_equivalences() {
    // Closed-form sequence risk vs heavy Monte Carlo.
    let blocks: Vec<SequenceBlock> = (0..20)
        .map(|j| SequenceBlock {
            eigenvalue: 1.0 / (1.0 + j as f64),
            multiplicity: 1.0,
            signal_energy: 1.0 / ((1 + j) * (1 + j)) as f64,
        })
        .collect();
    let model = SequenceModel::new(blocks, 0.0, 0.05).unwrap();
    let filter = FilterSpec::new(FilterKind::Krr, 0.02).unwrap();
    let exact = model.risk_exact(&filter).unwrap();
    let mut rng = substream(2026, cell_hash("acceptance.seq.mc"), 0, StreamRole::Aux);
    let mc = model.risk_monte_carlo(&filter, 100_000, &mut rng).unwrap();
    let seq_rel = (mc - exact).abs() / exact;
    assert!(seq_rel < 0.02, "sequence MC {mc} vs exact {exact}: rel {seq_rel}");

    // Exact variance of the kernel estimator vs resampled-noise Monte Carlo.
    let kernel = KernelSpec::Rbf;
    let cell = cell_hash("acceptance.noise.mc");
    let mut anchor_rng = substream(2026, cell, 0, StreamRole::Anchors);
    let (anchors, _) = sample_anchors(16, &mut anchor_rng).unwrap();
    let spec = TargetSpec::new(1.5, 0.5, 200).unwrap();
    let target = build_target(&kernel, &spec, anchors).unwrap();
    let dataset = generate_dataset(&target, 150, 0.5, 200, 2026, cell, 0).unwrap();
    let krr = FilterSpec::new(FilterKind::Krr, 0.05).unwrap();
    let estimate = bias_variance_exact(&kernel, &krr, &dataset).unwrap();

    let noiseless =
        spectral_estimator(&kernel, &krr, &dataset.x, &dataset.f_train, &dataset.x_test).unwrap();
    let draws = 200;
    let mut samples = Vec::with_capacity(draws);
    for j in 0..draws {
        let mut noise_rng = substream(2026, cell, 1_000 + j as u64, StreamRole::Noise);
        let noisy: Array1<f64> = dataset
            .f_train
            .iter()
            .map(|&f| f + dataset.sigma * noise_rng.sample::<f64, _>(StandardNormal))
            .collect();
        let pred =
            spectral_estimator(&kernel, &krr, &dataset.x, &noisy, &dataset.x_test).unwrap();
        let v = (&pred - &noiseless).iter().map(|x| x * x).sum::<f64>() / noiseless.len() as f64;
        samples.push(v);
    }
    let mean = samples.iter().sum::<f64>() / draws as f64;
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (draws as f64 - 1.0);
    let stderr = (var / draws as f64).sqrt();
    let var_gap = (estimate.variance - mean).abs();
    assert!(
        var_gap <= 3.0 * stderr,
        "variance {} vs MC {mean} ± {stderr}",
        estimate.variance
    );

    // Recurrence-built degree polynomials vs the Gram–Schmidt reference.
    let test_points = [-0.9, -0.5, -0.3, 0.0, 0.2, 0.6, 0.95];
    let mut poly_worst: f64 = 0.0;
    for d in [3usize, 5, 9, 15] {
        let basis = GegenbauerBasis::new(d, 3).unwrap();
        let reference = gram_schmidt_reference(d);
        for (k, coeffs) in reference.iter().enumerate() {
            for &t in &test_points {
                let got = basis.eval(k, t).unwrap();
                let want = coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c);
                let diff = (got - want).abs();
                assert!(diff <= 1e-8, "degree {k}, d={d}, t={t}: {got} vs {want}");
                poly_worst = poly_worst.max(diff);
            }
        }
    }

    // The linear profile's degree-1 eigenvalue is exactly 1/d.
    let mut eig_worst: f64 = 0.0;
    for d in [3usize, 5, 10, 25, 60] {
        let mu = funk_hecke_eigenvalue(|t| t, d, 1).unwrap();
        let diff = (mu - 1.0 / d as f64).abs();
        assert!(diff <= 1e-6, "linear eigenvalue at d={d}: {mu}");
        eig_worst = eig_worst.max(diff);
    }

    pass(
        4,
        "oracle equivalences",
        &format!(
            "seq MC rel {seq_rel:.4}; variance gap {var_gap:.2e} ≤ 3·{stderr:.2e}; \
             polynomials ≤ {poly_worst:.2e}; eigenvalues ≤ {eig_worst:.2e}"
        ),
    );
}

#[test]
fn criterion_5_decomposition_identity() {
    // Measured risk splits into bias² + variance within Monte Carlo error on
    // randomized cells of varying kernel, filter, size, and regularization.
    let filters = [
        FilterKind::Krr,
        FilterKind::GradientFlow,
        FilterKind::IteratedRidge { q: 2 },
        FilterKind::GradientDescent { eta: 0.05 },
    ];
    let mut worst_ratio: f64 = 0.0;
    for i in 0..10u64 {
        let kernel = if i % 2 == 0 { KernelSpec::Rbf } else { KernelSpec::Ntk };
        let d = 8 + 3 * i as usize;
        let n = 60 + 44 * i as usize;
        let lambda = 0.2 * 0.7f64.powi(i as i32);
        let cell = cell_hash(&format!("acceptance.decomposition.{i}"));
        let mut anchor_rng = substream(2026, cell, 0, StreamRole::Anchors);
        let (anchors, _) = sample_anchors(d, &mut anchor_rng).unwrap();
        let spec = TargetSpec::new(1.5, 0.5, 150).unwrap();
        let target = build_target(&kernel, &spec, anchors).unwrap();
        let dataset = generate_dataset(&target, n, 0.5, 150, 2026, cell, 0).unwrap();
        let operator = RiskOperator::new(&kernel, &dataset).unwrap();
        let filter = FilterSpec::new(filters[i as usize % filters.len()].clone(), lambda).unwrap();
        let check = operator.decomposition_check(&filter, &dataset).unwrap();
        assert!(
            check.holds(),
            "cell {i} ({}, n={n}, d={d}): gap {} vs stderr {}",
            filter.kind().id(),
            check.gap,
            check.combined_stderr
        );
        if check.combined_stderr > 0.0 {
            worst_ratio = worst_ratio.max(check.gap.abs() / check.combined_stderr);
        }
    }
    pass(
        5,
        "decomposition identity",
        &format!("10 cells, worst |gap|/stderr = {worst_ratio:.2}"),
    );
}

#[test]
fn criterion_6_desk_scale_slopes() {
    // Reduced-scale learning curves: gradient flow should recover the
    // fully-regularized exponent −1.5 and ridge (qualification 1) its
    // saturated exponent −1.0, both within the desk tolerance 0.45.
    let plan = ExperimentPlan {
        kernel: "rbf".into(),
        filters: vec!["krr".into(), "gf".into()],
        gamma: 1.5,
        s: 1.5,
        u: Some(0.5),
        u_grid: None,
        c_lambda: harness::DEFAULT_C_LAMBDA.to_vec(),
        n_grid: (600..=2000).step_by(200).collect(),
        reps: 20,
        n_test: 1000,
        sigma: 1.0,
        seed: 2026,
        jobs: 0,
    };
    let table = harness::run_plan(&plan).unwrap();
    assert!(table.rows.iter().all(|r| r.is_ok()), "sweep produced failed rows");

    let mut fitted = Vec::new();
    for (filter, predicted) in [("krr", -1.0), ("gf", -1.5)] {
        let best = harness::select_best_clambda(&table, filter, 0.5).unwrap();
        let cells = table.mean_risk_by_n(filter, 0.5, best);
        assert_eq!(cells.len(), 8, "{filter}: expected one mean per n");
        let points: Vec<(f64, f64)> =
            cells.iter().map(|&(_, d, mean, _)| (d as f64, mean)).collect();
        let fit = harness::fit_slope(&points).unwrap().with_c_lambda(best);
        // Sanity: risk falls over the grid. Checked statistically, not
        // per-pair — cells at different n draw independent data with a few
        // percent of Monte Carlo noise on 20 reps, so occasional single-step
        // upticks are expected even under a clean power law. The endpoint
        // drop and a significantly negative fitted trend must be unambiguous.
        assert!(
            cells.last().unwrap().2 < cells.first().unwrap().2,
            "{filter}: mean risk did not fall across the grid"
        );
        assert!(
            fit.slope + 3.0 * fit.stderr < 0.0,
            "{filter}: trend {} ± {} not significantly negative",
            fit.slope,
            fit.stderr
        );
        let kind = FilterKind::parse(filter).unwrap();
        let q = plan.rate_query(&kind, 0.5).unwrap();
        let cmp = harness::compare_to_theory(&fit, &q, harness::SLOPE_TOL_DESK).unwrap();
        assert!((cmp.predicted - predicted).abs() <= EXACT);
        assert!(
            cmp.pass,
            "{filter}: fitted {} vs predicted {predicted} (C_λ = {best})",
            fit.slope
        );
        fitted.push(format!("{filter} {:.3} vs {predicted} (C_λ {best})", fit.slope));
    }
    pass(6, "desk-scale slopes", &fitted.join("; "));
}

#[test]
fn criterion_7_spectral_block_diagnostic() {
    // At d=100, n=1000 the post-block bulk of the Gram spectrum is
    // concentrated (relative standard deviation < 0.5) and sits within 20%
    // of its predicted level. The range-based spread is reported too but is
    // edge-dominated at this scale (the unresolved degree-2 mass widens the
    // extremes to ≈1.2× the mean — cross-checked against an independent
    // dense eigensolver) and only contracts at larger d.
    let kernel = KernelSpec::Rbf;
    let mut rng = substream(2026, cell_hash("acceptance.diag"), 0, StreamRole::TrainPoints);
    let points = sample_sphere(1000, 100, &mut rng).unwrap();
    let gram = kernel.gram(&points);
    let report = spectral_block_report(&kernel, &gram, 100, 1).unwrap();
    assert!(report.bulk_cv < 0.5, "bulk relative deviation {}", report.bulk_cv);
    assert!(report.bulk_spread < 2.0, "bulk range spread {}", report.bulk_spread);
    let rel = (report.kappa1 - report.bulk_mean).abs() / report.bulk_mean;
    assert!(rel <= 0.2, "bulk level prediction off by {rel}");
    pass(
        7,
        "spectral block diagnostic",
        &format!(
            "relative deviation {:.3}, range spread {:.3}, level gap {:.4}",
            report.bulk_cv, report.bulk_spread, rel
        ),
    );
}

#[test]
fn criterion_8_byte_determinism() {
    // The sweep binary is a pure function of (plan, seed): identical bytes
    // across runs and across worker counts.
    let dir = tempfile::tempdir().unwrap();
    let plan_path = dir.path().join("plan.json");
    std::fs::write(
        &plan_path,
        r#"{
            "kernel": "rbf",
            "filters": ["krr", "gf"],
            "gamma": 1.5,
            "s": 1.5,
            "u": 0.5,
            "c_lambda": [0.5, 1.0],
            "n_grid": [80, 120],
            "reps": 3,
            "n_test": 60,
            "sigma": 0.5,
            "seed": 17
        }"#,
    )
    .unwrap();
    let run = |args: &[&str], out: &str| -> Vec<u8> {
        let out_path = dir.path().join(out);
        let status = Command::new(env!("CARGO_BIN_EXE_curvelab"))
            .arg("sweep")
            .arg("--config")
            .arg(&plan_path)
            .arg("--out")
            .arg(&out_path)
            .args(args)
            .status()
            .expect("binary runs");
        assert!(status.success(), "sweep exited with {status:?}");
        std::fs::read(&out_path).unwrap()
    };
    let first = run(&[], "a.csv");
    let second = run(&[], "b.csv");
    assert_eq!(first, second, "same seed must reproduce identical bytes");
    let serial = run(&["--jobs", "1"], "c.csv");
    let parallel = run(&["--jobs", "8"], "d.csv");
    assert_eq!(serial, parallel, "worker count must not change the output");
    assert_eq!(first, serial, "explicit --jobs must not change the output");
    pass(
        8,
        "byte determinism",
        &format!("{} bytes identical across runs and -j1/-j8", first.len()),
    );
}
