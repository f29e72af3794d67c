//! Benchmarks for the numerical kernels on the sweep hot path.
//!
//! A single replicate of the harness costs one Gram assembly, one symmetric
//! eigendecomposition, and one filter evaluation per (filter, λ) pair; the
//! closed-form side costs one rational rate computation per query. Each of
//! those stages is benchmarked in isolation at desk-like sizes so regressions
//! show up where they happen, not just in an end-to-end blur.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use curvelab::filter::FilterKind;
use curvelab::risk::{RiskOperator, SequenceModel};
use curvelab::rng::{cell_hash, substream, StreamRole};
use curvelab::sphere::{funk_hecke_eigenvalue, sample_sphere};
use curvelab::target::{build_target, generate_dataset, sample_anchors, Dataset};
use curvelab::{FilterSpec, GegenbauerBasis, KernelSpec, RateQuery, TargetSpec};

/// Fixed-seed dataset at a desk-scale size: d = 40, n = 300, s = 1.5.
fn bench_dataset(n: usize, d: usize) -> (KernelSpec, Dataset) {
    let kernel = KernelSpec::Rbf;
    let spec = TargetSpec::new(1.5, 0.5, 200).unwrap();
    let cell = cell_hash(&format!("bench|d={d}|n={n}"));
    let mut anchor_stream = substream(7, cell, 0, StreamRole::Anchors);
    let (anchors, _) = sample_anchors(d, &mut anchor_stream).unwrap();
    let target = build_target(&kernel, &spec, anchors).unwrap();
    let dataset = generate_dataset(&target, n, spec.sigma, spec.n_test, 7, cell, 0).unwrap();
    (kernel, dataset)
}

fn sphere_benches(c: &mut Criterion) {
    let mut group = c.benchmark_group("sphere");

    let basis = GegenbauerBasis::new(50, 8).unwrap();
    let grid: Vec<f64> = (0..64).map(|i| -1.0 + 2.0 * (i as f64) / 63.0).collect();
    group.bench_function("gegenbauer_eval_all_d50_k8_64pts", |b| {
        b.iter(|| {
            for &t in &grid {
                black_box(basis.eval_all(black_box(t)).unwrap());
            }
        })
    });

    group.bench_function("sample_sphere_n200_d50", |b| {
        let mut rng = substream(7, cell_hash("bench|sphere"), 0, StreamRole::TrainPoints);
        b.iter(|| black_box(sample_sphere(200, 50, &mut rng).unwrap()))
    });

    group.bench_function("funk_hecke_eigenvalue_rbf_d60_k3", |b| {
        b.iter(|| {
            black_box(funk_hecke_eigenvalue(|t| (t - 1.0).exp(), black_box(60), 3).unwrap())
        })
    });

    group.finish();
}

fn kernel_benches(c: &mut Criterion) {
    let mut group = c.benchmark_group("gram");
    let mut rng = substream(7, cell_hash("bench|gram"), 0, StreamRole::TrainPoints);
    let points = sample_sphere(300, 40, &mut rng).unwrap();
    for kernel in [KernelSpec::Rbf, KernelSpec::Ntk] {
        group.bench_with_input(
            BenchmarkId::new("n300_d40", kernel.id()),
            &kernel,
            |b, kernel| b.iter(|| black_box(kernel.gram(black_box(&points)))),
        );
    }
    group.finish();
}

fn risk_benches(c: &mut Criterion) {
    let mut group = c.benchmark_group("risk");
    let (kernel, dataset) = bench_dataset(300, 40);

    // The dominant per-replicate cost: Gram assembly + dsyevd.
    group.bench_function("operator_new_n300_d40", |b| {
        b.iter(|| black_box(RiskOperator::new(black_box(&kernel), &dataset).unwrap()))
    });

    // Marginal cost of one more (filter, λ) pair on a cached decomposition.
    let operator = RiskOperator::new(&kernel, &dataset).unwrap();
    for (name, kind) in [
        ("krr", FilterKind::Krr),
        ("gf", FilterKind::GradientFlow),
        ("it4", FilterKind::IteratedRidge { q: 4 }),
        ("gd", FilterKind::GradientDescent { eta: 0.05 }),
    ] {
        let filter = FilterSpec::new(kind, 0.1).unwrap();
        group.bench_with_input(BenchmarkId::new("evaluate_n300_d40", name), &filter, |b, f| {
            b.iter(|| black_box(operator.evaluate(black_box(f), &dataset).unwrap()))
        });
    }

    // Closed-form sequence risk over the spherical spectrum of the kernel.
    let energies: Vec<f64> = {
        let structure = kernel.eigen_structure(80, 12).unwrap();
        structure.eigenvalues.iter().map(|mu| mu.powf(1.5)).collect()
    };
    let model = SequenceModel::from_kernel_spectrum(&kernel, 80, 12, &energies, 1e-3).unwrap();
    let filter = FilterSpec::new(FilterKind::Krr, 0.05).unwrap();
    group.bench_function("sequence_risk_exact_d80_k12", |b| {
        b.iter(|| black_box(model.risk_exact(black_box(&filter)).unwrap()))
    });

    group.finish();
}

fn theory_benches(c: &mut Criterion) {
    let mut group = c.benchmark_group("theory");
    group.bench_function("learning_curve_exponent", |b| {
        b.iter(|| {
            let query =
                RateQuery::from_f64(black_box(1.5), black_box(2.7), black_box(2.0), 0.35).unwrap();
            black_box(curvelab::theory::learning_curve_exponent(&query).unwrap())
        })
    });
    group.finish();
}

criterion_group!(benches, sphere_benches, kernel_benches, risk_benches, theory_benches);
criterion_main!(benches);
