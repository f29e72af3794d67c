//! Excess-risk measurement: Monte Carlo estimates over a test set, the exact
//! conditional bias/variance split for linear spectral estimators, the
//! diagonal sequence-model risk in closed form, and eigenvalue-block
//! diagnostics of kernel matrices.
//!
//! The central object is [`RiskOperator`]: it performs the one expensive
//! eigendecomposition of `K/n` for a dataset and rotates labels and
//! cross-kernel columns into the eigenbasis once, after which every filter
//! and every regularization level on a grid costs only O(n·n_test). Because
//! the estimator is linear in the labels, its noise variance conditional on
//! the design is a deterministic functional of that decomposition — no noise
//! resampling is needed to measure it.

use ndarray::{Array1, Array2};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use thiserror::Error;

use crate::filter::{FilterError, FilterSpec, SpectralDecomposition};
use crate::kernel::{KernelError, KernelSpec};
use crate::sphere::{multiplicity, EigenStructure, SphereError};
use crate::target::Dataset;

#[derive(Debug, Error)]
pub enum RiskError {
    #[error("test split is empty")]
    EmptyTestSet,
    #[error("prediction count {got} does not match test-set size {expected}")]
    PredictionMismatch { expected: usize, got: usize },
    #[error(
        "sequence risk at lambda = 0 diverges: every mode contributes a full \
         noise quantum and the mode list is unbounded"
    )]
    InterpolationDiverges,
    #[error("sequence model needs at least one block")]
    EmptyModel,
    #[error("sequence block {index} is invalid: {reason}")]
    BadBlock { index: usize, reason: String },
    #[error("noise level must be finite and >= 0, got {value}")]
    BadNoiseLevel { value: f64 },
    #[error("block report needs the degree blocks to fit inside n = {n}; degrees up to {ell} span {span} modes")]
    BlocksExceedSample { n: usize, ell: usize, span: u128 },
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Sphere(#[from] SphereError),
}

/// A Monte Carlo excess-risk estimate: test-set mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McRisk {
    pub excess_risk: f64,
    pub mc_stderr: f64,
}

/// Mean of (prediction − truth)² over the test set, with the standard error
/// of that mean.
pub fn excess_risk_mc(dataset: &Dataset, predictions: &Array1<f64>) -> Result<McRisk, RiskError> {
    mc_mean_of_squares(&dataset.f_test, predictions)
}

fn mc_mean_of_squares(truth: &Array1<f64>, predictions: &Array1<f64>) -> Result<McRisk, RiskError> {
    let m = truth.len();
    if m == 0 {
        return Err(RiskError::EmptyTestSet);
    }
    if predictions.len() != m {
        return Err(RiskError::PredictionMismatch { expected: m, got: predictions.len() });
    }
    let sq: Vec<f64> = truth
        .iter()
        .zip(predictions.iter())
        .map(|(t, p)| (p - t) * (p - t))
        .collect();
    let mean = sq.iter().sum::<f64>() / m as f64;
    let var = if m > 1 {
        sq.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m as f64 - 1.0)
    } else {
        0.0
    };
    Ok(McRisk { excess_risk: mean, mc_stderr: (var / m as f64).sqrt() })
}

/// One fully attributed risk measurement for a (dataset, kernel, filter)
/// triple: the Monte Carlo excess risk of the noisy fit plus the exact
/// conditional bias² and variance components.
#[derive(Debug, Clone)]
pub struct RiskEstimate {
    /// Test-set mean of (f̂(x) − f★(x))² for the actual noisy fit.
    pub excess_risk: f64,
    /// Test-set mean of (f̂₀(x) − f★(x))², where f̂₀ is fit on noiseless labels.
    pub bias_sq: f64,
    /// σ² × test-set mean of ‖a(x)‖², the exact conditional noise variance.
    pub variance: f64,
    /// Standard error of the excess-risk test mean.
    pub mc_stderr: f64,
    pub n: usize,
    pub d: usize,
    pub lambda: f64,
    pub filter_id: String,
    pub kernel_id: String,
    pub rep: u64,
    pub seed: u64,
}

/// How far the measured risk sits from its exact decomposition, with an
/// honest error bar. For one noise draw the gap
/// `risk − bias² − variance` fluctuates both with the test sample and with
/// the noise; the noise part has a closed form for Gaussian noise
/// (`4σ²‖v‖² + 2σ⁴‖W‖²_F` with `v = avg_x b(x)a(x)`, `W = avg_x a(x)a(x)ᵀ`),
/// so the combined standard error here is exact up to the χ²-vs-normal shape
/// of the quadratic term.
#[derive(Debug, Clone, Copy)]
pub struct DecompositionCheck {
    pub excess_risk: f64,
    pub bias_sq: f64,
    pub variance: f64,
    pub gap: f64,
    /// Test-sampling and noise-draw standard errors, combined in quadrature.
    pub combined_stderr: f64,
}

impl DecompositionCheck {
    /// Whether the identity holds at the 3σ level.
    pub fn holds(&self) -> bool {
        self.gap.abs() <= 3.0 * self.combined_stderr
    }
}

/// Filter-independent decomposition of one experiment cell: eigenbasis of
/// `K/n` plus labels and cross-kernel columns rotated into it. Build once per
/// (dataset, kernel); evaluate any number of filters against it.
#[derive(Debug)]
pub struct RiskOperator {
    decomp: SpectralDecomposition,
    /// Uᵀ k(X, x_test): column j is the rotated cross-kernel at test point j.
    rotated_cross: Array2<f64>,
    /// Uᵀ Y (noisy labels).
    rotated_y: Array1<f64>,
    /// Uᵀ f★(X) (noiseless labels).
    rotated_f: Array1<f64>,
    kernel_id: String,
}

impl RiskOperator {
    pub fn new(kernel: &KernelSpec, dataset: &Dataset) -> Result<Self, RiskError> {
        let n = dataset.x.n();
        let mut scaled = kernel.gram(&dataset.x).matrix;
        scaled.mapv_inplace(|v| v / n as f64);
        let decomp = SpectralDecomposition::new(&scaled)?;
        let cross = kernel.cross(&dataset.x_test, &dataset.x)?;
        let u_t = decomp.eigenvectors.t();
        let rotated_cross = u_t.dot(&cross.t());
        let rotated_y = u_t.dot(&dataset.y);
        let rotated_f = u_t.dot(&dataset.f_train);
        Ok(Self { decomp, rotated_cross, rotated_y, rotated_f, kernel_id: kernel.id() })
    }

    pub fn decomposition(&self) -> &SpectralDecomposition {
        &self.decomp
    }

    fn n(&self) -> usize {
        self.rotated_y.len()
    }

    fn n_test(&self) -> usize {
        self.rotated_cross.ncols()
    }

    /// Predictions at the test points from eigencoefficients `coeff`
    /// (already multiplied by φ values): `(1/n)·rotated_crossᵀ·coeff`.
    fn predict(&self, coeff: &Array1<f64>) -> Array1<f64> {
        let mut out = self.rotated_cross.t().dot(coeff);
        out.mapv_inplace(|v| v / self.n() as f64);
        out
    }

    /// Test predictions of the noisy fit under `filter`.
    pub fn predictions(&self, filter: &FilterSpec) -> Result<Array1<f64>, RiskError> {
        let phis = self.decomp.filtered_eigenvalues(filter)?;
        Ok(self.predict(&(&phis * &self.rotated_y)))
    }

    /// Full risk measurement for one filter: Monte Carlo excess risk of the
    /// noisy fit, exact conditional bias², and exact conditional variance.
    pub fn evaluate(&self, filter: &FilterSpec, dataset: &Dataset) -> Result<RiskEstimate, RiskError> {
        let phis = self.decomp.filtered_eigenvalues(filter)?;
        let noisy = self.predict(&(&phis * &self.rotated_y));
        let noiseless = self.predict(&(&phis * &self.rotated_f));

        let mc = mc_mean_of_squares(&dataset.f_test, &noisy)?;
        let bias_sq = noiseless
            .iter()
            .zip(dataset.f_test.iter())
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>()
            / self.n_test() as f64;

        // ‖a(x_j)‖² = (1/n²) Σ_i (φ_i · rc[i,j])²; the eigenbasis rotation is
        // orthogonal so norms carry over.
        let n_sq = (self.n() * self.n()) as f64;
        let mut a_norm_mean = 0.0;
        for (i, phi) in phis.iter().enumerate() {
            let phi_sq = phi * phi;
            for j in 0..self.n_test() {
                let rc = self.rotated_cross[[i, j]];
                a_norm_mean += phi_sq * rc * rc;
            }
        }
        a_norm_mean /= n_sq * self.n_test() as f64;
        let variance = dataset.sigma * dataset.sigma * a_norm_mean;

        Ok(RiskEstimate {
            excess_risk: mc.excess_risk,
            bias_sq,
            variance,
            mc_stderr: mc.mc_stderr,
            n: self.n(),
            d: dataset.x.dimension(),
            lambda: filter.lambda(),
            filter_id: filter.kind().id(),
            kernel_id: self.kernel_id.clone(),
            rep: dataset.seed.rep,
            seed: crate::rng::replicate_seed_id(
                dataset.seed.master,
                dataset.seed.cell,
                dataset.seed.rep,
            ),
        })
    }

    /// Measure the decomposition identity `risk = bias² + variance` on this
    /// cell, returning the observed gap together with its combined (test
    /// sampling + noise draw) standard error.
    pub fn decomposition_check(
        &self,
        filter: &FilterSpec,
        dataset: &Dataset,
    ) -> Result<DecompositionCheck, RiskError> {
        let estimate = self.evaluate(filter, dataset)?;
        let phis = self.decomp.filtered_eigenvalues(filter)?;
        let n = self.n() as f64;
        let m = self.n_test();
        let sigma = dataset.sigma;

        let noisy = self.predict(&(&phis * &self.rotated_y));
        let noiseless = self.predict(&(&phis * &self.rotated_f));

        // a_eig[:, j] = (1/n)·(φ ∘ rc[:, j]): the noise-to-prediction map.
        let mut a_eig = self.rotated_cross.clone();
        for (i, phi) in phis.iter().enumerate() {
            for j in 0..m {
                a_eig[[i, j]] *= phi / n;
            }
        }

        // Per-test-point deviation from the pointwise identity.
        let mut delta = Vec::with_capacity(m);
        let mut b = Array1::zeros(m);
        for j in 0..m {
            let truth = dataset.f_test[j];
            let bj = noiseless[j] - truth;
            b[j] = bj;
            let hj = (noisy[j] - truth) * (noisy[j] - truth);
            let a_norm_sq: f64 = a_eig.column(j).iter().map(|v| v * v).sum();
            delta.push(hj - bj * bj - sigma * sigma * a_norm_sq);
        }
        let delta_mean = delta.iter().sum::<f64>() / m as f64;
        let delta_var = if m > 1 {
            delta.iter().map(|v| (v - delta_mean) * (v - delta_mean)).sum::<f64>()
                / (m as f64 - 1.0)
        } else {
            0.0
        };
        let test_se_sq = delta_var / m as f64;

        // Noise-draw variance of the gap: 4σ²‖v‖² + 2σ⁴‖W‖²_F with
        // v = (1/m)·A·b and W = (1/m)·A·Aᵀ.
        let v = a_eig.dot(&b).mapv(|x| x / m as f64);
        let v_norm_sq = v.iter().map(|x| x * x).sum::<f64>();
        let w = a_eig.dot(&a_eig.t());
        let w_fro_sq =
            w.iter().map(|x| x * x).sum::<f64>() / (m as f64 * m as f64);
        let noise_se_sq =
            4.0 * sigma * sigma * v_norm_sq + 2.0 * sigma.powi(4) * w_fro_sq;

        Ok(DecompositionCheck {
            excess_risk: estimate.excess_risk,
            bias_sq: estimate.bias_sq,
            variance: estimate.variance,
            gap: estimate.excess_risk - estimate.bias_sq - estimate.variance,
            combined_stderr: (test_se_sq + noise_se_sq).sqrt(),
        })
    }
}

/// One-shot convenience wrapper: decompose, evaluate one filter, done.
pub fn bias_variance_exact(
    kernel: &KernelSpec,
    filter: &FilterSpec,
    dataset: &Dataset,
) -> Result<RiskEstimate, RiskError> {
    RiskOperator::new(kernel, dataset)?.evaluate(filter, dataset)
}

/// A block of equal eigenvalues in the diagonal sequence model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SequenceBlock {
    pub eigenvalue: f64,
    /// Number of modes sharing the eigenvalue (f64 so astronomically large
    /// spherical-harmonic multiplicities stay representable).
    pub multiplicity: f64,
    /// Total squared signal across the block's modes.
    pub signal_energy: f64,
}

/// Diagonal observation model `z_j = f_j + ξ_j`, `ξ_j ~ N(0, σ²/n)`, filtered
/// per mode as `f̂_j = λ_j φ_λ(λ_j) z_j`. Blocks aggregate modes with equal
/// eigenvalue; its risk depends on a block's signal only through the total
/// energy, so nothing is lost.
#[derive(Debug, Clone)]
pub struct SequenceModel {
    blocks: Vec<SequenceBlock>,
    /// Eigenvalue mass beyond the truncation degree, recorded for honesty.
    pub truncated_mass: f64,
    /// σ²/n.
    pub noise_over_n: f64,
}

impl SequenceModel {
    /// Blocks are sorted to nonincreasing eigenvalue order on construction.
    pub fn new(
        mut blocks: Vec<SequenceBlock>,
        truncated_mass: f64,
        noise_over_n: f64,
    ) -> Result<Self, RiskError> {
        if blocks.is_empty() {
            return Err(RiskError::EmptyModel);
        }
        if !(noise_over_n >= 0.0 && noise_over_n.is_finite()) {
            return Err(RiskError::BadNoiseLevel { value: noise_over_n });
        }
        for (index, b) in blocks.iter().enumerate() {
            let bad = |reason: &str| RiskError::BadBlock { index, reason: reason.to_owned() };
            if !(b.eigenvalue >= 0.0 && b.eigenvalue.is_finite()) {
                return Err(bad(&format!("eigenvalue {}", b.eigenvalue)));
            }
            if !(b.multiplicity >= 1.0 && b.multiplicity.is_finite()) {
                return Err(bad(&format!("multiplicity {}", b.multiplicity)));
            }
            if !(b.signal_energy >= 0.0 && b.signal_energy.is_finite()) {
                return Err(bad(&format!("signal energy {}", b.signal_energy)));
            }
        }
        blocks.sort_by(|a, b| b.eigenvalue.total_cmp(&a.eigenvalue));
        Ok(Self { blocks, truncated_mass, noise_over_n })
    }

    /// Build the model from a kernel's spherical spectrum: degree-k blocks
    /// with eigenvalue μ_k and multiplicity N(d,k), carrying the given
    /// per-degree signal energies (shorter lists are zero-padded).
    pub fn from_kernel_spectrum(
        kernel: &KernelSpec,
        d: usize,
        k_max: usize,
        signal_energies: &[f64],
        noise_over_n: f64,
    ) -> Result<Self, RiskError> {
        let structure = kernel.eigen_structure(d, k_max)?;
        Self::from_eigen_structure(&structure, signal_energies, noise_over_n)
    }

    /// As [`Self::from_kernel_spectrum`] but from an already computed
    /// spectrum; also the entry point for idealized μ_k profiles.
    pub fn from_eigen_structure(
        structure: &EigenStructure,
        signal_energies: &[f64],
        noise_over_n: f64,
    ) -> Result<Self, RiskError> {
        let mut blocks = Vec::with_capacity(structure.eigenvalues.len());
        for (k, &mu) in structure.eigenvalues.iter().enumerate() {
            blocks.push(SequenceBlock {
                eigenvalue: mu,
                multiplicity: structure.multiplicities[k] as f64,
                signal_energy: signal_energies.get(k).copied().unwrap_or(0.0),
            });
        }
        Self::new(blocks, structure.tail_mass, noise_over_n)
    }

    /// Clean power-law spectrum μ_k = d^{−k} with exact multiplicities — the
    /// idealized profile for rate checks where only Θ-scaling matters.
    pub fn idealized(
        d: usize,
        k_max: usize,
        signal_energies: &[f64],
        noise_over_n: f64,
    ) -> Result<Self, RiskError> {
        let mut blocks = Vec::with_capacity(k_max + 1);
        for k in 0..=k_max {
            blocks.push(SequenceBlock {
                eigenvalue: (d as f64).powi(-(k as i32)),
                multiplicity: multiplicity(d, k)? as f64,
                signal_energy: signal_energies.get(k).copied().unwrap_or(0.0),
            });
        }
        Self::new(blocks, 0.0, noise_over_n)
    }

    pub fn blocks(&self) -> &[SequenceBlock] {
        &self.blocks
    }

    /// Exact risk `σ²/n Σ_j [λ_j φ_λ(λ_j)]² + Σ_j [ψ_λ(λ_j) f_j]²`.
    ///
    /// Refuses λ = 0: ridgeless filtering sets every noise factor to 1, and
    /// the mode list is a truncation of an infinite one, so the truncated sum
    /// would silently misrepresent a divergent quantity.
    pub fn risk_exact(&self, filter: &FilterSpec) -> Result<f64, RiskError> {
        if filter.lambda() == 0.0 {
            return Err(RiskError::InterpolationDiverges);
        }
        let mut noise_sum = 0.0;
        let mut bias_sum = 0.0;
        for b in &self.blocks {
            let z = b.eigenvalue;
            let (zphi, psi) = if z > 0.0 {
                (z * filter.phi(z)?, filter.psi(z)?)
            } else {
                // A null mode passes no noise and keeps all its signal.
                (0.0, 1.0)
            };
            noise_sum += b.multiplicity * zphi * zphi;
            bias_sum += psi * psi * b.signal_energy;
        }
        Ok(self.noise_over_n * noise_sum + bias_sum)
    }

    /// Monte Carlo reference for [`Self::risk_exact`]: simulates the noise
    /// draws outright and averages Σ_j (f̂_j − f_j)². A block's signal can be
    /// rotated onto one coordinate without changing the distribution, so each
    /// block costs one normal plus one χ² draw per sample regardless of its
    /// multiplicity.
    pub fn risk_monte_carlo(
        &self,
        filter: &FilterSpec,
        draws: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64, RiskError> {
        if filter.lambda() == 0.0 {
            return Err(RiskError::InterpolationDiverges);
        }
        let noise_sd = self.noise_over_n.sqrt();
        struct BlockDraw {
            zphi: f64,
            psi: f64,
            signal: f64,
            rest: Option<ChiSquared<f64>>,
        }
        let mut prepared = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let z = b.eigenvalue;
            let (zphi, psi) = if z > 0.0 {
                (z * filter.phi(z)?, filter.psi(z)?)
            } else {
                (0.0, 1.0)
            };
            let rest = if b.multiplicity > 1.0 {
                Some(ChiSquared::new(b.multiplicity - 1.0).expect("dof > 0"))
            } else {
                None
            };
            prepared.push(BlockDraw { zphi, psi, signal: b.signal_energy.sqrt(), rest });
        }
        let mut total = 0.0;
        for _ in 0..draws {
            let mut risk = 0.0;
            for p in &prepared {
                let g: f64 = StandardNormal.sample(rng);
                let aligned = p.psi * p.signal - p.zphi * noise_sd * g;
                risk += aligned * aligned;
                if let Some(chi) = &p.rest {
                    risk += p.zphi * p.zphi * self.noise_over_n * chi.sample(rng);
                }
            }
            total += risk;
        }
        Ok(total / draws as f64)
    }
}

/// Observed-vs-predicted structure of a kernel matrix's spectrum: degree
/// blocks on top, a concentrated bulk below.
#[derive(Debug, Clone)]
pub struct BlockReport {
    /// Per degree k ≤ ℓ: (predicted n·μ_k, observed block mean).
    pub degree_blocks: Vec<(f64, f64)>,
    /// Mean of the bulk (post-block) eigenvalues.
    pub bulk_mean: f64,
    /// (max − min)/mean over the bulk. Edge-sensitive: partially resolved
    /// degrees just past ℓ widen the extremes long before the interior
    /// moves, so at moderate scale this sits well above [`Self::bulk_cv`].
    pub bulk_spread: f64,
    /// Sample standard deviation over mean of the bulk — the concentration
    /// statistic proper.
    pub bulk_cv: f64,
    /// Predicted bulk level Σ_{k>ℓ} μ_k N(d,k) plus quadrature tail.
    pub kappa1: f64,
    /// |bulk_mean − κ₁| / κ₁.
    pub kappa1_rel_gap: f64,
    /// Smallest eigenvalue of block k over largest of block k+1 (last entry:
    /// block ℓ over bulk max) — how cleanly the blocks separate.
    pub gap_ratios: Vec<f64>,
}

/// Partition the spectrum of an (unnormalized) Gram matrix into the
/// predicted degree blocks and bulk. Diagnostic only: thresholds live with
/// the caller.
pub fn spectral_block_report(
    kernel: &KernelSpec,
    gram: &crate::kernel::GramMatrix,
    d: usize,
    ell: usize,
) -> Result<BlockReport, RiskError> {
    let n = gram.n();
    let mut scaled = gram.matrix.clone();
    scaled.mapv_inplace(|v| v / n as f64);
    let decomp = SpectralDecomposition::new(&scaled)?;
    // Back to the unnormalized scale; order is descending already.
    let eigs: Vec<f64> = decomp.eigenvalues.iter().map(|z| z * n as f64).collect();

    let structure = kernel.eigen_structure(d, ell)?;
    let mut span: u128 = 0;
    let mut sizes = Vec::with_capacity(ell + 1);
    for k in 0..=ell {
        let m = structure.multiplicities[k];
        span += m;
        sizes.push(m as usize);
    }
    if span >= n as u128 {
        return Err(RiskError::BlocksExceedSample { n, ell, span });
    }

    let mut degree_blocks = Vec::with_capacity(ell + 1);
    let mut cursor = 0usize;
    let mut gap_ratios = Vec::with_capacity(ell + 1);
    for (k, &size) in sizes.iter().enumerate() {
        let block = &eigs[cursor..cursor + size];
        let observed = block.iter().sum::<f64>() / size as f64;
        let predicted = n as f64 * structure.eigenvalues[k];
        degree_blocks.push((predicted, observed));
        let next_top = eigs[cursor + size];
        gap_ratios.push(block[size - 1] / next_top);
        cursor += size;
    }

    let bulk = &eigs[cursor..];
    let bulk_mean = bulk.iter().sum::<f64>() / bulk.len() as f64;
    let bulk_max = bulk[0];
    let bulk_min = *bulk.last().expect("bulk nonempty");
    let bulk_cv = if bulk.len() > 1 {
        let var = bulk.iter().map(|v| (v - bulk_mean).powi(2)).sum::<f64>()
            / (bulk.len() as f64 - 1.0);
        var.sqrt() / bulk_mean
    } else {
        0.0
    };
    let kappa1 = structure.bulk_level(ell);
    Ok(BlockReport {
        degree_blocks,
        bulk_mean,
        bulk_spread: (bulk_max - bulk_min) / bulk_mean,
        bulk_cv,
        kappa1,
        kappa1_rel_gap: (bulk_mean - kappa1).abs() / kappa1,
        gap_ratios,
    })
}
