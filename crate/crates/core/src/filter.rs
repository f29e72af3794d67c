//! Analytic spectral filters and matrix functions of kernel matrices.
//!
//! A filter is a family `φ_λ: (0, K_max] → ℝ` indexed by a regularization
//! level `λ`; the fitted function is `f̂_λ(·) = (1/n) 𝒦(·, X) φ_λ(K/n) Y`.
//! Four classical members are implemented, each with its residual
//! `ψ_λ(z) = 1 − z·φ_λ(z)` and qualification (the largest polynomial order of
//! regularity the filter can exploit):
//!
//! | variant            | φ_λ(z)                      | ψ_λ(z)              | qualification |
//! |--------------------|-----------------------------|---------------------|---------------|
//! | ridge (`krr`)      | 1/(z+λ)                     | λ/(z+λ)             | 1             |
//! | gradient flow (`gf`)| (1−e^{−z/λ})/z             | e^{−z/λ}            | ∞             |
//! | iterated ridge (`it:q`)| (1−(λ/(z+λ))^q)/z       | (λ/(z+λ))^q         | q             |
//! | gradient descent (`gd:η`)| (1−(1−ηz)^t)/z, t=1/(ηλ) | (1−ηz)^t       | ∞             |
//!
//! Matrix application goes through one symmetric eigendecomposition of `K/n`
//! per (point set, kernel) — the decomposition is the expensive step and is
//! reused across every λ on the grid: `φ_λ(UDUᵀ) = U φ_λ(D) Uᵀ`.
//!
//! Ridgeless interpolation (λ = 0) is the pseudo-inverse limit and exists for
//! the ridge shape only.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, UPLO};
use thiserror::Error;

use crate::kernel::{KernelError, KernelSpec};
use crate::sphere::SpherePointSet;

/// Relative floor under which an eigenvalue of `K/n` counts as zero.
const NULL_SPACE_REL_THRESHOLD: f64 = 1e-10;
/// Negative eigenvalues above this (relative) floor are roundoff and are
/// clamped; anything below is treated as a genuine PSD violation.
const PSD_VIOLATION_REL_FLOOR: f64 = -1e-8;
/// Fraction of near-null spectrum beyond which ridgeless interpolation is
/// refused as singular.
const SINGULAR_INTERPOLATION_FRACTION: f64 = 0.01;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("filter argument z={z} must be positive")]
    NonPositiveArgument { z: f64 },
    #[error("regularization must be a finite nonnegative number, got {lambda}")]
    LambdaOutOfRange { lambda: f64 },
    #[error("ridgeless interpolation (lambda = 0) exists only for the ridge filter, not {kind}")]
    InterpolationRequiresRidge { kind: String },
    #[error("iterated ridge needs q >= 1")]
    ZeroIterations,
    #[error("gradient-descent step eta={eta} must be positive and finite")]
    StepNotPositive { eta: f64 },
    #[error("gradient-descent step eta={eta} is unstable at eigenvalue z={z} (eta*z >= 1)")]
    StepSizeUnstable { eta: f64, z: f64 },
    #[error("matrix is not symmetric: max |K - K'| = {max_gap:.3e}")]
    AsymmetricInput { max_gap: f64 },
    #[error(
        "eigenvalue {eigenvalue:.6e} violates positive semidefiniteness \
         (floor {floor:.6e}); the input matrix is not a kernel matrix"
    )]
    NegativeSpectrum { eigenvalue: f64, floor: f64 },
    #[error(
        "singular interpolation: {below} of {n} eigenvalues sit below the null threshold; \
         ridgeless inversion would be meaningless"
    )]
    SingularInterpolation { below: usize, n: usize },
    #[error("vector length {got} does not match decomposition size {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unrecognized filter id {id:?} (expected \"krr\", \"gf\", \"it:<q>\", or \"gd:<eta>\")")]
    UnknownFilterId { id: String },
    #[error("eigendecomposition backend failure: {0}")]
    Backend(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Which analytic filter family, with its fixed (non-λ) parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum FilterKind {
    Krr,
    GradientFlow,
    IteratedRidge { q: u32 },
    GradientDescent { eta: f64 },
}

impl FilterKind {
    /// Parse a filter config id: `krr`, `gf`, `it:<q>`, `gd:<eta>`.
    pub fn parse(id: &str) -> Result<Self, FilterError> {
        let unknown = || FilterError::UnknownFilterId { id: id.to_owned() };
        match id {
            "krr" => Ok(Self::Krr),
            "gf" => Ok(Self::GradientFlow),
            _ => {
                if let Some(q) = id.strip_prefix("it:") {
                    let q: u32 = q.parse().map_err(|_| unknown())?;
                    if q == 0 {
                        return Err(FilterError::ZeroIterations);
                    }
                    Ok(Self::IteratedRidge { q })
                } else if let Some(eta) = id.strip_prefix("gd:") {
                    let eta: f64 = eta.parse().map_err(|_| unknown())?;
                    if !(eta > 0.0 && eta.is_finite()) {
                        return Err(FilterError::StepNotPositive { eta });
                    }
                    Ok(Self::GradientDescent { eta })
                } else {
                    Err(unknown())
                }
            }
        }
    }

    /// Config id; `parse ∘ id` is the identity.
    pub fn id(&self) -> String {
        match self {
            Self::Krr => "krr".to_owned(),
            Self::GradientFlow => "gf".to_owned(),
            Self::IteratedRidge { q } => format!("it:{q}"),
            Self::GradientDescent { eta } => format!("gd:{eta}"),
        }
    }

    /// Qualification τ: the filter exploits source smoothness only up to this
    /// order. `None` means unbounded (τ = ∞).
    pub fn qualification(&self) -> Option<u32> {
        match self {
            Self::Krr => Some(1),
            Self::IteratedRidge { q } => Some(*q),
            Self::GradientFlow | Self::GradientDescent { .. } => None,
        }
    }
}

/// A filter variant at a concrete regularization level.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterSpec {
    kind: FilterKind,
    lambda: f64,
}

impl FilterSpec {
    /// `lambda` must be finite and nonnegative; `lambda = 0` (ridgeless
    /// interpolation) is accepted for the ridge shape only. The asymptotic
    /// parameterization is `λ = C_λ · d^{−u}`, but nothing here needs λ ≤ 1 —
    /// heavily over-regularized probes are legitimate.
    pub fn new(kind: FilterKind, lambda: f64) -> Result<Self, FilterError> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(FilterError::LambdaOutOfRange { lambda });
        }
        if lambda == 0.0 && kind != FilterKind::Krr {
            return Err(FilterError::InterpolationRequiresRidge { kind: kind.id() });
        }
        if let FilterKind::IteratedRidge { q: 0 } = kind {
            return Err(FilterError::ZeroIterations);
        }
        if let FilterKind::GradientDescent { eta } = kind {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(FilterError::StepNotPositive { eta });
            }
        }
        Ok(Self { kind, lambda })
    }

    /// Gradient descent given its run length: η steps of size t derive
    /// `λ = 1/(η·t)`. Fractional `t` is meaningful (continuous iteration
    /// count) and keeps λ-grids exact.
    pub fn gradient_descent(eta: f64, steps: f64) -> Result<Self, FilterError> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(FilterError::StepNotPositive { eta });
        }
        assert!(steps > 0.0, "gradient descent needs a positive step count");
        Self::new(FilterKind::GradientDescent { eta }, 1.0 / (eta * steps))
    }

    pub fn kind(&self) -> &FilterKind {
        &self.kind
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Iteration count for gradient descent (`t = 1/(ηλ)`); `None` otherwise.
    pub fn steps(&self) -> Option<f64> {
        match self.kind {
            FilterKind::GradientDescent { eta } => Some(1.0 / (eta * self.lambda)),
            _ => None,
        }
    }

    /// φ_λ(z) for `z > 0`.
    pub fn phi(&self, z: f64) -> Result<f64, FilterError> {
        if !(z > 0.0) {
            return Err(FilterError::NonPositiveArgument { z });
        }
        self.phi_checked(z)
    }

    fn phi_checked(&self, z: f64) -> Result<f64, FilterError> {
        let lambda = self.lambda;
        Ok(match self.kind {
            FilterKind::Krr => {
                // λ = 0 is the scalar pseudo-inverse: 1/z on the positive part.
                1.0 / (z + lambda)
            }
            FilterKind::GradientFlow => {
                let ratio = z / lambda;
                if ratio < 1e-8 {
                    // Series limit; the direct form is 0/0-shaped here.
                    (1.0 - z / (2.0 * lambda)) / lambda
                } else {
                    -(-ratio).exp_m1() / z
                }
            }
            FilterKind::IteratedRidge { q } => {
                // 1 − (λ/(z+λ))^q, written through expm1∘ln1p so small z/λ
                // does not cancel.
                -(-(f64::from(q)) * (z / lambda).ln_1p()).exp_m1() / z
            }
            FilterKind::GradientDescent { eta } => {
                if eta * z >= 1.0 {
                    return Err(FilterError::StepSizeUnstable { eta, z });
                }
                let steps = 1.0 / (eta * lambda);
                -(steps * (-eta * z).ln_1p()).exp_m1() / z
            }
        })
    }

    /// ψ_λ(z) = 1 − z·φ_λ(z) for `z ≥ 0`, in cancellation-free closed forms.
    pub fn psi(&self, z: f64) -> Result<f64, FilterError> {
        if !(z >= 0.0) {
            return Err(FilterError::NonPositiveArgument { z });
        }
        let lambda = self.lambda;
        Ok(match self.kind {
            FilterKind::Krr => {
                if lambda == 0.0 {
                    // Pseudo-inverse residual: nothing survives on the range,
                    // everything survives on the null space.
                    if z == 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    lambda / (z + lambda)
                }
            }
            FilterKind::GradientFlow => (-z / lambda).exp(),
            FilterKind::IteratedRidge { q } => (-(f64::from(q)) * (z / lambda).ln_1p()).exp(),
            FilterKind::GradientDescent { eta } => {
                if eta * z >= 1.0 {
                    return Err(FilterError::StepSizeUnstable { eta, z });
                }
                let steps = 1.0 / (eta * lambda);
                (steps * (-eta * z).ln_1p()).exp()
            }
        })
    }

    /// The limit φ_λ(0⁺), used for spectrum below the null threshold at λ>0.
    fn phi_at_zero(&self) -> f64 {
        match self.kind {
            FilterKind::Krr | FilterKind::GradientFlow | FilterKind::GradientDescent { .. } => {
                1.0 / self.lambda
            }
            FilterKind::IteratedRidge { q } => f64::from(q) / self.lambda,
        }
    }
}

/// Eigendecomposition of a symmetric PSD matrix (typically `K/n`), eigenvalues
/// descending and clamped into `[0, ∞)`.
///
/// Construction does not verify `‖UDUᵀ − K/n‖ ≤ 1e−8·‖K/n‖` — that costs
/// another O(n³) — but [`Self::reconstruction_error`] exposes the check and
/// the test suite runs it on every size class it touches.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    /// Eigenvalues, descending.
    pub eigenvalues: Array1<f64>,
    /// Matching eigenvectors as columns.
    pub eigenvectors: Array2<f64>,
}

impl SpectralDecomposition {
    pub fn new(matrix: &Array2<f64>) -> Result<Self, FilterError> {
        let n = matrix.nrows();
        let mut max_abs: f64 = 0.0;
        let mut max_gap: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                max_gap = max_gap.max((matrix[[i, j]] - matrix[[j, i]]).abs());
            }
            for j in 0..n {
                max_abs = max_abs.max(matrix[[i, j]].abs());
            }
        }
        if max_gap > 1e-9 * max_abs.max(1.0) {
            return Err(FilterError::AsymmetricInput { max_gap });
        }
        let (raw_eigs, raw_vecs) = matrix
            .eigh(UPLO::Lower)
            .map_err(|e| FilterError::Backend(e.to_string()))?;
        // LAPACK returns ascending order; flip to descending.
        let mut eigenvalues = Array1::zeros(n);
        let mut eigenvectors = Array2::zeros((n, n));
        for i in 0..n {
            eigenvalues[i] = raw_eigs[n - 1 - i];
            eigenvectors.column_mut(i).assign(&raw_vecs.column(n - 1 - i));
        }
        let largest = eigenvalues[0].max(0.0);
        let floor = PSD_VIOLATION_REL_FLOOR * largest;
        for z in eigenvalues.iter_mut() {
            if *z < 0.0 {
                if *z < floor {
                    return Err(FilterError::NegativeSpectrum { eigenvalue: *z, floor });
                }
                *z = 0.0;
            }
        }
        Ok(Self { eigenvalues, eigenvectors })
    }

    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Largest eigenvalue (the operator norm of the PSD input).
    pub fn operator_norm(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// `‖UDUᵀ − M‖_op / ‖M‖_op`, for invariant checking.
    pub fn reconstruction_error(&self, matrix: &Array2<f64>) -> f64 {
        let d = Array2::from_diag(&self.eigenvalues);
        let rebuilt = self.eigenvectors.dot(&d).dot(&self.eigenvectors.t());
        let diff = &rebuilt - matrix;
        // Operator norm bounded by the Frobenius norm; good enough for a
        // relative 1e−8 check and much cheaper than another eigensolve.
        let num = diff.iter().map(|x| x * x).sum::<f64>().sqrt();
        let den = matrix.iter().map(|x| x * x).sum::<f64>().sqrt();
        num / den.max(f64::MIN_POSITIVE)
    }

    /// Per-eigenvalue multipliers `φ_λ(z_i)` with null-space handling:
    /// eigenvalues under `1e−10·λ_max` count as zero — at λ>0 they take the
    /// limit value `φ_λ(0⁺)`, at λ=0 they are excluded (pseudo-inverse), and
    /// more than 1% of them makes ridgeless interpolation an error.
    pub fn filtered_eigenvalues(&self, filter: &FilterSpec) -> Result<Array1<f64>, FilterError> {
        let threshold = NULL_SPACE_REL_THRESHOLD * self.operator_norm();
        let ridgeless = filter.lambda() == 0.0;
        if ridgeless {
            let below = self.eigenvalues.iter().filter(|z| **z <= threshold).count();
            if below as f64 > SINGULAR_INTERPOLATION_FRACTION * self.n() as f64 {
                return Err(FilterError::SingularInterpolation { below, n: self.n() });
            }
        }
        let mut out = Array1::zeros(self.n());
        for (slot, &z) in out.iter_mut().zip(self.eigenvalues.iter()) {
            *slot = if z <= threshold {
                if ridgeless {
                    0.0
                } else {
                    filter.phi_at_zero()
                }
            } else {
                filter.phi_checked(z)?
            };
        }
        Ok(out)
    }
}

/// `φ_λ(K/n) v` through the decomposition: `U φ_λ(D) Uᵀ v`.
pub fn matrix_filter_apply(
    filter: &FilterSpec,
    decomp: &SpectralDecomposition,
    v: &Array1<f64>,
) -> Result<Array1<f64>, FilterError> {
    if v.len() != decomp.n() {
        return Err(FilterError::DimensionMismatch { expected: decomp.n(), got: v.len() });
    }
    let phis = decomp.filtered_eigenvalues(filter)?;
    let mut coeffs = decomp.eigenvectors.t().dot(v);
    coeffs *= &phis;
    Ok(decomp.eigenvectors.dot(&coeffs))
}

/// The spectral estimator `f̂_λ(x) = (1/n) 𝒦(x, X) φ_λ(K/n) Y`, evaluated at
/// `eval`. Decomposes `K/n` once; when sweeping λ on fixed data, construct the
/// [`SpectralDecomposition`] yourself and reuse it instead of calling this in
/// a loop.
pub fn spectral_estimator(
    kernel: &KernelSpec,
    filter: &FilterSpec,
    x: &SpherePointSet,
    y: &Array1<f64>,
    eval: &SpherePointSet,
) -> Result<Array1<f64>, FilterError> {
    let n = x.n();
    if y.len() != n {
        return Err(FilterError::DimensionMismatch { expected: n, got: y.len() });
    }
    let mut scaled = kernel.gram(x).matrix;
    scaled.mapv_inplace(|v| v / n as f64);
    let decomp = SpectralDecomposition::new(&scaled)?;
    let weights = matrix_filter_apply(filter, &decomp, y)?;
    let cross = kernel.cross(eval, x)?;
    Ok(cross.dot(&weights) / n as f64)
}
