//! Inner-product kernel profiles on the sphere and their matrix assembly.
//!
//! A kernel here is a profile `Φ: [−1,1] → ℝ` applied to inner products of
//! unit vectors, `𝒦(x, x′) = Φ(⟨x, x′⟩)`. Three profiles are built in:
//!
//! * `ntk` — the two-layer ReLU neural tangent kernel,
//!   `Φ(t) = [sin(arccos t) + 2(π − arccos t)·t] / (2π)`;
//! * `rbf` — the Gaussian kernel restricted to the sphere,
//!   `exp(−‖x−x′‖²/2) = exp(t − 1)` for unit `x, x′`;
//! * `powser:a0,a1,…` — an explicit nonnegative power series, evaluated by
//!   Horner's rule.
//!
//! All three have nonnegative series coefficients, which is what makes their
//! spherical spectra nonnegative degree by degree.

use ndarray::{Array2, Axis, Zip};
use thiserror::Error;

use crate::sphere::{self, EigenStructure, SphereError, SpherePointSet};

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("argument t={t} lies outside [-1, 1] beyond roundoff tolerance")]
    ArgumentOutOfDomain { t: f64 },
    #[error("power-series coefficient a_{index} = {value} is negative")]
    NegativeCoefficient { index: usize, value: f64 },
    #[error("power series needs at least one coefficient")]
    EmptyCoefficients,
    #[error("coefficient sum {sum} exceeds the declared tail bound {bound}")]
    TailBoundExceeded { sum: f64, bound: f64 },
    #[error("unrecognized kernel id {id:?} (expected \"ntk\", \"rbf\", or \"powser:<a0,a1,...>\")")]
    UnknownKernelId { id: String },
    #[error("point sets live in different ambient dimensions ({left} vs {right})")]
    DimensionMismatch { left: usize, right: usize },
}

/// A rotation-invariant kernel on `S^{d−1}`, identified by its profile.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    /// Two-layer ReLU NTK profile.
    Ntk,
    /// Gaussian kernel on the sphere: `Φ(t) = exp(t − 1)`.
    Rbf,
    /// Explicit power series `Φ(t) = Σ_j a_j t^j` with `a_j ≥ 0` and
    /// `Σ_j a_j ≤ tail_bound` (the bound caps the series if it were extended).
    PowerSeries { coefficients: Vec<f64>, tail_bound: f64 },
}

impl KernelSpec {
    /// Power-series kernel with an explicit tail bound.
    pub fn power_series(coefficients: Vec<f64>, tail_bound: f64) -> Result<Self, KernelError> {
        if coefficients.is_empty() {
            return Err(KernelError::EmptyCoefficients);
        }
        for (index, &value) in coefficients.iter().enumerate() {
            if !(value >= 0.0) {
                return Err(KernelError::NegativeCoefficient { index, value });
            }
        }
        let sum: f64 = coefficients.iter().sum();
        if sum > tail_bound * (1.0 + 1e-12) {
            return Err(KernelError::TailBoundExceeded { sum, bound: tail_bound });
        }
        Ok(Self::PowerSeries { coefficients, tail_bound })
    }

    /// Parse a kernel config id: `ntk`, `rbf`, or `powser:<a0,a1,...>`
    /// (a finite series is its own tail bound).
    pub fn parse(id: &str) -> Result<Self, KernelError> {
        match id {
            "ntk" => Ok(Self::Ntk),
            "rbf" => Ok(Self::Rbf),
            _ => {
                if let Some(list) = id.strip_prefix("powser:") {
                    let coefficients = list
                        .split(',')
                        .map(|c| c.trim().parse::<f64>())
                        .collect::<Result<Vec<f64>, _>>()
                        .map_err(|_| KernelError::UnknownKernelId { id: id.to_owned() })?;
                    let sum = coefficients.iter().sum();
                    Self::power_series(coefficients, sum)
                } else {
                    Err(KernelError::UnknownKernelId { id: id.to_owned() })
                }
            }
        }
    }

    /// Config id; `parse ∘ id` is the identity.
    pub fn id(&self) -> String {
        match self {
            Self::Ntk => "ntk".to_owned(),
            Self::Rbf => "rbf".to_owned(),
            Self::PowerSeries { coefficients, .. } => {
                let list: Vec<String> = coefficients.iter().map(|c| c.to_string()).collect();
                format!("powser:{}", list.join(","))
            }
        }
    }

    /// Profile value at `t ∈ [−1, 1]` (up to `1e−12` of roundoff grace).
    pub fn phi(&self, t: f64) -> Result<f64, KernelError> {
        if !t.is_finite() || t.abs() > 1.0 + 1e-12 {
            return Err(KernelError::ArgumentOutOfDomain { t });
        }
        Ok(self.phi_clamped(t))
    }

    /// Profile value with silent clamping into `[−1, 1]` — the matrix
    /// assembly path, where inner products of unit vectors carry roundoff.
    #[inline]
    pub fn phi_clamped(&self, t: f64) -> f64 {
        let t = t.clamp(-1.0, 1.0);
        match self {
            Self::Ntk => {
                let angle = t.acos();
                (angle.sin() + 2.0 * (std::f64::consts::PI - angle) * t)
                    / (2.0 * std::f64::consts::PI)
            }
            Self::Rbf => (t - 1.0).exp(),
            Self::PowerSeries { coefficients, .. } => {
                let mut acc = 0.0;
                for &a in coefficients.iter().rev() {
                    acc = acc * t + a;
                }
                acc
            }
        }
    }

    /// `K_max = Φ(1)`, the kernel's diagonal value and spectral trace.
    pub fn k_max_value(&self) -> f64 {
        match self {
            Self::Ntk | Self::Rbf => 1.0,
            Self::PowerSeries { coefficients, .. } => coefficients.iter().sum(),
        }
    }

    /// Spherical spectrum `{(μ_k, N(d,k))}` of this profile up to `k_max`.
    pub fn eigen_structure(&self, d: usize, k_max: usize) -> Result<EigenStructure, SphereError> {
        sphere::eigen_structure(|t| self.phi_clamped(t), d, k_max)
    }

    /// Kernel matrix `K_ij = Φ(⟨x_i, x_j⟩)`.
    pub fn gram(&self, x: &SpherePointSet) -> GramMatrix {
        let points = &x.points;
        let n = points.nrows();
        let diag = self.k_max_value();
        let mut matrix = Array2::<f64>::zeros((n, n));
        // Parallel over rows; every row is a pure function of (points, i) with
        // a fixed left-to-right evaluation order, so the parallel result is
        // bit-identical to the serial one. Both triangles are computed — the
        // dot product is symmetric in exact arithmetic term by term, so
        // symmetry is exact, not approximate.
        Zip::indexed(matrix.axis_iter_mut(Axis(0))).par_for_each(|i, mut row| {
            let xi = points.row(i);
            for j in 0..n {
                row[j] = if i == j {
                    // Unit rows make ⟨x_i, x_i⟩ = 1 only up to roundoff;
                    // write the exact diagonal instead of Φ(1 ± ε).
                    diag
                } else {
                    self.phi_clamped(xi.dot(&points.row(j)))
                };
            }
        });
        GramMatrix { matrix, kernel_id: self.id(), seed_id: x.seed_id }
    }

    /// Cross-kernel block `(i, j) ↦ Φ(⟨eval_i, train_j⟩)`, `n_eval × n_train`.
    pub fn cross(
        &self,
        eval: &SpherePointSet,
        train: &SpherePointSet,
    ) -> Result<Array2<f64>, KernelError> {
        if eval.dimension() != train.dimension() {
            return Err(KernelError::DimensionMismatch {
                left: eval.dimension(),
                right: train.dimension(),
            });
        }
        let mut matrix = Array2::<f64>::zeros((eval.n(), train.n()));
        Zip::indexed(matrix.axis_iter_mut(Axis(0))).par_for_each(|i, mut row| {
            let xi = eval.points.row(i);
            for j in 0..train.n() {
                row[j] = self.phi_clamped(xi.dot(&train.points.row(j)));
            }
        });
        Ok(matrix)
    }
}

/// A kernel matrix together with the provenance needed to reproduce it.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    pub matrix: Array2<f64>,
    pub kernel_id: String,
    pub seed_id: Option<u64>,
}

impl GramMatrix {
    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }
}
