//! Numerical laboratory for spectral-filter kernel regression on the
//! high-dimensional sphere.
//!
//! The crate has two halves that cross-check each other:
//!
//! * an **empirical** half — inner-product kernels on `S^{d−1}`, analytic
//!   spectral filters (ridge, gradient flow, iterated ridge, gradient
//!   descent), synthetic targets of controlled smoothness, and a sweep
//!   harness that measures excess risk, bias and variance over
//!   `n = Θ(d^γ)` grids and fits log–log slopes;
//! * a **closed-form** half — exact rate exponents for the same estimators
//!   (polynomial-regime learning curves, their sequence-model counterparts,
//!   minimax baselines, benign-overfitting thresholds and the optimal
//!   regularization exponent), computed in rational arithmetic.
//!
//! The two halves meet in the slope harness: measured learning-curve slopes
//! are compared against the predicted exponents.

// Validation guards are written as negated comparisons (`!(x > 0.0)`) on
// purpose: unlike the positive rewrite, they reject NaN together with the
// out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod filter;
pub mod harness;
pub mod kernel;
pub mod risk;
pub mod rng;
pub mod sphere;
pub mod target;
pub mod theory;

pub use filter::{FilterSpec, SpectralDecomposition};
pub use harness::{ExperimentPlan, SlopeFit, SweepRow, SweepTable, TheoryComparison};
pub use kernel::KernelSpec;
pub use risk::RiskEstimate;
pub use sphere::{EigenStructure, GegenbauerBasis, SpherePointSet};
pub use target::TargetSpec;
pub use theory::{RatePrediction, RateQuery};
