//! Spherical-harmonic infrastructure on `S^{d−1}`.
//!
//! Inner-product kernels `(x, x′) ↦ Φ(⟨x, x′⟩)` on the sphere diagonalize in
//! the spherical-harmonic basis: each degree `k` contributes one distinct
//! eigenvalue `μ_k` with multiplicity `N(d, k)`. This module provides the
//! pieces of that picture that everything else builds on:
//!
//! * normalized Gegenbauer polynomials `P_{k,d}` (the degree-`k` zonal
//!   functions, normalized to `P_{k,d}(1) = 1`),
//! * the eigenspace dimensions `N(d, k)` in exact integer arithmetic,
//! * uniform sampling on the sphere,
//! * the Funk–Hecke eigenvalues
//!   `μ_k = (ω_{d−2}/ω_{d−1}) ∫_{−1}^{1} Φ(t) P_{k,d}(t) (1−t²)^{(d−3)/2} dt`
//!   by adaptive Gauss–Legendre quadrature, and
//! * [`EigenStructure`], the packaged spectrum `{(μ_k, N(d,k))}` with its
//!   trace accounting.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

/// Hard cap on polynomial degree. The asymptotic regimes under study only
/// ever touch degrees up to `⌊γ⌋ + 2 ≤ 10`; the slack above that is for
/// diagnostics.
pub const MAX_DEGREE: usize = 32;

/// Quadrature node schedule: start here, double until stable.
const QUAD_NODES_MIN: usize = 64;
/// Give up past this many nodes and report divergence.
const QUAD_NODES_MAX: usize = 16_384;
/// Successive node-doubled estimates must agree to this relative tolerance.
const QUAD_REL_TOL: f64 = 1e-8;
/// Ambient dimension above which the quadrature switches to the
/// Gaussian-limit substitution t = z/√d.
const GAUSSIAN_LIMIT_DIM: usize = 400;

#[derive(Debug, Error)]
pub enum SphereError {
    #[error("ambient dimension must be at least 3, got {d}")]
    DimensionTooSmall { d: usize },
    #[error("degree {k} exceeds the cap {max} (raise MAX_DEGREE only with cause)")]
    DegreeTooLarge { k: usize, max: usize },
    #[error("argument t={t} lies outside [-1, 1] beyond roundoff tolerance")]
    ArgumentOutOfDomain { t: f64 },
    #[error("multiplicity N({d},{k}) overflows 128-bit integer arithmetic")]
    MultiplicityOverflow { d: usize, k: usize },
    #[error(
        "Funk-Hecke quadrature for d={d}, k={k} did not stabilize at {nodes} nodes \
         (last delta {delta:.3e}); kernel profile may be too rough"
    )]
    QuadratureDivergence { d: usize, k: usize, nodes: usize, delta: f64 },
    #[error(
        "spectral trace {sum:.6e} exceeds the kernel diagonal {trace:.6e} by more than \
         quadrature tolerance; eigenvalues are inconsistent"
    )]
    TraceBoundViolated { sum: f64, trace: f64 },
    #[error("point set row {row} has norm {norm} (unit within 1e-12 required)")]
    NotUnitNorm { row: usize, norm: f64 },
    #[error("point set must be non-empty")]
    EmptyPointSet,
}

/// Normalized Gegenbauer (zonal) polynomials for a fixed sphere `S^{d−1}`.
///
/// `P_{0,d}(t) = 1`, `P_{1,d}(t) = t`, `P_{2,d}(t) = (d t² − 1)/(d − 1)`, and
/// degrees beyond that follow the Gegenbauer three-term recurrence with
/// parameter `(d−2)/2`. The recurrence is used in its renormalized form
///
/// ```text
/// P_{k+1}(t) = [ (2k + d − 2) · t · P_k(t) − k · P_{k−1}(t) ] / (k + d − 2)
/// ```
///
/// whose coefficients sum to the denominator, so the value at `t = 1` stays
/// exactly 1 at every degree — the per-degree renormalization is built into
/// the coefficients instead of applied after the fact, which keeps values in
/// `[−1, 1]` even for large `d`.
#[derive(Debug, Clone)]
pub struct GegenbauerBasis {
    d: usize,
    k_max: usize,
}

impl GegenbauerBasis {
    pub fn new(d: usize, k_max: usize) -> Result<Self, SphereError> {
        if d < 3 {
            return Err(SphereError::DimensionTooSmall { d });
        }
        if k_max > MAX_DEGREE {
            return Err(SphereError::DegreeTooLarge { k: k_max, max: MAX_DEGREE });
        }
        Ok(Self { d, k_max })
    }

    pub fn dimension(&self) -> usize {
        self.d
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    /// `P_{k,d}(t)` for one degree `k ≤ k_max`.
    ///
    /// `t` may exceed `[−1, 1]` by at most `1e−12` (inner products of unit
    /// vectors carry that much roundoff); it is clamped. Anything further out
    /// is a domain error.
    pub fn eval(&self, k: usize, t: f64) -> Result<f64, SphereError> {
        if k > self.k_max {
            return Err(SphereError::DegreeTooLarge { k, max: self.k_max });
        }
        let t = clamp_to_unit(t)?;
        Ok(self.eval_unchecked(k, t))
    }

    /// All degrees `0..=k_max` at once; one pass of the recurrence.
    pub fn eval_all(&self, t: f64) -> Result<Vec<f64>, SphereError> {
        let t = clamp_to_unit(t)?;
        let mut out = Vec::with_capacity(self.k_max + 1);
        let (mut prev, mut cur) = (1.0, t);
        out.push(prev);
        if self.k_max >= 1 {
            out.push(cur);
        }
        for k in 1..self.k_max {
            let (a, b, c) = recurrence_coeffs(self.d, k);
            let next = (a * t * cur - b * prev) / c;
            prev = cur;
            cur = next;
            out.push(cur);
        }
        Ok(out)
    }

    fn eval_unchecked(&self, k: usize, t: f64) -> f64 {
        match k {
            0 => 1.0,
            1 => t,
            _ => {
                let (mut prev, mut cur) = (1.0, t);
                for j in 1..k {
                    let (a, b, c) = recurrence_coeffs(self.d, j);
                    let next = (a * t * cur - b * prev) / c;
                    prev = cur;
                    cur = next;
                }
                cur
            }
        }
    }
}

/// Coefficients of `P_{k+1} = (a·t·P_k − b·P_{k−1}) / c`; `a − b = c` exactly,
/// which is what pins `P(1) = 1`.
#[inline]
fn recurrence_coeffs(d: usize, k: usize) -> (f64, f64, f64) {
    let a = (2 * k + d - 2) as f64;
    let b = k as f64;
    let c = (k + d - 2) as f64;
    (a, b, c)
}

fn clamp_to_unit(t: f64) -> Result<f64, SphereError> {
    if !(t.is_finite()) || t.abs() > 1.0 + 1e-12 {
        return Err(SphereError::ArgumentOutOfDomain { t });
    }
    Ok(t.clamp(-1.0, 1.0))
}

/// Dimension `N(d, k)` of the degree-`k` spherical-harmonic eigenspace:
/// `N(d,0) = 1` and for `k ≥ 1`
///
/// ```text
/// N(d,k) = (2k + d − 2)/k · (k + d − 3)! / ( (d−2)! (k−1)! )
/// ```
///
/// computed as `(2k + d − 2) · C(k+d−3, k−1) / k` with the binomial built by
/// stepwise exact multiply-divide, so no factorial is ever materialized.
/// Overflow past `u128` is an error, never a wrap.
pub fn multiplicity(d: usize, k: usize) -> Result<u128, SphereError> {
    if d < 3 {
        return Err(SphereError::DimensionTooSmall { d });
    }
    if k == 0 {
        return Ok(1);
    }
    let overflow = || SphereError::MultiplicityOverflow { d, k };
    // C(k+d-3, k-1): multiply by (n-r+i), divide by i; exact at every step.
    let r = (k - 1) as u128;
    let n = (k + d - 3) as u128;
    let mut binom: u128 = 1;
    for i in 1..=r {
        binom = binom.checked_mul(n - r + i).ok_or_else(overflow)?;
        binom /= i;
    }
    let scaled = binom.checked_mul((2 * k + d - 2) as u128).ok_or_else(overflow)?;
    debug_assert_eq!(scaled % k as u128, 0, "N(d,k) must be an integer");
    Ok(scaled / k as u128)
}

/// A set of points on `S^{d−1}`, one unit row vector each.
#[derive(Debug, Clone)]
pub struct SpherePointSet {
    /// `n × d`, rows on the unit sphere.
    pub points: Array2<f64>,
    /// Identifier of the generator stream that produced the set, when known;
    /// carried along so result rows can name their randomness.
    pub seed_id: Option<u64>,
}

impl SpherePointSet {
    /// Wrap an existing matrix, enforcing the unit-row invariant (1e−12).
    pub fn from_points(points: Array2<f64>) -> Result<Self, SphereError> {
        if points.nrows() == 0 {
            return Err(SphereError::EmptyPointSet);
        }
        for (i, row) in points.rows().into_iter().enumerate() {
            let norm = row.dot(&row).sqrt();
            if (norm - 1.0).abs() > 1e-12 {
                return Err(SphereError::NotUnitNorm { row: i, norm });
            }
        }
        Ok(Self { points, seed_id: None })
    }

    pub fn n(&self) -> usize {
        self.points.nrows()
    }

    pub fn dimension(&self) -> usize {
        self.points.ncols()
    }
}

/// `n` i.i.d. uniform points on `S^{d−1}`: independent standard Gaussian
/// vectors, normalized. Fully determined by the stream state. Draw order is
/// row-major (each row consumes `d` consecutive normals), which is what makes
/// parallel sweeps byte-identical to serial ones: every replicate owns its
/// stream.
pub fn sample_sphere(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Result<SpherePointSet, SphereError> {
    if d < 3 {
        return Err(SphereError::DimensionTooSmall { d });
    }
    assert!(n >= 1, "sample_sphere needs n >= 1");
    let mut points = Array2::<f64>::zeros((n, d));
    for mut row in points.rows_mut() {
        loop {
            for x in row.iter_mut() {
                *x = rng.sample(StandardNormal);
            }
            let norm = row.dot(&row).sqrt();
            // A zero-norm Gaussian vector has probability zero, but a guard
            // costs nothing and keeps the invariant unconditional.
            if norm > 1e-150 {
                row.mapv_inplace(|x| x / norm);
                break;
            }
        }
    }
    Ok(SpherePointSet { points, seed_id: None })
}

/// Funk–Hecke eigenvalue of the profile `Φ` at degree `k` on `S^{d−1}`:
///
/// ```text
/// μ_k = (ω_{d−2}/ω_{d−1}) ∫_{−1}^{1} Φ(t) P_{k,d}(t) (1−t²)^{(d−3)/2} dt
/// ```
///
/// Gauss–Legendre quadrature with the weight folded into the integrand in
/// log space; the node count doubles from 64 until two successive estimates
/// agree to relative `1e−8` (plus an absolute floor at roundoff scale for
/// eigenvalues that are exactly zero by parity).
///
/// For `d > 400` the substitution `t = z/√d` is applied first — the weight
/// then tends to the Gaussian `e^{−z²/2}` and stays representable, whereas
/// the direct weight underflows everywhere except a `O(1/√d)` sliver.
pub fn funk_hecke_eigenvalue<F>(profile: F, d: usize, k: usize) -> Result<f64, SphereError>
where
    F: Fn(f64) -> f64,
{
    let basis = GegenbauerBasis::new(d, k.max(1))?;
    if k > MAX_DEGREE {
        return Err(SphereError::DegreeTooLarge { k, max: MAX_DEGREE });
    }
    // Absolute agreement floor: quadrature of a cancelling integrand cannot
    // resolve below roundoff relative to the kernel's own scale.
    let scale = profile(1.0).abs().max(1.0);
    let abs_floor = 1e-13 * scale;

    let mut nodes = QUAD_NODES_MIN;
    let mut previous = estimate_mu(&profile, &basis, d, k, nodes);
    loop {
        nodes *= 2;
        let current = estimate_mu(&profile, &basis, d, k, nodes);
        let delta = (current - previous).abs();
        if delta <= QUAD_REL_TOL * current.abs() + abs_floor {
            return Ok(current);
        }
        if nodes >= QUAD_NODES_MAX {
            return Err(SphereError::QuadratureDivergence { d, k, nodes, delta });
        }
        previous = current;
    }
}

/// One fixed-node quadrature pass for [`funk_hecke_eigenvalue`].
fn estimate_mu<F>(profile: &F, basis: &GegenbauerBasis, d: usize, k: usize, nodes: usize) -> f64
where
    F: Fn(f64) -> f64,
{
    let rule = gauss_legendre(nodes);
    let half_exponent = (d as f64 - 3.0) / 2.0;
    // ln(ω_{d−2}/ω_{d−1}) = lnΓ(d/2) − lnΓ((d−1)/2) − ln√π
    let ln_ratio =
        ln_gamma(d as f64 / 2.0) - ln_gamma((d as f64 - 1.0) / 2.0) - 0.5 * std::f64::consts::PI.ln();

    if d <= GAUSSIAN_LIMIT_DIM {
        let mut sum = 0.0;
        for (&x, &w) in rule.0.iter().zip(rule.1.iter()) {
            // ln(1−t²) = ln(1−t) + ln(1+t), accurate out to the endpoints.
            let ln_weight = half_exponent * ((-x).ln_1p() + x.ln_1p());
            sum += w * profile(x) * basis.eval_unchecked(k, x) * (ln_ratio + ln_weight).exp();
        }
        sum
    } else {
        // t = z/√d on z ∈ [−L, L]; the truncation at L = 40 is below 1e−300.
        let sqrt_d = (d as f64).sqrt();
        let limit = sqrt_d.min(40.0);
        let ln_prefactor = ln_ratio - 0.5 * (d as f64).ln();
        let mut sum = 0.0;
        for (&x, &w) in rule.0.iter().zip(rule.1.iter()) {
            let z = limit * x;
            let t = z / sqrt_d;
            let ln_weight = half_exponent * (-(z * z) / d as f64).ln_1p();
            sum += w * profile(t) * basis.eval_unchecked(k, t) * (ln_prefactor + ln_weight).exp();
        }
        sum * limit
    }
}

/// A quadrature rule: nodes and matching weights.
type QuadratureRule = Arc<(Vec<f64>, Vec<f64>)>;

/// Shared Gauss–Legendre rules on `[−1, 1]`, cached per node count.
fn gauss_legendre(n: usize) -> QuadratureRule {
    static CACHE: OnceLock<Mutex<HashMap<usize, QuadratureRule>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(rule) = cache.lock().expect("quadrature cache poisoned").get(&n) {
        return Arc::clone(rule);
    }
    let rule = Arc::new(compute_gauss_legendre(n));
    cache
        .lock()
        .expect("quadrature cache poisoned")
        .insert(n, Arc::clone(&rule));
    rule
}

/// Nodes and weights by Newton iteration on the Legendre polynomial, the
/// textbook construction: cos-spaced initial guesses, three-term recurrence
/// for `P_n` and its derivative, `w = 2 / ((1−x²) P_n′(x)²)`.
fn compute_gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            let step = p / d;
            x -= step;
            if step.abs() <= 1e-15 {
                break;
            }
        }
        // One clean-up evaluation so the weight uses the converged node.
        let (_, dp) = legendre_with_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        // Middle node is exactly zero; the loop above already set it, but make
        // the symmetry explicit.
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p_prev = 1.0;
    let mut p = x;
    for j in 2..=n {
        let jf = j as f64;
        let next = ((2.0 * jf - 1.0) * x * p - (jf - 1.0) * p_prev) / jf;
        p_prev = p;
        p = next;
    }
    let derivative = (n as f64) * (x * p - p_prev) / (x * x - 1.0);
    (p, derivative)
}

/// The spectrum of an inner-product kernel on `S^{d−1}`, truncated at `k_max`:
/// distinct eigenvalues `μ_k`, their multiplicities `N(d,k)`, and the trace
/// ledger `Φ(1) = Σ_k μ_k N(d,k) + tail`.
#[derive(Debug, Clone)]
pub struct EigenStructure {
    pub d: usize,
    pub k_max: usize,
    /// `μ_k` for `k = 0..=k_max`. Values within roundoff of zero are snapped
    /// to exactly zero so parity-null degrees do not carry noise signs.
    pub eigenvalues: Vec<f64>,
    /// `N(d, k)` for `k = 0..=k_max`.
    pub multiplicities: Vec<u128>,
    /// `Φ(1)`, the common diagonal of the kernel — also its spectral trace.
    pub trace: f64,
    /// `Φ(1) − Σ_{k≤k_max} μ_k N(d,k)`: spectral mass above `k_max`.
    pub tail_mass: f64,
}

impl EigenStructure {
    /// Fraction of the trace that lives above `k_max`.
    pub fn tail_fraction(&self) -> f64 {
        self.tail_mass / self.trace
    }

    /// `Σ_{k>ℓ} μ_k N(d,k)` including the unresolved tail — the level at
    /// which the bulk of the kernel spectrum concentrates when the first
    /// `ℓ` degrees are split off.
    pub fn bulk_level(&self, ell: usize) -> f64 {
        let resolved: f64 = self
            .eigenvalues
            .iter()
            .zip(self.multiplicities.iter())
            .skip(ell + 1)
            .map(|(mu, n)| mu * *n as f64)
            .sum();
        resolved + self.tail_mass
    }
}

/// Compute the spectrum of the profile `Φ` on `S^{d−1}` up to degree `k_max`.
///
/// `Φ(1)` is taken as the trace; the trace bound
/// `Σ μ_k N(d,k) ≤ Φ(1) + tolerance` is enforced and its violation is an
/// error — it means the quadrature produced an inconsistent spectrum.
pub fn eigen_structure<F>(profile: F, d: usize, k_max: usize) -> Result<EigenStructure, SphereError>
where
    F: Fn(f64) -> f64,
{
    if k_max > MAX_DEGREE {
        return Err(SphereError::DegreeTooLarge { k: k_max, max: MAX_DEGREE });
    }
    let trace = profile(1.0);
    let zero_snap = 1e-13 * trace.abs().max(1.0);
    let mut eigenvalues = Vec::with_capacity(k_max + 1);
    let mut multiplicities = Vec::with_capacity(k_max + 1);
    let mut spectral_sum = 0.0;
    for k in 0..=k_max {
        let mut mu = funk_hecke_eigenvalue(&profile, d, k)?;
        if mu.abs() < zero_snap {
            mu = 0.0;
        }
        let n_k = multiplicity(d, k)?;
        spectral_sum += mu * n_k as f64;
        eigenvalues.push(mu);
        multiplicities.push(n_k);
    }
    let tail_mass = trace - spectral_sum;
    if tail_mass < -1e-6 * trace.abs().max(1.0) {
        return Err(SphereError::TraceBoundViolated { sum: spectral_sum, trace });
    }
    Ok(EigenStructure { d, k_max, eigenvalues, multiplicities, trace, tail_mass })
}
