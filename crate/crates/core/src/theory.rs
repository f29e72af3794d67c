//! Closed-form learning-curve exponents and their classifiers.
//!
//! Everything here is exact arithmetic on small rationals. The rate formulas
//! are full of knife-edge case boundaries (floors, piecewise thresholds at
//! points like γ = p(s+1)), so inputs are reconstructed as rationals with
//! denominator ≤ 10⁶ and all comparisons are exact; an input that is not
//! within 10⁻⁹ of such a rational is rejected rather than silently rounded
//! across a case boundary.
//!
//! The parameters: `γ` couples dimension to sample size via `d = ⌊n^{1/γ}⌋`;
//! `s` is target smoothness; `τ` the filter qualification; `u` the
//! regularization exponent in `λ = Θ(d^{−u})`. The exponent ζ = ζ(s, γ, τ, u)
//! reported by [`learning_curve_exponent`] is the power of `d` governing the
//! excess risk; smaller (more negative) is faster learning.

use num_rational::Ratio;
use num_traits::Signed;
use serde_json::{json, Value};
use thiserror::Error;

type Rat = Ratio<i128>;

const MAX_DENOMINATOR: i128 = 1_000_000;
const MAX_MAGNITUDE: f64 = 1e4;
const RECONSTRUCTION_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum TheoryError {
    #[error(
        "{value} is not within {RECONSTRUCTION_TOL:e} (relative) of a rational with denominator \
         <= {MAX_DENOMINATOR}; pass a simple fraction — the rate formulas have exact case \
         boundaries and silent rounding could flip one"
    )]
    NotRational { value: f64 },
    #[error("{what} must satisfy {constraint}, got {value}")]
    OutOfDomain { what: &'static str, constraint: &'static str, value: f64 },
    #[error("the sequence-model exponent needs a finite regularization exponent u")]
    SequenceNeedsFiniteU,
    #[error("the optimal regularization exponent is defined only for s > 0")]
    OptimalUNeedsPositiveS,
}

/// Crate-internal access to the rational reconstruction, for callers that
/// need exact integer arithmetic on user-facing floats (e.g. the harness'
/// `d = ⌊n^{1/γ}⌋`).
pub(crate) fn snap_rational(value: f64) -> Result<Ratio<i128>, TheoryError> {
    rat_from_f64(value)
}

/// Reconstruct a small rational from a float via continued-fraction
/// convergents. The magnitude cap keeps every downstream product and sum
/// comfortably inside `i128`.
fn rat_from_f64(value: f64) -> Result<Rat, TheoryError> {
    if !value.is_finite() || value.abs() > MAX_MAGNITUDE {
        return Err(TheoryError::NotRational { value });
    }
    let target = value.abs();
    let tol = RECONSTRUCTION_TOL * target.max(1.0);
    // Convergent recurrence: (p0/q0) is the latest convergent, (p1/q1) the
    // one before it.
    let (mut p0, mut q0, mut p1, mut q1): (i128, i128, i128, i128) = (1, 0, 0, 1);
    let mut x = target;
    for _ in 0..64 {
        let a = x.floor();
        if a >= 1e18 {
            break;
        }
        let a_int = a as i128;
        let (Some(p2), Some(q2)) = (
            a_int.checked_mul(p0).and_then(|v| v.checked_add(p1)),
            a_int.checked_mul(q0).and_then(|v| v.checked_add(q1)),
        ) else {
            break;
        };
        if q2 > MAX_DENOMINATOR {
            break;
        }
        p1 = p0;
        q1 = q0;
        p0 = p2;
        q0 = q2;
        if (p0 as f64 / q0 as f64 - target).abs() <= tol {
            let signed = if value < 0.0 { -p0 } else { p0 };
            return Ok(Rat::new(signed, q0));
        }
        let frac = x - a;
        if frac.abs() < f64::EPSILON {
            break;
        }
        x = 1.0 / frac;
    }
    Err(TheoryError::NotRational { value })
}

fn to_f64(r: Rat) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn rfloor(r: Rat) -> i128 {
    r.floor().to_integer()
}

fn rat(n: i128, d: i128) -> Rat {
    Rat::new(n, d)
}

/// The four-parameter query every rate formula consumes. `τ` and `u` may be
/// infinite (`None` internally); `s ≥ 0`, `γ > 0`, `τ ≥ 1`, `u > 0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RateQuery {
    s: Rat,
    gamma: Rat,
    /// `None` = unbounded qualification (τ = ∞).
    tau: Option<Rat>,
    /// `None` = ridgeless interpolation (u = ∞, λ = 0).
    u: Option<Rat>,
}

impl RateQuery {
    /// Build from floats; `f64::INFINITY` is accepted for `tau` and `u`.
    pub fn from_f64(s: f64, gamma: f64, tau: f64, u: f64) -> Result<Self, TheoryError> {
        let tau = if tau == f64::INFINITY { None } else { Some(rat_from_f64(tau)?) };
        let u = if u == f64::INFINITY { None } else { Some(rat_from_f64(u)?) };
        Self::from_parts(rat_from_f64(s)?, rat_from_f64(gamma)?, tau, u)
    }

    /// Build from exact fractions (numerator, denominator); `None` means ∞.
    pub fn from_rationals(
        s: (i128, i128),
        gamma: (i128, i128),
        tau: Option<(i128, i128)>,
        u: Option<(i128, i128)>,
    ) -> Result<Self, TheoryError> {
        Self::from_parts(
            Rat::new(s.0, s.1),
            Rat::new(gamma.0, gamma.1),
            tau.map(|(n, d)| Rat::new(n, d)),
            u.map(|(n, d)| Rat::new(n, d)),
        )
    }

    fn from_parts(
        s: Rat,
        gamma: Rat,
        tau: Option<Rat>,
        u: Option<Rat>,
    ) -> Result<Self, TheoryError> {
        if s.is_negative() {
            return Err(TheoryError::OutOfDomain {
                what: "s",
                constraint: "s >= 0",
                value: to_f64(s),
            });
        }
        if !gamma.is_positive() {
            return Err(TheoryError::OutOfDomain {
                what: "gamma",
                constraint: "gamma > 0",
                value: to_f64(gamma),
            });
        }
        if let Some(t) = tau {
            if t < Rat::from_integer(1) {
                return Err(TheoryError::OutOfDomain {
                    what: "tau",
                    constraint: "tau >= 1",
                    value: to_f64(t),
                });
            }
        }
        if let Some(uu) = u {
            if !uu.is_positive() {
                return Err(TheoryError::OutOfDomain {
                    what: "u",
                    constraint: "u > 0",
                    value: to_f64(uu),
                });
            }
        }
        Ok(Self { s, gamma, tau, u })
    }

    /// Same query at a different regularization exponent (`None` = ∞).
    pub fn with_u(&self, u: Option<(i128, i128)>) -> Result<Self, TheoryError> {
        Self::from_parts(self.s, self.gamma, self.tau, u.map(|(n, d)| Rat::new(n, d)))
    }

    pub fn s(&self) -> f64 {
        to_f64(self.s)
    }

    pub fn gamma(&self) -> f64 {
        to_f64(self.gamma)
    }

    pub fn tau(&self) -> f64 {
        self.tau.map_or(f64::INFINITY, to_f64)
    }

    pub fn u(&self) -> f64 {
        self.u.map_or(f64::INFINITY, to_f64)
    }
}

/// Where on the learning curve a configuration sits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    OverRegularized,
    UnderRegularized,
    Interpolation,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::OverRegularized => "over",
            Regime::UnderRegularized => "under",
            Regime::Interpolation => "interpolation",
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Everything the closed-form engine knows about one query.
#[derive(Debug, Clone)]
pub struct RatePrediction {
    /// The learning-curve exponent: excess risk = Θ(d^ζ).
    pub zeta: f64,
    /// Variance component γ − ℓ̃ − 1 − 2·max{γ − u, 0}.
    pub v1: f64,
    /// Variance component ℓ̃ − γ.
    pub v2: f64,
    /// Bias component −(ℓ̃ + 1)s.
    pub b1: f64,
    /// Qualification-limited bias −2τu + (2τ − s̃)ℓ̃; absent when τ = ∞ and
    /// suppressed (with a warning) when u = ∞ at finite τ.
    pub b2: Option<f64>,
    pub ell_gamma: i128,
    /// ⌊u⌋; `None` when u = ∞.
    pub ell_lambda: Option<i128>,
    pub ell_tilde: i128,
    /// min{s, 2τ}.
    pub s_tilde: f64,
    /// ⌊γ/(s+1)⌋, the minimax degree cutoff.
    pub p: i128,
    /// Best exponent any estimator can achieve.
    pub minimax: f64,
    /// Smoothness threshold for benign overfitting (∞ for γ ≤ 1/2).
    pub gamma_threshold: f64,
    /// Risk-minimizing u for this (s, γ, τ); `None` when s = 0.
    pub optimal_u: Option<f64>,
    pub regime: Regime,
    pub benign: bool,
    pub saturated: bool,
    /// Set when the formula is extended beyond its stated domain.
    pub warning: Option<String>,
}

impl RatePrediction {
    /// JSON for CLI output; infinities become the string "inf" because JSON
    /// numbers cannot express them.
    pub fn to_json(&self) -> Value {
        fn num(x: f64) -> Value {
            if x.is_finite() {
                json!(x)
            } else {
                json!("inf")
            }
        }
        json!({
            "zeta": num(self.zeta),
            "components": {
                "v1": num(self.v1),
                "v2": num(self.v2),
                "b1": num(self.b1),
                "b2": self.b2.map(num).unwrap_or(Value::Null),
            },
            "ell_gamma": self.ell_gamma,
            "ell_lambda": self.ell_lambda.map(|v| json!(v)).unwrap_or(json!("inf")),
            "ell_tilde": self.ell_tilde,
            "s_tilde": num(self.s_tilde),
            "p": self.p,
            "minimax": num(self.minimax),
            "gamma_threshold": num(self.gamma_threshold),
            "optimal_u": self.optimal_u.map(num).unwrap_or(Value::Null),
            "regime": self.regime.as_str(),
            "benign": self.benign,
            "saturated": self.saturated,
            "warning": self.warning.clone().map(Value::String).unwrap_or(Value::Null),
        })
    }
}

/// Exact-core result, shared by the public functions and the property tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct ExactComponents {
    v1: Rat,
    v2: Rat,
    b1: Rat,
    b2: Option<Rat>,
    ell_tilde: i128,
    zeta: Rat,
}

fn components(q: &RateQuery) -> ExactComponents {
    let one = Rat::from_integer(1);
    let ell_gamma = rfloor(q.gamma);
    let ell_tilde = match q.u {
        None => ell_gamma,
        Some(u) => ell_gamma.min(rfloor(u)),
    };
    let lt = Rat::from_integer(ell_tilde);
    let shortfall = match q.u {
        None => Rat::from_integer(0),
        Some(u) => (q.gamma - u).max(Rat::from_integer(0)),
    };
    let v1 = q.gamma - lt - one - rat(2, 1) * shortfall;
    let v2 = lt - q.gamma;
    let b1 = -(lt + one) * q.s;
    let b2 = match (q.tau, q.u) {
        (Some(tau), Some(u)) => {
            let s_tilde = q.s.min(rat(2, 1) * tau);
            Some(-rat(2, 1) * tau * u + (rat(2, 1) * tau - s_tilde) * lt)
        }
        // Finite qualification at u = ∞ would send this term to −∞; the
        // caller attaches a warning because that extension is not analyzed.
        _ => None,
    };
    let mut zeta = v1.max(v2).max(b1);
    if let Some(b2) = b2 {
        zeta = zeta.max(b2);
    }
    ExactComponents { v1, v2, b1, b2, ell_tilde, zeta }
}

/// Exact ζ for the test suite's grid sweeps.
#[cfg(test)]
fn zeta_exact(q: &RateQuery) -> Rat {
    components(q).zeta
}

/// Smoothness threshold for benign overfitting. `None` = ∞ (every s benign).
fn gamma_threshold_exact(gamma: Rat) -> Option<Rat> {
    let ell = rfloor(gamma);
    let ell_r = Rat::from_integer(ell);
    let one = Rat::from_integer(1);
    if gamma <= rat(1, 2) {
        return None;
    }
    if gamma == ell_r {
        return Some(Rat::from_integer(0));
    }
    // Lower half of the interval; γ ∈ (1/2, 1) is excluded (ℓ = 0) and uses
    // the upper-half formula below instead.
    if gamma <= ell_r + rat(1, 2) && ell >= 1 {
        return Some((gamma - ell_r) / ell_r);
    }
    Some((ell_r + one - gamma) / (ell_r + one))
}

/// Threshold Γ(γ): overfitting is benign exactly when 0 < s ≤ Γ(γ).
pub fn gamma_threshold(gamma: f64) -> Result<f64, TheoryError> {
    let g = rat_from_f64(gamma)?;
    if !g.is_positive() {
        return Err(TheoryError::OutOfDomain {
            what: "gamma",
            constraint: "gamma > 0",
            value: gamma,
        });
    }
    Ok(gamma_threshold_exact(g).map_or(f64::INFINITY, to_f64))
}

/// Minimax degree cutoff and exponent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimax {
    pub p: i128,
    pub exponent: f64,
}

fn minimax_exact(s: Rat, gamma: Rat) -> (i128, Rat) {
    let p = rfloor(gamma / (s + Rat::from_integer(1)));
    let p_r = Rat::from_integer(p);
    let exponent = (p_r - gamma).max(-(p_r + Rat::from_integer(1)) * s);
    (p, exponent)
}

/// Best exponent any estimator can achieve: max{p − γ, −(p+1)s} with
/// p = ⌊γ/(s+1)⌋.
pub fn minimax_exponent(s: f64, gamma: f64) -> Result<Minimax, TheoryError> {
    let s = rat_from_f64(s)?;
    let gamma = rat_from_f64(gamma)?;
    if s.is_negative() {
        return Err(TheoryError::OutOfDomain { what: "s", constraint: "s >= 0", value: to_f64(s) });
    }
    if !gamma.is_positive() {
        return Err(TheoryError::OutOfDomain {
            what: "gamma",
            constraint: "gamma > 0",
            value: to_f64(gamma),
        });
    }
    let (p, exponent) = minimax_exact(s, gamma);
    Ok(Minimax { p, exponent: to_f64(exponent) })
}

/// Risk-minimizing regularization exponent u′(s, γ, τ), exact per-case
/// closed forms. Requires s > 0 (at s = 0 every u is equally bad).
fn optimal_u_exact(s: Rat, gamma: Rat, tau: Option<Rat>) -> Result<Rat, TheoryError> {
    if !s.is_positive() {
        return Err(TheoryError::OptimalUNeedsPositiveS);
    }
    let one = Rat::from_integer(1);
    let two = rat(2, 1);
    let half = rat(1, 2);

    if s >= one && tau.is_none_or(|t| s <= t) {
        // Qualification does not bind (1 ≤ s ≤ τ).
        let p = rfloor(gamma / (s + one));
        let p_r = Rat::from_integer(p);
        if gamma < s {
            return Ok(gamma.min(one) * half);
        }
        if gamma < s + one {
            return Ok((gamma - (s - one)) * half);
        }
        // p ≥ 1 from here: γ ≥ s + 1 ≥ 2 ⇒ ⌊γ/(s+1)⌋ ≥ 1.
        if gamma < p_r * s + p_r + s {
            return Ok(p_r + half);
        }
        return Ok((gamma - (p_r + one) * (s - one)) * half);
    }

    if s >= one {
        // Qualification binds: s̃ = min{s, 2τ} > τ.
        let t = tau.expect("s > tau implies finite tau");
        let s_tilde = s.min(two * t);
        if gamma < one {
            return Ok(gamma * half);
        }
        let p_t = rfloor(gamma / (s_tilde + one));
        let p_r = Rat::from_integer(p_t);
        let residue = gamma - p_r * (s_tilde + one);
        if residue < t {
            return Ok(p_r + residue / (two * t));
        }
        if residue < s_tilde + s_tilde / t - one {
            return Ok(p_r + (residue + one) / (two * (t + one)));
        }
        return Ok(p_r + (residue + one - s_tilde) * half);
    }

    // s < 1 from here.
    let p = rfloor(gamma / (s + one));
    let p_r = Rat::from_integer(p);
    match tau {
        Some(t) => {
            // Low smoothness with finite qualification.
            if gamma < p_r * s + p_r + s {
                Ok(p_r + (gamma - p_r * (s + one)) / (two * t))
            } else {
                Ok(p_r + s / (two * t))
            }
        }
        None => {
            // Low smoothness, unbounded qualification.
            if gamma < s {
                return Ok(gamma * s.min(half));
            }
            if gamma < s + one {
                return Ok((gamma * (one + s) - s).min(gamma * half));
            }
            // p ≥ 1 from here.
            if gamma < p_r * s + p_r + s {
                Ok(p_r + s * half)
            } else {
                Ok((gamma + p_r * (one - s)) * half)
            }
        }
    }
}

/// Risk-minimizing u for (s, γ, τ); `tau = f64::INFINITY` for unbounded
/// qualification.
pub fn optimal_u(s: f64, gamma: f64, tau: f64) -> Result<f64, TheoryError> {
    let s = rat_from_f64(s)?;
    let gamma = rat_from_f64(gamma)?;
    let tau = if tau == f64::INFINITY { None } else { Some(rat_from_f64(tau)?) };
    if !gamma.is_positive() {
        return Err(TheoryError::OutOfDomain {
            what: "gamma",
            constraint: "gamma > 0",
            value: to_f64(gamma),
        });
    }
    if let Some(t) = tau {
        if t < Rat::from_integer(1) {
            return Err(TheoryError::OutOfDomain {
                what: "tau",
                constraint: "tau >= 1",
                value: to_f64(t),
            });
        }
    }
    optimal_u_exact(s, gamma, tau).map(to_f64)
}

/// Regime, benign-overfitting, and saturation classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Classification {
    pub regime: Regime,
    pub benign: bool,
    pub saturated: bool,
}

fn classify_exact(q: &RateQuery) -> Result<Classification, TheoryError> {
    let regime = match q.u {
        None => Regime::Interpolation,
        Some(u) => {
            if u >= q.gamma {
                Regime::Interpolation
            } else if q.s.is_positive() {
                let u_opt = optimal_u_exact(q.s, q.gamma, q.tau)?;
                if u < u_opt {
                    Regime::OverRegularized
                } else {
                    Regime::UnderRegularized
                }
            } else {
                // At s = 0 the curve is flat below γ; there is no optimum to
                // sit on either side of, only the interpolation boundary.
                Regime::UnderRegularized
            }
        }
    };
    let benign = q.s.is_positive()
        && gamma_threshold_exact(q.gamma).is_none_or(|threshold| q.s <= threshold);
    let saturated = q.s.is_positive() && q.tau.is_some_and(|t| t < q.s);
    Ok(Classification { regime, benign, saturated })
}

/// Classify a query: over/under-regularized vs interpolating, whether
/// overfitting is benign (s ≤ Γ(γ)), and whether the filter saturates
/// (τ < s).
pub fn classify(q: &RateQuery) -> Result<Classification, TheoryError> {
    classify_exact(q)
}

/// The learning-curve exponent ζ with all attributed components and
/// classifications.
pub fn learning_curve_exponent(q: &RateQuery) -> Result<RatePrediction, TheoryError> {
    let c = components(q);
    let ell_gamma = rfloor(q.gamma);
    let ell_lambda = q.u.map(rfloor);
    let s_tilde = match q.tau {
        Some(t) => q.s.min(rat(2, 1) * t),
        None => q.s,
    };
    let (p, minimax) = minimax_exact(q.s, q.gamma);
    let threshold = gamma_threshold_exact(q.gamma);
    let classification = classify_exact(q)?;
    let optimal = if q.s.is_positive() {
        Some(to_f64(optimal_u_exact(q.s, q.gamma, q.tau)?))
    } else {
        None
    };
    let warning = if q.u.is_none() && q.tau.is_some() {
        Some(
            "interpolation with finite qualification: the qualification-limited bias term is \
             suppressed; this regime's rate is only established for the ridge family"
                .to_owned(),
        )
    } else {
        None
    };
    Ok(RatePrediction {
        zeta: to_f64(c.zeta),
        v1: to_f64(c.v1),
        v2: to_f64(c.v2),
        b1: to_f64(c.b1),
        b2: c.b2.map(to_f64),
        ell_gamma,
        ell_lambda,
        ell_tilde: c.ell_tilde,
        s_tilde: to_f64(s_tilde),
        p,
        minimax: to_f64(minimax),
        gamma_threshold: threshold.map_or(f64::INFINITY, to_f64),
        optimal_u: optimal,
        regime: classification.regime,
        benign: classification.benign,
        saturated: classification.saturated,
        warning,
    })
}

/// Exponent of the diagonal sequence model: max{2u − γ − ℓ_λ − 1, ℓ_λ − γ,
/// −(ℓ_λ+1)s, −2τu + (2τ−s̃)ℓ_λ} with ℓ_λ = ⌊u⌋. Needs finite u — the
/// sequence risk itself diverges at λ = 0.
pub fn sequence_exponent(q: &RateQuery) -> Result<f64, TheoryError> {
    let u = q.u.ok_or(TheoryError::SequenceNeedsFiniteU)?;
    Ok(to_f64(sequence_exponent_exact(q, u)))
}

fn sequence_exponent_exact(q: &RateQuery, u: Rat) -> Rat {
    let one = Rat::from_integer(1);
    let two = rat(2, 1);
    let ell_lambda = Rat::from_integer(rfloor(u));
    let v1 = two * u - q.gamma - ell_lambda - one;
    let v2 = ell_lambda - q.gamma;
    let b1 = -(ell_lambda + one) * q.s;
    let mut zeta = v1.max(v2).max(b1);
    if let Some(tau) = q.tau {
        let s_tilde = q.s.min(two * tau);
        zeta = zeta.max(-two * tau * u + (two * tau - s_tilde) * ell_lambda);
    }
    zeta
}

#[cfg(test)]
mod tests {
    use super::*;

    fn query(s: (i128, i128), gamma: (i128, i128), tau: Option<(i128, i128)>, u: Option<(i128, i128)>) -> RateQuery {
        RateQuery::from_rationals(s, gamma, tau, u).unwrap()
    }

    #[test]
    fn rational_reconstruction_round_trips() {
        for (x, expect) in [
            (1.5, rat(3, 2)),
            (0.1, rat(1, 10)),
            (0.625, rat(5, 8)),
            (2.0, rat(2, 1)),
            (1.0 / 3.0, rat(1, 3)),
            (0.30000000000000004, rat(3, 10)),
            (-2.7, rat(-27, 10)),
        ] {
            assert_eq!(rat_from_f64(x).unwrap(), expect, "x = {x}");
        }
        assert!(rat_from_f64(f64::NAN).is_err());
        assert!(rat_from_f64(f64::INFINITY).is_err());
        assert!(rat_from_f64(1e9).is_err());
        // A float not near any small-denominator rational is rejected, not
        // silently rounded across a case boundary.
        assert!(rat_from_f64(0.5 + 1e-7).is_err());
    }

    #[test]
    fn threshold_cases() {
        for (gamma, expect) in [
            (0.3, f64::INFINITY),
            (0.5, f64::INFINITY),
            (0.75, 0.25),
            (1.2, 0.2),
            (1.5, 0.5),
            (1.7, 0.15),
            (2.0, 0.0),
            (2.7, 0.1),
        ] {
            assert_eq!(gamma_threshold(gamma).unwrap(), expect, "gamma = {gamma}");
        }
    }

    #[test]
    fn minimax_cases() {
        let m = minimax_exponent(1.0, 1.5).unwrap();
        assert_eq!((m.p, m.exponent), (0, -1.0));
        let m = minimax_exponent(0.0, 2.3).unwrap();
        assert_eq!((m.p, m.exponent), (2, 0.0));
        let m = minimax_exponent(0.5, 1.5).unwrap();
        assert_eq!((m.p, m.exponent), (1, -0.5));
    }

    #[test]
    fn headline_exponents() {
        // The canonical pair: unbounded qualification reaches −1.5, the
        // ridge saturates at −1.0.
        let p = learning_curve_exponent(&query((3, 2), (3, 2), None, Some((1, 2)))).unwrap();
        assert_eq!(p.zeta, -1.5);
        assert_eq!((p.v1, p.v2, p.b1, p.b2), (-1.5, -1.5, -1.5, None));
        let p = learning_curve_exponent(&query((3, 2), (3, 2), Some((1, 1)), Some((1, 2)))).unwrap();
        assert_eq!(p.zeta, -1.0);
        assert_eq!(p.b2, Some(-1.0));
        // s = 0: no learning at any regularization.
        let p = learning_curve_exponent(&query((0, 1), (7, 3), Some((1, 1)), Some((4, 5)))).unwrap();
        assert_eq!(p.zeta, 0.0);
        assert_eq!(p.b1, 0.0);
    }

    #[test]
    fn interpolation_with_finite_qualification_is_flagged() {
        let p = learning_curve_exponent(&query((3, 2), (3, 2), Some((1, 1)), None)).unwrap();
        assert!(p.warning.is_some());
        assert_eq!(p.b2, None);
        assert_eq!(p.ell_lambda, None);
        let clean = learning_curve_exponent(&query((3, 2), (3, 2), None, None)).unwrap();
        assert!(clean.warning.is_none());
    }

    #[test]
    fn optimal_u_cases() {
        assert_eq!(optimal_u(1.5, 1.5, f64::INFINITY).unwrap(), 0.5);
        assert_eq!(optimal_u(1.5, 1.5, 1.0).unwrap(), 0.625);
        assert_eq!(optimal_u(0.5, 0.8, f64::INFINITY).unwrap(), 0.4);
        // Deep case-table entries: p ≥ 1 branches.
        assert_eq!(optimal_u(1.0, 4.0, f64::INFINITY).unwrap(), 2.5);
        assert_eq!(optimal_u(0.5, 1.5, 1.0).unwrap(), 1.0);
        assert!(matches!(
            optimal_u(0.0, 1.5, 1.0),
            Err(TheoryError::OptimalUNeedsPositiveS)
        ));
    }

    #[test]
    fn classification_examples() {
        let c = classify(&query((2, 5), (3, 2), None, Some((2, 1)))).unwrap();
        assert_eq!(c.regime, Regime::Interpolation);
        assert!(c.benign);
        let c = classify(&query((1, 1), (3, 2), None, Some((1, 5)))).unwrap();
        assert_eq!(c.regime, Regime::OverRegularized);
        assert!(!c.benign);
        let c = classify(&query((3, 1), (3, 1), Some((1, 1)), Some((1, 1)))).unwrap();
        assert!(c.saturated);
        let c = classify(&query((0, 1), (3, 2), Some((1, 1)), Some((1, 2)))).unwrap();
        assert_eq!(c.regime, Regime::UnderRegularized);
        assert!(!c.benign && !c.saturated);
    }

    fn u_grid() -> Vec<Rat> {
        (1..=800).map(|i| rat(i, 100)).collect()
    }

    fn shape_triples() -> Vec<(Rat, Rat, Option<Rat>)> {
        let mut out = Vec::new();
        for s in [rat(1, 2), rat(1, 1), rat(3, 2), rat(5, 2)] {
            for gamma in [rat(4, 5), rat(6, 5), rat(3, 2), rat(27, 10)] {
                for tau in [Some(rat(1, 1)), Some(rat(2, 1)), None] {
                    out.push((s, gamma, tau));
                }
            }
        }
        out
    }

    #[test]
    fn curve_is_v_shaped_then_flat() {
        for (s, gamma, tau) in shape_triples() {
            let u_opt = optimal_u_exact(s, gamma, tau).unwrap();
            assert!(u_opt < gamma, "u' must sit below gamma");
            let base = RateQuery { s, gamma, tau, u: None };
            let mut prev: Option<(Rat, Rat)> = None;
            for u in u_grid() {
                let z = zeta_exact(&RateQuery { u: Some(u), ..base.clone() });
                if let Some((pu, pz)) = prev {
                    if u <= u_opt {
                        assert!(z <= pz, "rising before u' at u={u} (s={s}, γ={gamma})");
                    } else if pu >= u_opt && u <= gamma {
                        assert!(z >= pz, "falling after u' at u={u} (s={s}, γ={gamma})");
                    } else if pu >= gamma {
                        assert!(z == pz, "not flat past gamma at u={u} (s={s}, γ={gamma})");
                    }
                }
                prev = Some((u, z));
            }
        }
    }

    #[test]
    fn qualification_term_never_wins_past_the_optimum() {
        for (s, gamma, tau) in shape_triples() {
            let Some(tau) = tau else { continue };
            let u_opt = optimal_u_exact(s, gamma, Some(tau)).unwrap();
            for u in u_grid() {
                if u < u_opt {
                    continue;
                }
                let c = components(&RateQuery { s, gamma, tau: Some(tau), u: Some(u) });
                let others = c.v1.max(c.v2).max(c.b1);
                let b2 = c.b2.expect("finite tau has a b2");
                assert!(
                    others >= b2,
                    "b2 dominates at u={u} (s={s}, γ={gamma}, τ={tau})"
                );
            }
        }
    }

    #[test]
    fn benign_points_match_minimax_everywhere_past_the_optimum() {
        for (s, gamma, tau) in shape_triples() {
            let threshold = gamma_threshold_exact(gamma);
            let benign = threshold.is_none_or(|t| s <= t);
            if !benign || !s.is_positive() {
                continue;
            }
            let u_opt = optimal_u_exact(s, gamma, tau).unwrap();
            let (_, minimax) = minimax_exact(s, gamma);
            for u in u_grid() {
                if u < u_opt {
                    continue;
                }
                let z = zeta_exact(&RateQuery { s, gamma, tau, u: Some(u) });
                assert!(
                    z == minimax,
                    "benign point misses minimax: s={s}, γ={gamma}, u={u}: {z} vs {minimax}"
                );
            }
            let z = zeta_exact(&RateQuery { s, gamma, tau, u: None });
            assert!(z == minimax, "benign interpolation misses minimax: s={s}, γ={gamma}");
        }
    }

    #[test]
    fn non_benign_points_pay_a_gap_somewhere_under_interpolation() {
        for (s, gamma, tau) in shape_triples() {
            let threshold = gamma_threshold_exact(gamma);
            let benign = threshold.is_none_or(|t| s <= t);
            if benign {
                continue;
            }
            let u_opt = optimal_u_exact(s, gamma, tau).unwrap();
            let (_, minimax) = minimax_exact(s, gamma);
            let found = u_grid().into_iter().any(|u| {
                u > u_opt
                    && u < gamma
                    && zeta_exact(&RateQuery { s, gamma, tau, u: Some(u) })
                        > minimax + rat(1, 1_000_000_000)
            });
            assert!(found, "no gap found for s={s}, γ={gamma}, τ={tau:?}");
        }
    }

    fn admissible(s: Rat, gamma: Rat, tau: Option<Rat>) -> bool {
        match tau {
            None => true,
            Some(t) => {
                let two_t = rat(2, 1) * t;
                s > Rat::from_integer(1) / two_t
                    || gamma > (two_t + Rat::from_integer(1)) * s / (two_t * (Rat::from_integer(1) + s))
            }
        }
    }

    /// Best exponent reachable by tuning u (grid plus the closed-form
    /// optimum), and whether that equals minimax.
    fn attains_minimax(s: Rat, gamma: Rat, tau: Option<Rat>) -> bool {
        let u_opt = optimal_u_exact(s, gamma, tau).unwrap();
        let (_, minimax) = minimax_exact(s, gamma);
        let mut best = zeta_exact(&RateQuery { s, gamma, tau, u: Some(u_opt) });
        for u in u_grid() {
            best = best.min(zeta_exact(&RateQuery { s, gamma, tau, u: Some(u) }));
        }
        // The closed-form optimum is a global minimizer over the grid.
        let at_opt = zeta_exact(&RateQuery { s, gamma, tau, u: Some(u_opt) });
        assert!(at_opt == best, "u' is not optimal for s={s}, γ={gamma}, τ={tau:?}");
        best == minimax
    }

    #[test]
    fn saturation_happens_exactly_when_qualification_is_too_small() {
        // Saturation is a property of the filter against the smoothness
        // class: qualification τ ≥ s reaches the minimax exponent at every
        // dimension scaling, while τ < s falls short at some scaling. The
        // per-scaling picture is finer — see
        // `low_qualification_can_attain_variance_dominated_rates` below.
        let gammas = [rat(3, 2), rat(3, 1), rat(6, 1)];
        for s in [rat(1, 2), rat(3, 2), rat(3, 1)] {
            for tau in [Some(rat(1, 1)), Some(rat(2, 1)), Some(rat(4, 1)), None] {
                let attains_everywhere = gammas
                    .iter()
                    .filter(|&&gamma| admissible(s, gamma, tau))
                    .all(|&gamma| attains_minimax(s, gamma, tau));
                let sufficient_qualification = tau.is_none_or(|t| t >= s);
                assert_eq!(
                    attains_everywhere, sufficient_qualification,
                    "dichotomy fails at s={s}, τ={tau:?}"
                );
            }
        }
    }

    #[test]
    fn low_qualification_can_attain_variance_dominated_rates() {
        // When the minimax exponent is dominated by its variance part
        // (p − γ ≥ −(p+1)s), even a low-qualification filter reaches it at
        // that particular scaling by parking ⌊u⌋ = p: the residual-decay
        // term only needs to drop below the shared variance floor. These
        // four (s, γ, τ) points with τ < s are therefore attained — pinning
        // them documents that the τ ≥ s dichotomy is about uniformity over
        // scalings, not about each scaling separately.
        for (s, gamma, tau) in [
            (rat(3, 2), rat(3, 1), rat(1, 1)),
            (rat(3, 2), rat(6, 1), rat(1, 1)),
            (rat(3, 1), rat(3, 2), rat(2, 1)),
            (rat(3, 1), rat(6, 1), rat(2, 1)),
        ] {
            assert!(tau < s && admissible(s, gamma, Some(tau)));
            let (p, minimax) = minimax_exact(s, gamma);
            let p_r = Rat::from_integer(p);
            assert!(p_r - gamma >= -(p_r + Rat::from_integer(1)) * s, "not variance-dominated");
            assert!(attains_minimax(s, gamma, Some(tau)), "s={s}, γ={gamma}, τ={tau}");
            let _ = minimax;
        }
        // Sufficient qualification attains at every admissible triple, not
        // merely somewhere: the one-sided half of the dichotomy is sharp.
        for s in [rat(1, 2), rat(3, 2), rat(3, 1)] {
            for gamma in [rat(3, 2), rat(3, 1), rat(6, 1)] {
                for tau in [Some(rat(1, 1)), Some(rat(2, 1)), Some(rat(4, 1)), None] {
                    let enough = tau.is_none_or(|t| t >= s);
                    if enough && admissible(s, gamma, tau) {
                        assert!(attains_minimax(s, gamma, tau), "s={s}, γ={gamma}, τ={tau:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn kernel_exponent_is_capped_sequence_exponent() {
        for (s, gamma, tau) in shape_triples() {
            for u in u_grid() {
                let q = RateQuery { s, gamma, tau, u: Some(u) };
                let kernel = zeta_exact(&q);
                let capped = u.min(gamma);
                let seq = sequence_exponent_exact(&q, capped);
                assert!(
                    kernel == seq,
                    "mismatch at s={s}, γ={gamma}, τ={tau:?}, u={u}: {kernel} vs {seq}"
                );
            }
        }
    }

    #[test]
    fn sequence_exponent_worked_example() {
        let q = query((1, 1), (3, 2), Some((1, 1)), Some((6, 5)));
        assert_eq!(sequence_exponent(&q).unwrap(), -0.5);
        let no_u = query((1, 1), (3, 2), Some((1, 1)), None);
        assert!(matches!(sequence_exponent(&no_u), Err(TheoryError::SequenceNeedsFiniteU)));
    }

    #[test]
    fn predictions_never_beat_minimax() {
        for (s, gamma, tau) in shape_triples() {
            for u in u_grid() {
                let q = RateQuery { s, gamma, tau, u: Some(u) };
                let c = components(&q);
                let (_, minimax) = minimax_exact(s, gamma);
                assert!(
                    c.zeta >= minimax,
                    "beat minimax at s={s}, γ={gamma}, τ={tau:?}, u={u}"
                );
            }
        }
    }

    #[test]
    fn query_validation() {
        assert!(RateQuery::from_f64(-0.1, 1.5, 1.0, 0.5).is_err());
        assert!(RateQuery::from_f64(1.0, 0.0, 1.0, 0.5).is_err());
        assert!(RateQuery::from_f64(1.0, 1.5, 0.5, 0.5).is_err());
        assert!(RateQuery::from_f64(1.0, 1.5, 1.0, 0.0).is_err());
        let q = RateQuery::from_f64(1.0, 1.5, f64::INFINITY, f64::INFINITY).unwrap();
        assert_eq!(q.tau(), f64::INFINITY);
        assert_eq!(q.u(), f64::INFINITY);
    }

    #[test]
    fn json_rendering_handles_infinities() {
        let p = learning_curve_exponent(&query((3, 2), (3, 2), None, None)).unwrap();
        let v = p.to_json();
        assert_eq!(v["ell_lambda"], json!("inf"));
        assert_eq!(v["zeta"], json!(-0.5));
        assert_eq!(v["regime"], json!("interpolation"));
    }
}
