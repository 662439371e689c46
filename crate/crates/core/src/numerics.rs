//! Standard normal CDF and quantile, plus a bisection root finder.
//!
//! The CDF uses Marsaglia's Taylor expansion of `Φ` around the origin for
//! `|x| ≤ 3` and the Laplace continued fraction for the Mills ratio in the
//! tails, which keeps tail values accurate in relative terms (thresholds
//! around `5e-4` and below are common here). The quantile is obtained by
//! bisection on the CDF.

use serde::{Deserialize, Serialize};
use thiserror::Error;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Switch point between the series and the continued fraction.
const TAIL_SWITCH: f64 = 3.0;

/// Beyond this `Φ(-x)` underflows to zero.
const QUANTILE_BRACKET: f64 = 40.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("expected a finite value, got {0}")]
    NonFinite(f64),
    #[error("probability must lie in [0, 1], got {0}")]
    OutOfUnitInterval(f64),
    #[error("quantile of {0} is infinite")]
    InfiniteQuantile(f64),
    #[error("root not bracketed: f({lo}) = {f_lo}, f({hi}) = {f_hi}")]
    BracketViolation {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },
    #[error("tolerance must be positive and finite, got {0}")]
    InvalidTolerance(f64),
    #[error("bisection stalled at bracket width {width} above tolerance {tol}")]
    ToleranceNotReached { width: f64, tol: f64 },
}

/// A real number in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Probability(f64);

impl Probability {
    pub const ZERO: Probability = Probability(0.0);
    pub const ONE: Probability = Probability(1.0);

    pub fn new(value: f64) -> Result<Self, NumericsError> {
        if !value.is_finite() {
            return Err(NumericsError::NonFinite(value));
        }
        if !(0.0..=1.0).contains(&value) {
            return Err(NumericsError::OutOfUnitInterval(value));
        }
        Ok(Probability(value))
    }

    /// For constants already known to lie in `[0, 1]`.
    pub(crate) const fn new_unchecked(value: f64) -> Self {
        Probability(value)
    }

    /// Clamps accumulated rounding noise back into `[0, 1]`.
    pub(crate) fn saturating(value: f64) -> Self {
        debug_assert!(!value.is_nan());
        Probability(value.clamp(0.0, 1.0))
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    pub fn complement(self) -> Probability {
        Probability(1.0 - self.0)
    }
}

impl TryFrom<f64> for Probability {
    type Error = NumericsError;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        Probability::new(value)
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

impl std::fmt::Display for Probability {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

/// Standard normal density.
#[inline]
pub fn std_normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// `Φ(x)`, rejecting non-finite input.
pub fn std_normal_cdf(x: f64) -> Result<Probability, NumericsError> {
    if !x.is_finite() {
        return Err(NumericsError::NonFinite(x));
    }
    Ok(Probability::saturating(phi(x)))
}

/// Unchecked `Φ`; infinities map to the limits.
pub(crate) fn phi(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < -TAIL_SWITCH {
        upper_tail(-x)
    } else if x > TAIL_SWITCH {
        1.0 - upper_tail(x)
    } else {
        phi_series(x)
    }
}

/// `Φ(x) = 1/2 + φ(x) (x + x³/3 + x⁵/(3·5) + …)`. All terms share the sign
/// of `x`, so there is no cancellation inside the sum.
fn phi_series(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut denom = 1.0;
    loop {
        denom += 2.0;
        term *= x2 / denom;
        let next = sum + term;
        if next == sum {
            break;
        }
        sum = next;
    }
    0.5 + std_normal_pdf(x) * sum
}

/// `1 − Φ(x)` for `x > 0` via the continued fraction
/// `φ(x) / (x + 1/(x + 2/(x + 3/(x + …))))`, evaluated with modified Lentz.
fn upper_tail(x: f64) -> f64 {
    if x == f64::INFINITY {
        return 0.0;
    }
    const TINY: f64 = 1e-300;
    let mut f = x;
    let mut c = f;
    let mut d = 0.0;
    for n in 1..5000 {
        let a = n as f64;
        d = x + a * d;
        if d.abs() < TINY {
            d = TINY;
        }
        d = 1.0 / d;
        c = x + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    std_normal_pdf(x) / f
}

/// `Φ⁻¹(p)` for `0 < p < 1`.
pub fn std_normal_quantile(p: Probability) -> Result<f64, NumericsError> {
    let p = p.value();
    if p <= 0.0 || p >= 1.0 {
        return Err(NumericsError::InfiniteQuantile(p));
    }
    Ok(quantile(p))
}

/// Unchecked quantile; `p` must lie strictly inside `(0, 1)`.
pub(crate) fn quantile(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    if p == 0.5 {
        0.0
    } else if p < 0.5 {
        lower_quantile(p)
    } else {
        // 1 − p is exact here (Sterbenz).
        -lower_quantile(1.0 - p)
    }
}

/// Bisection on `Φ` over `[-40, 0]` for `p < 1/2`.
fn lower_quantile(p: f64) -> f64 {
    let mut lo = -QUANTILE_BRACKET;
    let mut hi = 0.0_f64;
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if hi - lo <= 1e-18 || hi - lo <= 2.0 * f64::EPSILON * lo.abs().max(hi.abs()) {
            break;
        }
        if phi(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Pick whichever endpoint reproduces p more closely.
    if (phi(lo) - p).abs() < (phi(hi) - p).abs() {
        lo
    } else {
        hi
    }
}

/// Smallest `x` in `[lo, hi]` (to within `tol`) with `f(x) ≥ 0`, for a
/// nondecreasing `f` with `f(lo) ≤ 0 ≤ f(hi)`.
///
/// The returned point always satisfies `f(x) ≥ 0`; if `f(lo) ≥ 0` already,
/// `lo` itself is the answer.
pub fn find_root_increasing<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<f64, NumericsError>
where
    F: FnMut(f64) -> f64,
{
    if tol.is_nan() || tol <= 0.0 || !tol.is_finite() {
        return Err(NumericsError::InvalidTolerance(tol));
    }
    for v in [lo, hi] {
        if !v.is_finite() {
            return Err(NumericsError::NonFinite(v));
        }
    }
    let f_lo = f(lo);
    let f_hi = f(hi);
    if lo > hi || f_lo > 0.0 || f_hi < 0.0 || f_lo.is_nan() || f_hi.is_nan() {
        return Err(NumericsError::BracketViolation { lo, hi, f_lo, f_hi });
    }
    if f_lo >= 0.0 {
        return Ok(lo);
    }
    // Invariant: f(a) < 0 ≤ f(b).
    let (mut a, mut b) = (lo, hi);
    while b - a > tol {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            return Err(NumericsError::ToleranceNotReached { width: b - a, tol });
        }
        if f(mid) >= 0.0 {
            b = mid;
        } else {
            a = mid;
        }
    }
    Ok(b)
}
