//! Scalar abstraction for ratios and scores.
//!
//! Every ratio in the crate (similarities, weights, rates) is computed over a
//! [`Score`]. `f64` is the working type; `Rational64` gives exact arithmetic
//! for reproducing published percentages and for property tests where float
//! rounding would blur an invariant.

use std::fmt::Debug;

use num_rational::Rational64;
use num_traits::{FromPrimitive, Num, ToPrimitive};

/// A ratio-valued scalar: `f32`, `f64` or an exact rational.
pub trait Score:
    Num + Copy + PartialOrd + FromPrimitive + ToPrimitive + Debug + Send + Sync + 'static
{
    /// `num / den`. Callers guarantee `den > 0`.
    fn ratio(num: u64, den: u64) -> Self {
        debug_assert!(den > 0);
        Self::from_count(num) / Self::from_count(den)
    }

    fn from_count(n: u64) -> Self;

    /// `self * 10_000` rounded half away from zero, i.e. hundredths of a percent.
    fn basis_points(self) -> i64;

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Percentage with two decimals, e.g. `73.91%`.
    fn percent(self) -> String {
        format_basis_points(self.basis_points())
    }

    fn clamp_unit(self) -> Self {
        if self < Self::zero() {
            Self::zero()
        } else if self > Self::one() {
            Self::one()
        } else {
            self
        }
    }
}

impl Score for f64 {
    fn from_count(n: u64) -> Self {
        n as f64
    }

    fn basis_points(self) -> i64 {
        (self * 10_000.0).round() as i64
    }
}

impl Score for f32 {
    fn from_count(n: u64) -> Self {
        n as f32
    }

    fn basis_points(self) -> i64 {
        // widen first so `0.78125f32 * 10_000` does not pick up f32 error
        (f64::from(self) * 10_000.0).round() as i64
    }
}

impl Score for Rational64 {
    fn from_count(n: u64) -> Self {
        Rational64::from_integer(n as i64)
    }

    fn basis_points(self) -> i64 {
        let scaled = self * Rational64::from_integer(10_000);
        let (num, den) = (*scaled.numer(), *scaled.denom());
        let (q, r) = (num / den, num % den);
        if 2 * r.abs() >= den {
            q + num.signum()
        } else {
            q
        }
    }

    fn as_f64(self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }
}

pub fn format_basis_points(bp: i64) -> String {
    let sign = if bp < 0 { "-" } else { "" };
    let bp = bp.abs();
    format!("{sign}{}.{:02}%", bp / 100, bp % 100)
}
