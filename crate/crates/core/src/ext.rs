//! Extended real numbers `R ∪ {-inf, +inf}`.
//!
//! Infinities are explicit variants so that a penalty evaluating to `+inf`
//! (a point outside its domain) can never be confused with floating-point
//! overflow. Addition follows the inf-addition convention
//! `+inf + -inf = +inf`, the usual choice for minimisation problems.

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtReal {
    NegInf,
    Finite(f64),
    PosInf,
}

impl ExtReal {
    pub const ZERO: ExtReal = ExtReal::Finite(0.0);

    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(v) => Some(v),
            _ => None,
        }
    }

    /// Lossy conversion; infinities map to the IEEE infinities.
    pub fn to_f64(self) -> f64 {
        match self {
            ExtReal::NegInf => f64::NEG_INFINITY,
            ExtReal::Finite(v) => v,
            ExtReal::PosInf => f64::INFINITY,
        }
    }
}

impl From<f64> for ExtReal {
    /// Finite floats map to `Finite`; IEEE infinities to the matching marker.
    /// NaN is rejected in debug builds and treated as `+inf` otherwise.
    fn from(v: f64) -> Self {
        if v.is_finite() {
            ExtReal::Finite(v)
        } else if v == f64::NEG_INFINITY {
            ExtReal::NegInf
        } else {
            debug_assert!(!v.is_nan(), "NaN converted to ExtReal");
            ExtReal::PosInf
        }
    }
}

impl Add for ExtReal {
    type Output = ExtReal;

    fn add(self, rhs: ExtReal) -> ExtReal {
        use ExtReal::*;
        match (self, rhs) {
            (PosInf, _) | (_, PosInf) => PosInf,
            (NegInf, _) | (_, NegInf) => NegInf,
            (Finite(a), Finite(b)) => ExtReal::from(a + b),
        }
    }
}

impl Add<f64> for ExtReal {
    type Output = ExtReal;

    fn add(self, rhs: f64) -> ExtReal {
        self + ExtReal::Finite(rhs)
    }
}

impl Neg for ExtReal {
    type Output = ExtReal;

    fn neg(self) -> ExtReal {
        match self {
            ExtReal::NegInf => ExtReal::PosInf,
            ExtReal::Finite(v) => ExtReal::Finite(-v),
            ExtReal::PosInf => ExtReal::NegInf,
        }
    }
}

impl Sub for ExtReal {
    type Output = ExtReal;

    fn sub(self, rhs: ExtReal) -> ExtReal {
        self + (-rhs)
    }
}

impl Sum for ExtReal {
    fn sum<I: Iterator<Item = ExtReal>>(iter: I) -> ExtReal {
        iter.fold(ExtReal::ZERO, |acc, v| acc + v)
    }
}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &ExtReal) -> Option<Ordering> {
        self.to_f64().partial_cmp(&other.to_f64())
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::NegInf => write!(f, "-inf"),
            ExtReal::Finite(v) => write!(f, "{v}"),
            ExtReal::PosInf => write!(f, "inf"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infinity_propagates_through_sums() {
        let parts = [ExtReal::Finite(1.0), ExtReal::PosInf, ExtReal::Finite(-3.0)];
        assert_eq!(parts.into_iter().sum::<ExtReal>(), ExtReal::PosInf);
        assert_eq!(ExtReal::PosInf + ExtReal::NegInf, ExtReal::PosInf);
        assert_eq!(ExtReal::Finite(2.0) - ExtReal::PosInf, ExtReal::NegInf);
    }

    #[test]
    fn overflow_is_not_silently_finite() {
        let big = ExtReal::Finite(f64::MAX);
        assert_eq!(big + big, ExtReal::PosInf);
        assert!(ExtReal::Finite(1.0) < ExtReal::PosInf);
    }
}
