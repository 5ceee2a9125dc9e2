//! Signed log-magnitude numbers and log-sum-exp accumulation.

use serde::{Deserialize, Serialize};

/// Sign of a real number; `Zero` only for an exact zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Negative,
    Zero,
    Positive,
}

impl Sign {
    pub fn of(x: f64) -> Self {
        if x > 0.0 {
            Sign::Positive
        } else if x < 0.0 {
            Sign::Negative
        } else {
            Sign::Zero
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Sign::Negative => -1.0,
            Sign::Zero => 0.0,
            Sign::Positive => 1.0,
        }
    }

    pub fn as_i8(self) -> i8 {
        self.as_f64() as i8
    }

    pub fn from_i8(s: i8) -> Option<Self> {
        match s {
            -1 => Some(Sign::Negative),
            0 => Some(Sign::Zero),
            1 => Some(Sign::Positive),
            _ => None,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Sign::Negative => Sign::Positive,
            Sign::Zero => Sign::Zero,
            Sign::Positive => Sign::Negative,
        }
    }
}

impl std::ops::Mul for Sign {
    type Output = Sign;

    fn mul(self, rhs: Sign) -> Sign {
        Sign::of(self.as_f64() * rhs.as_f64())
    }
}

/// A real number stored as `sign * exp(log_abs)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignedLog {
    pub sign: Sign,
    pub log_abs: f64,
}

impl SignedLog {
    pub const ZERO: SignedLog = SignedLog {
        sign: Sign::Zero,
        log_abs: f64::NEG_INFINITY,
    };

    pub fn new(sign: Sign, log_abs: f64) -> Self {
        if sign == Sign::Zero || log_abs == f64::NEG_INFINITY {
            Self::ZERO
        } else {
            Self { sign, log_abs }
        }
    }

    pub fn from_value(x: f64) -> Self {
        Self::new(Sign::of(x), x.abs().ln())
    }

    /// The plain value; overflows to +-inf and underflows to 0.
    pub fn value(&self) -> f64 {
        match self.sign {
            Sign::Zero => 0.0,
            s => s.as_f64() * self.log_abs.exp(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.sign == Sign::Zero
    }

    pub fn mul(&self, other: &SignedLog) -> SignedLog {
        SignedLog::new(self.sign * other.sign, self.log_abs + other.log_abs)
    }

    /// Multiply by a plain real factor.
    pub fn scale(&self, c: f64) -> SignedLog {
        self.mul(&SignedLog::from_value(c))
    }
}

/// ln(sum exp(x_i)); -inf for an empty input.
pub fn log_sum_exp<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let xs: Vec<f64> = xs.into_iter().collect();
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Outcome of a signed log-sum-exp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedSum {
    pub total: SignedLog,
    /// True when the positive and negative parts agreed to within the
    /// degeneracy tolerance; `total` is then the zero flag.
    pub degenerate: bool,
}

/// Log-magnitude gap below which opposite-signed parts are treated as an
/// exact cancellation.
pub const DEGENERATE_GAP: f64 = 1e-13;

/// Sum signed log-magnitude terms without leaving log space.
pub fn signed_log_sum(terms: &[SignedLog]) -> SignedSum {
    let pos = log_sum_exp(
        terms
            .iter()
            .filter(|t| t.sign == Sign::Positive)
            .map(|t| t.log_abs),
    );
    let neg = log_sum_exp(
        terms
            .iter()
            .filter(|t| t.sign == Sign::Negative)
            .map(|t| t.log_abs),
    );
    combine(pos, neg)
}

/// `exp(pos) - exp(neg)` in log space.
pub fn combine(pos: f64, neg: f64) -> SignedSum {
    if pos == f64::NEG_INFINITY && neg == f64::NEG_INFINITY {
        return SignedSum {
            total: SignedLog::ZERO,
            degenerate: false,
        };
    }
    if (pos - neg).abs() < DEGENERATE_GAP {
        return SignedSum {
            total: SignedLog::ZERO,
            degenerate: true,
        };
    }
    let (sign, hi, lo) = if pos > neg {
        (Sign::Positive, pos, neg)
    } else {
        (Sign::Negative, neg, pos)
    };
    let log_abs = hi + (-(lo - hi).exp_m1()).ln();
    SignedSum {
        total: SignedLog::new(sign, log_abs),
        degenerate: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lse_basic() {
        assert_eq!(log_sum_exp(Vec::<f64>::new()), f64::NEG_INFINITY);
        assert!((log_sum_exp([0.0, 0.0]) - 2f64.ln()).abs() < 1e-16);
        assert!((log_sum_exp([1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn exact_cancellation_is_flagged() {
        let s = signed_log_sum(&[
            SignedLog::new(Sign::Positive, 5.0),
            SignedLog::new(Sign::Negative, 5.0),
        ]);
        assert!(s.degenerate);
        assert_eq!(s.total.sign, Sign::Zero);
        assert_eq!(s.total.log_abs, f64::NEG_INFINITY);
    }

    #[test]
    fn huge_magnitudes() {
        let s = signed_log_sum(&[
            SignedLog::new(Sign::Positive, 2000.0),
            SignedLog::new(Sign::Negative, 1999.0),
        ]);
        let expect = 2000.0 + (1.0 - (-1.0f64).exp()).ln();
        assert!((s.total.log_abs - expect).abs() < 1e-12);
        assert_eq!(s.total.sign, Sign::Positive);
    }

    proptest! {
        #[test]
        fn agrees_with_plain_sum(xs in prop::collection::vec(-50.0f64..50.0, 1..12)) {
            let plain: f64 = xs.iter().sum();
            prop_assume!(plain.abs() > 1e-3);
            let terms: Vec<SignedLog> = xs.iter().map(|&x| SignedLog::from_value(x)).collect();
            let s = signed_log_sum(&terms);
            let scale: f64 = xs.iter().map(|x| x.abs()).sum();
            // Rounding in the plain sum is relative to the largest term.
            let tol = 1e-12 * (1.0 + scale / plain.abs());
            prop_assert!((s.total.log_abs - plain.abs().ln()).abs() < tol);
            prop_assert_eq!(s.total.sign, Sign::of(plain));
        }
    }
}
