use std::f64::consts::PI;

use super::{MLQuery, MLValue, MlConfig, MlError, Regime};
use crate::logspace::{signed_log_sum, Sign, SignedLog};
use crate::special::recip_gamma;

/// Σ_{k=1}^{K} z^{-k} / Γ(μ - ρk), truncated at the smallest term.
struct AlgebraicTail {
    sum: f64,
    abs_sum: f64,
    /// Truncation error estimate: twice the first omitted term(s).
    omitted: f64,
}

fn algebraic_tail(rho: f64, mu: f64, z: f64, terms: usize) -> AlgebraicTail {
    let term = |k: usize| z.powi(-(k as i32)) * recip_gamma(mu - rho * k as f64);
    let mut sum = 0.0;
    let mut abs_sum = 0.0;
    let mut prev = 0.0_f64;
    let mut k = 1;
    while k <= terms {
        let t = term(k);
        // Past the smallest term the series only gets worse.
        if k >= 3 && prev != 0.0 && t.abs() > prev.abs() {
            return AlgebraicTail {
                sum,
                abs_sum,
                omitted: 2.0 * t.abs(),
            };
        }
        sum += t;
        abs_sum += t.abs();
        if t != 0.0 {
            prev = t;
        }
        k += 1;
    }
    // The next coefficient may sit on a pole of Γ; look one further.
    let omitted = 2.0 * (term(k).abs() + term(k + 1).abs());
    AlgebraicTail {
        sum,
        abs_sum,
        omitted,
    }
}

pub(super) fn positive(cfg: &MlConfig, q: &MLQuery, terms: usize) -> Result<MLValue, MlError> {
    q.validate()?;
    if !(q.z > 0.0) || q.pole_radius() < cfg.pos_asymptotic_min_w {
        return Err(MlError::RangeError(format!(
            "z = {} below the positive asymptotic switch point {}",
            q.z,
            cfg.pos_asymptotic_min_w.powf(q.rho)
        )));
    }
    let (rho, mu) = (q.rho, q.mu);
    let ln_z = q.z.ln();
    let w = (ln_z / rho).exp();
    let lead = w + (1.0 - mu) / rho * ln_z - rho.ln();
    let tail = algebraic_tail(rho, mu, q.z, terms);
    let total = signed_log_sum(&[
        SignedLog::new(Sign::Positive, lead),
        SignedLog::from_value(-tail.sum),
    ])
    .total;
    let rel = |abs: f64| {
        if abs == 0.0 {
            0.0
        } else {
            (abs.ln() - total.log_abs).exp()
        }
    };
    // Exponentially small contributions from the conjugate saddle points.
    let beyond = (lead - 2.0 * w - total.log_abs).exp();
    let est = rel(tail.omitted)
        + beyond
        + rel(tail.abs_sum) * 16.0 * f64::EPSILON
        // w = z^(1/ρ) carries a relative rounding error of about eps ln w.
        + f64::EPSILON * (4.0 + 2.0 * lead.abs() + 2.0 * w * (1.0 + w.ln().abs()));
    Ok(MLValue::from_log(total, est, Regime::AsymptoticPositive))
}

pub(super) fn negative(cfg: &MlConfig, q: &MLQuery, terms: usize) -> Result<MLValue, MlError> {
    q.validate()?;
    if terms < 2 {
        return Err(MlError::RangeError(format!(
            "negative asymptotic needs at least 2 terms, got {terms}"
        )));
    }
    if !(q.z < -cfg.neg_switch) {
        return Err(MlError::RangeError(format!(
            "|z| = {} below the negative asymptotic switch point {}",
            q.z.abs(),
            cfg.neg_switch
        )));
    }
    let (rho, mu) = (q.rho, q.mu);
    let x = -q.z;
    let w = q.pole_radius();
    let tail = algebraic_tail(rho, mu, q.z, terms);
    // Pole terms can underflow (e^{-x} for ρ = 1), so everything is combined
    // in log scale; error contributions are kept as log magnitudes as well.
    let mut parts = vec![SignedLog::from_value(-tail.sum)];
    let mut errors = vec![
        SignedLog::from_value(tail.omitted),
        SignedLog::from_value(16.0 * f64::EPSILON * tail.abs_sum),
    ];
    let rounding = |log_mag: f64, size: f64| {
        SignedLog::new(Sign::Positive, log_mag + (f64::EPSILON * (2.0 + size)).ln())
    };
    if rho > 1.0 {
        // Complex-conjugate poles at w e^{±iπ/ρ} lie on the principal sheet.
        let theta = PI / rho;
        let log_mag = (2.0 / rho).ln() + (1.0 - mu) * w.ln() + w * theta.cos();
        let phase = (w * theta.sin() + (1.0 - mu) * theta).cos();
        let residue = SignedLog::new(Sign::of(phase), log_mag + phase.abs().ln());
        parts.push(residue);
        errors.push(rounding(log_mag, 2.0 * w * (1.0 + w.ln().abs())));
    } else if rho == 1.0 {
        let n = 1.0 - mu;
        let log_pole = n * x.ln() - x;
        if n == n.round() {
            // Real pole at s = z; no branch cut for integer μ.
            let sign = if (n as i64).rem_euclid(2) == 0 {
                Sign::Positive
            } else {
                Sign::Negative
            };
            parts.push(SignedLog::new(sign, log_pole));
            errors.push(rounding(log_pole, x));
        } else {
            errors.push(SignedLog::new(Sign::Positive, log_pole));
        }
    }
    let total = signed_log_sum(&parts).total;
    let abs_err = signed_log_sum(&errors).total;
    let est = if total.is_zero() {
        f64::INFINITY
    } else if abs_err.is_zero() {
        0.0
    } else {
        (abs_err.log_abs - total.log_abs).exp()
    };
    Ok(MLValue::from_log(total, est, Regime::AsymptoticNegative))
}
