use super::{MLQuery, MLValue, MlConfig, MlError, Regime};
use crate::logspace::{Sign, SignedLog};
use crate::special::{ln_gamma, recip_gamma};

/// Largest log-magnitude for which a term is formed in plain arithmetic.
const LINEAR_LOG_LIMIT: f64 = 690.0;

pub(super) fn evaluate(cfg: &MlConfig, q: &MLQuery, tol: f64) -> Result<MLValue, MlError> {
    q.validate()?;
    if !(tol > 0.0) {
        return Err(MlError::RangeError(format!("tol = {tol} must be positive")));
    }
    if q.z == 0.0 {
        return Ok(MLValue::from_value(
            recip_gamma(q.mu),
            f64::EPSILON,
            Regime::Series,
        ));
    }
    let w = q.pole_radius();
    let radius = if q.z > 0.0 {
        cfg.series_radius_pos_w
    } else {
        cfg.series_radius_neg_w
    };
    if w > radius {
        return Err(MlError::RangeError(format!(
            "|z|^(1/rho) = {w} exceeds the series radius {radius}"
        )));
    }
    if q.z > 0.0 && w > 0.8 * LINEAR_LOG_LIMIT / 2.0 {
        positive_log(cfg, q, tol)
    } else {
        linear(cfg, q, tol)
    }
}

struct Term {
    value: f64,
    /// |m ln z| + |ln Γ|, the scale of the rounding error in `value`.
    log_scale: f64,
}

fn term(q: &MLQuery, m: usize, ln_abs_z: f64) -> Term {
    let arg = q.rho * m as f64 + q.mu;
    let a = m as f64 * ln_abs_z;
    let lg = ln_gamma(arg);
    let mag = if a.abs() < LINEAR_LOG_LIMIT && arg < 170.0 {
        // powi keeps the power within a few ulps; exp(m ln|z|) would not.
        q.z.abs().powi(m as i32) * recip_gamma(arg)
    } else {
        (a - lg).exp()
    };
    let sign = if q.z < 0.0 && m % 2 == 1 { -1.0 } else { 1.0 };
    Term {
        value: sign * mag,
        log_scale: a.abs() + lg.abs(),
    }
}

/// Neumaier-compensated summation in ordinary arithmetic.
fn linear(cfg: &MlConfig, q: &MLQuery, tol: f64) -> Result<MLValue, MlError> {
    let ln_abs_z = q.z.abs().ln();
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    let mut max_term = 0.0_f64;
    let mut rounding = 0.0_f64;
    let mut small = 0;
    for m in 0..cfg.term_cap {
        let t = term(q, m, ln_abs_z);
        let x = t.value;
        let s = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - s) + x;
        } else {
            comp += (x - s) + sum;
        }
        sum = s;
        max_term = max_term.max(x.abs());
        rounding += x.abs() * (16.0 + t.log_scale);
        let partial = (sum + comp).abs();
        if x.abs() < tol * partial || x == 0.0 {
            small += 1;
            if small >= 2 {
                let value = sum + comp;
                let eps = f64::EPSILON;
                let mut est = if value == 0.0 {
                    f64::INFINITY
                } else {
                    (rounding * eps + 2.0 * x.abs()) / value.abs()
                };
                if q.z < 0.0 && value != 0.0 {
                    est += max_term / value.abs() * eps;
                }
                return Ok(MLValue::from_value(value, est, Regime::Series));
            }
        } else {
            small = 0;
        }
    }
    Err(MlError::NonConvergence {
        terms: cfg.term_cap,
    })
}

/// Positive z whose terms may exceed the `f64` range: running log-sum-exp.
fn positive_log(cfg: &MlConfig, q: &MLQuery, tol: f64) -> Result<MLValue, MlError> {
    let ln_z = q.z.ln();
    let ln_tol = tol.ln();
    let mut peak = f64::NEG_INFINITY;
    let mut scaled = 0.0_f64;
    let mut max_scale = 0.0_f64;
    let mut small = 0;
    for m in 0..cfg.term_cap {
        let a = m as f64 * ln_z;
        let lg = ln_gamma(q.rho * m as f64 + q.mu);
        let l = a - lg;
        if l > peak {
            scaled = scaled * (peak - l).exp() + 1.0;
            peak = l;
        } else {
            scaled += (l - peak).exp();
        }
        max_scale = max_scale.max(a.abs() + lg.abs());
        let log_partial = peak + scaled.ln();
        if l < ln_tol + log_partial {
            small += 1;
            if small >= 2 {
                let est = f64::EPSILON * (16.0 + 2.0 * max_scale)
                    + 2.0 * (l - log_partial).exp();
                return Ok(MLValue::from_log(
                    SignedLog::new(Sign::Positive, log_partial),
                    est,
                    Regime::Series,
                ));
            }
        } else {
            small = 0;
        }
    }
    Err(MlError::NonConvergence {
        terms: cfg.term_cap,
    })
}
