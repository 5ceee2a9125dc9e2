//! Two-parameter Mittag-Leffler function
//!
//! E_{ρ,μ}(z) = Σ_{m≥0} z^m / Γ(ρm + μ)
//!
//! for real `z` of either sign. Four evaluation regimes are available:
//! the defining series, the exponential asymptotic for large positive `z`,
//! the algebraic asymptotic (plus on-sheet pole residues) for large negative
//! `z`, and a Hankel-contour integral for the negative mid range where the
//! series cancels catastrophically and the asymptotic is not yet accurate.
//! [`ml`] picks one; every result carries its log magnitude so values beyond
//! `f64` range stay usable.

mod asymptotic;
mod contour;
mod series;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::logspace::{Sign, SignedLog};

/// Inclusive order range of the accuracy contract.
pub const RHO_RANGE: (f64, f64) = (0.1, 2.0);
/// Supported second parameter: `0 < mu <= MU_MAX`.
pub const MU_MAX: f64 = 3.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MlError {
    #[error("RangeError: {0}")]
    RangeError(String),
    #[error("NonConvergence: series not converged after {terms} terms")]
    NonConvergence { terms: usize },
}

/// Arguments of E_{ρ,μ}(z).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MLQuery {
    pub rho: f64,
    pub mu: f64,
    pub z: f64,
}

impl MLQuery {
    pub fn new(rho: f64, mu: f64, z: f64) -> Result<Self, MlError> {
        let q = Self { rho, mu, z };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<(), MlError> {
        let (lo, hi) = RHO_RANGE;
        if !(self.rho >= lo && self.rho <= hi) {
            return Err(MlError::RangeError(format!(
                "rho = {} outside [{lo}, {hi}]",
                self.rho
            )));
        }
        if !(self.mu > 0.0 && self.mu <= MU_MAX) {
            return Err(MlError::RangeError(format!(
                "mu = {} outside (0, {MU_MAX}]",
                self.mu
            )));
        }
        if !self.z.is_finite() {
            return Err(MlError::RangeError(format!("z = {} is not finite", self.z)));
        }
        Ok(())
    }

    /// |z|^{1/ρ}, the modulus of the poles of the Laplace-domain integrand.
    pub fn pole_radius(&self) -> f64 {
        (self.z.abs().ln() / self.rho).exp()
    }
}

/// Which evaluation branch produced a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Series,
    AsymptoticPositive,
    AsymptoticNegative,
    Contour,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Series => "series",
            Regime::AsymptoticPositive => "asymptotic_pos",
            Regime::AsymptoticNegative => "asymptotic_neg",
            Regime::Contour => "contour",
        }
    }

    /// Worst-case relative error [`ml`] accepts from this branch under the
    /// default configuration.
    pub fn advertised_bound(self) -> f64 {
        match self {
            Regime::Series => 1e-10,
            Regime::AsymptoticPositive => 1e-10,
            Regime::AsymptoticNegative => 1e-11,
            Regime::Contour => 1e-8,
        }
    }

    /// [`Regime::advertised_bound`] plus the unavoidable part: w = |z|^{1/ρ}
    /// is only known to about eps·ln w relative, and the value responds to
    /// an absolute error in w one for one.
    pub fn advertised_bound_at(self, q: &MLQuery) -> f64 {
        let w = q.pole_radius();
        let sensitivity = if w > 1.0 { w * (1.0 + w.ln()) } else { 1.0 };
        self.advertised_bound() + 4.0 * f64::EPSILON * sensitivity
    }
}

/// A Mittag-Leffler value with its log magnitude and error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MLValue {
    /// The value, or +-inf when it exceeds the `f64` range.
    pub value: f64,
    pub log_abs: f64,
    pub sign: Sign,
    pub est_rel_error: f64,
    pub regime: Regime,
}

impl MLValue {
    fn from_value(value: f64, est_rel_error: f64, regime: Regime) -> Self {
        Self {
            value,
            log_abs: value.abs().ln(),
            sign: Sign::of(value),
            est_rel_error,
            regime,
        }
    }

    fn from_log(s: SignedLog, est_rel_error: f64, regime: Regime) -> Self {
        Self {
            value: s.value(),
            log_abs: s.log_abs,
            sign: s.sign,
            est_rel_error,
            regime,
        }
    }

    pub fn signed_log(&self) -> SignedLog {
        SignedLog::new(self.sign, self.log_abs)
    }

    /// The value fits an `f64` without overflowing or underflowing to 0.
    pub fn is_representable(&self) -> bool {
        self.value.is_finite() && (self.value != 0.0 || self.sign == Sign::Zero)
    }
}

/// Switch points and truncation limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlConfig {
    /// [`ml`] sums the series for z > 0 while z^{1/ρ} is at most this.
    pub pos_switch_w: f64,
    /// Smallest z^{1/ρ} accepted by the positive asymptotic branch.
    pub pos_asymptotic_min_w: f64,
    /// [`ml`] sums the series for z < 0 while |z|^{1/ρ} is at most this.
    pub neg_series_w: f64,
    /// Smallest |z| accepted by the negative asymptotic branch.
    pub neg_switch: f64,
    /// Series radius in terms of |z|^{1/ρ}, for z > 0 and z < 0.
    pub series_radius_pos_w: f64,
    pub series_radius_neg_w: f64,
    pub term_cap: usize,
    /// Algebraic tail length for the asymptotic branches.
    pub tail_terms: usize,
    /// [`ml`] takes the negative asymptotic only when its own estimate is below this.
    pub neg_accept: f64,
    /// Relative stopping tolerance for the series.
    pub series_tol: f64,
}

impl Default for MlConfig {
    fn default() -> Self {
        Self {
            pos_switch_w: 40.0,
            pos_asymptotic_min_w: 6.0,
            neg_series_w: 4.0,
            neg_switch: 12.0,
            series_radius_pos_w: 700.0,
            series_radius_neg_w: 10.0,
            term_cap: 12_000,
            tail_terms: 10,
            neg_accept: 1e-12,
            series_tol: 1e-17,
        }
    }
}

impl MlConfig {
    /// Positive z above which [`ml`] uses the asymptotic branch.
    pub fn pos_switch(&self, rho: f64) -> f64 {
        self.pos_switch_w.powf(rho)
    }

    pub fn series(&self, q: &MLQuery, tol: f64) -> Result<MLValue, MlError> {
        series::evaluate(self, q, tol)
    }

    pub fn asymptotic_pos(&self, q: &MLQuery, terms: usize) -> Result<MLValue, MlError> {
        asymptotic::positive(self, q, terms)
    }

    pub fn asymptotic_neg(&self, q: &MLQuery, terms: usize) -> Result<MLValue, MlError> {
        asymptotic::negative(self, q, terms)
    }

    pub fn contour(&self, q: &MLQuery) -> Result<MLValue, MlError> {
        contour::evaluate(q)
    }

    /// Regime dispatcher.
    pub fn eval(&self, q: &MLQuery) -> Result<MLValue, MlError> {
        q.validate()?;
        if q.z == 0.0 {
            return self.series(q, self.series_tol);
        }
        let w = q.pole_radius();
        if q.z > 0.0 {
            if w <= self.pos_switch_w {
                self.series(q, self.series_tol)
            } else {
                self.asymptotic_pos(q, self.tail_terms)
            }
        } else if w <= self.neg_series_w {
            self.series(q, self.series_tol)
        } else {
            let mut asym = None;
            if -q.z > self.neg_switch {
                let a = self.asymptotic_neg(q, self.tail_terms)?;
                if a.est_rel_error <= self.neg_accept {
                    return Ok(a);
                }
                asym = Some(a);
            }
            let c = self.contour(q)?;
            match asym {
                Some(a) if a.est_rel_error < c.est_rel_error => Ok(a),
                _ => Ok(c),
            }
        }
    }
}

/// Series summation with the default configuration.
pub fn ml_series(q: &MLQuery, tol: f64) -> Result<MLValue, MlError> {
    MlConfig::default().series(q, tol)
}

/// Exponential asymptotic for large positive z.
pub fn ml_asymptotic_pos(q: &MLQuery, terms: usize) -> Result<MLValue, MlError> {
    MlConfig::default().asymptotic_pos(q, terms)
}

/// Algebraic asymptotic for large negative z.
pub fn ml_asymptotic_neg(q: &MLQuery, terms: usize) -> Result<MLValue, MlError> {
    MlConfig::default().asymptotic_neg(q, terms)
}

/// Hankel-contour evaluation, valid for any supported query.
pub fn ml_contour(q: &MLQuery) -> Result<MLValue, MlError> {
    MlConfig::default().contour(q)
}

/// E_{ρ,μ}(z) through the default regime dispatcher.
pub fn ml(q: &MLQuery) -> Result<MLValue, MlError> {
    MlConfig::default().eval(q)
}

/// Convenience wrapper returning only the value.
pub fn ml_value(rho: f64, mu: f64, z: f64) -> Result<f64, MlError> {
    ml(&MLQuery::new(rho, mu, z)?).map(|v| v.value)
}
