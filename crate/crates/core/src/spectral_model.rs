//! Spectral description of the forward problem and evaluation of its solution
//!
//! u(x, t) = Σ_k t^{ρ-1} E_{ρ,ρ}(-λ_k t^ρ) P_kφ(x)      (Riemann-Liouville)
//! u(x, t) = Σ_k E_{ρ,1}(-λ_k t^ρ) P_kφ(x)              (Caputo)
//!
//! in ordinary and log scale, together with the split of u into the leading
//! mode, the remaining growing modes and the decaying modes.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::logspace::{signed_log_sum, SignedLog};
use crate::mittag_leffler::{ml, MLQuery, MlError};

/// Eigenvalues closer than this (relative) are one mode.
pub const MERGE_TOL: f64 = 1e-10;
/// Default tolerance for |λ₁ + 1| in [`SpectralModel::check_assumption6`].
pub const ASSUMPTION6_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("EmptyModel: the model has no modes")]
    EmptyModel,
    #[error("InvalidModel: {0}")]
    InvalidModel(String),
    #[error("PointOutOfRange: point {index} but the model has {count} points")]
    PointOutOfRange { index: usize, count: usize },
    #[error("InvalidTime: t = {0} must be positive and finite")]
    InvalidTime(f64),
    #[error("Overflow: u(t = {t}) is not representable; use the log-scale solver")]
    Overflow { t: f64 },
    #[error("ZeroProjection: P_1 phi vanishes at point {point}")]
    ZeroProjection { point: usize },
    #[error("NotGrowing: leading eigenvalue {lambda1} is not negative")]
    NotGrowing { lambda1: f64 },
    #[error(transparent)]
    Ml(#[from] MlError),
    #[error("ParseError: {0}")]
    Parse(String),
}

/// Time-derivative convention of the equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    RiemannLiouville,
    Caputo,
}

impl Convention {
    pub fn name(self) -> &'static str {
        match self {
            Convention::RiemannLiouville => "riemann_liouville",
            Convention::Caputo => "caputo",
        }
    }
}

impl std::str::FromStr for Convention {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rl" | "riemann_liouville" => Ok(Convention::RiemannLiouville),
            "caputo" => Ok(Convention::Caputo),
            _ => Err(format!("unknown convention '{s}' (expected rl or caputo)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitoringPoint {
    pub label: String,
    pub coords: Vec<f64>,
}

/// One distinct eigenvalue with the projection of φ onto its eigenspace,
/// evaluated at every monitoring point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralMode {
    pub lambda: f64,
    pub coeffs: Vec<f64>,
}

/// Measured decay of the aggregated coefficients a_k = Σ_x |P_kφ(x)|.
///
/// Modes with a_k = 0 are skipped, so `k` counts nonzero modes only. A power
/// law k^{-p} is fitted to the tail envelope max_{j>=k} a_j over the upper
/// half of that range.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayReport {
    /// Fitted exponent p; infinite when too few nonzero modes to fit.
    pub exponent: f64,
    /// a_last / max a_k.
    pub tail_ratio: f64,
    /// Estimated Σ_{k>n} |P_kφ(x)| beyond the stored modes, per point.
    pub tail_estimate: Vec<f64>,
    pub nonzero_modes: usize,
    pub summable: bool,
}

/// λ₁ < 0 and λ₁ ≠ -1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assumption6Status {
    pub lambda1: f64,
    pub satisfied: bool,
    pub reason: String,
}

/// Solution value with the bound on the contribution of unstored modes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ForwardValue {
    pub value: f64,
    pub tail_bound: f64,
}

/// Log-scale solution value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogValue {
    pub value: SignedLog,
    /// Positive and negative parts cancelled to within the degeneracy gap;
    /// `value` is then sign 0, log_abs -inf.
    pub degenerate: bool,
}

/// The split u = u₁ + Σ′ + Σ″ at one point and time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decomposition {
    pub u1: SignedLog,
    /// Remaining modes with λ < 0.
    pub sigma_prime: SignedLog,
    /// Modes with λ >= 0.
    pub sigma_dprime: SignedLog,
    /// |λ₁|^{1/ρ} - |λ₂|^{1/ρ} if λ₂ < 0, else |λ₁|^{1/ρ}.
    pub epsilon: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelFile {
    kind: Convention,
    points: Vec<MonitoringPoint>,
    modes: Vec<SpectralMode>,
}

/// Ordered modes, monitoring points and derivative convention. Immutable.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralModel {
    kind: Convention,
    points: Vec<MonitoringPoint>,
    modes: Vec<SpectralMode>,
    decay: DecayReport,
}

impl SpectralModel {
    /// Sorts modes by λ, merges eigenvalues equal to within [`MERGE_TOL`]
    /// (summing their coefficients) and measures the coefficient decay.
    pub fn new(
        kind: Convention,
        points: Vec<MonitoringPoint>,
        mut modes: Vec<SpectralMode>,
    ) -> Result<Self, ModelError> {
        if modes.is_empty() {
            return Err(ModelError::EmptyModel);
        }
        let np = points.len();
        for (i, m) in modes.iter().enumerate() {
            if !m.lambda.is_finite() {
                return Err(ModelError::InvalidModel(format!(
                    "mode {i}: lambda = {} is not finite",
                    m.lambda
                )));
            }
            if m.coeffs.len() != np {
                return Err(ModelError::InvalidModel(format!(
                    "mode {i}: {} coefficients for {np} points",
                    m.coeffs.len()
                )));
            }
            if m.coeffs.iter().any(|c| !c.is_finite()) {
                return Err(ModelError::InvalidModel(format!(
                    "mode {i}: non-finite coefficient"
                )));
            }
        }
        modes.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
        let mut merged: Vec<SpectralMode> = Vec::with_capacity(modes.len());
        for m in modes {
            match merged.last_mut() {
                Some(last)
                    if (m.lambda - last.lambda).abs()
                        <= MERGE_TOL * m.lambda.abs().max(last.lambda.abs()) =>
                {
                    for (c, d) in last.coeffs.iter_mut().zip(&m.coeffs) {
                        *c += d;
                    }
                }
                _ => merged.push(m),
            }
        }
        let decay = decay_report(&merged, np);
        Ok(Self {
            kind,
            points,
            modes: merged,
            decay,
        })
    }

    pub fn kind(&self) -> Convention {
        self.kind
    }

    pub fn points(&self) -> &[MonitoringPoint] {
        &self.points
    }

    pub fn modes(&self) -> &[SpectralMode] {
        &self.modes
    }

    pub fn decay_report(&self) -> &DecayReport {
        &self.decay
    }

    pub fn lambda1(&self) -> f64 {
        self.modes[0].lambda
    }

    /// Number of negative eigenvalues.
    pub fn negative_count(&self) -> usize {
        self.modes.iter().take_while(|m| m.lambda < 0.0).count()
    }

    /// The same model with the derivative convention replaced.
    pub fn with_kind(&self, kind: Convention) -> Self {
        Self {
            kind,
            ..self.clone()
        }
    }

    /// The first `n` modes only.
    pub fn truncated(&self, n: usize) -> Result<Self, ModelError> {
        Self::new(
            self.kind,
            self.points.clone(),
            self.modes.iter().take(n).cloned().collect(),
        )
    }

    pub fn check_point(&self, point: usize) -> Result<(), ModelError> {
        if point < self.points.len() {
            Ok(())
        } else {
            Err(ModelError::PointOutOfRange {
                index: point,
                count: self.points.len(),
            })
        }
    }

    fn check_time(t: f64) -> Result<(), ModelError> {
        if t > 0.0 && t.is_finite() {
            Ok(())
        } else {
            Err(ModelError::InvalidTime(t))
        }
    }

    /// Time factor of one mode: t^{ρ-1} E_{ρ,ρ}(-λ t^ρ) or E_{ρ,1}(-λ t^ρ).
    pub fn kernel(&self, rho: f64, lambda: f64, t: f64) -> Result<SignedLog, ModelError> {
        kernel(self.kind, rho, lambda, t)
    }

    /// φ(x) as represented by the stored modes, Σ_k P_kφ(x).
    pub fn initial_value(&self, point: usize) -> f64 {
        self.modes.iter().map(|m| m.coeffs[point]).sum()
    }

    /// Σ_k E_{ρ,1}(-λ_k t^ρ) P_kφ(x), which is J^{1-ρ}u for the RL solution
    /// and u itself for the Caputo one.
    pub fn relaxation_sum(&self, rho: f64, point: usize, t: f64) -> Result<f64, ModelError> {
        self.check_point(point)?;
        Self::check_time(t)?;
        let mut sum = 0.0;
        for m in &self.modes {
            let c = m.coeffs[point];
            if c != 0.0 {
                sum += c * kernel(Convention::Caputo, rho, m.lambda, t)?.value();
            }
        }
        Ok(sum)
    }

    /// Au(x, t) = Σ_k λ_k (time factor) P_kφ(x).
    pub fn apply_operator(&self, rho: f64, point: usize, t: f64) -> Result<f64, ModelError> {
        self.check_point(point)?;
        Self::check_time(t)?;
        let mut sum = 0.0;
        for m in &self.modes {
            let c = m.coeffs[point];
            if c != 0.0 && m.lambda != 0.0 {
                sum += m.lambda * c * self.kernel(rho, m.lambda, t)?.value();
            }
        }
        if !sum.is_finite() {
            return Err(ModelError::Overflow { t });
        }
        Ok(sum)
    }

    fn terms(&self, rho: f64, point: usize, t: f64) -> Result<Vec<SignedLog>, ModelError> {
        self.check_point(point)?;
        Self::check_time(t)?;
        self.modes
            .iter()
            .filter(|m| m.coeffs[point] != 0.0)
            .map(|m| Ok(self.kernel(rho, m.lambda, t)?.scale(m.coeffs[point])))
            .collect()
    }

    /// u(x, t) over all stored modes, with the bound on unstored modes.
    pub fn solve_forward(&self, rho: f64, point: usize, t: f64) -> Result<ForwardValue, ModelError> {
        let terms = self.terms(rho, point, t)?;
        let mut sum = 0.0_f64;
        let mut comp = 0.0_f64;
        for term in &terms {
            let x = term.value();
            if !x.is_finite() {
                return Err(ModelError::Overflow { t });
            }
            let s = sum + x;
            comp += if sum.abs() >= x.abs() {
                (sum - s) + x
            } else {
                (x - s) + sum
            };
            sum = s;
        }
        let value = sum + comp;
        if !value.is_finite() {
            return Err(ModelError::Overflow { t });
        }
        let c = kernel_bound(self.kind, rho)?;
        let prefactor = match self.kind {
            Convention::RiemannLiouville => t.powf(rho - 1.0),
            Convention::Caputo => 1.0,
        };
        let tail_bound = c * prefactor * self.decay.tail_estimate[point];
        Ok(ForwardValue { value, tail_bound })
    }

    /// u(x, t) in log scale by signed log-sum-exp over the modes.
    pub fn solve_forward_log(&self, rho: f64, point: usize, t: f64) -> Result<LogValue, ModelError> {
        let terms = self.terms(rho, point, t)?;
        let s = signed_log_sum(&terms);
        Ok(LogValue {
            value: s.total,
            degenerate: s.degenerate,
        })
    }

    fn require_growing(&self, point: usize) -> Result<f64, ModelError> {
        self.check_point(point)?;
        let l1 = self.lambda1();
        if !(l1 < 0.0) {
            return Err(ModelError::NotGrowing { lambda1: l1 });
        }
        let c = self.modes[0].coeffs[point];
        if c == 0.0 {
            return Err(ModelError::ZeroProjection { point });
        }
        Ok(c)
    }

    /// The first-mode contribution u₁ in log scale.
    pub fn leading_term(&self, rho: f64, point: usize, t: f64) -> Result<SignedLog, ModelError> {
        let c = self.require_growing(point)?;
        Self::check_time(t)?;
        Ok(self.kernel(rho, self.lambda1(), t)?.scale(c))
    }

    /// u = u₁ + Σ′ + Σ″ with the gap ε between the first two growth rates.
    pub fn asymptotic_decomposition(
        &self,
        rho: f64,
        point: usize,
        t: f64,
    ) -> Result<Decomposition, ModelError> {
        let u1 = self.leading_term(rho, point, t)?;
        let mut prime = Vec::new();
        let mut dprime = Vec::new();
        for m in &self.modes[1..] {
            let c = m.coeffs[point];
            if c == 0.0 {
                continue;
            }
            let term = self.kernel(rho, m.lambda, t)?.scale(c);
            if m.lambda < 0.0 {
                prime.push(term);
            } else {
                dprime.push(term);
            }
        }
        let rate = |l: f64| (l.abs().ln() / rho).exp();
        let l1 = self.lambda1();
        let epsilon = match self.modes.get(1) {
            Some(m) if m.lambda < 0.0 => rate(l1) - rate(m.lambda),
            _ => rate(l1),
        };
        Ok(Decomposition {
            u1,
            sigma_prime: signed_log_sum(&prime).total,
            sigma_dprime: signed_log_sum(&dprime).total,
            epsilon,
        })
    }

    pub fn check_assumption6(&self) -> Assumption6Status {
        self.check_assumption6_with_tol(ASSUMPTION6_TOL)
    }

    pub fn check_assumption6_with_tol(&self, tol: f64) -> Assumption6Status {
        let l1 = self.lambda1();
        let (satisfied, reason) = if !(l1 < 0.0) {
            (false, "λ₁ ≥ 0".to_string())
        } else if (l1 + 1.0).abs() <= tol {
            (false, "λ₁ = −1 is excluded".to_string())
        } else {
            (true, "λ₁ < 0 and λ₁ ≠ −1".to_string())
        };
        Assumption6Status {
            lambda1: l1,
            satisfied,
            reason,
        }
    }

    /// Time after which the leading-mode asymptotic exceeds 1 in magnitude:
    /// max(0, -ln β / |λ₁|^{1/ρ}) with β = (1/ρ)|λ₁|^{1/ρ-1}|P₁φ(x)|.
    pub fn crossing_time(&self, rho: f64, point: usize) -> Result<f64, ModelError> {
        let c = self.require_growing(point)?;
        let l = self.lambda1().abs();
        let rate = (l.ln() / rho).exp();
        let ln_beta = -rho.ln() + (1.0 / rho - 1.0) * l.ln() + c.abs().ln();
        Ok((-ln_beta / rate).max(0.0))
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            kind: self.kind,
            points: self.points.clone(),
            modes: self.modes.clone(),
        };
        serde_json::to_string_pretty(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let file: ModelFile = serde_json::from_str(text)
            .map_err(|e| ModelError::Parse(format!("line {}, column {}: {e}", e.line(), e.column())))?;
        Self::new(file.kind, file.points, file.modes)
    }
}

fn kernel(kind: Convention, rho: f64, lambda: f64, t: f64) -> Result<SignedLog, ModelError> {
    let z = -lambda * t.powf(rho);
    match kind {
        Convention::RiemannLiouville => {
            let e = ml(&MLQuery::new(rho, rho, z)?)?;
            Ok(SignedLog::new(e.sign, e.log_abs + (rho - 1.0) * t.ln()))
        }
        Convention::Caputo => {
            let e = ml(&MLQuery::new(rho, 1.0, z)?)?;
            Ok(e.signed_log())
        }
    }
}

/// max over z >= 0 of |E_{ρ,ρ}(-z)| (RL) or |E_{ρ,1}(-z)| (Caputo), found by
/// scanning; cached per (ρ, convention).
pub fn kernel_bound(kind: Convention, rho: f64) -> Result<f64, ModelError> {
    static CACHE: OnceLock<Mutex<HashMap<(u64, Convention), f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (rho.to_bits(), kind);
    if let Some(&c) = cache.lock().expect("cache lock").get(&key) {
        return Ok(c);
    }
    let mu = match kind {
        Convention::RiemannLiouville => rho,
        Convention::Caputo => 1.0,
    };
    let mut best = 0.0_f64;
    let zs = std::iter::once(0.0).chain((0..=400).map(|i| 10f64.powf(-3.0 + 6.0 * i as f64 / 400.0)));
    for z in zs {
        best = best.max(ml(&MLQuery::new(rho, mu, -z)?)?.value.abs());
    }
    cache.lock().expect("cache lock").insert(key, best);
    Ok(best)
}

fn decay_report(modes: &[SpectralMode], points: usize) -> DecayReport {
    let agg: Vec<(usize, f64)> = modes
        .iter()
        .enumerate()
        .map(|(i, m)| (i, m.coeffs.iter().map(|c| c.abs()).sum::<f64>()))
        .filter(|&(_, a)| a > 0.0)
        .collect();
    let n = agg.len();
    let max_a = agg.iter().map(|p| p.1).fold(0.0, f64::max);
    let tail_ratio = match agg.last() {
        Some(&(_, a)) if max_a > 0.0 => a / max_a,
        _ => 0.0,
    };
    // Fit the envelope max_{j >= k} a_j: at a single point a_k dips near the
    // nodes of the eigenfunctions, which a raw fit reads as slow decay.
    let mut envelope: Vec<f64> = agg.iter().map(|p| p.1).collect();
    for k in (0..n.saturating_sub(1)).rev() {
        envelope[k] = envelope[k].max(envelope[k + 1]);
    }
    let lo = n / 2;
    let fit: Vec<(f64, f64)> = envelope[lo..]
        .iter()
        .enumerate()
        .map(|(j, &a)| (((lo + j + 1) as f64).ln(), a.ln()))
        .collect();
    let exponent = if fit.len() < 3 {
        f64::INFINITY
    } else {
        let m = fit.len() as f64;
        let mx = fit.iter().map(|p| p.0).sum::<f64>() / m;
        let my = fit.iter().map(|p| p.1).sum::<f64>() / m;
        let sxy: f64 = fit.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = fit.iter().map(|p| (p.0 - mx).powi(2)).sum();
        -sxy / sxx
    };
    let summable = exponent > 1.0;
    // Σ_{k>n} C k^{-p} ≈ a_n n / (p - 1), with a_n averaged over the last few modes.
    let last: Vec<usize> = agg.iter().rev().take(5).map(|p| p.0).collect();
    let tail_estimate = (0..points)
        .map(|x| {
            if exponent.is_infinite() {
                0.0
            } else if !summable {
                f64::INFINITY
            } else {
                let mean = last.iter().map(|&i| modes[i].coeffs[x].abs()).sum::<f64>()
                    / last.len() as f64;
                mean * n as f64 / (exponent - 1.0)
            }
        })
        .collect();
    DecayReport {
        exponent,
        tail_ratio,
        tail_estimate,
        nonzero_modes: n,
        summable,
    }
}
