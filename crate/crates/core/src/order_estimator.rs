//! Recovery of the fractional order ρ from a solution time series.
//!
//! `estimate_thm1` and `estimate_slope` use the growth rate |λ₁|^{1/ρ} of a
//! growing solution and need λ₁. The two Hatano-type estimators read ρ off
//! logarithmic derivatives and serve as baselines.

use std::io::{Read, Write};
use std::ops::Range;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::logspace::{Sign, SignedLog};
use crate::spectral_model::{ModelError, SpectralModel, ASSUMPTION6_TOL};

pub const MIN_SAMPLES: usize = 8;

/// Largest noise level accepted by [`add_noise`].
pub const MAX_NOISE: f64 = 0.2;

/// |a - 1| below this makes the slope estimator degenerate.
pub const SLOPE_DEGENERACY: f64 = 1e-9;

/// |u - φ| ≤ this times |φ| counts as a vanishing denominator.
pub const DENOMINATOR_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("Assumption6Violated: lambda1 = {lambda1} ({reason})")]
    Assumption6Violated { lambda1: f64, reason: String },
    #[error("WindowTooSmall: {usable} usable samples, need {needed}")]
    WindowTooSmall { usable: usize, needed: usize },
    #[error("OutOfRange: {method} gives rho_hat = {rho_hat}, outside (0, 1)")]
    OutOfRange { method: Method, rho_hat: f64 },
    #[error("SlopeDegenerate: fitted slope a = {slope}")]
    SlopeDegenerate { slope: f64 },
    #[error("NotDecaying: |u| grows over the window (log-log slope {slope})")]
    NotDecaying { slope: f64 },
    #[error("DenominatorVanishes: |u - phi| = {diff} at t = {t}")]
    DenominatorVanishes { t: f64, diff: f64 },
    #[error("InvalidSeries: {0}")]
    InvalidSeries(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Thm1Direct,
    Lemma1Slope,
    HatanoLargeT,
    HatanoSmallT,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Thm1Direct,
        Method::Lemma1Slope,
        Method::HatanoLargeT,
        Method::HatanoSmallT,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Thm1Direct => "thm1_direct",
            Method::Lemma1Slope => "lemma1_slope",
            Method::HatanoLargeT => "hatano_large_t",
            Method::HatanoSmallT => "hatano_small_t",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "thm1" | "thm1_direct" => Ok(Method::Thm1Direct),
            "slope" | "lemma1_slope" => Ok(Method::Lemma1Slope),
            "hatano_large" | "hatano_large_t" => Ok(Method::HatanoLargeT),
            "hatano_small" | "hatano_small_t" => Ok(Method::HatanoSmallT),
            _ => Err(format!(
                "unknown method '{s}' (expected thm1, slope, hatano_large or hatano_small)"
            )),
        }
    }
}

/// Samples u(x₀, t_i), stored in log scale so growing solutions never overflow.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSeries {
    point_label: String,
    times: Vec<f64>,
    values: Vec<SignedLog>,
    noise_level: f64,
}

impl ObservationSeries {
    pub fn new(
        point_label: impl Into<String>,
        times: Vec<f64>,
        values: Vec<SignedLog>,
    ) -> Result<Self, EstimatorError> {
        if times.len() != values.len() {
            return Err(EstimatorError::InvalidSeries(format!(
                "{} times but {} values",
                times.len(),
                values.len()
            )));
        }
        if times.len() < MIN_SAMPLES {
            return Err(EstimatorError::InvalidSeries(format!(
                "{} samples, need at least {MIN_SAMPLES}",
                times.len()
            )));
        }
        if !times.iter().all(|t| t.is_finite() && *t > 0.0) {
            return Err(EstimatorError::InvalidSeries(
                "times must be finite and positive".into(),
            ));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(EstimatorError::InvalidSeries(
                "times must be strictly increasing".into(),
            ));
        }
        for v in &values {
            let ok = match v.sign {
                Sign::Zero => true,
                _ => v.log_abs.is_finite(),
            };
            if !ok {
                return Err(EstimatorError::InvalidSeries(format!(
                    "non-finite log magnitude {}",
                    v.log_abs
                )));
            }
        }
        Ok(ObservationSeries {
            point_label: point_label.into(),
            times,
            values,
            noise_level: 0.0,
        })
    }

    pub fn from_values(
        point_label: impl Into<String>,
        times: Vec<f64>,
        values: &[f64],
    ) -> Result<Self, EstimatorError> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(EstimatorError::InvalidSeries(format!("non-finite value {v}")));
        }
        let logs = values.iter().map(|&v| SignedLog::from_value(v)).collect();
        Self::new(point_label, times, logs)
    }

    /// Samples a model's forward solution in log scale. Cancellation to
    /// within the degeneracy gap is stored as an exact zero.
    pub fn from_model(
        model: &SpectralModel,
        rho: f64,
        point: usize,
        times: Vec<f64>,
    ) -> Result<Self, EstimatorError> {
        model.check_point(point)?;
        let values = times
            .iter()
            .map(|&t| Ok(model.solve_forward_log(rho, point, t)?.value))
            .collect::<Result<Vec<_>, ModelError>>()?;
        Self::new(model.points()[point].label.clone(), times, values)
    }

    pub fn point_label(&self) -> &str {
        &self.point_label
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[SignedLog] {
        &self.values
    }

    pub fn noise_level(&self) -> f64 {
        self.noise_level
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Reads `t,sign,log_abs_u` rows; lines starting with `#` are skipped.
    pub fn read_csv<R: Read>(point_label: &str, reader: R) -> Result<Self, EstimatorError> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| EstimatorError::InvalidSeries(e.to_string()))?
            .clone();
        let col = |name: &str| {
            headers.iter().position(|h| h == name).ok_or_else(|| {
                EstimatorError::InvalidSeries(format!("missing column '{name}'"))
            })
        };
        let (ct, cs, cl) = (col("t")?, col("sign")?, col("log_abs_u")?);
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| EstimatorError::InvalidSeries(e.to_string()))?;
            let field = |i: usize| {
                let s = rec.get(i).unwrap_or("");
                s.parse::<f64>().map_err(|_| {
                    EstimatorError::InvalidSeries(format!("row {}: cannot parse '{s}'", row + 1))
                })
            };
            let t = field(ct)?;
            let s = field(cs)?;
            let sign = match s as i64 {
                _ if s != s.trunc() => None,
                v => Sign::from_i8(v as i8),
            }
            .ok_or_else(|| {
                EstimatorError::InvalidSeries(format!("row {}: sign must be -1, 0 or 1", row + 1))
            })?;
            let log_abs = if sign == Sign::Zero {
                f64::NEG_INFINITY
            } else {
                field(cl)?
            };
            times.push(t);
            values.push(SignedLog::new(sign, log_abs));
        }
        Self::new(point_label, times, values)
    }

    /// Writes `t,sign,log_abs_u` rows with a header.
    pub fn write_csv<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "sign", "log_abs_u"])?;
        for (t, v) in self.times.iter().zip(&self.values) {
            let la = if v.sign == Sign::Zero {
                "-inf".to_string()
            } else {
                format_number(v.log_abs)
            };
            w.write_record([format_number(*t), v.sign.as_i8().to_string(), la])?;
        }
        w.flush()
    }
}

/// Shortest round-trip decimal; scientific notation once the decimal
/// exponent leaves [-6, 6].
pub fn format_number(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let e = x.abs().log10().floor();
    if e.abs() > 6.0 {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderEstimate {
    pub rho_hat: f64,
    pub method: Method,
    /// Half-open index range of the samples used.
    pub window: (usize, usize),
    /// Running estimate at each window index.
    pub sequence: Vec<f64>,
    pub residual: f64,
}

impl OrderEstimate {
    pub fn window_range(&self) -> Range<usize> {
        self.window.0..self.window.1
    }
}

/// Multiplies each value by 1 + level·ξ, ξ uniform on [-1, 1] from a ChaCha8
/// stream seeded with `seed`.
pub fn add_noise(
    series: &ObservationSeries,
    level: f64,
    seed: u64,
) -> Result<ObservationSeries, EstimatorError> {
    if !(0.0..=MAX_NOISE).contains(&level) {
        return Err(EstimatorError::InvalidSeries(format!(
            "noise level {level} outside [0, {MAX_NOISE}]"
        )));
    }
    let mut out = series.clone();
    out.noise_level = level;
    if level == 0.0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in &mut out.values {
        let xi: f64 = rng.random_range(-1.0..=1.0);
        if v.sign != Sign::Zero {
            v.log_abs += (level * xi).ln_1p();
        }
    }
    Ok(out)
}

fn check_lambda1(lambda1: f64) -> Result<f64, EstimatorError> {
    if !(lambda1 < 0.0) || !lambda1.is_finite() {
        return Err(EstimatorError::Assumption6Violated {
            lambda1,
            reason: "lambda1 must be negative".into(),
        });
    }
    if (lambda1 + 1.0).abs() <= ASSUMPTION6_TOL {
        return Err(EstimatorError::Assumption6Violated {
            lambda1,
            reason: "|lambda1| = 1 leaves ln|lambda1| = 0".into(),
        });
    }
    Ok(lambda1.abs().ln())
}

fn resolve_window(
    series: &ObservationSeries,
    window: Option<Range<usize>>,
    default: Range<usize>,
    needed: usize,
) -> Result<Range<usize>, EstimatorError> {
    let w = window.unwrap_or(default);
    if w.start > w.end || w.end > series.len() {
        return Err(EstimatorError::InvalidSeries(format!(
            "window {}..{} outside 0..{}",
            w.start,
            w.end,
            series.len()
        )));
    }
    if w.len() < needed {
        return Err(EstimatorError::WindowTooSmall {
            usable: w.len(),
            needed,
        });
    }
    Ok(w)
}

fn in_unit_interval(method: Method, rho_hat: f64) -> Result<f64, EstimatorError> {
    if rho_hat > 0.0 && rho_hat < 1.0 {
        Ok(rho_hat)
    } else {
        Err(EstimatorError::OutOfRange { method, rho_hat })
    }
}

/// ρ̂(t) = ln|λ₁| / (ln ln|u(t)| − ln t) on samples with |u| > 1.
///
/// The default window is the trailing run of samples with |u| > 1.
pub fn estimate_thm1(
    series: &ObservationSeries,
    lambda1: f64,
    window: Option<Range<usize>>,
) -> Result<OrderEstimate, EstimatorError> {
    let ln_l = check_lambda1(lambda1)?;
    let above = |v: &SignedLog| v.sign != Sign::Zero && v.log_abs > 0.0;
    let start = series.values.iter().rposition(|v| !above(v)).map_or(0, |i| i + 1);
    let w = match window {
        Some(w) => {
            let w = resolve_window(series, Some(w), 0..0, 1)?;
            let usable = series.values[w.clone()].iter().filter(|v| above(v)).count();
            if usable < w.len() {
                return Err(EstimatorError::WindowTooSmall {
                    usable,
                    needed: w.len(),
                });
            }
            w
        }
        None => {
            if start == series.len() {
                return Err(EstimatorError::WindowTooSmall { usable: 0, needed: 1 });
            }
            start..series.len()
        }
    };
    let sequence: Vec<f64> = w
        .clone()
        .map(|i| ln_l / (series.values[i].log_abs.ln() - series.times[i].ln()))
        .collect();
    let n = sequence.len();
    let rho_hat = sequence[n - 1];
    let residual = if n >= 2 {
        (sequence[n - 1] - sequence[n - 2]).abs()
    } else {
        f64::NAN
    };
    in_unit_interval(Method::Thm1Direct, rho_hat)?;
    Ok(OrderEstimate {
        rho_hat,
        method: Method::Thm1Direct,
        window: (w.start, w.end),
        sequence,
        residual,
    })
}

struct LineFit {
    slope: f64,
    rms: f64,
}

fn fit_line(x: &[f64], y: &[f64]) -> LineFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    LineFit {
        slope,
        rms: (ss / n).sqrt(),
    }
}

/// Least-squares ln|u| ≈ a t + b, ρ̂ = ln|λ₁| / ln a. The default window is
/// the tail half of the series. The sequence holds the local estimates from
/// consecutive-sample slopes.
pub fn estimate_slope(
    series: &ObservationSeries,
    lambda1: f64,
    window: Option<Range<usize>>,
) -> Result<OrderEstimate, EstimatorError> {
    let ln_l = check_lambda1(lambda1)?;
    let n = series.len();
    let w = resolve_window(series, window, n / 2..n, 3)?;
    if let Some(i) = w.clone().find(|&i| series.values[i].sign == Sign::Zero) {
        return Err(EstimatorError::InvalidSeries(format!(
            "u vanishes at t = {}",
            series.times[i]
        )));
    }
    let t = &series.times[w.clone()];
    let l: Vec<f64> = series.values[w.clone()].iter().map(|v| v.log_abs).collect();
    let fit = fit_line(t, &l);
    let a = fit.slope;
    if !(a > 0.0) || (a - 1.0).abs() < SLOPE_DEGENERACY {
        return Err(EstimatorError::SlopeDegenerate { slope: a });
    }
    let local = |i: usize, j: usize| ln_l / ((l[j] - l[i]) / (t[j] - t[i])).ln();
    let sequence: Vec<f64> = (0..t.len())
        .map(|k| if k == 0 { local(0, 1) } else { local(k - 1, k) })
        .collect();
    let rho_hat = in_unit_interval(Method::Lemma1Slope, ln_l / a.ln())?;
    Ok(OrderEstimate {
        rho_hat,
        method: Method::Lemma1Slope,
        window: (w.start, w.end),
        sequence,
        residual: fit.rms,
    })
}

/// Derivative of samples g(s) on a nonuniform grid: three-point centred
/// differences inside, three-point one-sided formulas at the ends.
fn log_derivative(s: &[f64], g: &[f64]) -> Vec<f64> {
    let n = s.len();
    // Derivative at s[i] of the quadratic through (s[a], s[b], s[c]).
    let quad = |i: usize, a: usize, b: usize, c: usize| {
        let x = s[i];
        g[a] * ((x - s[b]) + (x - s[c])) / ((s[a] - s[b]) * (s[a] - s[c]))
            + g[b] * ((x - s[a]) + (x - s[c])) / ((s[b] - s[a]) * (s[b] - s[c]))
            + g[c] * ((x - s[a]) + (x - s[b])) / ((s[c] - s[a]) * (s[c] - s[b]))
    };
    (0..n)
        .map(|i| {
            if i == 0 {
                quad(0, 0, 1, 2)
            } else if i == n - 1 {
                quad(i, i - 2, i - 1, i)
            } else {
                quad(i, i - 1, i, i + 1)
            }
        })
        .collect()
}

/// ρ̂ = |t u_t / u| at the largest time, for decaying solutions. The ratio is
/// d ln|u| / d ln t, differentiated on the log-time grid. The default window
/// is the tail half.
pub fn estimate_hatano_large_t(
    series: &ObservationSeries,
    window: Option<Range<usize>>,
) -> Result<OrderEstimate, EstimatorError> {
    let n = series.len();
    let w = resolve_window(series, window, n / 2..n, 3)?;
    if let Some(i) = w.clone().find(|&i| series.values[i].sign == Sign::Zero) {
        return Err(EstimatorError::InvalidSeries(format!(
            "u vanishes at t = {}",
            series.times[i]
        )));
    }
    let s: Vec<f64> = series.times[w.clone()].iter().map(|t| t.ln()).collect();
    let g: Vec<f64> = series.values[w.clone()].iter().map(|v| v.log_abs).collect();
    let fit = fit_line(&s, &g);
    if fit.slope >= 0.0 {
        return Err(EstimatorError::NotDecaying { slope: fit.slope });
    }
    let sequence = log_derivative(&s, &g);
    let k = sequence.len();
    let rho_hat = in_unit_interval(Method::HatanoLargeT, sequence[k - 1].abs())?;
    Ok(OrderEstimate {
        rho_hat,
        method: Method::HatanoLargeT,
        window: (w.start, w.end),
        sequence: sequence.iter().map(|r| r.abs()).collect(),
        residual: (sequence[k - 1] - sequence[k - 2]).abs(),
    })
}

/// ρ̂ = lim_{t→0} t u_t / (u − φ), read at the smallest time. Two one-sided
/// difference quotients of ln|u − φ| against ln t over the three smallest
/// nodes are combined by Richardson extrapolation. The default window is the
/// whole series.
pub fn estimate_hatano_small_t(
    series: &ObservationSeries,
    phi_at_point: f64,
    window: Option<Range<usize>>,
) -> Result<OrderEstimate, EstimatorError> {
    let n = series.len();
    let w = resolve_window(series, window, 0..n, 3)?;
    let mut g = Vec::with_capacity(w.len());
    for i in w.clone() {
        let u = series.values[i].value();
        let diff = (u - phi_at_point).abs();
        if !u.is_finite() {
            return Err(EstimatorError::InvalidSeries(format!(
                "u not representable at t = {}",
                series.times[i]
            )));
        }
        if diff <= DENOMINATOR_TOL * phi_at_point.abs() {
            return Err(EstimatorError::DenominatorVanishes {
                t: series.times[i],
                diff,
            });
        }
        g.push(diff.ln());
    }
    let s: Vec<f64> = series.times[w.clone()].iter().map(|t| t.ln()).collect();
    let sequence = log_derivative(&s, &g);
    let d1 = (g[1] - g[0]) / (s[1] - s[0]);
    let d2 = (g[2] - g[0]) / (s[2] - s[0]);
    let (h1, h2) = (s[1] - s[0], s[2] - s[0]);
    let extrapolated = (d1 * h2 - d2 * h1) / (h2 - h1);
    let rho_hat = in_unit_interval(Method::HatanoSmallT, extrapolated)?;
    Ok(OrderEstimate {
        rho_hat,
        method: Method::HatanoSmallT,
        window: (w.start, w.end),
        sequence,
        residual: (extrapolated - d1).abs(),
    })
}
