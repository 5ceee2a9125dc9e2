//! Riemann-Liouville fractional integral and derivative, and the Caputo
//! derivative, for functions sampled on a (possibly graded) time grid.
//!
//! Samples are interpolated linearly and the weakly singular kernel
//! (t - ξ)^{β-1} is integrated exactly on each cell (product trapezoid).
//! A function that behaves like t^γ at the origin can declare `γ` as a
//! leading-exponent hint; the first cell is then integrated against that
//! power instead of a line.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::mittag_leffler::MlError;
use crate::special::{gamma, ln_gamma, recip_gamma};
use crate::spectral_model::{Convention, ModelError, SpectralModel};

/// Relative tolerance for recognising `t` as a grid node.
const NODE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FracError {
    #[error("OutOfRange: t = {t} not in {what}")]
    OutOfRange { t: f64, what: String },
    #[error("SingularityTooStrong: leading exponent {exponent} must exceed -1")]
    SingularityTooStrong { exponent: f64 },
    #[error("InvalidSample: {0}")]
    InvalidSample(String),
    #[error("InvalidOrder: {0}")]
    InvalidOrder(String),
    #[error(transparent)]
    Ml(#[from] MlError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Samples of a function of time on a grid starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFunction {
    times: Vec<f64>,
    values: Vec<f64>,
    leading_exponent: Option<f64>,
}

impl SampledFunction {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self, FracError> {
        if times.len() != values.len() {
            return Err(FracError::InvalidSample(format!(
                "{} times but {} values",
                times.len(),
                values.len()
            )));
        }
        if times.len() < 3 {
            return Err(FracError::InvalidSample("need at least 3 samples".into()));
        }
        if times[0] != 0.0 {
            return Err(FracError::InvalidSample(format!(
                "first time must be 0, got {}",
                times[0]
            )));
        }
        if let Some(i) = times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(FracError::InvalidSample(format!(
                "times not strictly increasing at index {}",
                i + 1
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(FracError::InvalidSample(format!("value {i} is not finite")));
        }
        Ok(Self {
            times,
            values,
            leading_exponent: None,
        })
    }

    /// Sample `f` on `times`.
    pub fn from_fn<F: Fn(f64) -> f64>(times: Vec<f64>, f: F) -> Result<Self, FracError> {
        let values = times.iter().map(|&t| f(t)).collect();
        Self::new(times, values)
    }

    /// Sample a function behaving like `c t^exponent` at 0. The value at
    /// t = 0 is never used and is stored as 0.
    pub fn from_fn_singular<F: Fn(f64) -> f64>(
        times: Vec<f64>,
        exponent: f64,
        f: F,
    ) -> Result<Self, FracError> {
        let values = times
            .iter()
            .map(|&t| if t == 0.0 { 0.0 } else { f(t) })
            .collect();
        Ok(Self::new(times, values)?.with_leading_exponent(exponent))
    }

    /// Declare that the function behaves like `c t^exponent` near 0.
    pub fn with_leading_exponent(mut self, exponent: f64) -> Self {
        self.leading_exponent = Some(exponent);
        self
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn leading_exponent(&self) -> Option<f64> {
        self.leading_exponent
    }

    pub fn t_max(&self) -> f64 {
        *self.times.last().expect("at least 3 samples")
    }

    /// Index of the grid node equal to `t`, if any.
    pub fn node_index(&self, t: f64) -> Option<usize> {
        let i = self.times.partition_point(|&x| x < t);
        [i.checked_sub(1), Some(i)]
            .into_iter()
            .flatten()
            .filter(|&j| j < self.times.len())
            .find(|&j| (self.times[j] - t).abs() <= NODE_TOL * t.abs().max(f64::MIN_POSITIVE))
    }

    fn hint(&self) -> Result<Option<f64>, FracError> {
        match self.leading_exponent {
            Some(g) if !(g > -1.0) => Err(FracError::SingularityTooStrong { exponent: g }),
            g => Ok(g),
        }
    }

    fn check_t(&self, t: f64) -> Result<(), FracError> {
        if t > 0.0 && t <= self.t_max() * (1.0 + NODE_TOL) {
            Ok(())
        } else {
            Err(FracError::OutOfRange {
                t,
                what: format!("(0, {}]", self.t_max()),
            })
        }
    }
}

/// Graded grid t_i = t_max (i/(n-1))^{1/ρ + 1}, i = 0..n-1.
pub fn graded_grid(t_max: f64, nodes: usize, rho: f64) -> Vec<f64> {
    let q = 1.0 / rho + 1.0;
    let n = (nodes.max(2) - 1) as f64;
    (0..nodes.max(2))
        .map(|i| t_max * (i as f64 / n).powf(q))
        .collect()
}

/// Uniform grid with `nodes` points on [0, t_max].
pub fn uniform_grid(t_max: f64, nodes: usize) -> Vec<f64> {
    let n = (nodes.max(2) - 1) as f64;
    (0..nodes.max(2)).map(|i| t_max * i as f64 / n).collect()
}

/// Weights (w_a, w_b) with ∫_a^b (t-ξ)^{β-1} f(ξ) dξ ≈ w_a f(a) + w_b f(b)
/// for linear f, where `big_a = t - a` and `h = b - a`.
fn cell_weights(big_a: f64, h: f64, beta: f64) -> (f64, f64) {
    let r = (h / big_a).min(1.0);
    let a_beta = big_a.powf(beta);
    // ∫ u^{β-1} du over the cell
    let i0 = -a_beta * (beta * (-r).ln_1p()).exp_m1() / beta;
    // ∫ u^{β-1} (A - u) du, scaled by A^{-(β+1)}
    let j = if r <= 0.5 {
        let mut sum = 0.0;
        let mut poch = 1.0; // (β-1)(β-2)...(β-k+2)
        let mut pow = r * r; // (-r)^k for k = 2
        let mut fact = 2.0;
        for k in 2..80 {
            let t = (k as f64 - 1.0) * pow * poch / fact;
            sum += t;
            if t.abs() < 1e-17 * sum.abs() {
                break;
            }
            poch *= beta - k as f64 + 1.0;
            pow *= -r;
            fact *= (k + 1) as f64;
        }
        sum
    } else {
        let q = 1.0 - r;
        (1.0 - q.powf(beta)) / beta - (1.0 - q.powf(beta + 1.0)) / (beta + 1.0)
    };
    let i1_over_h = a_beta * j / r;
    (i0 - i1_over_h, i1_over_h)
}

/// ∫_0^x u^{a-1} (1-u)^{b-1} du for a, b > 0 and 0 <= x <= 1.
fn incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    let complete = (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)).exp();
    if x >= 1.0 {
        return complete;
    }
    if x > 0.9 {
        return complete - incomplete_beta(1.0 - x, b, a);
    }
    // x^a Σ (1-b)_n x^n / (n! (a+n))
    let mut sum = 0.0;
    let mut c = 1.0;
    for n in 0..2000 {
        let t = c / (a + n as f64);
        sum += t;
        if t.abs() < 1e-17 * sum.abs() {
            break;
        }
        c *= (n as f64 + 1.0 - b) * x / (n as f64 + 1.0);
    }
    x.powf(a) * sum
}

/// Cells wider than this fraction of their left end are integrated with the
/// declared power factored out; on narrower cells t^γ is close to linear.
const SINGULAR_CELL_RATIO: f64 = 0.01;

/// ∫_a^b (t-ξ)^{β-1} ξ^γ g(ξ) dξ on cell `j` (a = times[j-1]), with
/// g = f / ξ^γ interpolated linearly between the cell's nodes.
fn weighted_cell(f: &SampledFunction, j: usize, b: f64, t: f64, beta: f64, g: f64) -> f64 {
    let (a, c) = (f.times[j - 1], f.times[j]);
    let ga = f.values[j - 1] * a.powf(-g);
    let gc = f.values[j] * c.powf(-g);
    let slope = (gc - ga) / (c - a);
    // ∫_a^b ξ^p (t-ξ)^{β-1} dξ = t^{p+β} [B(b/t; p+1, β) - B(a/t; p+1, β)]
    let moment = |p: f64| {
        t.powf(p + beta) * (incomplete_beta(b / t, p + 1.0, beta) - incomplete_beta(a / t, p + 1.0, beta))
    };
    let i0 = moment(g);
    let i1 = moment(g + 1.0);
    ga * i0 + slope * (i1 - a * i0)
}

/// Value at `t` of the piecewise-linear interpolant, for t in cell `k`
/// (times[k-1] < t <= times[k]).
fn interpolate(f: &SampledFunction, k: usize, t: f64) -> f64 {
    let (ta, tb) = (f.times[k - 1], f.times[k]);
    let (fa, fb) = (f.values[k - 1], f.values[k]);
    fa + (fb - fa) * (t - ta) / (tb - ta)
}

/// ∫_0^t (t-ξ)^{β-1} f(ξ) dξ, without the 1/Γ(β) factor.
fn kernel_integral(f: &SampledFunction, beta: f64, t: f64, hint: Option<f64>) -> f64 {
    let times = &f.times;
    let values = &f.values;
    // Cell index k with times[k-1] < t <= times[k].
    let k = times.partition_point(|&x| x < t).clamp(1, times.len() - 1);
    let t_end = t.min(times[k]);
    let mut acc = 0.0;
    for j in 1..=k {
        let a = times[j - 1];
        let (b, fb) = if j == k {
            (t_end, interpolate(f, k, t_end))
        } else {
            (times[j], values[j])
        };
        if let Some(g) = hint {
            if j == 1 {
                // f ≈ f(t1) (ξ/t1)^γ on the first cell.
                let t1 = times[1];
                let x = b / t;
                let scale = values[1] * t1.powf(-g) * t.powf(beta + g);
                acc += scale * incomplete_beta(x, g + 1.0, beta);
                continue;
            }
            if g != 0.0 && times[j] - a > SINGULAR_CELL_RATIO * a {
                acc += weighted_cell(f, j, b, t, beta, g);
                continue;
            }
        }
        let (wa, wb) = cell_weights(t - a, b - a, beta);
        acc += wa * values[j - 1] + wb * fb;
    }
    acc
}

fn check_beta(beta: f64) -> Result<(), FracError> {
    if beta > 0.0 && beta < 1.0 {
        Ok(())
    } else {
        Err(FracError::InvalidOrder(format!("beta = {beta} not in (0, 1)")))
    }
}

/// Riemann-Liouville integral (1/Γ(β)) ∫_0^t (t-ξ)^{β-1} f(ξ) dξ.
pub fn frac_integral(f: &SampledFunction, beta: f64, t: f64) -> Result<f64, FracError> {
    check_beta(beta)?;
    f.check_t(t)?;
    let hint = f.hint()?;
    Ok(kernel_integral(f, beta, t.min(f.t_max()), hint) * recip_gamma(beta))
}

/// The fractional integral of order `beta` at every grid node after the first.
/// Entry 0 is NaN (the value at t = 0 is a limit, not a sample).
pub fn frac_integral_on_grid(f: &SampledFunction, beta: f64) -> Result<Vec<f64>, FracError> {
    check_beta(beta)?;
    let hint = f.hint()?;
    let c = recip_gamma(beta);
    let mut out: Vec<f64> = f.times[1..]
        .par_iter()
        .map(|&t| kernel_integral(f, beta, t, hint) * c)
        .collect();
    out.insert(0, f64::NAN);
    Ok(out)
}

/// First derivative at node `i` from values `g` on `times`; second order.
fn node_derivative(times: &[f64], g: &[f64], i: usize) -> f64 {
    // Three nodes around i, shifted right when i - 1 would hit t = 0.
    let c = i.max(2).min(times.len() - 2);
    let (t0, t1, t2) = (times[c - 1], times[c], times[c + 1]);
    let (g0, g1, g2) = (g[c - 1], g[c], g[c + 1]);
    let x = times[i];
    // Derivative of the quadratic through the three points, evaluated at x.
    let d0 = (2.0 * x - t1 - t2) / ((t0 - t1) * (t0 - t2));
    let d1 = (2.0 * x - t0 - t2) / ((t1 - t0) * (t1 - t2));
    let d2 = (2.0 * x - t0 - t1) / ((t2 - t0) * (t2 - t1));
    d0 * g0 + d1 * g1 + d2 * g2
}

fn check_rho(rho: f64) -> Result<(), FracError> {
    if rho > 0.0 && rho < 1.0 {
        Ok(())
    } else {
        Err(FracError::InvalidOrder(format!("rho = {rho} not in (0, 1)")))
    }
}

fn interior_node(f: &SampledFunction, t: f64) -> Result<usize, FracError> {
    match f.node_index(t) {
        Some(i) if i >= 1 && i + 1 < f.times.len() => Ok(i),
        _ => Err(FracError::OutOfRange {
            t,
            what: "the interior grid nodes".into(),
        }),
    }
}

/// Riemann-Liouville derivative d/dt J^{1-ρ} f at an interior grid node.
pub fn rl_derivative(f: &SampledFunction, rho: f64, t: f64) -> Result<f64, FracError> {
    check_rho(rho)?;
    let hint = f.hint()?;
    let i = interior_node(f, t)?;
    let c = i.max(2).min(f.times.len() - 2);
    let beta = 1.0 - rho;
    let mut g = vec![0.0; f.times.len()];
    for j in c - 1..=c + 1 {
        g[j] = kernel_integral(f, beta, f.times[j], hint) * recip_gamma(beta);
    }
    Ok(node_derivative(&f.times, &g, i))
}

/// Riemann-Liouville derivative at every interior node (entries 0 and n-1 are NaN).
pub fn rl_derivative_on_grid(f: &SampledFunction, rho: f64) -> Result<Vec<f64>, FracError> {
    check_rho(rho)?;
    let g = frac_integral_on_grid(f, 1.0 - rho)?;
    let n = f.times.len();
    let mut out = vec![f64::NAN; n];
    for (i, o) in out.iter_mut().enumerate().take(n - 1).skip(1) {
        *o = node_derivative(&f.times, &g, i);
    }
    Ok(out)
}

/// Caputo derivative J^{1-ρ} f' by the L1 scheme at any t in (0, t_max].
pub fn caputo_derivative(f: &SampledFunction, rho: f64, t: f64) -> Result<f64, FracError> {
    check_rho(rho)?;
    if let Some(g) = f.leading_exponent {
        if g < 1.0 && g != 0.0 {
            return Err(FracError::SingularityTooStrong { exponent: g });
        }
    }
    f.check_t(t)?;
    Ok(caputo_at(f, rho, t.min(f.t_max())))
}

fn caputo_at(f: &SampledFunction, rho: f64, t: f64) -> f64 {
    let beta = 1.0 - rho;
    let times = &f.times;
    let k = times.partition_point(|&x| x < t).clamp(1, times.len() - 1);
    let mut acc = 0.0;
    for j in 1..=k {
        let (a, b) = (times[j - 1], times[j]);
        let slope = (f.values[j] - f.values[j - 1]) / (b - a);
        let big_a = t - a;
        let h = b.min(t) - a;
        let r = (h / big_a).min(1.0);
        let i0 = -big_a.powf(beta) * (beta * (-r).ln_1p()).exp_m1() / beta;
        acc += slope * i0;
    }
    acc * recip_gamma(beta)
}

/// Caputo derivative at every grid node after the first (entry 0 is NaN).
pub fn caputo_derivative_on_grid(f: &SampledFunction, rho: f64) -> Result<Vec<f64>, FracError> {
    check_rho(rho)?;
    let mut out: Vec<f64> = f.times[1..]
        .par_iter()
        .map(|&t| caputo_at(f, rho, t))
        .collect();
    out.insert(0, f64::NAN);
    Ok(out)
}

/// Outcome of checking that a spectral solution satisfies the equation.
#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    /// max |∂^ρ u + Au| / (1 + |Au|) over interior nodes in the window.
    pub max_residual: f64,
    pub max_residual_t: f64,
    pub nodes_checked: usize,
    /// Smallest positive grid node, where the initial condition is checked.
    pub t_min: f64,
    /// |J^{1-ρ}u(t_min) - φ(x)| (RL) or |u(t_min) - φ(x)| (Caputo).
    pub initial_residual: f64,
    /// Same quantity against its exact value at t_min, Σ E_{ρ,1}(-λ t_min^ρ) P_kφ(x),
    /// which isolates the quadrature error from the t_min > 0 offset.
    pub initial_quadrature_residual: f64,
}

/// Check ∂_t^ρ u + Au = 0 for the model's solution at one monitoring point.
///
/// `grid` must start at 0; the residual is taken over interior nodes with
/// `window.0 <= t <= window.1`.
pub fn verify_equation(
    model: &SpectralModel,
    rho: f64,
    point: usize,
    grid: &[f64],
    window: (f64, f64),
) -> Result<VerifyReport, FracError> {
    check_rho(rho)?;
    model.check_point(point)?;
    let n = grid.len();
    let kind = model.kind();
    let u: Vec<f64> = grid
        .par_iter()
        .map(|&t| {
            if t == 0.0 {
                Ok(0.0)
            } else {
                model.solve_forward(rho, point, t).map(|v| v.value)
            }
        })
        .collect::<Result<_, _>>()?;
    let au: Vec<f64> = grid
        .par_iter()
        .map(|&t| {
            if t == 0.0 {
                Ok(0.0)
            } else {
                model.apply_operator(rho, point, t)
            }
        })
        .collect::<Result<_, _>>()?;
    let (f, deriv) = match kind {
        Convention::RiemannLiouville => {
            let f = SampledFunction::new(grid.to_vec(), u)?.with_leading_exponent(rho - 1.0);
            let d = rl_derivative_on_grid(&f, rho)?;
            (f, d)
        }
        Convention::Caputo => {
            let mut values = u;
            values[0] = model.initial_value(point);
            let f = SampledFunction::new(grid.to_vec(), values)?;
            let d = caputo_derivative_on_grid(&f, rho)?;
            (f, d)
        }
    };
    let mut max_residual = 0.0_f64;
    let mut max_residual_t = f64::NAN;
    let mut nodes_checked = 0;
    for i in 1..n - 1 {
        let t = grid[i];
        if t < window.0 || t > window.1 {
            continue;
        }
        let r = (deriv[i] + au[i]).abs() / (1.0 + au[i].abs());
        nodes_checked += 1;
        if r > max_residual || max_residual_t.is_nan() {
            max_residual = r;
            max_residual_t = t;
        }
    }
    let t_min = grid[1];
    let phi = model.initial_value(point);
    let observed = match kind {
        Convention::RiemannLiouville => frac_integral(&f, 1.0 - rho, t_min)?,
        Convention::Caputo => f.values[1],
    };
    let expected = model.relaxation_sum(rho, point, t_min)?;
    Ok(VerifyReport {
        max_residual,
        max_residual_t,
        nodes_checked,
        t_min,
        initial_residual: (observed - phi).abs(),
        initial_quadrature_residual: (observed - expected).abs(),
    })
}

/// Γ-based closed forms used by tests and callers: J^β t^p = Γ(p+1)/Γ(p+1+β) t^{p+β}.
pub fn power_integral(p: f64, beta: f64, t: f64) -> f64 {
    gamma(p + 1.0) * recip_gamma(p + 1.0 + beta) * t.powf(p + beta)
}

#[cfg(test)]
mod tests;
