//! The cylinder Ω = (0, Lx) × (0, Ly) × (0, H) with Neumann conditions on the
//! lateral faces and the bottom, and the Robin influx condition
//! ∂u/∂z = h u on the top face z = H.
//!
//! Separation of variables gives eigenfunctions v_pq(x, y) w_j(z) with
//! eigenvalue μ_pq + ν_j, where ν₀ < 0 is the single negative eigenvalue of
//! the vertical Sturm-Liouville problem -w'' = ν w, w'(0) = 0, w'(H) = h w(H).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::GaussRule;
use crate::spectral_model::{Convention, ModelError, MonitoringPoint, SpectralMode, SpectralModel};

/// Projections below this fraction of the largest one are set to zero.
const PROJECTION_CUTOFF: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CylinderError {
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
    #[error("BracketFailure: no sign change for root {index} on [{lo}, {hi}]")]
    BracketFailure { index: usize, lo: f64, hi: f64 },
    #[error("InvalidPoint: {0}")]
    InvalidPoint(String),
    #[error("NotPositive: the first eigenfunction changes sign")]
    NotPositive,
    #[error("DecayTooSlow: fitted coefficient decay exponent {exponent} <= 0")]
    DecayTooSlow { exponent: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CylinderConfig {
    #[serde(rename = "Lx")]
    pub lx: f64,
    #[serde(rename = "Ly")]
    pub ly: f64,
    #[serde(rename = "H")]
    pub height: f64,
    /// Robin coefficient on the top face.
    pub h: f64,
    #[serde(rename = "Px")]
    pub px: usize,
    #[serde(rename = "Py")]
    pub py: usize,
    /// Number of positive vertical eigenvalues.
    #[serde(rename = "J")]
    pub j: usize,
    pub quad_n: usize,
}

impl Default for CylinderConfig {
    fn default() -> Self {
        Self {
            lx: 1.0,
            ly: 1.0,
            height: 1.0,
            h: 1.0,
            px: 6,
            py: 6,
            j: 12,
            quad_n: 64,
        }
    }
}

impl CylinderConfig {
    pub fn validate(&self) -> Result<(), CylinderError> {
        for (name, v) in [("Lx", self.lx), ("Ly", self.ly), ("H", self.height), ("h", self.h)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CylinderError::InvalidConfig(format!(
                    "{name} = {v} must be positive"
                )));
            }
        }
        if self.px == 0 || self.py == 0 || self.j == 0 {
            return Err(CylinderError::InvalidConfig(
                "mode cutoffs Px, Py, J must be at least 1".into(),
            ));
        }
        if self.quad_n < 16 {
            return Err(CylinderError::InvalidConfig(format!(
                "quad_n = {} must be at least 16",
                self.quad_n
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenKind {
    Negative,
    /// ν = 0, only present when h = 0.
    Zero,
    Positive,
}

/// One eigenpair of -w'' = ν w, w'(0) = 0, w'(H) = h w(H).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Eigenpair1D {
    pub nu: f64,
    /// √|ν|
    pub s: f64,
    /// Closed-form L² normalizer.
    pub normalizer: f64,
    pub kind: EigenKind,
    pub index: usize,
    pub height: f64,
    pub h: f64,
}

impl Eigenpair1D {
    /// The constant eigenfunction of the Neumann problem (h = 0).
    pub fn neumann_constant(height: f64) -> Self {
        Self {
            nu: 0.0,
            s: 0.0,
            normalizer: 1.0 / height.sqrt(),
            kind: EigenKind::Zero,
            index: 0,
            height,
            h: 0.0,
        }
    }

    pub fn eval(&self, z: f64) -> f64 {
        match self.kind {
            EigenKind::Negative => self.normalizer * (self.s * z).cosh(),
            EigenKind::Zero => self.normalizer,
            EigenKind::Positive => self.normalizer * (self.s * z).cos(),
        }
    }

    pub fn derivative(&self, z: f64) -> f64 {
        match self.kind {
            EigenKind::Negative => self.normalizer * self.s * (self.s * z).sinh(),
            EigenKind::Zero => 0.0,
            EigenKind::Positive => -self.normalizer * self.s * (self.s * z).sin(),
        }
    }

    /// Residual of the characteristic equation.
    pub fn residual(&self) -> f64 {
        let hs = self.height * self.s;
        match self.kind {
            EigenKind::Negative => (hs.tanh() - self.h / self.s).abs(),
            EigenKind::Zero => self.h.abs(),
            EigenKind::Positive => (hs.tan() + self.h / self.s).abs(),
        }
    }
}

/// Bisection to machine precision on [lo, hi] where g(lo) < 0 < g(hi).
fn bisect<F: Fn(f64) -> f64>(g: F, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if g(lo).abs() <= g(hi).abs() {
        lo
    } else {
        hi
    }
}

/// The negative eigenvalue ν₀ = -s₀², s₀ the root of s tanh(Hs) = h.
pub fn sturm_negative_eig(height: f64, h: f64) -> Eigenpair1D {
    let g = |s: f64| s * (height * s).tanh() - h;
    let lo = h / (1.0 + h * height);
    let mut hi = lo;
    while g(hi) <= 0.0 {
        hi *= 2.0;
    }
    let s = bisect(g, lo.min(hi * 0.5), hi);
    let normalizer = (height / 2.0 + (2.0 * s * height).sinh() / (4.0 * s)).powf(-0.5);
    Eigenpair1D {
        nu: -s * s,
        s,
        normalizer,
        kind: EigenKind::Negative,
        index: 0,
        height,
        h,
    }
}

/// The first `count` positive eigenvalues, s_j the root of tan(Hs) + h/s = 0
/// in ((j - 1/2)π/H, jπ/H).
pub fn sturm_positive_eigs(height: f64, h: f64, count: usize) -> Result<Vec<Eigenpair1D>, CylinderError> {
    let g = |s: f64| (height * s).tan() + h / s;
    (1..=count)
        .map(|j| {
            let a = (j as f64 - 0.5) * std::f64::consts::PI / height;
            let b = j as f64 * std::f64::consts::PI / height;
            // Only the lower end is a pole of tan. At the upper end g = h/s > 0,
            // and for small h the root sits closer to it than any nudge.
            let (lo, hi) = (a + 1e-9 * (b - a), b);
            if !(g(lo) < 0.0 && g(hi) > 0.0) {
                return Err(CylinderError::BracketFailure { index: j, lo, hi });
            }
            let s = bisect(g, lo, hi);
            let normalizer = (height / 2.0 + (2.0 * s * height).sin() / (4.0 * s)).powf(-0.5);
            Ok(Eigenpair1D {
                nu: s * s,
                s,
                normalizer,
                kind: EigenKind::Positive,
                index: j,
                height,
                h,
            })
        })
        .collect()
}

/// Neumann eigenfunction of the rectangle, normalized cosine product.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RectMode {
    pub p: usize,
    pub q: usize,
    pub mu: f64,
    pub lx: f64,
    pub ly: f64,
}

fn cos_mode(n: usize, len: f64, x: f64) -> f64 {
    if n == 0 {
        1.0 / len.sqrt()
    } else {
        (2.0 / len).sqrt() * (n as f64 * std::f64::consts::PI * x / len).cos()
    }
}

fn cos_mode_derivative(n: usize, len: f64, x: f64) -> f64 {
    if n == 0 {
        0.0
    } else {
        let k = n as f64 * std::f64::consts::PI / len;
        -(2.0 / len).sqrt() * k * (k * x).sin()
    }
}

impl RectMode {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        cos_mode(self.p, self.lx, x) * cos_mode(self.q, self.ly, y)
    }

    pub fn gradient(&self, x: f64, y: f64) -> (f64, f64) {
        (
            cos_mode_derivative(self.p, self.lx, x) * cos_mode(self.q, self.ly, y),
            cos_mode(self.p, self.lx, x) * cos_mode_derivative(self.q, self.ly, y),
        )
    }
}

/// μ_pq = (pπ/Lx)² + (qπ/Ly)² for p < px, q < py, ascending in μ.
pub fn rectangle_eigs(lx: f64, ly: f64, px: usize, py: usize) -> Vec<RectMode> {
    let pi = std::f64::consts::PI;
    let mut out: Vec<RectMode> = (0..px)
        .flat_map(|p| (0..py).map(move |q| (p, q)))
        .map(|(p, q)| RectMode {
            p,
            q,
            mu: (p as f64 * pi / lx).powi(2) + (q as f64 * pi / ly).powi(2),
            lx,
            ly,
        })
        .collect();
    out.sort_by(|a, b| a.mu.total_cmp(&b.mu).then((a.p, a.q).cmp(&(b.p, b.q))));
    out
}

/// One eigenfunction v_pq(x, y) w_j(z) of the cylinder operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CylinderMode {
    pub rect: RectMode,
    pub axial: Eigenpair1D,
}

impl CylinderMode {
    pub fn lambda(&self) -> f64 {
        self.rect.mu + self.axial.nu
    }

    pub fn eval(&self, x: f64, y: f64, z: f64) -> f64 {
        self.rect.eval(x, y) * self.axial.eval(z)
    }

    pub fn gradient(&self, x: f64, y: f64, z: f64) -> [f64; 3] {
        let (vx, vy) = self.rect.gradient(x, y);
        let w = self.axial.eval(z);
        [vx * w, vy * w, self.rect.eval(x, y) * self.axial.derivative(z)]
    }
}

/// All cylinder modes under the cutoffs, ascending in λ.
pub fn cylinder_modes(cfg: &CylinderConfig) -> Result<Vec<CylinderMode>, CylinderError> {
    cfg.validate()?;
    let mut axial = vec![sturm_negative_eig(cfg.height, cfg.h)];
    axial.extend(sturm_positive_eigs(cfg.height, cfg.h, cfg.j)?);
    let rects = rectangle_eigs(cfg.lx, cfg.ly, cfg.px, cfg.py);
    let mut modes: Vec<CylinderMode> = rects
        .iter()
        .flat_map(|r| axial.iter().map(move |a| CylinderMode { rect: *r, axial: *a }))
        .collect();
    modes.sort_by(|a, b| a.lambda().total_cmp(&b.lambda()));
    Ok(modes)
}

/// Named initial fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialField {
    Constant {
        #[serde(default = "one")]
        value: f64,
    },
    /// The positive eigenfunction v₀₀ w₀ of the leading eigenvalue.
    FirstEigenfunction,
    GaussianBump {
        center: [f64; 3],
        width: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl InitialField {
    pub fn validate(&self) -> Result<(), CylinderError> {
        match self {
            InitialField::Constant { value } if !value.is_finite() => Err(
                CylinderError::InvalidConfig(format!("constant value {value} is not finite")),
            ),
            InitialField::GaussianBump {
                width, amplitude, ..
            } => {
                if !(*width > 0.0) {
                    return Err(CylinderError::InvalidConfig(format!(
                        "gaussian_bump width {width} must be positive"
                    )));
                }
                if !(*amplitude > 0.0) {
                    return Err(CylinderError::InvalidConfig(format!(
                        "gaussian_bump amplitude {amplitude} must be positive"
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// The field as a closure on Ω for the given cylinder.
    pub fn field(&self, cfg: &CylinderConfig) -> impl Fn(f64, f64, f64) -> f64 + Sync + 'static {
        let first = CylinderMode {
            rect: rectangle_eigs(cfg.lx, cfg.ly, 1, 1)[0],
            axial: sturm_negative_eig(cfg.height, cfg.h),
        };
        let this = self.clone();
        move |x, y, z| match &this {
            InitialField::Constant { value } => *value,
            InitialField::FirstEigenfunction => first.eval(x, y, z),
            InitialField::GaussianBump {
                center,
                width,
                amplitude,
            } => {
                let r2 = (x - center[0]).powi(2) + (y - center[1]).powi(2) + (z - center[2]).powi(2);
                amplitude * (-r2 / (2.0 * width * width)).exp()
            }
        }
    }
}

/// A model built on the cylinder together with its basis.
#[derive(Debug, Clone)]
pub struct CylinderModel {
    pub model: SpectralModel,
    /// Basis functions ascending in λ, before merging equal eigenvalues.
    pub basis: Vec<CylinderMode>,
    /// (φ, basis[i]) for each basis function.
    pub projections: Vec<f64>,
    pub negative_eig: Eigenpair1D,
}

/// Project φ on every basis function by tensor Gauss-Legendre quadrature.
pub fn project(
    cfg: &CylinderConfig,
    basis: &[CylinderMode],
    phi: &(dyn Fn(f64, f64, f64) -> f64 + Sync),
) -> Vec<f64> {
    let n = cfg.quad_n;
    let gx = GaussRule::legendre(n, 0.0, cfg.lx);
    let gy = GaussRule::legendre(n, 0.0, cfg.ly);
    let gz = GaussRule::legendre(n, 0.0, cfg.height);
    // Weighted samples f[a][b][c] = W_a W_b W_c φ(x_a, y_b, z_c).
    let f: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|a| {
            let (gx, gy, gz) = (&gx, &gy, &gz);
            (0..n).flat_map(move |b| {
                (0..n).map(move |c| {
                    gx.weights[a]
                        * gy.weights[b]
                        * gz.weights[c]
                        * phi(gx.nodes[a], gy.nodes[b], gz.nodes[c])
                })
            })
        })
        .collect();
    // Contract one axis at a time: x -> p, then y -> q.
    let px = cfg.px;
    let py = cfg.py;
    let cx: Vec<Vec<f64>> = (0..px)
        .map(|p| gx.nodes.iter().map(|&x| cos_mode(p, cfg.lx, x)).collect())
        .collect();
    let cy: Vec<Vec<f64>> = (0..py)
        .map(|q| gy.nodes.iter().map(|&y| cos_mode(q, cfg.ly, y)).collect())
        .collect();
    let t1: Vec<f64> = (0..px)
        .into_par_iter()
        .flat_map_iter(|p| {
            let mut out = vec![0.0; n * n];
            for a in 0..n {
                let w = cx[p][a];
                let row = &f[a * n * n..(a + 1) * n * n];
                for (o, v) in out.iter_mut().zip(row) {
                    *o += w * v;
                }
            }
            out
        })
        .collect();
    let mut t2 = vec![0.0; px * py * n];
    for p in 0..px {
        for q in 0..py {
            for b in 0..n {
                let w = cy[q][b];
                for c in 0..n {
                    t2[(p * py + q) * n + c] += w * t1[p * n * n + b * n + c];
                }
            }
        }
    }
    let mut out: Vec<f64> = basis
        .iter()
        .map(|m| {
            let base = (m.rect.p * py + m.rect.q) * n;
            gz.nodes
                .iter()
                .enumerate()
                .map(|(c, &z)| t2[base + c] * m.axial.eval(z))
                .sum()
        })
        .collect();
    let max = out.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    for v in out.iter_mut() {
        if v.abs() < PROJECTION_CUTOFF * max {
            *v = 0.0;
        }
    }
    out
}

/// Build the spectral model of φ on the cylinder with monitoring points.
pub fn build_model(
    cfg: &CylinderConfig,
    phi: &(dyn Fn(f64, f64, f64) -> f64 + Sync),
    points: &[MonitoringPoint],
    kind: Convention,
) -> Result<CylinderModel, CylinderError> {
    cfg.validate()?;
    for p in points {
        let ok = p.coords.len() == 3
            && p.coords[0] > 0.0
            && p.coords[0] < cfg.lx
            && p.coords[1] > 0.0
            && p.coords[1] < cfg.ly
            && p.coords[2] > 0.0
            && p.coords[2] < cfg.height;
        if !ok {
            return Err(CylinderError::InvalidPoint(format!(
                "{} {:?} is not an interior point of the cylinder",
                p.label, p.coords
            )));
        }
    }
    let basis = cylinder_modes(cfg)?;
    let negative_eig = basis[0].axial;
    // The leading eigenfunction is cosh in z times a constant: check positivity.
    let positive = (0..=64).all(|i| basis[0].eval(0.5 * cfg.lx, 0.5 * cfg.ly, cfg.height * i as f64 / 64.0) > 0.0);
    if !positive {
        return Err(CylinderError::NotPositive);
    }
    let projections = project(cfg, &basis, phi);
    let modes = basis
        .iter()
        .zip(&projections)
        .map(|(m, &a)| SpectralMode {
            lambda: m.lambda(),
            coeffs: points
                .iter()
                .map(|p| if a == 0.0 { 0.0 } else { a * m.eval(p.coords[0], p.coords[1], p.coords[2]) })
                .collect(),
        })
        .collect();
    let model = SpectralModel::new(kind, points.to_vec(), modes)?;
    // Summability (p > 1) is only reported: φ that violates the Robin
    // condition, such as a constant, has coefficients ~ 1/j at a point, yet
    // the solution series converges for every t > 0.
    let decay = model.decay_report();
    if !(decay.exponent > 0.0) {
        return Err(CylinderError::DecayTooSlow {
            exponent: decay.exponent,
        });
    }
    Ok(CylinderModel {
        model,
        basis,
        projections,
        negative_eig,
    })
}

/// |λ - (∫_Ω |∇u|² - h ∫_{z=H} u²)| / (1 + |λ|) by tensor Gauss-Legendre quadrature.
pub fn rayleigh_identity_check(cfg: &CylinderConfig, mode: &CylinderMode) -> f64 {
    let n = cfg.quad_n;
    let gx = GaussRule::legendre(n, 0.0, cfg.lx);
    let gy = GaussRule::legendre(n, 0.0, cfg.ly);
    let gz = GaussRule::legendre(n, 0.0, cfg.height);
    let mut dirichlet = 0.0;
    let mut top = 0.0;
    for (&x, &wx) in gx.nodes.iter().zip(&gx.weights) {
        for (&y, &wy) in gy.nodes.iter().zip(&gy.weights) {
            for (&z, &wz) in gz.nodes.iter().zip(&gz.weights) {
                let g = mode.gradient(x, y, z);
                dirichlet += wx * wy * wz * (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]);
            }
            top += wx * wy * mode.eval(x, y, cfg.height).powi(2);
        }
    }
    let lambda = mode.lambda();
    (lambda - (dirichlet - cfg.h * top)).abs() / (1.0 + lambda.abs())
}

/// Monitoring points labelled P0, P1, ...
pub fn labelled_points(coords: &[[f64; 3]]) -> Vec<MonitoringPoint> {
    coords
        .iter()
        .enumerate()
        .map(|(i, c)| MonitoringPoint {
            label: format!("P{i}"),
            coords: c.to_vec(),
        })
        .collect()
}
