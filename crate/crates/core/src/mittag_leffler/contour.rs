//! Inversion of the Laplace transform s^{ρ-μ} / (s^ρ - z) along a contour
//! made of two rays at angles ±θ₀ joined by a small arc around the origin.
//! Poles of the integrand crossed while deforming the Bromwich line onto
//! this contour contribute their residues explicitly.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::{MLQuery, MLValue, MlError, Regime};
use crate::quadrature::integrate_adaptive;
use crate::special::recip_gamma;

const THETA_CANDIDATES: [f64; 5] = [0.75 * PI, 0.625 * PI, 0.875 * PI, 0.55 * PI, 0.95 * PI];
/// Minimum angular distance between the rays and any pole.
const POLE_CLEARANCE: f64 = PI / 16.0;
/// Length of the rays past the arc, in units of 1/|cos θ₀|; e^{-45} is negligible.
const RAY_DECAY: f64 = 45.0;
const MAX_PANELS: usize = 4000;

fn integrand(s: Complex64, rho: f64, mu: f64, z: f64) -> Complex64 {
    let ln_s = s.ln();
    let s_rho = (rho * ln_s).exp();
    ((rho - mu) * ln_s + s).exp() / (s_rho - z)
}

/// Angles in (-π, π] of the poles s^ρ = z on the principal sheet.
fn pole_angles(rho: f64, z: f64) -> Vec<f64> {
    let arg_z = if z < 0.0 { PI } else { 0.0 };
    let mut out = Vec::new();
    let kmax = (rho / 2.0 + 1.0).ceil() as i64;
    for k in -kmax..=kmax {
        let a = (arg_z + 2.0 * PI * k as f64) / rho;
        if a > -PI && a <= PI {
            out.push(a);
        }
    }
    out
}

pub(super) fn evaluate(q: &MLQuery) -> Result<MLValue, MlError> {
    q.validate()?;
    let (rho, mu, z) = (q.rho, q.mu, q.z);
    if z == 0.0 {
        return Ok(MLValue::from_value(
            recip_gamma(mu),
            f64::EPSILON,
            Regime::Contour,
        ));
    }
    let w = q.pole_radius();
    let poles = pole_angles(rho, z);
    let theta0 = THETA_CANDIDATES
        .iter()
        .copied()
        .find(|&t| poles.iter().all(|&p| (p.abs() - t).abs() >= POLE_CLEARANCE))
        .unwrap_or(THETA_CANDIDATES[0]);
    let eps = 0.5 * w.min(1.0);

    // Residues of the poles inside the contour, (1/ρ) s^{1-μ} e^s.
    let mut residues = 0.0;
    let mut residue_mag = 0.0;
    for &a in poles.iter().filter(|a| a.abs() < theta0) {
        let s = Complex64::from_polar(w, a);
        let r = ((1.0 - mu) * s.ln() + s).exp() / rho;
        residues += r.re;
        residue_mag += r.norm();
    }

    let dir = Complex64::from_polar(1.0, theta0);
    let r_max = eps + RAY_DECAY / theta0.cos().abs();
    let ray = integrate_adaptive(
        |r| (integrand(dir * r, rho, mu, z) * dir).im,
        eps,
        r_max,
        1e-17,
        1e-14,
        MAX_PANELS,
    );
    let arc = integrate_adaptive(
        |phi| {
            let e = Complex64::from_polar(eps, phi);
            (integrand(e, rho, mu, z) * Complex64::i() * e).im
        },
        0.0,
        theta0,
        1e-17,
        1e-14,
        MAX_PANELS,
    );
    let value = residues + (ray.value + arc.value) / PI;
    let scale = (ray.abs_value + arc.abs_value) / PI;
    // The residues respond one for one to the rounding of w, about eps ln w
    // relative.
    let residue_err = residue_mag * f64::EPSILON * (2.0 + 2.0 * w * (1.0 + w.ln().abs()));
    let abs_err =
        (ray.abs_error + arc.abs_error) / PI + 64.0 * f64::EPSILON * scale + residue_err;
    // Relative to the smallest value consistent with the error bound, so a
    // result swamped by cancellation reports an infinite estimate.
    let est = if abs_err >= value.abs() {
        f64::INFINITY
    } else {
        abs_err / (value.abs() - abs_err)
    };
    Ok(MLValue::from_value(value, est, Regime::Contour))
}
