//! Numerical integration: adaptive Gauss-Kronrod (7/15) on finite intervals and
//! fixed Gauss-Legendre rules for tensor quadrature.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

/// Gauss weights for the odd Kronrod nodes XGK[1], XGK[3], XGK[5] and the center.
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    /// Sum of per-panel |K15 - G7| differences.
    pub abs_error: f64,
    /// Integral of |f|, used to judge rounding against cancellation.
    pub abs_value: f64,
    pub converged: bool,
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    abs_value: f64,
}

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Panel {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    let mut abs = WGK[7] * fc.abs();
    for j in 0..7 {
        let dx = h * XGK[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        kron += WGK[j] * (f1 + f2);
        abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    Panel {
        a,
        b,
        value: kron * h,
        error: ((kron - gauss) * h).abs(),
        abs_value: abs * h.abs(),
    }
}

/// Adaptive Gauss-Kronrod integration of `f` over `[a, b]`.
///
/// Bisects the panel with the largest error estimate until the total estimate
/// drops below `max(abs_tol, rel_tol * |I|)` or `max_panels` is reached.
pub fn integrate_adaptive<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_panels: usize,
) -> Integral {
    let mut panels = vec![gk15(&mut f, a, b)];
    loop {
        let value: f64 = panels.iter().map(|p| p.value).sum();
        let error: f64 = panels.iter().map(|p| p.error).sum();
        let abs_value: f64 = panels.iter().map(|p| p.abs_value).sum();
        let target = abs_tol.max(rel_tol * value.abs());
        if error <= target || panels.len() >= max_panels {
            return Integral {
                value,
                abs_error: error,
                abs_value,
                converged: error <= target,
            };
        }
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let p = panels.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        if mid <= p.a.min(p.b) || mid >= p.a.max(p.b) {
            // Panel can no longer be split in floating point.
            return Integral {
                value,
                abs_error: error,
                abs_value,
                converged: false,
            };
        }
        panels.push(gk15(&mut f, p.a, mid));
        panels.push(gk15(&mut f, mid, p.b));
    }
}

/// Gauss-Legendre nodes and weights on a finite interval.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    /// `n`-point rule mapped to `[a, b]`. `n` must be at least 2.
    pub fn legendre(n: usize, a: f64, b: f64) -> Self {
        let n = NonZeroUsize::new(n.max(2)).expect("n >= 2");
        let rule = GaussLegendre::new(n);
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let (nodes, weights) = rule
            .as_node_weight_pairs()
            .iter()
            .map(|&(x, w)| (c + h * x, h * w))
            .unzip();
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kronrod_exact_for_degree_22() {
        // K15 integrates polynomials up to degree 22 exactly on a single panel.
        for deg in [0_i32, 5, 13, 22] {
            let p = gk15(&mut |x: f64| x.powi(deg) + 1.0, 0.0, 1.0);
            let exact = 1.0 / (deg as f64 + 1.0) + 1.0;
            assert!((p.value - exact).abs() < 1e-15, "deg {deg}");
        }
    }

    #[test]
    fn gauss_exact_for_degree_13() {
        // The embedded G7 rule is exact to degree 13, so the error estimate vanishes.
        let p = gk15(&mut |x: f64| x.powi(13) - 3.0 * x.powi(6), -1.0, 2.0);
        assert!(p.error < 1e-11, "error = {}", p.error);
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        let r = integrate_adaptive(|x: f64| 1.0 / x.sqrt(), 0.0, 1.0, 1e-12, 1e-12, 500);
        assert!((r.value - 2.0).abs() < 1e-9);
    }

    #[test]
    fn adaptive_oscillatory() {
        let r = integrate_adaptive(|x: f64| (20.0 * x).cos(), 0.0, 3.0, 1e-14, 1e-14, 500);
        assert!(r.converged);
        assert!((r.value - (60.0_f64).sin() / 20.0).abs() < 1e-13);
    }

    #[test]
    fn legendre_rule_maps_interval() {
        let rule = GaussRule::legendre(20, 1.0, 3.0);
        assert_eq!(rule.len(), 20);
        let v = rule.integrate(|x| x.exp());
        assert!((v - (3.0_f64.exp() - 1.0_f64.exp())).abs() < 1e-13);
    }
}
