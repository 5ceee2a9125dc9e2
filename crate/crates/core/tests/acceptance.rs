//! Acceptance suite. Runs without the libtest harness so that one PASS/FAIL
//! line per criterion always reaches stdout; exits 1 if any criterion fails.
//! Tolerances and runtime budgets are pinned below.

use std::process::ExitCode;
use std::time::Instant;

use statrs::function::erf::erfc;
use subdiff::cylinder::{
    build_model, cylinder_modes, labelled_points, rayleigh_identity_check, sturm_negative_eig,
    sturm_positive_eigs, CylinderConfig, CylinderModel, InitialField,
};
use subdiff::fractional_calculus::{
    caputo_derivative_on_grid, graded_grid, rl_derivative_on_grid, SampledFunction,
};
use subdiff::logspace::signed_log_sum;
use subdiff::mittag_leffler::{ml, ml_value, MLQuery, MlConfig};
use subdiff::order_estimator::{
    add_noise, estimate_hatano_large_t, estimate_hatano_small_t, estimate_slope, estimate_thm1,
    EstimatorError, ObservationSeries,
};
use subdiff::quadrature::GaussRule;
use subdiff::special::gamma;
use subdiff::spectral_model::{Convention, MonitoringPoint, SpectralMode, SpectralModel};

// Criterion 1
const EXP_TOL: f64 = 1e-10;
const ERFC_TOL: f64 = 1e-8;
const OVERLAP_TOL: f64 = 1e-6;
const RECURRENCE_TOL: f64 = 1e-8;
// Criterion 3
const EIGENRELATION_TOL: f64 = 1e-3;
const EIGENRELATION_NODES: usize = 4096;
// Criterion 4
const CHAR_RESIDUAL_TOL: f64 = 1e-12;
const NORMALIZER_TOL: f64 = 1e-10;
const ORTHOGONALITY_TOL: f64 = 1e-10;
const RAYLEIGH_TOL: f64 = 1e-8;
const NU0: f64 = -1.439229;
const NU0_TOL: f64 = 1e-5;
// Criterion 5
const SLOPE_TOL: f64 = 0.01;
const THM1_TOL: f64 = 0.05;
const POINT_SPREAD_TOL: f64 = 0.01;
const CONVENTION_TOL: f64 = 0.005;
// Criterion 7
const LARGE_T_TOL: f64 = 0.02;
const SMALL_T_TOL: f64 = 0.01;
const HATANO_NOISE: f64 = 0.01;
// Criterion 8
const NOISE_LEVEL: f64 = 0.01;
const NOISE_SLOPE_TOL: f64 = 0.03;
const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

const RHOS: [f64; 3] = [0.3, 0.5, 0.8];
const POINTS: [[f64; 3]; 3] = [[0.5, 0.5, 0.5], [0.25, 0.75, 0.9], [0.3, 0.3, 0.1]];
const GRID_COUNT: usize = 64;

struct Outcome {
    pass: bool,
    detail: String,
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn log_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    let (la, lb) = (a.ln(), b.ln());
    let mut t: Vec<f64> = (0..n)
        .map(|i| (la + (lb - la) * i as f64 / (n - 1) as f64).exp())
        .collect();
    t[0] = a;
    t[n - 1] = b;
    t
}

fn lin_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

fn q(rho: f64, mu: f64, z: f64) -> MLQuery {
    MLQuery::new(rho, mu, z).unwrap()
}

fn unit_cylinder(kind: Convention) -> CylinderModel {
    let cfg = CylinderConfig::default();
    let phi = InitialField::Constant { value: 1.0 }.field(&cfg);
    build_model(&cfg, &phi, &labelled_points(&POINTS), kind).unwrap()
}

fn single_mode(kind: Convention, lambda: f64, coeff: f64) -> SpectralModel {
    SpectralModel::new(
        kind,
        vec![MonitoringPoint {
            label: "x0".into(),
            coords: vec![0.0],
        }],
        vec![SpectralMode {
            lambda,
            coeffs: vec![coeff],
        }],
    )
    .unwrap()
}

fn ml_correctness() -> Outcome {
    let mut exp_err = 0.0_f64;
    for i in 0..=800 {
        let z = -10.0 + 0.05 * i as f64;
        exp_err = exp_err.max(rel(ml_value(1.0, 1.0, z).unwrap(), z.exp()));
    }
    let mut erfc_err = 0.0_f64;
    for i in 0..=400 {
        let z = -6.0 + 0.02 * i as f64;
        let closed = (z * z).exp() * erfc(-z);
        erfc_err = erfc_err.max(rel(ml_value(0.5, 1.0, z).unwrap(), closed));
    }

    // Each switch point is approached from both sides. Where the series and
    // the asymptotic expansion never share a valid range (z < 0) the contour
    // integral links them.
    let cfg = MlConfig::default();
    let mut overlap = 0.0_f64;
    for &rho in &RHOS {
        for &mu in &[rho, 1.0] {
            let zs = cfg.pos_switch(rho);
            for i in 0..=8 {
                let z = zs - 1.0 + 0.25 * i as f64;
                let s = cfg.series(&q(rho, mu, z), cfg.series_tol).unwrap();
                let a = cfg.asymptotic_pos(&q(rho, mu, z), cfg.tail_terms).unwrap();
                overlap = overlap.max((s.log_abs - a.log_abs).abs());
            }
            for i in 0..=8 {
                let w = cfg.neg_series_w - 1.0 + 0.25 * i as f64;
                let z = -w.powf(rho);
                let s = cfg.series(&q(rho, mu, z), cfg.series_tol).unwrap();
                let c = cfg.contour(&q(rho, mu, z)).unwrap();
                overlap = overlap.max(rel(s.value, c.value));
            }
            let mut z = -cfg.neg_switch - 0.01;
            while cfg.asymptotic_neg(&q(rho, mu, z), cfg.tail_terms).unwrap().est_rel_error
                > cfg.neg_accept
            {
                z *= 1.05;
            }
            for i in 0..=8 {
                let zz = z + 1.0 - 0.25 * i as f64;
                if zz < -cfg.neg_switch {
                    let a = cfg.asymptotic_neg(&q(rho, mu, zz), cfg.tail_terms).unwrap();
                    let c = cfg.contour(&q(rho, mu, zz)).unwrap();
                    overlap = overlap.max(rel(a.value, c.value));
                }
            }
        }
    }

    // E_{ρ,μ}(z) = 1/Γ(μ) + z E_{ρ,ρ+μ}(z), relative to the largest term.
    let mut rec = 0.0_f64;
    for &rho in &[0.3, 0.5, 0.8, 1.2, 1.7] {
        for &mu in &[0.5, 1.0] {
            for &z in &[-200.0, -50.0, -12.0, -5.0, -1.0, -0.1, 0.3, 2.0, 8.0, 30.0] {
                let lhs = ml(&q(rho, mu, z)).unwrap();
                let next = ml(&q(rho, rho + mu, z)).unwrap();
                if !lhs.is_representable() || !next.is_representable() {
                    continue;
                }
                let a = 1.0 / gamma(mu);
                let b = z * next.value;
                let scale = lhs.value.abs().max(a.abs()).max(b.abs());
                rec = rec.max((lhs.value - a - b).abs() / scale);
            }
        }
    }

    Outcome {
        pass: exp_err <= EXP_TOL
            && erfc_err <= ERFC_TOL
            && overlap <= OVERLAP_TOL
            && rec <= RECURRENCE_TOL,
        detail: format!(
            "exp {exp_err:.1e}, erfc {erfc_err:.1e}, overlap {overlap:.1e}, recurrence {rec:.1e}"
        ),
    }
}

fn negative_asymptotic_law() -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    for &rho in &RHOS {
        let g = gamma(-rho).abs();
        for i in 0..=200 {
            let z = 50.0 * 20f64.powf(i as f64 / 200.0);
            let e = ml_value(rho, rho, -z).unwrap();
            // Deviation as a fraction of the allowed 3/z.
            worst = worst.max((e * z * z * g - 1.0).abs() * z / 3.0);
        }
    }
    Outcome {
        pass: worst <= 1.0,
        detail: format!("max |E z² |Γ(-ρ)| - 1| / (3/z) = {worst:.3}"),
    }
}

fn eigenrelation() -> Outcome {
    let mut rl_err = 0.0_f64;
    let mut caputo_err = 0.0_f64;
    for &rho in &[0.4, 0.6] {
        let grid = graded_grid(1.0, EIGENRELATION_NODES, rho);
        let checked: Vec<usize> = (1..EIGENRELATION_NODES)
            .filter(|&i| grid[i] >= 0.05 && i % 64 == 63)
            .collect();
        for &lambda in &[-1.5, 1.0, 3.0] {
            let y = |t: f64| t.powf(rho - 1.0) * ml_value(rho, rho, -lambda * t.powf(rho)).unwrap();
            let f = SampledFunction::from_fn_singular(grid.clone(), rho - 1.0, y).unwrap();
            let d = rl_derivative_on_grid(&f, rho).unwrap();
            for &i in &checked {
                rl_err = rl_err.max(rel(d[i], -lambda * y(grid[i])));
            }
            let e = |t: f64| ml_value(rho, 1.0, -lambda * t.powf(rho)).unwrap();
            let f = SampledFunction::from_fn(grid.clone(), e).unwrap();
            let d = caputo_derivative_on_grid(&f, rho).unwrap();
            for &i in &checked {
                caputo_err = caputo_err.max(rel(d[i], -lambda * e(grid[i])));
            }
        }
    }
    Outcome {
        pass: rl_err <= EIGENRELATION_TOL && caputo_err <= EIGENRELATION_TOL,
        detail: format!("RL {rl_err:.1e}, Caputo {caputo_err:.1e} over t >= 0.05"),
    }
}

fn cylinder_spectra() -> Outcome {
    let cfg = CylinderConfig::default();
    let neg = sturm_negative_eig(cfg.height, cfg.h);
    let pos = sturm_positive_eigs(cfg.height, cfg.h, 40).unwrap();
    let mut residual = neg.residual();
    for p in &pos {
        residual = residual.max(p.residual());
    }
    let g = GaussRule::legendre(96, 0.0, cfg.height);
    let quad = |f: &dyn Fn(f64) -> f64| g.integrate(f);
    let mut normalizer = (quad(&|z| neg.eval(z).powi(2)) - 1.0).abs();
    for p in pos.iter().take(12) {
        normalizer = normalizer.max((quad(&|z| p.eval(z).powi(2)) - 1.0).abs());
    }
    let mut orth = 0.0_f64;
    for (i, a) in pos.iter().take(12).enumerate() {
        orth = orth.max(quad(&|z| neg.eval(z) * a.eval(z)).abs());
        for b in pos.iter().take(i) {
            orth = orth.max(quad(&|z| a.eval(z) * b.eval(z)).abs());
        }
    }
    let modes = cylinder_modes(&cfg).unwrap();
    let rayleigh = modes
        .iter()
        .take(10)
        .map(|m| rayleigh_identity_check(&cfg, m))
        .fold(0.0_f64, f64::max);
    let nu_err = (neg.nu - NU0).abs();
    Outcome {
        pass: residual <= CHAR_RESIDUAL_TOL
            && normalizer <= NORMALIZER_TOL
            && orth <= ORTHOGONALITY_TOL
            && rayleigh <= RAYLEIGH_TOL
            && nu_err <= NU0_TOL,
        detail: format!(
            "residual {residual:.1e}, normalizer {normalizer:.1e}, orthogonality {orth:.1e}, \
             Rayleigh {rayleigh:.1e}, ν₀ = {:.7}",
            neg.nu
        ),
    }
}

fn end_to_end() -> Outcome {
    let times = log_grid(1.0, 50.0, GRID_COUNT);
    let rl = unit_cylinder(Convention::RiemannLiouville);
    let caputo = unit_cylinder(Convention::Caputo);
    let l1 = rl.model.lambda1();
    let (mut slope_err, mut thm1_err, mut conv) = (0.0_f64, 0.0_f64, 0.0_f64);
    // The agreement check applies to the slope estimate; the direct formula
    // carries a point-dependent O(ln|P₁φ(x₀)| / t) bias inside its 0.05 budget,
    // so its spread is reported only.
    let (mut spread, mut thm1_spread) = (0.0_f64, 0.0_f64);
    let mut failures = Vec::new();
    for &rho in &RHOS {
        let mut slope_hats = Vec::new();
        let mut thm1_hats = Vec::new();
        for p in 0..POINTS.len() {
            let a = ObservationSeries::from_model(&rl.model, rho, p, times.clone()).unwrap();
            let b = ObservationSeries::from_model(&caputo.model, rho, p, times.clone()).unwrap();
            match (
                estimate_slope(&a, l1, None),
                estimate_slope(&b, l1, None),
                estimate_thm1(&a, l1, None),
                estimate_thm1(&b, l1, None),
            ) {
                (Ok(sa), Ok(sb), Ok(ta), Ok(tb)) => {
                    slope_err = slope_err.max((sa.rho_hat - rho).abs());
                    thm1_err = thm1_err.max((ta.rho_hat - rho).abs());
                    conv = conv
                        .max((sa.rho_hat - sb.rho_hat).abs())
                        .max((ta.rho_hat - tb.rho_hat).abs());
                    slope_hats.push(sa.rho_hat);
                    thm1_hats.push(ta.rho_hat);
                }
                other => failures.push(format!("ρ {rho} point {p}: {other:?}")),
            }
        }
        spread = spread.max(range(&slope_hats));
        thm1_spread = thm1_spread.max(range(&thm1_hats));
    }
    Outcome {
        pass: failures.is_empty()
            && slope_err <= SLOPE_TOL
            && thm1_err <= THM1_TOL
            && spread <= POINT_SPREAD_TOL
            && conv <= CONVENTION_TOL,
        detail: if failures.is_empty() {
            format!(
                "slope {slope_err:.1e}, thm1 {thm1_err:.1e}, point spread {spread:.1e} \
                 (thm1 {thm1_spread:.1e}), RL vs Caputo {conv:.1e}"
            )
        } else {
            failures.join("; ")
        },
    }
}

fn range(xs: &[f64]) -> f64 {
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    if xs.len() > 1 {
        hi - lo
    } else {
        0.0
    }
}

fn degeneracy_guard() -> Outcome {
    let times = log_grid(1.0, 50.0, GRID_COUNT);
    let cfg = CylinderConfig {
        h: 1f64.tanh(),
        ..CylinderConfig::default()
    };
    let phi = InitialField::Constant { value: 1.0 }.field(&cfg);
    let cyl = build_model(&cfg, &phi, &labelled_points(&POINTS[..1]), Convention::RiemannLiouville)
        .unwrap()
        .model;
    let synthetic = SpectralModel::new(
        Convention::RiemannLiouville,
        vec![MonitoringPoint {
            label: "x0".into(),
            coords: vec![0.0],
        }],
        vec![
            SpectralMode {
                lambda: -1.0,
                coeffs: vec![1.0],
            },
            SpectralMode {
                lambda: 2.0,
                coeffs: vec![0.5],
            },
        ],
    )
    .unwrap();
    let mut notes = Vec::new();
    let mut pass = true;
    for (name, model) in [("cylinder", &cyl), ("synthetic", &synthetic)] {
        let status = model.check_assumption6();
        let s = ObservationSeries::from_model(model, 0.5, 0, times.clone()).unwrap();
        let l1 = model.lambda1();
        let rejected = |r: Result<_, EstimatorError>| {
            matches!(r, Err(EstimatorError::Assumption6Violated { .. }))
        };
        let ok = !status.satisfied
            && rejected(estimate_thm1(&s, l1, None))
            && rejected(estimate_slope(&s, l1, None));
        pass &= ok;
        notes.push(format!("{name} λ₁ = {l1:.15} rejected: {ok}"));
    }
    Outcome {
        pass,
        detail: notes.join(", "),
    }
}

fn hatano_baselines() -> Outcome {
    let rho = 0.5;
    let decaying = single_mode(Convention::Caputo, 1.0, 1.0);
    let late = log_grid(20.0, 200.0, GRID_COUNT);
    let late_series = ObservationSeries::from_model(&decaying, rho, 0, late.clone()).unwrap();
    let large = estimate_hatano_large_t(&late_series, None).unwrap();
    let large_err = (large.rho_hat - rho).abs();

    let early = lin_grid(1e-4, 1e-2, GRID_COUNT);
    let early_series = ObservationSeries::from_model(&decaying, rho, 0, early).unwrap();
    let small = estimate_hatano_small_t(&early_series, 1.0, None).unwrap();
    let small_err = (small.rho_hat - rho).abs();

    // Matched growing configuration: same order, grid, noise and seeds.
    let growing = single_mode(Convention::Caputo, -2.0, 1.0);
    let grow_series = ObservationSeries::from_model(&growing, rho, 0, late).unwrap();
    let l1 = growing.lambda1();
    let slope_clean = estimate_slope(&grow_series, l1, None).unwrap().rho_hat;
    let (mut hatano_shift, mut slope_shift) = (0.0, 0.0);
    for &seed in &SEEDS {
        let noisy = add_noise(&late_series, HATANO_NOISE, seed).unwrap();
        hatano_shift += match estimate_hatano_large_t(&noisy, None) {
            Ok(e) => (e.rho_hat - large.rho_hat).abs(),
            // An estimate pushed out of range counts as the largest possible miss.
            Err(_) => 1.0,
        };
        let noisy = add_noise(&grow_series, HATANO_NOISE, seed).unwrap();
        slope_shift += (estimate_slope(&noisy, l1, None).unwrap().rho_hat - slope_clean).abs();
    }
    hatano_shift /= SEEDS.len() as f64;
    slope_shift /= SEEDS.len() as f64;
    Outcome {
        pass: large_err <= LARGE_T_TOL && small_err <= SMALL_T_TOL && hatano_shift > slope_shift,
        detail: format!(
            "large-t {large_err:.1e}, small-t {small_err:.1e}, noise shift hatano {hatano_shift:.1e} \
             vs slope {slope_shift:.1e}"
        ),
    }
}

fn noise_robustness() -> Outcome {
    let rho = 0.5;
    let cm = unit_cylinder(Convention::RiemannLiouville);
    let l1 = cm.model.lambda1();
    let mut worst = 0.0_f64;
    let mut failures = Vec::new();
    for p in 0..POINTS.len() {
        let clean = ObservationSeries::from_model(&cm.model, rho, p, log_grid(1.0, 50.0, GRID_COUNT))
            .unwrap();
        for &seed in &SEEDS {
            let noisy = add_noise(&clean, NOISE_LEVEL, seed).unwrap();
            match estimate_slope(&noisy, l1, None) {
                Ok(e) => worst = worst.max((e.rho_hat - rho).abs()),
                Err(e) => failures.push(format!("point {p} seed {seed}: {e}")),
            }
        }
    }
    Outcome {
        pass: failures.is_empty() && worst <= NOISE_SLOPE_TOL,
        detail: if failures.is_empty() {
            format!("max |ρ̂ - ρ*| = {worst:.1e} over {} runs", POINTS.len() * SEEDS.len())
        } else {
            failures.join("; ")
        },
    }
}

fn remainder_decay() -> Outcome {
    let cm = unit_cylinder(Convention::RiemannLiouville);
    let times: Vec<f64> = log_grid(1.0, 50.0, GRID_COUNT)
        .into_iter()
        .filter(|&t| t >= 10.0)
        .collect();
    let mut min_log_u = f64::INFINITY;
    let mut worst_ratio = f64::NEG_INFINITY;
    for &rho in &RHOS {
        for p in 0..POINTS.len() {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            let mut eps = 0.0;
            for &t in &times {
                let u = cm.model.solve_forward_log(rho, p, t).unwrap().value;
                min_log_u = min_log_u.min(if u.is_zero() { f64::NEG_INFINITY } else { u.log_abs });
                let d = cm.model.asymptotic_decomposition(rho, p, t).unwrap();
                eps = d.epsilon;
                let rest = signed_log_sum(&[d.sigma_prime, d.sigma_dprime]).total;
                if !rest.is_zero() {
                    xs.push(t);
                    ys.push(rest.log_abs - d.u1.log_abs);
                }
            }
            let n = xs.len() as f64;
            let mx = xs.iter().sum::<f64>() / n;
            let my = ys.iter().sum::<f64>() / n;
            let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
            let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
            let slope = sxy / sxx;
            // slope <= -ε/2 is ratio >= 1.
            worst_ratio = if worst_ratio == f64::NEG_INFINITY {
                -slope / (eps / 2.0)
            } else {
                worst_ratio.min(-slope / (eps / 2.0))
            };
        }
    }
    Outcome {
        pass: min_log_u > 0.0 && worst_ratio >= 1.0,
        detail: format!(
            "min ln|u| for t >= 10: {min_log_u:.2}, min fitted slope / (-ε/2) = {worst_ratio:.3}"
        ),
    }
}

type Criterion = (u32, &'static str, f64, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        (1, "Mittag-Leffler correctness", 5.0, ml_correctness),
        (2, "negative-argument asymptotic law", 1.0, negative_asymptotic_law),
        (3, "eigenrelation oracle", 30.0, eigenrelation),
        (4, "cylinder spectra", 5.0, cylinder_spectra),
        (5, "end-to-end order recovery", 60.0, end_to_end),
        (6, "degeneracy guard", 5.0, degeneracy_guard),
        (7, "derivative-based baselines", 5.0, hatano_baselines),
        (8, "noise robustness", 5.0, noise_robustness),
        (9, "leading-term dominance", 5.0, remainder_decay),
    ];
    let mut failed = 0;
    for (n, name, budget, run) in criteria {
        let start = Instant::now();
        let out = run();
        let secs = start.elapsed().as_secs_f64();
        let pass = out.pass && secs <= budget;
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {n} ({name}): {} | {} | {secs:.2} s of {budget} s",
            if pass { "PASS" } else { "FAIL" },
            out.detail
        );
    }
    println!("acceptance: {} of 9 criteria passed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
