//! Command-line front end: Mittag-Leffler values, cylinder spectra, forward
//! solves, equation checks and order-recovery experiments.
//!
//! Exit codes: 0 success, 1 an experiment's clean run missed its tolerance,
//! 2 usage, input or numerical error.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use subdiff::cylinder::{
    build_model, cylinder_modes, labelled_points, CylinderConfig, InitialField,
};
use subdiff::experiment::{run_experiment, write_results, ExperimentConfig, Spacing, TimeGrid};
use subdiff::fractional_calculus::{graded_grid, verify_equation};
use subdiff::mittag_leffler::{ml, MLQuery};
use subdiff::order_estimator::{
    estimate_hatano_large_t, estimate_hatano_small_t, estimate_slope, estimate_thm1,
    format_number, Method, ObservationSeries,
};
use subdiff::spectral_model::{Convention, SpectralModel};

#[derive(Parser)]
#[command(name = "subdiff", version, about = "Subdiffusion forward solver and order recovery")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Output {
    /// Write to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate E_{rho,mu}(z).
    Ml(MlArgs),
    /// Cylinder eigenvalue table as CSV.
    Eigs(EigsArgs),
    /// Build a cylinder model and print it as JSON.
    Build(BuildArgs),
    /// Forward solution at one monitoring point over a time grid.
    Solve(SolveArgs),
    /// Check the equation residual of a model's solution by quadrature.
    Verify(VerifyArgs),
    /// Recover the order from a series file (t, sign, log_abs_u).
    Estimate(EstimateArgs),
    /// Run a synthesize-and-recover experiment.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct MlArgs {
    #[arg(long, allow_hyphen_values = true)]
    rho: f64,
    #[arg(long, allow_hyphen_values = true)]
    mu: f64,
    #[arg(long, allow_hyphen_values = true)]
    z: f64,
    /// Print value, sign, log_abs, estimated error and regime as CSV.
    #[arg(long)]
    verbose: bool,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Clone)]
struct CylinderArgs {
    /// Experiment config file; its cylinder, phi, points and convention are used.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "Lx")]
    lx: Option<f64>,
    #[arg(long = "Ly")]
    ly: Option<f64>,
    #[arg(long = "H")]
    height: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long = "Px")]
    px: Option<usize>,
    #[arg(long = "Py")]
    py: Option<usize>,
    #[arg(long = "J")]
    j: Option<usize>,
    #[arg(long)]
    quad_n: Option<usize>,
}

impl CylinderArgs {
    fn base(&self) -> Result<ExperimentConfig, String> {
        match &self.config {
            Some(p) => ExperimentConfig::from_file(p).map_err(|e| e.to_string()),
            None => Ok(ExperimentConfig::default()),
        }
    }

    fn apply(&self, mut c: CylinderConfig) -> CylinderConfig {
        c.lx = self.lx.unwrap_or(c.lx);
        c.ly = self.ly.unwrap_or(c.ly);
        c.height = self.height.unwrap_or(c.height);
        c.h = self.h.unwrap_or(c.h);
        c.px = self.px.unwrap_or(c.px);
        c.py = self.py.unwrap_or(c.py);
        c.j = self.j.unwrap_or(c.j);
        c.quad_n = self.quad_n.unwrap_or(c.quad_n);
        c
    }
}

#[derive(Args)]
struct EigsArgs {
    #[command(flatten)]
    cylinder: CylinderArgs,
    /// Number of rows, lowest eigenvalues first.
    #[arg(long, default_value_t = 10)]
    count: usize,
    #[command(flatten)]
    output: Output,
}

#[derive(Clone, Copy, ValueEnum)]
enum PhiChoice {
    Constant,
    FirstEigenfunction,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConventionArg {
    Rl,
    Caputo,
}

impl From<ConventionArg> for Convention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::Rl => Convention::RiemannLiouville,
            ConventionArg::Caputo => Convention::Caputo,
        }
    }
}

#[derive(Args)]
struct BuildArgs {
    #[command(flatten)]
    cylinder: CylinderArgs,
    /// Initial field; a config file can also give a gaussian bump.
    #[arg(long, value_enum)]
    phi: Option<PhiChoice>,
    /// Monitoring point x,y,z; repeat for several.
    #[arg(long = "point", value_parser = parse_point)]
    points: Vec<[f64; 3]>,
    #[arg(long, value_enum)]
    convention: Option<ConventionArg>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    t_min: Option<f64>,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long, value_enum)]
    spacing: Option<SpacingArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SpacingArg {
    Linear,
    Log,
}

#[derive(Args)]
struct SolveArgs {
    /// Model JSON from `build`.
    #[arg(long, conflicts_with = "config")]
    model: Option<PathBuf>,
    /// Experiment config: builds the model and supplies the time grid.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    rho: f64,
    /// Monitoring point index.
    #[arg(long, default_value_t = 0)]
    point: usize,
    #[command(flatten)]
    grid: GridArgs,
    /// Print t, sign, log_abs_u (the `estimate` input format).
    #[arg(long)]
    log_scale: bool,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, conflicts_with = "config")]
    model: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    rho: f64,
    #[arg(long, default_value_t = 0)]
    point: usize,
    /// Grid end point.
    #[arg(long, default_value_t = 2.0)]
    t_max: f64,
    /// Graded grid nodes.
    #[arg(long, default_value_t = 2049)]
    nodes: usize,
    /// Residuals are checked for t in [t_lo, t_max].
    #[arg(long, default_value_t = 0.05)]
    t_lo: f64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct EstimateArgs {
    /// thm1, slope, hatano_large or hatano_small (full names also accepted).
    #[arg(long)]
    method: Method,
    #[arg(long, allow_hyphen_values = true)]
    lambda1: Option<f64>,
    /// φ at the monitoring point, for hatano_small.
    #[arg(long, allow_hyphen_values = true)]
    phi: Option<f64>,
    /// Series CSV with columns t, sign, log_abs_u.
    #[arg(long = "in")]
    input: PathBuf,
    /// Half-open sample range start:end; the method's default otherwise.
    #[arg(long, value_parser = parse_window)]
    window: Option<std::ops::Range<usize>>,
    /// Also print the running estimate at each window sample.
    #[arg(long)]
    sequence: bool,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_point(s: &str) -> Result<[f64; 3], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("'{p}': {e}")))
        .collect::<Result<_, _>>()?;
    <[f64; 3]>::try_from(v).map_err(|v| format!("expected x,y,z, got {} numbers", v.len()))
}

fn parse_window(s: &str) -> Result<std::ops::Range<usize>, String> {
    let (a, b) = s.split_once(':').ok_or("expected start:end")?;
    let a: usize = a.parse().map_err(|e| format!("'{a}': {e}"))?;
    let b: usize = b.parse().map_err(|e| format!("'{b}': {e}"))?;
    Ok(a..b)
}

/// Failure that ends a command with exit code 2.
struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

fn emit(output: &Output, text: &str) -> Result<(), Failure> {
    match &output.out {
        Some(p) => fs::write(p, text).map_err(|e| Failure(format!("{}: {e}", p.display()))),
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn csv_text(rows: &[Vec<String>]) -> Result<String, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(r)?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| Failure(e.to_string()))?)?)
}

fn cmd_ml(a: &MlArgs) -> Result<(), Failure> {
    let v = ml(&MLQuery::new(a.rho, a.mu, a.z)?)?;
    let text = if a.verbose {
        csv_text(&[
            ["value", "sign", "log_abs", "est_rel_error", "regime"].map(String::from).to_vec(),
            vec![
                format_number(v.value),
                v.sign.as_i8().to_string(),
                format_number(v.log_abs),
                format!("{:e}", v.est_rel_error),
                v.regime.name().to_string(),
            ],
        ])?
    } else {
        format_number(v.value) + "\n"
    };
    emit(&a.output, &text)
}

fn cmd_eigs(a: &EigsArgs) -> Result<(), Failure> {
    let cfg = a.cylinder.apply(a.cylinder.base()?.cylinder);
    // Enough vertical modes that the lowest `count` rows are all present.
    let cfg = CylinderConfig {
        j: cfg.j.max(a.count),
        ..cfg
    };
    let modes = cylinder_modes(&cfg)?;
    let mut rows = vec![[
        "index", "p", "q", "j", "mu", "nu", "lambda", "normalizer", "residual",
    ]
    .map(String::from)
    .to_vec()];
    for (i, m) in modes.iter().take(a.count).enumerate() {
        rows.push(vec![
            i.to_string(),
            m.rect.p.to_string(),
            m.rect.q.to_string(),
            m.axial.index.to_string(),
            format_number(m.rect.mu),
            format_number(m.axial.nu),
            format_number(m.lambda()),
            format_number(m.axial.normalizer),
            format!("{:e}", m.axial.residual()),
        ]);
    }
    emit(&a.output, &csv_text(&rows)?)
}

fn build_from(
    base: &ExperimentConfig,
    cyl: &CylinderArgs,
    phi: Option<PhiChoice>,
    points: &[[f64; 3]],
    convention: Option<ConventionArg>,
) -> Result<SpectralModel, Failure> {
    let cfg = cyl.apply(base.cylinder);
    let field = match phi {
        Some(PhiChoice::Constant) => InitialField::Constant { value: 1.0 },
        Some(PhiChoice::FirstEigenfunction) => InitialField::FirstEigenfunction,
        None => base.phi.clone(),
    };
    let coords = if points.is_empty() { &base.points } else { points };
    let kind = convention.map(Convention::from).unwrap_or(base.convention);
    let built = build_model(&cfg, &field.field(&cfg), &labelled_points(coords), kind)?;
    let decay = built.model.decay_report();
    if !decay.summable {
        eprintln!(
            "warning: coefficient decay exponent {:.3} <= 1; tail bounds are infinite",
            decay.exponent
        );
    }
    Ok(built.model)
}

fn cmd_build(a: &BuildArgs) -> Result<(), Failure> {
    let base = a.cylinder.base()?;
    let model = build_from(&base, &a.cylinder, a.phi, &a.points, a.convention)?;
    emit(&a.output, &(model.to_json() + "\n"))
}

fn load_model(model: &Option<PathBuf>, config: &Option<PathBuf>) -> Result<(SpectralModel, ExperimentConfig), Failure> {
    match (model, config) {
        (Some(p), _) => {
            let text = fs::read_to_string(p).map_err(|e| Failure(format!("{}: {e}", p.display())))?;
            Ok((SpectralModel::from_json(&text)?, ExperimentConfig::default()))
        }
        (None, Some(c)) => {
            let cfg = ExperimentConfig::from_file(c)?;
            let built = build_model(
                &cfg.cylinder,
                &cfg.phi.field(&cfg.cylinder),
                &labelled_points(&cfg.points),
                cfg.convention,
            )?;
            Ok((built.model, cfg))
        }
        (None, None) => Err(Failure("one of --model or --config is required".into())),
    }
}

fn cmd_solve(a: &SolveArgs) -> Result<(), Failure> {
    let (model, cfg) = load_model(&a.model, &a.config)?;
    let g = cfg.time_grid;
    let grid = TimeGrid {
        t_min: a.grid.t_min.unwrap_or(g.t_min),
        t_max: a.grid.t_max.unwrap_or(g.t_max),
        count: a.grid.count.unwrap_or(g.count),
        spacing: match a.grid.spacing {
            Some(SpacingArg::Linear) => Spacing::Linear,
            Some(SpacingArg::Log) => Spacing::Log,
            None => g.spacing,
        },
    };
    if !(grid.t_min > 0.0 && grid.t_max > grid.t_min && grid.count >= 2) {
        return Err(Failure(format!(
            "need 0 < t_min < t_max and count >= 2, got [{}, {}] x {}",
            grid.t_min, grid.t_max, grid.count
        )));
    }
    let times = grid.times();
    let text = if a.log_scale {
        let mut buf = Vec::new();
        let values = times
            .iter()
            .map(|&t| Ok(model.solve_forward_log(a.rho, a.point, t)?.value))
            .collect::<Result<Vec<_>, subdiff::spectral_model::ModelError>>()?;
        let label = model.points()[a.point].label.clone();
        ObservationSeries::new(label, times, values)
            .map_err(|e| Failure(e.to_string()))
            .and_then(|s| Ok(s.write_csv(&mut buf)?))?;
        String::from_utf8(buf)?
    } else {
        let mut rows = vec![["t", "u", "tail_bound"].map(String::from).to_vec()];
        for &t in &times {
            let f = model.solve_forward(a.rho, a.point, t)?;
            rows.push(vec![format_number(t), format_number(f.value), format_number(f.tail_bound)]);
        }
        csv_text(&rows)?
    };
    emit(&a.output, &text)
}

fn cmd_verify(a: &VerifyArgs) -> Result<(), Failure> {
    let (model, _) = load_model(&a.model, &a.config)?;
    if a.nodes < 3 {
        return Err(Failure("--nodes must be at least 3".into()));
    }
    let grid = graded_grid(a.t_max, a.nodes, a.rho.clamp(0.05, 1.0));
    let r = verify_equation(&model, a.rho, a.point, &grid, (a.t_lo, a.t_max))?;
    let rows = vec![
        [
            "convention", "rho", "nodes_checked", "max_residual", "max_residual_t", "t_min",
            "initial_residual", "initial_quadrature_residual",
        ]
        .map(String::from)
        .to_vec(),
        vec![
            model.kind().name().to_string(),
            format_number(a.rho),
            r.nodes_checked.to_string(),
            format!("{:e}", r.max_residual),
            format_number(r.max_residual_t),
            format!("{:e}", r.t_min),
            format!("{:e}", r.initial_residual),
            format!("{:e}", r.initial_quadrature_residual),
        ],
    ];
    emit(&a.output, &csv_text(&rows)?)
}

fn cmd_estimate(a: &EstimateArgs) -> Result<(), Failure> {
    let file = fs::File::open(&a.input).map_err(|e| Failure(format!("{}: {e}", a.input.display())))?;
    let label = a
        .input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let series = ObservationSeries::read_csv(&label, io::BufReader::new(file))?;
    let need = |v: Option<f64>, flag: &str| {
        v.ok_or_else(|| Failure(format!("--{flag} is required for method {}", a.method)))
    };
    let w = a.window.clone();
    let est = match a.method {
        Method::Thm1Direct => estimate_thm1(&series, need(a.lambda1, "lambda1")?, w),
        Method::Lemma1Slope => estimate_slope(&series, need(a.lambda1, "lambda1")?, w),
        Method::HatanoLargeT => estimate_hatano_large_t(&series, w),
        Method::HatanoSmallT => estimate_hatano_small_t(&series, need(a.phi, "phi")?, w),
    }?;
    let mut rows = vec![
        ["method", "rho_hat", "window_start", "window_end", "residual"]
            .map(String::from)
            .to_vec(),
        vec![
            est.method.to_string(),
            format_number(est.rho_hat),
            est.window.0.to_string(),
            est.window.1.to_string(),
            format_number(est.residual),
        ],
    ];
    let mut text = csv_text(&rows)?;
    if a.sequence {
        rows = vec![["index", "t", "rho_hat"].map(String::from).to_vec()];
        for (k, v) in est.sequence.iter().enumerate() {
            let i = est.window.0 + k;
            rows.push(vec![i.to_string(), format_number(series.times()[i]), format_number(*v)]);
        }
        text.push('\n');
        text.push_str(&csv_text(&rows)?);
    }
    emit(&a.output, &text)
}

fn cmd_experiment(a: &ExperimentArgs) -> Result<ExitCode, Failure> {
    let mut cfg = ExperimentConfig::from_file(&a.config)?;
    if let Some(out) = &a.out {
        cfg.output_dir = out.clone();
    }
    let report = run_experiment(&cfg)?;
    write_results(&report.rows, io::stdout().lock())?;
    let v = report.violations();
    eprintln!(
        "{} runs, {} outside tolerance; output in {}",
        report.rows.len(),
        v,
        display(&cfg.output_dir)
    );
    Ok(ExitCode::from(report.exit_code() as u8))
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Ml(a) => cmd_ml(a).map(|_| ExitCode::SUCCESS),
        Command::Eigs(a) => cmd_eigs(a).map(|_| ExitCode::SUCCESS),
        Command::Build(a) => cmd_build(a).map(|_| ExitCode::SUCCESS),
        Command::Solve(a) => cmd_solve(a).map(|_| ExitCode::SUCCESS),
        Command::Verify(a) => cmd_verify(a).map(|_| ExitCode::SUCCESS),
        Command::Estimate(a) => cmd_estimate(a).map(|_| ExitCode::SUCCESS),
        Command::Experiment(a) => cmd_experiment(a),
    };
    match result {
        Ok(code) => code,
        Err(Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
