//! Synthesize-and-recover experiments: build a cylinder model, sample the
//! forward solution at monitoring points, perturb it and run the order
//! estimators. Results go to CSV files under the configured output directory.
//!
//! Config schema (JSON):
//!
//! ```json
//! {
//!   "cylinder": {"Lx": 1, "Ly": 1, "H": 1, "h": 1, "Px": 6, "Py": 6, "J": 12, "quad_n": 64},
//!   "convention": "riemann_liouville",
//!   "rho_true": [0.3, 0.5, 0.8],
//!   "phi": {"type": "constant", "value": 1},
//!   "points": [[0.5, 0.5, 0.5]],
//!   "time_grid": {"t_min": 1, "t_max": 50, "count": 64, "spacing": "log"},
//!   "noise": {"levels": [0, 0.01], "seeds": [1, 2, 3]},
//!   "methods": ["thm1_direct", "lemma1_slope"],
//!   "tolerances": {"thm1_direct": 0.05, "lemma1_slope": 0.01},
//!   "output_dir": "out"
//! }
//! ```
//!
//! `convention`, `tolerances`, `noise` and `methods` are optional. Only clean
//! runs (noise level 0) of methods with a tolerance decide the exit status.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cylinder::{build_model, labelled_points, CylinderConfig, CylinderError, InitialField};
use crate::order_estimator::{
    add_noise, estimate_hatano_large_t, estimate_hatano_small_t, estimate_slope, estimate_thm1,
    format_number, EstimatorError, Method, ObservationSeries, OrderEstimate, MIN_SAMPLES,
};
use crate::spectral_model::{Convention, SpectralModel};

/// Version tag written in the first line of every CSV file.
pub const SCHEMA_VERSION: &str = "subdiff-experiment/1";

pub const RESULTS_FILE: &str = "results.csv";
pub const SEQUENCE_DIR: &str = "sequences";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{}{field}: {message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Invalid {
        line: Option<usize>,
        field: String,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Cylinder(#[from] CylinderError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub t_min: f64,
    pub t_max: f64,
    pub count: usize,
    #[serde(default = "default_spacing")]
    pub spacing: Spacing,
}

fn default_spacing() -> Spacing {
    Spacing::Log
}

impl TimeGrid {
    pub fn times(&self) -> Vec<f64> {
        let n = self.count;
        let (a, b) = (self.t_min, self.t_max);
        let mut out: Vec<f64> = (0..n)
            .map(|i| {
                let f = i as f64 / (n - 1) as f64;
                match self.spacing {
                    Spacing::Linear => a + (b - a) * f,
                    Spacing::Log => (a.ln() + (b.ln() - a.ln()) * f).exp(),
                }
            })
            .collect();
        // Pin the end points against exp/ln rounding.
        out[0] = a;
        out[n - 1] = b;
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub levels: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            levels: vec![0.0],
            seeds: vec![0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub cylinder: CylinderConfig,
    #[serde(default = "default_convention")]
    pub convention: Convention,
    pub rho_true: Vec<f64>,
    pub phi: InitialField,
    pub points: Vec<[f64; 3]>,
    pub time_grid: TimeGrid,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_tolerances")]
    pub tolerances: BTreeMap<Method, f64>,
    pub output_dir: PathBuf,
}

fn default_convention() -> Convention {
    Convention::RiemannLiouville
}

fn default_methods() -> Vec<Method> {
    vec![Method::Thm1Direct, Method::Lemma1Slope]
}

fn default_tolerances() -> BTreeMap<Method, f64> {
    BTreeMap::from([(Method::Thm1Direct, 0.05), (Method::Lemma1Slope, 0.01)])
}

impl Default for ExperimentConfig {
    /// Unit cylinder, φ ≡ 1, three points, clean log grid on [1, 50].
    fn default() -> Self {
        Self {
            cylinder: CylinderConfig::default(),
            convention: default_convention(),
            rho_true: vec![0.3, 0.5, 0.8],
            phi: InitialField::Constant { value: 1.0 },
            points: vec![[0.5, 0.5, 0.5], [0.25, 0.75, 0.9], [0.3, 0.3, 0.1]],
            time_grid: TimeGrid {
                t_min: 1.0,
                t_max: 50.0,
                count: 64,
                spacing: Spacing::Log,
            },
            noise: NoiseConfig::default(),
            methods: default_methods(),
            tolerances: default_tolerances(),
            output_dir: PathBuf::from("experiment_out"),
        }
    }
}

/// 1-based line of the first occurrence of `"key"` in the source text.
fn line_of(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        cfg.validate_with_source(Some(text))?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.validate_with_source(None)
    }

    fn validate_with_source(&self, text: Option<&str>) -> Result<(), ConfigError> {
        let invalid = |key: &str, field: String, message: String| ConfigError::Invalid {
            line: text.and_then(|t| line_of(t, key)),
            field,
            message,
        };
        self.cylinder
            .validate()
            .map_err(|e| invalid("cylinder", "cylinder".into(), e.to_string()))?;
        self.phi
            .validate()
            .map_err(|e| invalid("phi", "phi".into(), e.to_string()))?;
        if self.rho_true.is_empty() {
            return Err(invalid("rho_true", "rho_true".into(), "must not be empty".into()));
        }
        for (i, &r) in self.rho_true.iter().enumerate() {
            if !(r > 0.0 && r < 1.0) {
                return Err(invalid(
                    "rho_true",
                    format!("rho_true[{i}]"),
                    format!("{r} is outside (0, 1)"),
                ));
            }
        }
        if self.points.is_empty() {
            return Err(invalid("points", "points".into(), "must not be empty".into()));
        }
        let c = &self.cylinder;
        for (i, p) in self.points.iter().enumerate() {
            let inside = p[0] > 0.0
                && p[0] < c.lx
                && p[1] > 0.0
                && p[1] < c.ly
                && p[2] > 0.0
                && p[2] < c.height;
            if !inside {
                return Err(invalid(
                    "points",
                    format!("points[{i}]"),
                    format!("{p:?} is not an interior point of the cylinder"),
                ));
            }
        }
        let g = &self.time_grid;
        if !(g.t_min > 0.0 && g.t_min.is_finite()) {
            return Err(invalid(
                "t_min",
                "time_grid.t_min".into(),
                format!("{} must be positive", g.t_min),
            ));
        }
        if !(g.t_max > g.t_min && g.t_max.is_finite()) {
            return Err(invalid(
                "t_max",
                "time_grid.t_max".into(),
                format!("{} must exceed t_min = {}", g.t_max, g.t_min),
            ));
        }
        if g.count < MIN_SAMPLES {
            return Err(invalid(
                "count",
                "time_grid.count".into(),
                format!("{} must be at least {MIN_SAMPLES}", g.count),
            ));
        }
        if self.noise.levels.is_empty() || self.noise.seeds.is_empty() {
            return Err(invalid(
                "noise",
                "noise".into(),
                "levels and seeds must not be empty".into(),
            ));
        }
        for (i, &l) in self.noise.levels.iter().enumerate() {
            if !(0.0..=crate::order_estimator::MAX_NOISE).contains(&l) {
                return Err(invalid(
                    "levels",
                    format!("noise.levels[{i}]"),
                    format!("{l} is outside [0, {}]", crate::order_estimator::MAX_NOISE),
                ));
            }
        }
        if self.methods.is_empty() {
            return Err(invalid("methods", "methods".into(), "must not be empty".into()));
        }
        for (m, &tol) in &self.tolerances {
            if !(tol > 0.0) {
                return Err(invalid(
                    "tolerances",
                    format!("tolerances.{m}"),
                    format!("{tol} must be positive"),
                ));
            }
        }
        Ok(())
    }
}

/// One estimator run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub rho_true: f64,
    pub method: Method,
    pub point: String,
    pub noise: f64,
    pub seed: u64,
    pub outcome: Result<OrderEstimate, EstimatorError>,
    pub times: Vec<f64>,
    /// Tolerance from the config, if this method has one.
    pub tolerance: Option<f64>,
}

impl RunRow {
    pub fn abs_error(&self) -> Option<f64> {
        self.outcome
            .as_ref()
            .ok()
            .map(|e| (e.rho_hat - self.rho_true).abs())
    }

    /// Clean run of a method with a tolerance that failed or missed it.
    pub fn violates(&self) -> bool {
        match self.tolerance {
            Some(tol) if self.noise == 0.0 => self.abs_error().map_or(true, |e| e > tol),
            _ => false,
        }
    }

    fn sequence_file(&self) -> String {
        format!(
            "rho{}_noise{}_seed{}_{}_{}.csv",
            format_number(self.rho_true),
            format_number(self.noise),
            self.seed,
            self.point,
            self.method
        )
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub rows: Vec<RunRow>,
    pub files: Vec<PathBuf>,
}

impl ExperimentReport {
    pub fn violations(&self) -> usize {
        self.rows.iter().filter(|r| r.violates()).count()
    }

    /// 0 when every clean run is within tolerance, else 1.
    pub fn exit_code(&self) -> i32 {
        if self.violations() == 0 {
            0
        } else {
            1
        }
    }
}

fn run_method(
    method: Method,
    series: &ObservationSeries,
    model: &SpectralModel,
    point: usize,
) -> Result<OrderEstimate, EstimatorError> {
    match method {
        Method::Thm1Direct => estimate_thm1(series, model.lambda1(), None),
        Method::Lemma1Slope => estimate_slope(series, model.lambda1(), None),
        Method::HatanoLargeT => estimate_hatano_large_t(series, None),
        Method::HatanoSmallT => estimate_hatano_small_t(series, model.initial_value(point), None),
    }
}

/// Runs every (ρ*, point, noise, seed, method) combination. No files are
/// written; see [`run_experiment`].
pub fn compute_rows(cfg: &ExperimentConfig) -> Result<Vec<RunRow>, ExperimentError> {
    cfg.validate()?;
    let points = labelled_points(&cfg.points);
    let phi = cfg.phi.field(&cfg.cylinder);
    let built = build_model(&cfg.cylinder, &phi, &points, cfg.convention)?;
    let model = &built.model;
    let times = cfg.time_grid.times();

    let mut tasks = Vec::new();
    for &rho in &cfg.rho_true {
        for p in 0..points.len() {
            for &level in &cfg.noise.levels {
                // A clean run does not depend on the seed.
                let seeds: &[u64] = if level == 0.0 {
                    &cfg.noise.seeds[..1]
                } else {
                    &cfg.noise.seeds
                };
                for &seed in seeds {
                    tasks.push((rho, p, level, seed));
                }
            }
        }
    }
    let rows = tasks
        .par_iter()
        .map(|&(rho, p, level, seed)| {
            let series = ObservationSeries::from_model(model, rho, p, times.clone())
                .and_then(|s| add_noise(&s, level, seed));
            cfg.methods
                .iter()
                .map(|&method| RunRow {
                    rho_true: rho,
                    method,
                    point: points[p].label.clone(),
                    noise: level,
                    seed,
                    outcome: series
                        .as_ref()
                        .map_err(Clone::clone)
                        .and_then(|s| run_method(method, s, model, p)),
                    times: times.clone(),
                    tolerance: cfg.tolerances.get(&method).copied(),
                })
                .collect::<Vec<_>>()
        })
        .collect::<Vec<_>>();
    Ok(rows.into_iter().flatten().collect())
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `results.csv` to `w`, header comment first.
pub fn write_results<W: io::Write>(rows: &[RunRow], mut w: W) -> io::Result<()> {
    writeln!(w, "# schema: {SCHEMA_VERSION} results")?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "rho_true", "method", "point", "noise", "seed", "rho_hat", "abs_error", "residual",
        "window_start", "window_end", "status", "error",
    ])?;
    for r in rows {
        let mut rec = vec![
            format_number(r.rho_true),
            r.method.to_string(),
            r.point.clone(),
            format_number(r.noise),
            r.seed.to_string(),
        ];
        match &r.outcome {
            Ok(e) => {
                let status = if r.violates() { "out_of_tolerance" } else { "ok" };
                rec.extend([
                    format_number(e.rho_hat),
                    format_number((e.rho_hat - r.rho_true).abs()),
                    format_number(e.residual),
                    e.window.0.to_string(),
                    e.window.1.to_string(),
                    status.to_string(),
                    String::new(),
                ]);
            }
            Err(err) => {
                rec.extend(["", "", "", "", ""].map(String::from));
                rec.push("failed".into());
                rec.push(err.to_string());
            }
        }
        out.write_record(&rec)?;
    }
    out.flush()
}

/// Writes the running estimates of one row: index, t, rho_hat.
pub fn write_sequence<W: io::Write>(row: &RunRow, mut w: W) -> io::Result<()> {
    writeln!(w, "# schema: {SCHEMA_VERSION} sequence")?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["index", "t", "rho_hat"])?;
    if let Ok(e) = &row.outcome {
        for (k, v) in e.sequence.iter().enumerate() {
            let i = e.window.0 + k;
            out.write_record([i.to_string(), format_number(row.times[i]), format_number(*v)])?;
        }
    }
    out.flush()
}

/// Runs the experiment and writes `results.csv` and one file per successful
/// run under `sequences/`. Output is byte-identical for identical configs.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    let rows = compute_rows(cfg)?;
    let dir = &cfg.output_dir;
    let seq_dir = dir.join(SEQUENCE_DIR);
    fs::create_dir_all(&seq_dir).map_err(io_err(&seq_dir))?;
    let mut files = Vec::new();

    let path = dir.join(RESULTS_FILE);
    let f = fs::File::create(&path).map_err(io_err(&path))?;
    write_results(&rows, io::BufWriter::new(f)).map_err(io_err(&path))?;
    files.push(path);

    for row in rows.iter().filter(|r| r.outcome.is_ok()) {
        let path = seq_dir.join(row.sequence_file());
        let f = fs::File::create(&path).map_err(io_err(&path))?;
        write_sequence(row, io::BufWriter::new(f)).map_err(io_err(&path))?;
        files.push(path);
    }
    Ok(ExperimentReport { rows, files })
}
