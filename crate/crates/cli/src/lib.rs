//! Batch experiment driver over the finite p-adic Schrödinger models:
//! reads one JSON config, runs the named experiment across its parameter
//! grid, and writes plot-ready CSV artifacts plus a machine-readable
//! `summary.json` of pass/fail assertions.
//!
//! Contract highlights:
//! - configs are schema-checked (unknown keys rejected) before any
//!   computation; violations exit with code 2;
//! - grids past a dense-capacity guard exit with code 3;
//! - `run --strict` exits with code 1 when any assertion fails;
//! - identical configs reproduce identical CSV bytes, regardless of thread
//!   count (`ULTRAMETRIC_THREADS` caps parallelism without changing output).

pub mod config;
mod experiments;

pub use config::{
    experiment_infos, validate, Experiment, ExperimentConfig, ExperimentInfo, PotentialConfig,
    Validated,
};

use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ultrametric_core::density::DensityError;
use ultrametric_core::grid::GridError;
use ultrametric_core::spectral::SpectralError;
use ultrametric_core::stochastic::StochasticError;
use ultrametric_core::transform::TransformError;

/// Driver errors, classified by the exit code they map to: schema or
/// semantic config problems → 2, capacity guards → 3, filesystem → 2.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("capacity: {0}")]
    Capacity(String),
    #[error("io: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Capacity(_) => 3,
            CliError::Config(_) | CliError::Io(_) => 2,
        }
    }
}

impl From<GridError> for CliError {
    fn from(e: GridError) -> Self {
        match e {
            GridError::ModulusOverflow { .. } => CliError::Capacity(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<TransformError> for CliError {
    fn from(e: TransformError) -> Self {
        match e {
            TransformError::CapacityExceeded { .. } => CliError::Capacity(e.to_string()),
            TransformError::Io(io) => CliError::Io(io.to_string()),
            TransformError::Grid(g) => g.into(),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<DensityError> for CliError {
    fn from(e: DensityError) -> Self {
        match e {
            DensityError::Transform(t) => t.into(),
            DensityError::Grid(g) => g.into(),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<SpectralError> for CliError {
    fn from(e: SpectralError) -> Self {
        match e {
            SpectralError::CapacityExceeded { .. } => CliError::Capacity(e.to_string()),
            SpectralError::Transform(t) => t.into(),
            SpectralError::Density(d) => d.into(),
            SpectralError::Grid(g) => g.into(),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<StochasticError> for CliError {
    fn from(e: StochasticError) -> Self {
        match e {
            StochasticError::CapacityExceeded { .. } => CliError::Capacity(e.to_string()),
            StochasticError::Spectral(s) => s.into(),
            StochasticError::Density(d) => d.into(),
            StochasticError::Grid(g) => g.into(),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

fn finite_or_clamped(x: f64) -> f64 {
    if x.is_finite() {
        x
    } else if x.is_nan() {
        f64::MAX
    } else {
        f64::MAX.copysign(x)
    }
}

/// One named check of a run: the measured value, the tolerance it was held
/// to, and the verdict. Values are clamped finite so summary.json stays
/// valid JSON.
#[derive(Debug, Clone, Serialize)]
pub struct Assertion {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub tolerance: f64,
}

impl Assertion {
    pub fn new(name: impl Into<String>, pass: bool, value: f64, tolerance: f64) -> Self {
        Assertion {
            name: name.into(),
            pass,
            value: finite_or_clamped(value),
            tolerance: finite_or_clamped(tolerance),
        }
    }
}

/// The machine-readable run record written to `summary.json`.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub experiment: String,
    pub params: serde_json::Value,
    pub assertions: Vec<Assertion>,
    pub wall_time_s: f64,
}

/// What one experiment hands back before anything touches the filesystem.
pub(crate) struct ExperimentOutput {
    pub params: serde_json::Value,
    pub assertions: Vec<Assertion>,
    /// (file name, full contents) pairs; names are relative to the output
    /// directory.
    pub files: Vec<(String, String)>,
}

/// Paths and verdicts of a finished run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub summary_path: PathBuf,
    pub csv_files: Vec<PathBuf>,
    pub summary: Summary,
}

impl RunOutcome {
    pub fn all_passed(&self) -> bool {
        self.summary.assertions.iter().all(|a| a.pass)
    }
}

/// Writes through a sibling temp file plus rename, so a crash never leaves a
/// half-written artifact under the final name.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let mut tmp_name = path.as_os_str().to_owned();
    tmp_name.push(".tmp");
    let tmp = PathBuf::from(tmp_name);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn thread_cap() -> Result<Option<usize>, CliError> {
    match std::env::var("ULTRAMETRIC_THREADS") {
        Ok(s) => {
            let threads: usize = s.trim().parse().map_err(|_| {
                CliError::Config(format!(
                    "ULTRAMETRIC_THREADS must be a positive integer, got {s:?}"
                ))
            })?;
            if threads == 0 {
                return Err(CliError::Config(
                    "ULTRAMETRIC_THREADS must be at least 1".into(),
                ));
            }
            Ok(Some(threads))
        }
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(CliError::Config(format!("ULTRAMETRIC_THREADS: {e}"))),
    }
}

/// Validates and runs one config. `base_dir` anchors relative paths inside
/// the config (the config file's directory); `out_override` wins over the
/// config's own `out_dir`, which in turn defaults to the current directory.
pub fn run_config(
    cfg: ExperimentConfig,
    base_dir: &Path,
    out_override: Option<&Path>,
) -> Result<RunOutcome, CliError> {
    let started = Instant::now();
    let v = config::validate(cfg, base_dir)?;
    let out_dir = out_override
        .map(Path::to_path_buf)
        .or_else(|| v.cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out_dir)?;
    let output = match thread_cap()? {
        Some(threads) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
            pool.install(|| experiments::dispatch(&v))?
        }
        None => experiments::dispatch(&v)?,
    };
    let mut csv_files = Vec::with_capacity(output.files.len());
    for (name, contents) in &output.files {
        let path = out_dir.join(name);
        write_atomic(&path, contents.as_bytes())?;
        csv_files.push(path);
    }
    let summary = Summary {
        experiment: v.experiment.name().to_string(),
        params: output.params,
        assertions: output.assertions,
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    let mut text = serde_json::to_string_pretty(&summary)
        .map_err(|e| CliError::Io(format!("summary serialization: {e}")))?;
    text.push('\n');
    let summary_path = out_dir.join("summary.json");
    write_atomic(&summary_path, text.as_bytes())?;
    Ok(RunOutcome {
        out_dir,
        summary_path,
        csv_files,
        summary,
    })
}

/// The JSON schema every config is validated against (draft-07). The serde
/// layer enforces the same shape at parse time: unknown keys are rejected,
/// and the per-experiment cardinality rules in [`config::validate`] cover
/// the cross-field constraints a type schema cannot express.
pub const SCHEMA_JSON: &str = r#"{
  "$schema": "http://json-schema.org/draft-07/schema#",
  "title": "ExperimentConfig",
  "description": "One experiment run: parameter grid, potential, master seed, and optional per-experiment knobs.",
  "type": "object",
  "additionalProperties": false,
  "required": ["experiment", "p", "n_range", "alpha", "t", "seed"],
  "properties": {
    "experiment": {
      "type": "string",
      "enum": [
        "bridge-sample",
        "centsov-check",
        "density-convergence",
        "density-table",
        "eigen-convergence",
        "fk-validate",
        "moment-check",
        "spectrum",
        "tightness",
        "trace-convergence",
        "walk-sample"
      ]
    },
    "p": { "type": "integer", "minimum": 2, "description": "prime base of the field" },
    "n_range": {
      "type": "array",
      "items": { "type": "integer", "minimum": 1 },
      "minItems": 1,
      "description": "grid levels, strictly increasing"
    },
    "alpha": {
      "type": "array",
      "items": { "type": "number", "exclusiveMinimum": 0 },
      "minItems": 1,
      "description": "stability exponents of the kinetic term"
    },
    "t": {
      "type": "array",
      "items": { "type": "number", "exclusiveMinimum": 0 },
      "minItems": 1,
      "description": "time points (ignored by moment-check, centsov-check, eigen-convergence)"
    },
    "potential": {
      "description": "defaults to {\"kind\": \"zero\"}",
      "oneOf": [
        {
          "type": "object",
          "additionalProperties": false,
          "required": ["kind"],
          "properties": { "kind": { "const": "zero" } }
        },
        {
          "type": "object",
          "additionalProperties": false,
          "required": ["kind", "gamma"],
          "properties": {
            "kind": { "const": "power" },
            "gamma": { "type": "number", "minimum": 0, "description": "v(x) = |x|^gamma" }
          }
        },
        {
          "type": "object",
          "additionalProperties": false,
          "required": ["kind", "file"],
          "properties": {
            "kind": { "const": "table" },
            "file": { "type": "string", "description": "u,v CSV, one row per residue; single-level experiments only" }
          }
        }
      ]
    },
    "seed": { "type": "integer", "minimum": 0, "description": "master seed; all streams derive from it" },
    "out_dir": { "type": "string" },
    "tolerances": {
      "type": "object",
      "additionalProperties": { "type": "number", "minimum": 0 },
      "description": "named tolerance overrides; defaults are pinned per experiment"
    },
    "steps": { "type": "integer", "minimum": 1 },
    "paths": { "type": "integer", "minimum": 1, "maximum": 1048575 },
    "modes": { "type": "integer", "minimum": 1 },
    "k": { "type": "number", "exclusiveMinimum": 0 },
    "eta": { "type": "number", "minimum": 0 },
    "deltas": {
      "type": "array",
      "items": { "type": "number", "exclusiveMinimum": 0 },
      "minItems": 1
    },
    "s_grid": {
      "type": "array",
      "items": { "type": "number", "exclusiveMinimum": 0 },
      "minItems": 1
    },
    "slope_window": {
      "type": "array",
      "items": { "type": "number", "exclusiveMinimum": 0 },
      "minItems": 2,
      "maxItems": 2,
      "description": "[s_lo, s_hi] of the log-log slope reading"
    },
    "time_grid": {
      "type": "array",
      "items": { "type": "number", "exclusiveMinimum": 0 },
      "minItems": 1,
      "description": "strictly increasing"
    },
    "start": { "type": "integer", "minimum": 0 },
    "end": { "type": "integer", "minimum": 0 },
    "pairs": {
      "type": "array",
      "items": {
        "type": "array",
        "items": { "type": "integer", "minimum": 0 },
        "minItems": 2,
        "maxItems": 2
      },
      "minItems": 1
    },
    "ball_radius_exp": { "type": "integer" },
    "tail_tol": { "type": "number", "exclusiveMinimum": 0 }
  }
}"#;
