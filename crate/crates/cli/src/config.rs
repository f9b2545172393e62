//! Experiment configuration: a single JSON document, checked against the
//! shipped schema (unknown keys rejected, types enforced) and then against
//! per-experiment cardinality rules before any computation starts.

use serde::Deserialize;
use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ultrametric_core::grid::GridParams;
use ultrametric_core::spectral::PotentialSpec;

use crate::CliError;

/// The experiments the driver can run, in the alphabetical order `list`
/// prints them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Experiment {
    BridgeSample,
    CentsovCheck,
    DensityConvergence,
    DensityTable,
    EigenConvergence,
    FkValidate,
    MomentCheck,
    Spectrum,
    Tightness,
    TraceConvergence,
    WalkSample,
}

impl Experiment {
    pub const ALL: [Experiment; 11] = [
        Experiment::BridgeSample,
        Experiment::CentsovCheck,
        Experiment::DensityConvergence,
        Experiment::DensityTable,
        Experiment::EigenConvergence,
        Experiment::FkValidate,
        Experiment::MomentCheck,
        Experiment::Spectrum,
        Experiment::Tightness,
        Experiment::TraceConvergence,
        Experiment::WalkSample,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::BridgeSample => "bridge-sample",
            Experiment::CentsovCheck => "centsov-check",
            Experiment::DensityConvergence => "density-convergence",
            Experiment::DensityTable => "density-table",
            Experiment::EigenConvergence => "eigen-convergence",
            Experiment::FkValidate => "fk-validate",
            Experiment::MomentCheck => "moment-check",
            Experiment::Spectrum => "spectrum",
            Experiment::Tightness => "tightness",
            Experiment::TraceConvergence => "trace-convergence",
            Experiment::WalkSample => "walk-sample",
        }
    }
}

impl FromStr for Experiment {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Experiment::ALL
            .iter()
            .copied()
            .find(|e| e.name() == s)
            .ok_or_else(|| {
                CliError::Config(format!(
                    "unknown experiment {s:?}; run `ultrametric list` for the catalogue"
                ))
            })
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Potential entry of the config. `power` uses the key `gamma` for the
/// exponent of v(x) = |x|^gamma; `table` points at a CSV file (`u,v` header,
/// one row per residue of the single grid the experiment runs on).
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PotentialConfig {
    #[default]
    Zero,
    Power {
        gamma: f64,
    },
    Table {
        file: PathBuf,
    },
}

/// One experiment run: the parameter grid, the potential, the master seed,
/// and optional per-experiment knobs. Unknown keys are rejected.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    /// Prime base of the field.
    pub p: u32,
    /// Grid levels, strictly increasing.
    pub n_range: Vec<u32>,
    /// Stability exponents of the kinetic term.
    pub alpha: Vec<f64>,
    /// Time points.
    pub t: Vec<f64>,
    #[serde(default)]
    pub potential: PotentialConfig,
    /// Master seed; every random stream of the run derives from it.
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Named tolerance overrides; defaults are pinned per experiment.
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    /// Skeleton steps per path (walk/bridge/tightness) or product-formula
    /// steps (fk-validate).
    #[serde(default)]
    pub steps: Option<u32>,
    /// Monte Carlo replicates per cell; capped at 2^20 - 1 so replicate
    /// streams stay inside one cell's stream block.
    #[serde(default)]
    pub paths: Option<u64>,
    /// Number of low modes reported by spectrum / eigen-convergence.
    #[serde(default)]
    pub modes: Option<usize>,
    /// Norm-moment exponent (moment-check: 0 < k < alpha;
    /// centsov-check: alpha/2 < k < alpha).
    #[serde(default)]
    pub k: Option<f64>,
    /// Two-sided jump threshold of the tightness statistic.
    #[serde(default)]
    pub eta: Option<f64>,
    /// Window widths of the tightness statistic.
    #[serde(default)]
    pub deltas: Option<Vec<f64>>,
    /// Time grid of moment-check.
    #[serde(default)]
    pub s_grid: Option<Vec<f64>>,
    /// [s_lo, s_hi] window of the log-log slope reading.
    #[serde(default)]
    pub slope_window: Option<[f64; 2]>,
    /// Time grid of the centsov-check triple scan (strictly increasing).
    #[serde(default)]
    pub time_grid: Option<Vec<f64>>,
    /// Start residue of walk/bridge/tightness paths.
    #[serde(default)]
    pub start: Option<u64>,
    /// End residue pinned by bridge/tightness ensembles.
    #[serde(default)]
    pub end: Option<u64>,
    /// (a, b) residue pairs probed by fk-validate.
    #[serde(default)]
    pub pairs: Option<Vec<[u64; 2]>>,
    /// Radius exponent r of the comparison ball |x| <= p^r
    /// (density-convergence).
    #[serde(default)]
    pub ball_radius_exp: Option<i32>,
    /// Certified truncation tolerance of infinite-level density values.
    #[serde(default)]
    pub tail_tol: Option<f64>,
}

/// A config that passed every structural and per-experiment rule.
#[derive(Debug, Clone)]
pub struct Validated {
    pub experiment: Experiment,
    pub cfg: ExperimentConfig,
    /// Directory relative paths in the config (table potentials) resolve
    /// against — the config file's own directory.
    pub base_dir: PathBuf,
}

/// Replicate streams live at offsets 1..paths inside a cell's stream block
/// of 2^20 ids, so a cell is capped below that block size.
pub const MAX_PATHS_PER_CELL: u64 = (1 << 20) - 1;

fn require(cond: bool, msg: impl FnOnce() -> String) -> Result<(), CliError> {
    if cond {
        Ok(())
    } else {
        Err(CliError::Config(msg()))
    }
}

fn positive_list(name: &str, xs: &[f64]) -> Result<(), CliError> {
    require(!xs.is_empty(), || format!("{name} must be non-empty"))?;
    require(xs.iter().all(|x| x.is_finite() && *x > 0.0), || {
        format!("{name} entries must be finite and positive")
    })
}

fn strictly_increasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[0] < w[1])
}

/// Structural validation plus per-experiment cardinality rules. Everything
/// rejected here maps to exit code 2.
pub fn validate(cfg: ExperimentConfig, base_dir: &Path) -> Result<Validated, CliError> {
    let experiment = Experiment::from_str(&cfg.experiment)?;

    require(!cfg.n_range.is_empty(), || "n_range must be non-empty".into())?;
    require(cfg.n_range.iter().all(|&n| n >= 1), || {
        "n_range entries must be >= 1".into()
    })?;
    require(cfg.n_range.windows(2).all(|w| w[0] < w[1]), || {
        "n_range must be strictly increasing".into()
    })?;
    positive_list("alpha", &cfg.alpha)?;
    positive_list("t", &cfg.t)?;

    for (name, &v) in &cfg.tolerances {
        require(v.is_finite() && v >= 0.0, || {
            format!("tolerance {name:?} must be finite and >= 0")
        })?;
    }
    if let Some(steps) = cfg.steps {
        require(steps >= 1, || "steps must be >= 1".into())?;
    }
    if let Some(paths) = cfg.paths {
        require(paths >= 1 && paths <= MAX_PATHS_PER_CELL, || {
            format!("paths must be in 1..={MAX_PATHS_PER_CELL}")
        })?;
    }
    if let Some(modes) = cfg.modes {
        require(modes >= 1, || "modes must be >= 1".into())?;
    }
    if let Some(k) = cfg.k {
        require(k.is_finite() && k > 0.0, || {
            "k must be finite and positive".into()
        })?;
    }
    if let Some(eta) = cfg.eta {
        require(eta.is_finite() && eta >= 0.0, || {
            "eta must be finite and >= 0".into()
        })?;
    }
    if let Some(ds) = &cfg.deltas {
        positive_list("deltas", ds)?;
    }
    if let Some(s) = &cfg.s_grid {
        positive_list("s_grid", s)?;
    }
    if let Some([lo, hi]) = cfg.slope_window {
        require(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo < hi, || {
            "slope_window must satisfy 0 < s_lo < s_hi".into()
        })?;
    }
    if let Some(g) = &cfg.time_grid {
        positive_list("time_grid", g)?;
        require(strictly_increasing(g), || {
            "time_grid must be strictly increasing".into()
        })?;
    }
    if let Some(pairs) = &cfg.pairs {
        require(!pairs.is_empty(), || "pairs must be non-empty".into())?;
    }
    if let Some(tol) = cfg.tail_tol {
        require(tol.is_finite() && tol > 0.0, || {
            "tail_tol must be finite and positive".into()
        })?;
    }

    let single = |name: &str, len: usize| {
        require(len == 1, || {
            format!(
                "experiment {} takes exactly one {name} entry, got {len}",
                experiment.name()
            )
        })
    };
    match experiment {
        Experiment::DensityTable | Experiment::DensityConvergence => {}
        Experiment::Spectrum => single("alpha", cfg.alpha.len())?,
        Experiment::TraceConvergence | Experiment::EigenConvergence => {
            single("alpha", cfg.alpha.len())?;
            require(cfg.n_range.len() >= 2, || {
                format!(
                    "experiment {} compares levels and needs n_range with >= 2 entries",
                    experiment.name()
                )
            })?;
        }
        Experiment::FkValidate | Experiment::WalkSample | Experiment::BridgeSample => {
            single("alpha", cfg.alpha.len())?;
            single("t", cfg.t.len())?;
            single("n_range", cfg.n_range.len())?;
        }
        Experiment::MomentCheck | Experiment::CentsovCheck => {
            single("alpha", cfg.alpha.len())?;
            single("n_range", cfg.n_range.len())?;
        }
        Experiment::Tightness => {
            single("alpha", cfg.alpha.len())?;
            single("t", cfg.t.len())?;
        }
    }
    if matches!(cfg.potential, PotentialConfig::Table { .. })
        && matches!(
            experiment,
            Experiment::Spectrum | Experiment::TraceConvergence | Experiment::EigenConvergence
        )
        && cfg.n_range.len() > 1
    {
        return Err(CliError::Config(
            "a table potential is tied to one grid; level sweeps need a zero or power potential"
                .into(),
        ));
    }

    Ok(Validated {
        experiment,
        cfg,
        base_dir: base_dir.to_path_buf(),
    })
}

impl Validated {
    /// Materializes the configured potential for one grid.
    pub fn resolve_potential(&self, params: GridParams) -> Result<PotentialSpec, CliError> {
        match &self.cfg.potential {
            PotentialConfig::Zero => Ok(PotentialSpec::Zero),
            PotentialConfig::Power { gamma } => Ok(PotentialSpec::Power { exponent: *gamma }),
            PotentialConfig::Table { file } => {
                let path = if file.is_absolute() {
                    file.clone()
                } else {
                    self.base_dir.join(file)
                };
                load_potential_table(&path, params)
            }
        }
    }

    /// The potential for a level sweep; table potentials were already
    /// rejected for sweeps at validation.
    pub fn resolve_sweep_potential(&self) -> Result<PotentialSpec, CliError> {
        match &self.cfg.potential {
            PotentialConfig::Zero => Ok(PotentialSpec::Zero),
            PotentialConfig::Power { gamma } => Ok(PotentialSpec::Power { exponent: *gamma }),
            PotentialConfig::Table { .. } => Err(CliError::Config(
                "a table potential cannot sweep levels".into(),
            )),
        }
    }

    /// A short echo of the potential for summary.json.
    pub fn potential_echo(&self) -> serde_json::Value {
        match &self.cfg.potential {
            PotentialConfig::Zero => serde_json::json!({ "kind": "zero" }),
            PotentialConfig::Power { gamma } => {
                serde_json::json!({ "kind": "power", "gamma": gamma })
            }
            PotentialConfig::Table { file } => {
                serde_json::json!({ "kind": "table", "file": file.display().to_string() })
            }
        }
    }
}

/// Reads a `u,v` CSV with one row per residue, in residue order.
fn load_potential_table(path: &Path, params: GridParams) -> Result<PotentialSpec, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("potential table {}: {e}", path.display())))?;
    let bad = |line: usize, msg: String| {
        CliError::Config(format!(
            "potential table {} line {line}: {msg}",
            path.display()
        ))
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "u,v")) => {}
        Some((i, other)) => return Err(bad(i + 1, format!("expected header `u,v`, got {other:?}"))),
        None => return Err(bad(1, "file is empty".into())),
    }
    let mut values = Vec::with_capacity(params.len());
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let (u_text, v_text) = line
            .split_once(',')
            .ok_or_else(|| bad(i + 1, "expected `u,value`".into()))?;
        let u: u128 = u_text
            .trim()
            .parse()
            .map_err(|e| bad(i + 1, format!("bad residue: {e}")))?;
        if u != values.len() as u128 {
            return Err(bad(
                i + 1,
                format!("rows must cover residues in order; expected u={}", values.len()),
            ));
        }
        let v: f64 = v_text
            .trim()
            .parse()
            .map_err(|e| bad(i + 1, format!("bad value: {e}")))?;
        values.push(v);
    }
    if values.len() != params.len() {
        return Err(CliError::Config(format!(
            "potential table {} has {} rows, grid has {} points",
            path.display(),
            values.len(),
            params.len()
        )));
    }
    Ok(PotentialSpec::Table { values })
}

/// Catalogue entry printed by `list`.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct ExperimentInfo {
    pub name: &'static str,
    /// Keys the experiment reads from the required part of the schema.
    pub required: &'static [&'static str],
    /// Optional knobs the experiment honors (with built-in defaults).
    pub optional: &'static [&'static str],
    /// Required-by-schema keys this experiment ignores.
    pub ignored: &'static [&'static str],
    /// Artifact files the experiment writes into the output directory.
    pub files: &'static [&'static str],
}

/// Metadata for all experiments, alphabetical.
pub fn experiment_infos() -> Vec<ExperimentInfo> {
    Experiment::ALL.iter().map(|e| info(*e)).collect()
}

fn info(e: Experiment) -> ExperimentInfo {
    match e {
        Experiment::BridgeSample => ExperimentInfo {
            name: "bridge-sample",
            required: &["experiment", "p", "n_range (one level)", "alpha (one value)", "t (one value)", "seed"],
            optional: &["steps", "paths", "start", "end", "out_dir", "tolerances{chi_square_significance}"],
            ignored: &["potential"],
            files: &["paths.csv", "summary.json"],
        },
        Experiment::CentsovCheck => ExperimentInfo {
            name: "centsov-check",
            required: &["experiment", "p", "n_range (one level)", "alpha (one value)", "t", "seed"],
            optional: &["k", "time_grid", "out_dir", "tolerances{factorization}"],
            ignored: &["potential", "t"],
            files: &["centsov.csv", "summary.json"],
        },
        Experiment::DensityConvergence => ExperimentInfo {
            name: "density-convergence",
            required: &["experiment", "p", "n_range", "alpha", "t", "seed"],
            optional: &["ball_radius_exp", "tail_tol", "out_dir", "tolerances{final_sup}"],
            ignored: &["potential", "seed"],
            files: &["convergence.csv", "summary.json"],
        },
        Experiment::DensityTable => ExperimentInfo {
            name: "density-table",
            required: &["experiment", "p", "n_range", "alpha", "t", "seed"],
            optional: &["tail_tol", "out_dir", "tolerances{mass,two_route}"],
            ignored: &["potential", "seed"],
            files: &["density_p{p}_n{n}_alpha{alpha}_t{t}.csv (one per cell)", "summary.json"],
        },
        Experiment::EigenConvergence => ExperimentInfo {
            name: "eigen-convergence",
            required: &["experiment", "p", "n_range (>= 2 levels)", "alpha (one value)", "t", "seed"],
            optional: &["modes", "potential (zero|power)", "out_dir", "tolerances{gap_floor}"],
            ignored: &["t", "seed"],
            files: &["eigen.csv", "summary.json"],
        },
        Experiment::FkValidate => ExperimentInfo {
            name: "fk-validate",
            required: &["experiment", "p", "n_range (one level)", "alpha (one value)", "t (one value)", "seed"],
            optional: &["steps", "paths", "pairs", "potential", "out_dir", "tolerances{stderr_sigmas}"],
            ignored: &[],
            files: &["fk.csv", "summary.json"],
        },
        Experiment::MomentCheck => ExperimentInfo {
            name: "moment-check",
            required: &["experiment", "p", "n_range (one level)", "alpha (one value)", "t", "seed"],
            optional: &["k", "s_grid", "slope_window", "out_dir", "tolerances{slope_band}"],
            ignored: &["potential", "t", "seed"],
            files: &["moments.csv", "summary.json"],
        },
        Experiment::Spectrum => ExperimentInfo {
            name: "spectrum",
            required: &["experiment", "p", "n_range", "alpha (one value)", "t", "seed"],
            optional: &["modes", "potential", "out_dir", "tolerances{symmetry,positivity}"],
            ignored: &["seed"],
            files: &[
                "spectrum.csv",
                "eigfun.csv",
                "propagator_p{p}_n{n}_alpha{alpha}_t{t}.csv (cells with at most 256 points)",
                "summary.json",
            ],
        },
        Experiment::Tightness => ExperimentInfo {
            name: "tightness",
            required: &["experiment", "p", "n_range", "alpha (one value)", "t (one value)", "seed"],
            optional: &["steps", "paths", "start", "end", "eta", "deltas", "out_dir"],
            ignored: &["potential"],
            files: &["tightness.csv", "summary.json"],
        },
        Experiment::TraceConvergence => ExperimentInfo {
            name: "trace-convergence",
            required: &["experiment", "p", "n_range (>= 2 levels)", "alpha (one value)", "t", "seed"],
            optional: &["potential (zero|power)", "out_dir"],
            ignored: &["seed"],
            files: &["trace.csv", "summary.json"],
        },
        Experiment::WalkSample => ExperimentInfo {
            name: "walk-sample",
            required: &["experiment", "p", "n_range (one level)", "alpha (one value)", "t (one value)", "seed"],
            optional: &["steps", "paths", "start", "out_dir", "tolerances{chi_square_significance}"],
            ignored: &["potential"],
            files: &["paths.csv", "summary.json"],
        },
    }
}
