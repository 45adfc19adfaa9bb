//! Manifest model: one TOML file names the command and carries every knob
//! the run needs, so the file alone reproduces the run. The resolved form
//! (defaults filled in, closures inlined, overrides applied) is archived
//! next to the outputs and is itself a valid manifest.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use nsk_core::integrator::Scheme;
use nsk_core::io::ClosureSpec;
use nsk_core::model::PhysParams;
use nsk_core::GridSpec;

/// What went wrong, split by exit code: usage errors are the caller's to
/// fix, run errors happened inside a well-formed experiment.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Run(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Run(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<nsk_core::Error> for CliError {
    fn from(e: nsk_core::Error) -> Self {
        CliError::Run(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Run(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    DecayFit,
    CheckInequalities,
    Spectrum,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::DecayFit => "decay-fit",
            Command::CheckInequalities => "check-inequalities",
            Command::Spectrum => "spectrum",
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub dim: usize,
    pub n: usize,
    pub box_length: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            dim: 3,
            n: 16,
            box_length: 40.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeName {
    ExponentialEuler,
    ExponentialRk2,
}

impl SchemeName {
    pub fn to_scheme(self) -> Scheme {
        match self {
            SchemeName::ExponentialEuler => Scheme::ExponentialEuler,
            SchemeName::ExponentialRk2 => Scheme::ExponentialRk2,
        }
    }
}

fn default_scheme() -> SchemeName {
    SchemeName::ExponentialRk2
}

fn default_true() -> bool {
    true
}

fn one() -> f64 {
    1.0
}

fn two() -> f64 {
    2.0
}

fn quarter() -> f64 {
    0.25
}

fn three() -> f64 {
    3.0
}

fn twelve() -> usize {
    12
}

fn default_l_values() -> Vec<f64> {
    vec![0.0]
}

fn default_amplitude() -> f64 {
    0.01
}

fn default_slope_tol() -> f64 {
    0.1
}

fn default_gap_tol() -> f64 {
    0.05
}

fn default_draws() -> usize {
    100
}

/// Forward integration of seeded band-limited data, archived sample by
/// sample.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "default_scheme")]
    pub scheme: SchemeName,
    #[serde(default = "default_true")]
    pub dealias: bool,
    #[serde(default)]
    pub linear_only: bool,
    /// Instants to archive; empty means eight evenly spaced samples
    /// including the endpoints.
    #[serde(default)]
    pub sample_times: Vec<f64>,
    pub amplitude: f64,
    pub cutoff: f64,
    /// Spectral plateau exponent of the seeded data.
    #[serde(default = "one")]
    pub sigma1: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMode {
    Oracle,
    GridLinear,
    GridNonlinear,
}

/// Decay-rate experiment: norm histories against the rate bookkeeping.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayFitSection {
    pub mode: FitMode,
    #[serde(default = "one")]
    pub sigma1: f64,
    #[serde(default = "two")]
    pub q: f64,
    #[serde(default = "two")]
    pub p: f64,
    #[serde(default = "two")]
    pub r: f64,
    #[serde(default = "default_l_values")]
    pub l_values: Vec<f64>,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    pub cutoff: f64,
    #[serde(default = "quarter")]
    pub t0: f64,
    pub fit_window: (f64, f64),
    #[serde(default = "twelve")]
    pub samples_per_decade: usize,
    /// Oracle mode integrates in the radial variable and ignores the grid;
    /// this picks its dimension (grid modes use the grid's).
    #[serde(default)]
    pub dim: Option<usize>,
    /// Step size; required for the grid modes.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "default_scheme")]
    pub scheme: SchemeName,
    /// Defaults to on exactly for grid-nonlinear runs.
    #[serde(default)]
    pub dealias: Option<bool>,
    #[serde(default = "default_slope_tol")]
    pub slope_tol: f64,
    #[serde(default = "default_gap_tol")]
    pub gap_tol: f64,
    #[serde(default)]
    pub gevrey_c0: Vec<f64>,
    #[serde(default)]
    pub gevrey_j0: i32,
    #[serde(default = "three")]
    pub gevrey_bound_factor: f64,
    #[serde(default)]
    pub high_band_j0: Option<i32>,
    #[serde(default)]
    pub high_band_late_start: f64,
}

/// Inequality battery configuration; every check is seeded from the master
/// seed, so the report is a pure function of (seed, draws).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSection {
    #[serde(default = "default_draws")]
    pub draws: usize,
}

impl Default for CheckSection {
    fn default() -> Self {
        CheckSection {
            draws: default_draws(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSection {}

/// The on-disk manifest shape. `params_file` points at a closure file; the
/// resolved archive inlines it under `params` instead so the output
/// directory stands alone.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub command: Command,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ClosureSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateSection>,
    #[serde(rename = "decay-fit", default, skip_serializing_if = "Option::is_none")]
    pub decay_fit: Option<DecayFitSection>,
    #[serde(
        rename = "check-inequalities",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub check_inequalities: Option<CheckSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<SpectrumSection>,
}

/// Everything a runner needs, with defaults filled and overrides applied.
pub struct Resolved {
    pub command: Command,
    pub closures: ClosureSpec,
    pub phys: PhysParams,
    pub seed: u64,
    pub jobs: usize,
    pub output_dir: PathBuf,
    pub grid_section: GridSection,
    pub simulate: Option<SimulateSection>,
    pub decay_fit: Option<DecayFitSection>,
    pub checks: CheckSection,
}

impl Resolved {
    pub fn grid(&self) -> CliResult<GridSpec> {
        GridSpec::new(
            self.grid_section.dim,
            self.grid_section.n,
            self.grid_section.box_length,
        )
        .map_err(|e| usage(format!("grid: {e}")))
    }

    /// The archive form: a complete, self-contained manifest that replays
    /// this run byte for byte.
    pub fn archive_manifest(&self) -> RunManifest {
        RunManifest {
            command: self.command,
            params_file: None,
            params: Some(self.closures.clone()),
            seed: Some(self.seed),
            output_dir: Some(self.output_dir.clone()),
            jobs: Some(self.jobs),
            grid: Some(self.grid_section),
            simulate: self.simulate.clone(),
            decay_fit: self.decay_fit.clone(),
            check_inequalities: match self.command {
                Command::CheckInequalities => Some(self.checks),
                _ => None,
            },
            spectrum: match self.command {
                Command::Spectrum => Some(SpectrumSection {}),
                _ => None,
            },
        }
    }

    pub fn write_archive(&self) -> CliResult<()> {
        let text = toml::to_string_pretty(&self.archive_manifest())
            .map_err(|e| CliError::Run(format!("serializing resolved manifest: {e}")))?;
        fs::create_dir_all(&self.output_dir)?;
        fs::write(self.output_dir.join("resolved_manifest.toml"), text)?;
        Ok(())
    }
}

/// Command-line overrides applied on top of the manifest.
pub struct Overrides {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub output: Option<PathBuf>,
}

/// Load, validate, and resolve a manifest file.
pub fn load(path: &Path, over: &Overrides) -> CliResult<Resolved> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read manifest {}: {e}", path.display())))?;
    let manifest: RunManifest = toml::from_str(&text)
        .map_err(|e| usage(format!("manifest {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    resolve(manifest, base, over)
}

fn resolve(manifest: RunManifest, base: &Path, over: &Overrides) -> CliResult<Resolved> {
    let closures = match (&manifest.params, &manifest.params_file) {
        (Some(_), Some(_)) => {
            return Err(usage(
                "manifest sets both `params` and `params_file`; keep exactly one",
            ))
        }
        (Some(inline), None) => inline.clone(),
        (None, Some(rel)) => {
            let p = if rel.is_absolute() {
                rel.clone()
            } else {
                base.join(rel)
            };
            let text = fs::read_to_string(&p)
                .map_err(|e| usage(format!("cannot read params file {}: {e}", p.display())))?;
            toml::from_str(&text)
                .map_err(|e| usage(format!("params file {}: {e}", p.display())))?
        }
        (None, None) => {
            return Err(usage(
                "manifest names no closures: set `params_file` or an inline `[params]` table",
            ))
        }
    };
    let phys = closures
        .build()
        .map_err(|e| usage(format!("params: {e}")))?;

    let seed = over.seed.or(manifest.seed).unwrap_or(0);
    let jobs = over.jobs.or(manifest.jobs).unwrap_or(1);
    if jobs == 0 {
        return Err(usage("jobs = 0; need at least one worker"));
    }
    let output_dir = over
        .output
        .clone()
        .or(manifest.output_dir)
        .ok_or_else(|| usage("no output directory: set `output_dir` or pass --output"))?;

    let grid_section = manifest.grid.unwrap_or_default();

    match manifest.command {
        Command::Simulate if manifest.simulate.is_none() => {
            return Err(usage("command = \"simulate\" needs a [simulate] section"))
        }
        Command::DecayFit if manifest.decay_fit.is_none() => {
            return Err(usage("command = \"decay-fit\" needs a [decay-fit] section"))
        }
        _ => {}
    }
    if let Some(sim) = &manifest.simulate {
        if !(sim.dt > 0.0) || !(sim.t_end > 0.0) {
            return Err(usage(format!(
                "[simulate] dt = {}, t_end = {}: both must be positive",
                sim.dt, sim.t_end
            )));
        }
    }
    if let Some(fit) = &manifest.decay_fit {
        if fit.mode != FitMode::Oracle && fit.dt.is_none() {
            return Err(usage("[decay-fit] grid modes need `dt`"));
        }
    }

    Ok(Resolved {
        command: manifest.command,
        closures,
        phys,
        seed,
        jobs,
        output_dir,
        grid_section,
        simulate: manifest.simulate,
        decay_fit: manifest.decay_fit,
        checks: manifest.check_inequalities.unwrap_or_default(),
    })
}
