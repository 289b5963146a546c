//! The serializable run configuration: one flat struct holding the command
//! plus every option any subcommand consumes. A config loaded from JSON
//! rejects unknown keys and round-trips back to the JSON it came from
//! (fields left at their defaults are filled on load and omitted only when
//! optional).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use structured_gic::experiments::{DesignSpec, ExperimentSpec};
use structured_gic::{GicError, GlmFamily, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    Fit,
    Path,
    Select,
    Experiment,
    Diagnose,
}

/// Which regularizer the run penalizes with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum RegKind {
    /// Group L1/L2 over a partition from `--groups-file`.
    Group,
    /// Elementwise L1 (singleton groups).
    L1,
    /// Nuclear norm on matrix-regression data.
    Nuclear,
}

pub fn default_k_grid() -> usize {
    50
}
pub fn default_ratio() -> f64 {
    1e-3
}
pub fn default_c_gic() -> f64 {
    1.0
}
pub fn default_c_xi() -> f64 {
    0.5
}
pub fn default_tau_sq() -> f64 {
    1e-3
}
pub fn default_eta() -> f64 {
    0.5
}
pub fn default_max_iter() -> usize {
    5000
}
pub fn default_tol_kkt() -> f64 {
    1e-7
}

/// Everything a run needs. `command` picks the subprogram; the rest are its
/// options (unused ones are ignored by other commands but still validated on
/// load).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: CommandKind,

    // Data ingestion.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<GlmFamily>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reg: Option<RegKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups_file: Option<PathBuf>,

    // Solver and path options.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default = "default_k_grid")]
    pub k_grid: usize,
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol_kkt")]
    pub tol_kkt: f64,

    // Criterion schedule.
    #[serde(default = "default_c_gic")]
    pub c_gic: f64,
    #[serde(default = "default_c_xi")]
    pub c_xi: f64,
    #[serde(default)]
    pub log_n: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi_budget: Option<f64>,

    // Diagnostics (synthetic designs only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default = "default_tau_sq")]
    pub tau_sq: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,

    // Experiments.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentSpec>,

    // Output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_out: Option<PathBuf>,
    #[serde(default)]
    pub verbose: bool,
    #[serde(default)]
    pub json: bool,

    // Execution.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn new(command: CommandKind) -> Self {
        RunConfig {
            command,
            data: None,
            family: None,
            reg: None,
            groups_file: None,
            lambda: None,
            k_grid: default_k_grid(),
            ratio: default_ratio(),
            max_iter: default_max_iter(),
            tol_kkt: default_tol_kkt(),
            c_gic: default_c_gic(),
            c_xi: default_c_xi(),
            log_n: false,
            psi_budget: None,
            design: None,
            kappa: None,
            tau_sq: default_tau_sq(),
            eta: default_eta(),
            experiment: None,
            out: None,
            out_dir: None,
            trace_out: None,
            verbose: false,
            json: false,
            threads: None,
        }
    }
}

/// Deserialize `T` from a JSON file; parse errors name the offending key path.
pub fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    let mut de = serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(&mut de).map_err(|e| GicError::DataFormat {
        path: path.display().to_string(),
        message: format!("at key '{}': {}", e.path(), e.inner()),
    })
}
