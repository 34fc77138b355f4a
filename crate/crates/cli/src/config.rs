//! The TOML run configuration.
//!
//! ```toml
//! schema_version = 1
//! seed = 7
//!
//! [scenario]
//! kind = "kdv"          # kdv | mkdv | heat
//! r = 2
//! s = 1
//! p = 1.0               # optional, default 1
//! coord = 1             # real coordinate sampled for x, y and z
//! t_coord = 0           # real coordinate sampled for t
//!
//! [[scenario.operators]] # x, y and t operators (heat: x and t)
//! psi = [0.0, 1.0, 0.0, 0.0]
//! xi = [0, 1, 2, 3]
//!
//! [[scenario.modes]]
//! beta = 2.0
//! kappa = 1.0
//!
//! [grid]
//! x_min = -2.0
//! x_max = 2.0
//! z_max = 12.0
//! h = 0.1
//! ```
//!
//! Relative output paths are resolved against the directory holding the
//! configuration file.

use std::path::{Path, PathBuf};

use hypercd::diff_ops::SigmaSpec;
use hypercd::dressing::{DiagonalRule, GridSpec, Mode, Scenario, ScenarioKind};
use hypercd::grid::Slot;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{0}")]
    Invalid(String),
}

fn one() -> f64 {
    1.0
}

fn two() -> f64 {
    2.0
}

fn default_levels() -> usize {
    2
}

fn default_margin() -> f64 {
    1.0
}

fn default_constraint_tol() -> f64 {
    1e-2
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_csv() -> String {
    "residuals.csv".into()
}

fn default_json() -> String {
    "report.json".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorConfig {
    pub psi: Vec<f64>,
    /// `ξ` as an explicit index array; identity when omitted.
    #[serde(default)]
    pub xi: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub r: u32,
    pub s: usize,
    #[serde(default = "one")]
    pub p: f64,
    pub coord: usize,
    pub t_coord: usize,
    pub operators: Vec<OperatorConfig>,
    pub modes: Vec<Mode>,
    #[serde(default = "two")]
    pub heat_u: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefinementConfig {
    /// Number of grid levels `h, h/2, …` (1 to 3).
    #[serde(default = "default_levels")]
    pub levels: usize,
    /// Distance from the window edges excluded from the residual norms.
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default)]
    pub diagonal: DiagonalRule,
    /// Wavenumber of the Jost-type function for the Schrödinger check.
    #[serde(default)]
    pub schroedinger_k: Option<f64>,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        RefinementConfig {
            levels: default_levels(),
            margin: default_margin(),
            diagonal: DiagonalRule::default(),
            schroedinger_k: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksConfig {
    /// Largest relative finite-difference residual of the linear
    /// constraints on `F` that is accepted.
    #[serde(default = "default_constraint_tol")]
    pub constraint_tol: f64,
}

impl Default for ChecksConfig {
    fn default() -> Self {
        ChecksConfig {
            constraint_tol: default_constraint_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_csv")]
    pub csv: String,
    #[serde(default = "default_json")]
    pub json: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: default_dir(),
            csv: default_csv(),
            json: default_json(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    pub scenario: ScenarioConfig,
    pub grid: GridSpec,
    #[serde(default)]
    pub refinement: RefinementConfig,
    #[serde(default)]
    pub checks: ChecksConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::Invalid(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// The validated scenario. Operators keep the order given in the file.
    pub fn scenario(&self) -> Result<Scenario, ConfigError> {
        let sc = &self.scenario;
        let slots = [Slot::X, Slot::Y, Slot::T];
        let mut sigmas = Vec::with_capacity(sc.operators.len());
        for (k, op) in sc.operators.iter().enumerate() {
            let n = op.psi.len();
            let xi = op.xi.clone().unwrap_or_else(|| (0..n).collect());
            let sigma = SigmaSpec::new(sc.r, op.psi.clone(), xi, slots[k.min(2)])
                .map_err(|e| ConfigError::Invalid(format!("operator {k}: {e}")))?;
            sigmas.push(sigma);
        }
        if !(1..=3).contains(&self.refinement.levels) {
            return Err(ConfigError::Invalid(format!(
                "refinement.levels must be 1, 2 or 3, got {}",
                self.refinement.levels
            )));
        }
        if !(self.refinement.margin >= 0.0) {
            return Err(ConfigError::Invalid("refinement.margin must be non-negative".into()));
        }
        let scenario = Scenario {
            kind: sc.kind,
            level: sc.r,
            s: sc.s,
            p: sc.p,
            sigmas,
            coord: sc.coord,
            t_coord: sc.t_coord,
            modes: sc.modes.clone(),
            grid: self.grid.clone(),
            heat_u: sc.heat_u,
        };
        scenario
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(scenario)
    }

    pub fn output_paths(&self, config_path: &Path) -> (PathBuf, PathBuf) {
        let base = config_path.parent().unwrap_or_else(|| Path::new("."));
        let dir = if self.output.dir.is_absolute() {
            self.output.dir.clone()
        } else {
            base.join(&self.output.dir)
        };
        (dir.join(&self.output.csv), dir.join(&self.output.json))
    }
}
