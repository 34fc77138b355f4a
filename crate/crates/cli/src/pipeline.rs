//! `run`: F construction, constraint check, operator assembly, the solve at
//! every refinement level, the residual suite and the report files.

use std::path::{Path, PathBuf};

use hypercd::dressing::{
    assemble_a, build_f, check_constraints, solve_dressing_with, ConstraintReport, Diagnostics,
    DressingError, FMode, Scenario, SolveOptions,
};
use hypercd::grid::{Axis, Slot};
use hypercd::residual::{estimate_orders, residual_suite, ResidualError, ResidualReport};
use serde::Serialize;

use crate::config::{ConfigError, RunConfig, SCHEMA_VERSION};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("constraint check failed: {0}")]
    Constraint(String),
    #[error("singular operator: {0}")]
    Singular(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Numerics(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Constraint(_) => 2,
            RunError::Singular(_) => 3,
            RunError::Config(_) => 4,
            RunError::Io(_) | RunError::Numerics(_) => 1,
        }
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e.to_string())
    }
}

impl From<DressingError> for RunError {
    fn from(e: DressingError) -> Self {
        match e {
            DressingError::Config(_) => RunError::Config(e.to_string()),
            DressingError::NoDispersionSolution(_) => RunError::Constraint(e.to_string()),
            DressingError::SingularOperator { .. } => RunError::Singular(e.to_string()),
            DressingError::TailNotDecayed { .. } => {
                RunError::Config(format!("{e}; increase grid.z_max"))
            }
            DressingError::Diff(_) | DressingError::Grid(_) => RunError::Numerics(e.to_string()),
        }
    }
}

impl From<ResidualError> for RunError {
    fn from(e: ResidualError) -> Self {
        match e {
            ResidualError::Dressing(d) => d.into(),
            ResidualError::TailNotDecayed { .. } => {
                RunError::Config(format!("{e}; increase grid.z_max"))
            }
            other => RunError::Numerics(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelSummary {
    pub h: f64,
    pub dt: f64,
    pub diagnostics: Diagnostics,
}

/// Contents of the JSON report.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub seed: u64,
    pub scenario: Scenario,
    pub modes: Vec<FMode>,
    pub constraints: ConstraintReport,
    /// Size of the real matrix of `A` on one ray of the coarsest level.
    pub operator_dimension: usize,
    pub levels: Vec<LevelSummary>,
    pub residuals: Vec<ResidualReport>,
}

#[derive(Debug, Serialize)]
struct CsvRow<'a> {
    equation_id: &'a str,
    h: f64,
    #[serde(rename = "res_Linf")]
    res_linf: f64,
    #[serde(rename = "res_L2")]
    res_l2: f64,
    tail: f64,
    order_est: Option<f64>,
    schema_version: u32,
}

fn f_axes(sc: &Scenario) -> [Axis; 3] {
    let g = &sc.grid;
    let n = ((g.x_max - g.x_min) / g.h).round() as usize + 1;
    let dt = g.time_step();
    [
        Axis::new(Slot::X, sc.coord, n, g.h, g.x_min),
        Axis::new(Slot::Y, sc.coord, n, g.h, g.x_min),
        Axis::new(Slot::T, sc.t_coord, 3, dt, g.t - dt),
    ]
}

/// Runs the whole pipeline for a parsed configuration.
pub fn execute(cfg: &RunConfig) -> Result<Report, RunError> {
    let sc = cfg.scenario()?;
    let fmodel = build_f(&sc)?;
    let constraints = check_constraints(&sc, &fmodel.grid(f_axes(&sc))?)?;
    if !constraints.passed(cfg.checks.constraint_tol) {
        return Err(RunError::Constraint(format!(
            "relative residuals {:.3e} (first) and {:.3e} (second) exceed {:.1e}",
            constraints.l1_relative, constraints.l2_relative, cfg.checks.constraint_tol
        )));
    }
    let operator_dimension = assemble_a(&sc, sc.grid.t, 0)?.nrows();

    let opts = SolveOptions {
        schroedinger_k: cfg.refinement.schroedinger_k,
        diagonal: cfg.refinement.diagonal,
        ..SolveOptions::default()
    };
    let mut levels = Vec::with_capacity(cfg.refinement.levels);
    let mut per_level = Vec::with_capacity(cfg.refinement.levels);
    for l in 0..cfg.refinement.levels {
        let mut s = sc.clone();
        s.grid = sc.grid.with_h(sc.grid.h / f64::from(1u32 << l));
        let sol = solve_dressing_with(&s, &opts)?;
        per_level.push(residual_suite(&s, &sol, cfg.refinement.margin, opts.schroedinger_k)?);
        levels.push(LevelSummary {
            h: s.grid.h,
            dt: s.grid.time_step(),
            diagnostics: sol.diagnostics,
        });
    }
    estimate_orders(&mut per_level);

    Ok(Report {
        schema_version: SCHEMA_VERSION,
        seed: cfg.seed,
        scenario: sc,
        modes: fmodel.modes,
        constraints,
        operator_dimension,
        levels,
        residuals: per_level.into_iter().flatten().collect(),
    })
}

pub fn csv_bytes(report: &Report) -> Result<Vec<u8>, RunError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &report.residuals {
        w.serialize(CsvRow {
            equation_id: &r.equation_id,
            h: r.h,
            res_linf: r.res_linf,
            res_l2: r.res_l2,
            tail: r.tail,
            order_est: r.order_est,
            schema_version: report.schema_version,
        })
        .map_err(|e| RunError::Io(e.to_string()))?;
    }
    w.into_inner().map_err(|e| RunError::Io(e.to_string()))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)
            .map_err(|e| RunError::Io(format!("cannot create {}: {e}", dir.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| RunError::Io(format!("cannot write {}: {e}", path.display())))
}

/// Loads the configuration, runs it and writes both report files.
pub fn run_file(config_path: &Path) -> Result<(Report, PathBuf, PathBuf), RunError> {
    let cfg = RunConfig::load(config_path)?;
    let report = execute(&cfg)?;
    let (csv_path, json_path) = cfg.output_paths(config_path);
    let csv = csv_bytes(&report)?;
    let json = serde_json::to_vec_pretty(&report).map_err(|e| RunError::Io(e.to_string()))?;
    write(&csv_path, &csv)?;
    write(&json_path, &json)?;
    Ok((report, csv_path, json_path))
}
