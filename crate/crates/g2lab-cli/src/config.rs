//! Flat `section.key=value` experiment configuration.

use std::path::{Path, PathBuf};

use g2lab::connection_lab::{ConnectionKind, MetricKind};
use g2lab::exterior7::DIM;
use g2lab::flow_engine::{EnergyKind, FlowKind};
use g2lab::hodge_green::SolverConfig;
use g2lab::torus_field::Grid;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: expected key=value")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
    #[error("`{key}`: {message}")]
    BadValue { key: String, message: String },
}

/// Where the base structure comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum FieldSource {
    Perturbed,
    Flat,
    Snapshot(PathBuf),
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub dims: [usize; DIM],
    pub lengths: [f64; DIM],
    pub seed: u64,
    pub epsilon: f64,
    pub band_limit: usize,
    pub field: FieldSource,
    pub solver: SolverConfig,
    pub identity_trials: usize,
    pub variation_h: f64,
    pub connection_h: f64,
    pub combo: (f64, f64, f64),
    pub tangent_scale: f64,
    pub flow_kind: FlowKind,
    pub flow_dt: f64,
    pub flow_steps: usize,
    pub snapshot_every: usize,
    pub geodesic_connection: ConnectionKind,
    pub geodesic_t_end: f64,
    pub geodesic_dt: f64,
    pub geodesic_speed: f64,
    pub lambda: f64,
    pub ebin_pairs: usize,
    /// Grid for generated fields in the curvature command; 8 points per axis alias badly there.
    pub curvature_dims: [usize; DIM],
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dims: [8, 8, 1, 1, 1, 1, 1],
            lengths: [1.0; DIM],
            seed: 1,
            epsilon: 0.05,
            band_limit: 2,
            field: FieldSource::Perturbed,
            solver: SolverConfig::default().with_tol(1e-12),
            identity_trials: 1000,
            variation_h: 1e-4,
            connection_h: 1e-3,
            combo: (0.5, 0.3, 0.2),
            tangent_scale: 0.3,
            flow_kind: FlowKind::Laplacian,
            flow_dt: 5e-4,
            flow_steps: 50,
            snapshot_every: 0,
            geodesic_connection: ConnectionKind::DL,
            geodesic_t_end: 1.0,
            geodesic_dt: 1e-2,
            geodesic_speed: 0.3,
            lambda: 0.0,
            ebin_pairs: 3,
            curvature_dims: [32, 32, 1, 1, 1, 1, 1],
        }
    }
}

pub const KEYS: &[&str] = &[
    "grid.dims",
    "grid.lengths",
    "seed",
    "field.kind",
    "field.epsilon",
    "field.band_limit",
    "field.snapshot",
    "solver.tol",
    "solver.max_iter",
    "solver.reproject_every",
    "identities.trials",
    "variations.h",
    "connections.h",
    "connections.combo",
    "connections.tangent_scale",
    "flow.kind",
    "flow.dt",
    "flow.steps",
    "flow.snapshot_every",
    "geodesic.connection",
    "geodesic.t_end",
    "geodesic.dt",
    "geodesic.speed",
    "curvature.lambda",
    "curvature.ebin_pairs",
    "curvature.dims",
];

fn bad(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::BadValue {
        key: key.to_string(),
        message: message.into(),
    }
}

fn number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.trim().parse().map_err(|_| bad(key, format!("cannot parse `{value}`")))
}

fn positive(key: &str, value: &str) -> Result<f64, ConfigError> {
    let x: f64 = number(key, value)?;
    if !(x > 0.0 && x.is_finite()) {
        return Err(bad(key, format!("must be positive, got {value}")));
    }
    Ok(x)
}

fn list<T: std::str::FromStr + Copy>(key: &str, value: &str, pad: T) -> Result<[T; DIM], ConfigError> {
    let items: Vec<T> = value
        .split(',')
        .map(|s| number(key, s))
        .collect::<Result<_, _>>()?;
    if items.is_empty() || items.len() > DIM {
        return Err(bad(key, format!("expected 1 to {DIM} comma-separated values")));
    }
    let mut out = [pad; DIM];
    out[..items.len()].copy_from_slice(&items);
    Ok(out)
}

pub fn parse_flow_kind(value: &str) -> Option<FlowKind> {
    let energy = |s: &str| match s {
        "EL" => Some(EnergyKind::L),
        "ED" => Some(EnergyKind::D),
        "EM" => Some(EnergyKind::M),
        _ => None,
    };
    let metric = |s: &str| match s {
        "GL" => Some(MetricKind::Laplacian),
        "GD" => Some(MetricKind::Dirichlet),
        "GM" => Some(MetricKind::L2),
        _ => None,
    };
    match value {
        "laplacian" => Some(FlowKind::Laplacian),
        "dirichlet" => Some(FlowKind::Dirichlet),
        "pid" => Some(FlowKind::PiD),
        "bilaplacian" => Some(FlowKind::BiLaplacian),
        other => {
            let (e, m) = other.split_once('-')?;
            Some(FlowKind::Table(energy(e)?, metric(m)?))
        }
    }
}

pub fn parse_connection(value: &str) -> Option<ConnectionKind> {
    match value {
        "DD" => Some(ConnectionKind::DD),
        "DL" => Some(ConnectionKind::DL),
        "DM" => Some(ConnectionKind::DM),
        "PA" => Some(ConnectionKind::PA),
        "PB" => Some(ConnectionKind::PB),
        "PC" => Some(ConnectionKind::PC),
        _ => None,
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        ExperimentConfig::parse(&text)
    }

    /// Parses `key=value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
        let mut cfg = ExperimentConfig::default();
        let mut seen: Vec<String> = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: n + 1 })?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey {
                    line: n + 1,
                    key: key.to_string(),
                });
            }
            if seen.iter().any(|k| k == key) {
                return Err(ConfigError::DuplicateKey {
                    line: n + 1,
                    key: key.to_string(),
                });
            }
            seen.push(key.to_string());
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "grid.dims" => self.dims = list(key, value, 1usize)?,
            "grid.lengths" => self.lengths = list(key, value, 1.0f64)?,
            "seed" => self.seed = number(key, value)?,
            "field.kind" => {
                self.field = match value {
                    "perturbed" => FieldSource::Perturbed,
                    "flat" => FieldSource::Flat,
                    _ => return Err(bad(key, "expected perturbed or flat")),
                }
            }
            "field.snapshot" => self.field = FieldSource::Snapshot(PathBuf::from(value)),
            "field.epsilon" => self.epsilon = number(key, value)?,
            "field.band_limit" => self.band_limit = number(key, value)?,
            "solver.tol" => self.solver.rel_tol = positive(key, value)?,
            "solver.max_iter" => self.solver.max_iter = number(key, value)?,
            "solver.reproject_every" => self.solver.reproject_every = number(key, value)?,
            "identities.trials" => self.identity_trials = number(key, value)?,
            "variations.h" => self.variation_h = positive(key, value)?,
            "connections.h" => self.connection_h = positive(key, value)?,
            "connections.combo" => {
                let parts: Vec<f64> = value
                    .split(',')
                    .map(|s| number(key, s))
                    .collect::<Result<_, _>>()?;
                match parts.as_slice() {
                    [a, b, c] => self.combo = (*a, *b, *c),
                    _ => return Err(bad(key, "expected three weights a,b,c")),
                }
            }
            "connections.tangent_scale" => self.tangent_scale = positive(key, value)?,
            "flow.kind" => self.flow_kind = parse_flow_kind(value).ok_or_else(|| bad(key, format!("unknown flow `{value}`")))?,
            "flow.dt" => self.flow_dt = positive(key, value)?,
            "flow.steps" => self.flow_steps = number(key, value)?,
            "flow.snapshot_every" => self.snapshot_every = number(key, value)?,
            "geodesic.connection" => {
                self.geodesic_connection = match parse_connection(value) {
                    Some(k @ (ConnectionKind::DD | ConnectionKind::DL | ConnectionKind::DM)) => k,
                    _ => return Err(bad(key, "expected DD, DL or DM")),
                }
            }
            "geodesic.t_end" => self.geodesic_t_end = positive(key, value)?,
            "geodesic.dt" => self.geodesic_dt = positive(key, value)?,
            "geodesic.speed" => self.geodesic_speed = number(key, value)?,
            "curvature.lambda" => self.lambda = number(key, value)?,
            "curvature.ebin_pairs" => self.ebin_pairs = number(key, value)?,
            "curvature.dims" => self.curvature_dims = list(key, value, 1usize)?,
            _ => unreachable!("key list and setter agree"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let grid = self.grid()?;
        if self.field == FieldSource::Perturbed {
            let cap = grid.band_capacity();
            if self.band_limit == 0 || self.band_limit > cap {
                return Err(bad(
                    "field.band_limit",
                    format!("must be in 1..={cap} for this grid"),
                ));
            }
        }
        if self.solver.max_iter == 0 || self.solver.reproject_every == 0 {
            return Err(bad("solver.max_iter", "iteration counts must be positive"));
        }
        Grid::new(self.curvature_dims, self.lengths).map_err(|e| bad("curvature.dims", e.to_string()))?;
        if self.identity_trials == 0 {
            return Err(bad("identities.trials", "must be positive"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid, ConfigError> {
        Grid::new(self.dims, self.lengths).map_err(|e| bad("grid.dims", e.to_string()))
    }
}
