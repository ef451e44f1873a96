//! `key=value` run configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::assembly::PotentialSpec;
use crate::elements::ElementKind;
use crate::mesh::RectDomain;
use crate::scheme::SchemeConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected key=value, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key {key:?} given twice")]
    DuplicateKey { line: usize, key: String },
    #[error("bad value for {key}: {value:?} ({reason})")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

pub const KEYS: [&str; 17] = [
    "element",
    "xmin",
    "xmax",
    "ymin",
    "ymax",
    "nx",
    "ny",
    "tau",
    "T",
    "omega",
    "beta",
    "gammax",
    "gammay",
    "fp_tol",
    "fp_max_iters",
    "snapshots",
    "initial",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Accuracy,
    Conserve,
    GroundState,
    Evolve,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Accuracy => "accuracy",
            Experiment::Conserve => "conserve",
            Experiment::GroundState => "groundstate",
            Experiment::Evolve => "evolve",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "accuracy" => Ok(Experiment::Accuracy),
            "conserve" => Ok(Experiment::Conserve),
            "groundstate" => Ok(Experiment::GroundState),
            "evolve" => Ok(Experiment::Evolve),
            _ => Err(ConfigError::BadValue {
                key: "experiment".into(),
                value: s.into(),
                reason: "expected accuracy, conserve, groundstate or evolve".into(),
            }),
        }
    }
}

/// Initial data for conservation and evolution runs.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialSpec {
    Gaussian,
    Vortex,
    File(PathBuf),
}

impl FromStr for InitialSpec {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gaussian" => Ok(InitialSpec::Gaussian),
            "vortex" => Ok(InitialSpec::Vortex),
            _ => match s.strip_prefix("file:") {
                Some(p) if !p.is_empty() => Ok(InitialSpec::File(PathBuf::from(p))),
                _ => Err(ConfigError::BadValue {
                    key: "initial".into(),
                    value: s.into(),
                    reason: "expected gaussian, vortex or file:<path>".into(),
                }),
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub element: ElementKind,
    pub domain: RectDomain,
    pub nx: usize,
    pub ny: usize,
    /// Time step; the accuracy study overrides it with `h` per level.
    pub tau: f64,
    pub t_final: f64,
    pub omega: f64,
    pub beta: f64,
    pub gamma_x: f64,
    pub gamma_y: f64,
    pub fp_tol: f64,
    pub fp_max_iters: usize,
    pub snapshots: Vec<f64>,
    pub initial: InitialSpec,
    /// Number of meshes in the accuracy study, each twice as fine.
    pub levels: usize,
}

impl RunConfig {
    /// Defaults per experiment: the manufactured problem on the unit square
    /// for `accuracy` and `conserve`, a reduced vortex lattice otherwise.
    pub fn defaults(experiment: Experiment) -> Self {
        let base = RunConfig {
            experiment,
            element: ElementKind::ConformingQ1,
            domain: RectDomain::unit_square(),
            nx: 8,
            ny: 8,
            tau: 0.125,
            t_final: 1.0,
            omega: 0.8,
            beta: 1.0,
            gamma_x: 1.0,
            gamma_y: 2.0,
            fp_tol: 1e-13,
            fp_max_iters: 100,
            snapshots: Vec::new(),
            initial: InitialSpec::Gaussian,
            levels: 4,
        };
        match experiment {
            Experiment::Accuracy => base,
            Experiment::Conserve => RunConfig {
                nx: 32,
                ny: 32,
                tau: 0.005,
                ..base
            },
            Experiment::GroundState | Experiment::Evolve => RunConfig {
                domain: RectDomain::centered_square(8.0),
                nx: 64,
                ny: 64,
                tau: 0.01,
                t_final: 1.2,
                omega: 0.8,
                beta: 50.0,
                gamma_x: 1.0,
                gamma_y: 1.0,
                snapshots: vec![0.0, 0.3, 0.6, 1.2],
                initial: InitialSpec::Vortex,
                ..base
            },
        }
    }

    /// Full-size vortex lattice parameters.
    pub fn apply_paper_scale(&mut self) {
        self.domain = RectDomain::centered_square(16.0);
        self.nx = 512;
        self.ny = 512;
        self.omega = 0.99;
        self.beta = 100.0;
        self.tau = 0.01;
        self.t_final = 3.0;
        self.snapshots = vec![0.0, 0.75, 1.5, 3.0];
    }

    /// Parses `text` over the experiment defaults.
    pub fn parse(experiment: Experiment, text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::defaults(experiment);
        let mut seen: Vec<String> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                text: raw.to_string(),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                });
            }
            if seen.iter().any(|k| k == key) {
                return Err(ConfigError::DuplicateKey {
                    line,
                    key: key.to_string(),
                });
            }
            seen.push(key.to_string());
            cfg.set(key, value)?;
        }
        Ok(cfg)
    }

    pub fn from_file(experiment: Experiment, path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        RunConfig::parse(experiment, &text)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = |reason: &str| ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
            reason: reason.to_string(),
        };
        let real = || value.parse::<f64>().map_err(|_| bad("not a number"));
        let count = || {
            value
                .parse::<usize>()
                .map_err(|_| bad("not a non-negative integer"))
        };
        match key {
            "element" => self.element = value.parse().map_err(|_| bad("expected q1 or eq1rot"))?,
            "xmin" => self.domain.x_min = real()?,
            "xmax" => self.domain.x_max = real()?,
            "ymin" => self.domain.y_min = real()?,
            "ymax" => self.domain.y_max = real()?,
            "nx" => self.nx = count()?,
            "ny" => self.ny = count()?,
            "tau" => self.tau = real()?,
            "T" => self.t_final = real()?,
            "omega" => self.omega = real()?,
            "beta" => self.beta = real()?,
            "gammax" => self.gamma_x = real()?,
            "gammay" => self.gamma_y = real()?,
            "fp_tol" => self.fp_tol = real()?,
            "fp_max_iters" => self.fp_max_iters = count()?,
            "snapshots" => {
                self.snapshots = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        s.parse::<f64>()
                            .map_err(|_| bad("expected comma-separated times"))
                    })
                    .collect::<Result<_, _>>()?;
            }
            "initial" => self.initial = value.parse()?,
            _ => unreachable!("key checked against KEYS"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if let Err(e) = self.domain.validate() {
            return bad(e.to_string());
        }
        if self.nx == 0 || self.ny == 0 {
            return bad("nx and ny must be positive".into());
        }
        if self.levels == 0 {
            return bad("at least one level is needed".into());
        }
        if self.experiment != Experiment::Accuracy {
            if let Err(e) = self.scheme_config().validate() {
                return bad(e.to_string());
            }
        }
        for &t in &self.snapshots {
            let k = (t / self.tau).round();
            if !(t >= 0.0 && t <= self.t_final + 1e-12) || (t - k * self.tau).abs() > 1e-12 {
                return bad(format!(
                    "snapshot time {t} is not a step multiple in [0, {}]",
                    self.t_final
                ));
            }
        }
        Ok(())
    }

    pub fn potential(&self) -> PotentialSpec {
        if self.gamma_x == 0.0 && self.gamma_y == 0.0 {
            PotentialSpec::Zero
        } else {
            PotentialSpec::harmonic(self.gamma_x, self.gamma_y)
        }
    }

    pub fn scheme_config(&self) -> SchemeConfig {
        SchemeConfig {
            tau: self.tau,
            t_final: self.t_final,
            omega: self.omega,
            beta: self.beta,
            potential: self.potential(),
            fixed_point_tol: self.fp_tol,
            fixed_point_max_iters: self.fp_max_iters,
            ..Default::default()
        }
    }

    /// Step indices at which snapshots are due.
    pub fn snapshot_steps(&self) -> Vec<usize> {
        let mut steps: Vec<usize> = self
            .snapshots
            .iter()
            .map(|t| (t / self.tau).round() as usize)
            .collect();
        steps.sort_unstable();
        steps.dedup();
        steps
    }
}
