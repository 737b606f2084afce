//! Scenario files: flat `key = value` lines, `#` starts a comment.
//!
//! Every key has a default, so an empty file is a valid scenario. Unknown keys
//! are rejected so that typos do not silently fall back to defaults.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use fsi_core::expr::{Expr, Var};
use fsi_core::geometry::{Blend, Circle, ReferenceDomain};

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Parse { line: usize, message: String },
    Validation { field: &'static str, message: String },
    Io(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Parse { line, message } => write!(f, "line {line}: {message}"),
            ConfigError::Validation { field, message } => write!(f, "{field}: {message}"),
            ConfigError::Io(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VelocityInit {
    Lift,
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CouplingMode {
    Coupled { max_outer: usize, tol: f64, relaxation: f64 },
    /// Geometry read from a trajectory file (see [`crate::run::read_trajectory`]).
    Decoupled { trajectory: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub tube_width: f64,
    pub amplitude_bound: f64,
    pub blend_plateau: f64,
    pub rings: usize,
    pub segments: usize,
    /// Highest shell frequency kept; the shell grid has `2 (K + 1)` points.
    pub shell_modes: usize,
    pub pairs: usize,
    pub rho_f: f64,
    pub rho_s: f64,
    pub mu: f64,
    pub stiffness: f64,
    pub f1: Expr,
    pub f2: Expr,
    pub g: Expr,
    /// Initial displacement and velocity as expressions in `y`.
    pub eta0: Expr,
    pub eta_star: Expr,
    pub velocity: VelocityInit,
    pub t_final: f64,
    pub dt: f64,
    pub epsilon: f64,
    pub mollify: f64,
    pub coupling: CouplingMode,
    pub output_dir: PathBuf,
    /// Snapshot every `cadence` accepted steps.
    pub cadence: usize,
    pub snapshots: bool,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            tube_width: 0.5,
            amplitude_bound: 0.1,
            blend_plateau: 0.1,
            rings: 6,
            segments: 32,
            shell_modes: 31,
            pairs: 12,
            rho_f: 1.0,
            rho_s: 1.0,
            mu: 1.0,
            stiffness: 1.0,
            f1: Expr::zero(),
            f2: Expr::zero(),
            g: Expr::zero(),
            eta0: Expr::zero(),
            eta_star: Expr::zero(),
            velocity: VelocityInit::Lift,
            t_final: 0.1,
            dt: 1e-3,
            epsilon: 0.0,
            mollify: 0.0,
            coupling: CouplingMode::Coupled { max_outer: 20, tol: 1e-8, relaxation: 1.0 },
            output_dir: PathBuf::from("out"),
            cadence: 10,
            snapshots: false,
            seed: 0,
        }
    }
}

const KEYS: &[&str] = &[
    "geometry.tube_width",
    "geometry.amplitude_bound",
    "geometry.blend_plateau",
    "mesh.rings",
    "mesh.segments",
    "shell.modes",
    "basis.pairs",
    "physics.rho_f",
    "physics.rho_s",
    "physics.mu",
    "physics.stiffness",
    "forcing.f1",
    "forcing.f2",
    "forcing.g",
    "initial.eta0",
    "initial.eta_star",
    "initial.velocity",
    "time.t_final",
    "time.dt",
    "regularization.epsilon",
    "regularization.mollify",
    "coupling.mode",
    "coupling.max_outer",
    "coupling.tol",
    "coupling.relaxation",
    "coupling.trajectory",
    "output.dir",
    "output.cadence",
    "output.snapshots",
    "seed",
];

fn number<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse().map_err(|_| ConfigError::Parse { line, message: format!("{key}: cannot parse {v:?}") })
}

fn expression(line: usize, key: &str, v: &str) -> Result<Expr, ConfigError> {
    Expr::parse(v).map_err(|e| ConfigError::Parse { line, message: format!("{key}: {e}") })
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = RunConfig::parse(&text)?;
        // relative paths in the file are relative to the file
        if let CouplingMode::Decoupled { trajectory } = &mut cfg.coupling {
            if trajectory.is_relative() {
                if let Some(dir) = path.parent() {
                    *trajectory = dir.join(&*trajectory);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses without the file-existence checks of [`RunConfig::validate`].
    pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        let mut entries: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (k, v) = content
                .split_once('=')
                .ok_or_else(|| ConfigError::Parse { line, message: format!("expected `key = value`, got {content:?}") })?;
            let (k, v) = (k.trim(), v.trim());
            let Some(&key) = KEYS.iter().find(|&&known| known == k) else {
                return Err(ConfigError::Parse { line, message: format!("unknown key {k:?}") });
            };
            if entries.insert(key, (line, v)).is_some() {
                return Err(ConfigError::Parse { line, message: format!("duplicate key {k:?}") });
            }
        }

        let mut c = RunConfig::default();
        let (mut max_outer, mut tol, mut relaxation) = (20, 1e-8, 1.0);
        let mut mode = "coupled";
        let mut trajectory = None;
        for (&key, &(line, v)) in &entries {
            match key {
                "geometry.tube_width" => c.tube_width = number(line, key, v)?,
                "geometry.amplitude_bound" => c.amplitude_bound = number(line, key, v)?,
                "geometry.blend_plateau" => c.blend_plateau = number(line, key, v)?,
                "mesh.rings" => c.rings = number(line, key, v)?,
                "mesh.segments" => c.segments = number(line, key, v)?,
                "shell.modes" => c.shell_modes = number(line, key, v)?,
                "basis.pairs" => c.pairs = number(line, key, v)?,
                "physics.rho_f" => c.rho_f = number(line, key, v)?,
                "physics.rho_s" => c.rho_s = number(line, key, v)?,
                "physics.mu" => c.mu = number(line, key, v)?,
                "physics.stiffness" => c.stiffness = number(line, key, v)?,
                "forcing.f1" => c.f1 = expression(line, key, v)?,
                "forcing.f2" => c.f2 = expression(line, key, v)?,
                "forcing.g" => c.g = expression(line, key, v)?,
                "initial.eta0" => c.eta0 = expression(line, key, v)?,
                "initial.eta_star" => c.eta_star = expression(line, key, v)?,
                "initial.velocity" => {
                    c.velocity = match v {
                        "lift" => VelocityInit::Lift,
                        "zero" => VelocityInit::Zero,
                        _ => return Err(ConfigError::Parse { line, message: format!("{key}: expected lift or zero, got {v:?}") }),
                    }
                }
                "time.t_final" => c.t_final = number(line, key, v)?,
                "time.dt" => c.dt = number(line, key, v)?,
                "regularization.epsilon" => c.epsilon = number(line, key, v)?,
                "regularization.mollify" => c.mollify = number(line, key, v)?,
                "coupling.mode" => mode = v,
                "coupling.max_outer" => max_outer = number(line, key, v)?,
                "coupling.tol" => tol = number(line, key, v)?,
                "coupling.relaxation" => relaxation = number(line, key, v)?,
                "coupling.trajectory" => trajectory = Some(PathBuf::from(v)),
                "output.dir" => c.output_dir = PathBuf::from(v),
                "output.cadence" => c.cadence = number(line, key, v)?,
                "output.snapshots" => c.snapshots = number(line, key, v)?,
                "seed" => c.seed = number(line, key, v)?,
                _ => unreachable!("key list and match arms agree"),
            }
        }
        c.coupling = match mode {
            "coupled" => CouplingMode::Coupled { max_outer, tol, relaxation },
            "decoupled" => CouplingMode::Decoupled {
                trajectory: trajectory.ok_or(ConfigError::Validation {
                    field: "coupling.trajectory",
                    message: "decoupled mode needs a trajectory file".into(),
                })?,
            },
            other => {
                let line = entries["coupling.mode"].0;
                return Err(ConfigError::Parse { line, message: format!("coupling.mode: expected coupled or decoupled, got {other:?}") });
            }
        };
        c.check_values()?;
        Ok(c)
    }

    fn check_values(&self) -> Result<(), ConfigError> {
        let fail = |field, message: &str| Err(ConfigError::Validation { field, message: message.into() });
        if !(self.tube_width > 0.0) {
            return fail("geometry.tube_width", "L must be positive");
        }
        if !(self.amplitude_bound > 0.0) {
            return fail("geometry.amplitude_bound", "α must be positive");
        }
        if self.amplitude_bound >= self.tube_width {
            return fail("geometry.amplitude_bound", "α must be < L");
        }
        if !(0.0..1.0).contains(&self.blend_plateau) {
            return fail("geometry.blend_plateau", "plateau must lie in [0, 1)");
        }
        let blend = Blend { half_width: self.tube_width, plateau: self.blend_plateau };
        if self.amplitude_bound * blend.max_slope() > 0.9 {
            return fail("geometry.amplitude_bound", "α · sup|β'| must stay below 0.9 for the map to be invertible");
        }
        if self.rings < 2 || self.segments < 8 {
            return fail("mesh.rings", "need at least 2 rings and 8 segments");
        }
        let inner = (1.0 - self.tube_width) * self.rings as f64;
        if (inner - inner.round()).abs() > 1e-9 {
            return fail("mesh.rings", "rings · (1 − L) must be an integer so a mesh ring sits on the tube boundary");
        }
        if self.pairs == 0 {
            return fail("basis.pairs", "n must be at least 1");
        }
        if self.shell_modes == 0 {
            return fail("shell.modes", "K must be at least 1");
        }
        for (field, v) in [("physics.rho_f", self.rho_f), ("physics.rho_s", self.rho_s), ("physics.mu", self.mu), ("physics.stiffness", self.stiffness)] {
            if !(v > 0.0) {
                return fail(field, "physical constants must be positive");
            }
        }
        if !(self.dt > 0.0) {
            return fail("time.dt", "dt must be positive");
        }
        if !(self.t_final >= 0.0) {
            return fail("time.t_final", "T must be non-negative");
        }
        if !(self.epsilon >= 0.0) {
            return fail("regularization.epsilon", "ε must be non-negative");
        }
        if !(self.mollify >= 0.0) {
            return fail("regularization.mollify", "mollification radius must be non-negative");
        }
        if self.cadence == 0 {
            return fail("output.cadence", "cadence must be at least 1");
        }
        if let CouplingMode::Coupled { max_outer, tol, relaxation } = self.coupling {
            if max_outer == 0 || !(tol > 0.0) || !(relaxation > 0.0 && relaxation <= 1.0) {
                return fail("coupling.max_outer", "need max_outer ≥ 1, tol > 0 and θ in (0, 1]");
            }
        }
        for (field, e) in [("initial.eta0", &self.eta0), ("initial.eta_star", &self.eta_star)] {
            if [Var::T, Var::X1, Var::X2].into_iter().any(|v| e.uses(v)) {
                return fail(field, "initial shell data may only depend on y");
            }
        }
        Ok(())
    }

    /// Value checks plus the existence of referenced files.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.check_values()?;
        if let CouplingMode::Decoupled { trajectory } = &self.coupling {
            if !trajectory.is_file() {
                return Err(ConfigError::Validation {
                    field: "coupling.trajectory",
                    message: format!("{} does not exist", trajectory.display()),
                });
            }
        }
        Ok(())
    }

    pub fn domain(&self) -> Result<ReferenceDomain, ConfigError> {
        let mut d = ReferenceDomain::new(Box::new(Circle { radius: 1.0 }), self.tube_width, self.amplitude_bound)
            .map_err(|e| ConfigError::Validation { field: "geometry.amplitude_bound", message: e.to_string() })?;
        d.blend.plateau = self.blend_plateau;
        Ok(d)
    }

    /// Size of the shell grid.
    pub fn grid_size(&self) -> usize {
        2 * (self.shell_modes + 1)
    }

    /// Every key with its effective value, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let mut out = vec![
            ("geometry.tube_width", fmt_f64(self.tube_width)),
            ("geometry.amplitude_bound", fmt_f64(self.amplitude_bound)),
            ("geometry.blend_plateau", fmt_f64(self.blend_plateau)),
            ("mesh.rings", self.rings.to_string()),
            ("mesh.segments", self.segments.to_string()),
            ("shell.modes", self.shell_modes.to_string()),
            ("basis.pairs", self.pairs.to_string()),
            ("physics.rho_f", fmt_f64(self.rho_f)),
            ("physics.rho_s", fmt_f64(self.rho_s)),
            ("physics.mu", fmt_f64(self.mu)),
            ("physics.stiffness", fmt_f64(self.stiffness)),
            ("forcing.f1", self.f1.source().to_string()),
            ("forcing.f2", self.f2.source().to_string()),
            ("forcing.g", self.g.source().to_string()),
            ("initial.eta0", self.eta0.source().to_string()),
            ("initial.eta_star", self.eta_star.source().to_string()),
            ("initial.velocity", match self.velocity {
                VelocityInit::Lift => "lift".into(),
                VelocityInit::Zero => "zero".into(),
            }),
            ("time.t_final", fmt_f64(self.t_final)),
            ("time.dt", fmt_f64(self.dt)),
            ("regularization.epsilon", fmt_f64(self.epsilon)),
            ("regularization.mollify", fmt_f64(self.mollify)),
        ];
        match &self.coupling {
            CouplingMode::Coupled { max_outer, tol, relaxation } => {
                out.push(("coupling.mode", "coupled".into()));
                out.push(("coupling.max_outer", max_outer.to_string()));
                out.push(("coupling.tol", fmt_f64(*tol)));
                out.push(("coupling.relaxation", fmt_f64(*relaxation)));
            }
            CouplingMode::Decoupled { trajectory } => {
                out.push(("coupling.mode", "decoupled".into()));
                out.push(("coupling.trajectory", trajectory.display().to_string()));
            }
        }
        out.push(("output.dir", self.output_dir.display().to_string()));
        out.push(("output.cadence", self.cadence.to_string()));
        out.push(("output.snapshots", self.snapshots.to_string()));
        out.push(("seed", self.seed.to_string()));
        out
    }

    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), ConfigError> {
        std::fs::write(path, self.to_text()).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))
    }
}

/// Shortest representation that parses back to the same value.
fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}
