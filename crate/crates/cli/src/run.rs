//! Run orchestration: builds the discretization from a [`RunConfig`], drives
//! the solver and writes every artifact of a run into the output directory.
//!
//! Artifacts: `manifest.json`, `diagnostics.csv`, `energy.dat` + `energy.gp`
//! and, when enabled, `mesh.txt` with `snap_<step>.snap` files. Nothing
//! written depends on wall-clock time, so identical configs give identical
//! bytes.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use fsi_core::basis::GalerkinBasis;
use fsi_core::diagnostics::{write_csv, Row};
use fsi_core::dynamics::{
    regularize_initial_data, CouplingOptions, ForcingSpec, InitialData, InitialVelocity, Model, Physics, RunOptions, RunOutput,
};
use fsi_core::expr::{Expr, Point};
use fsi_core::fe::Quadrature;
use fsi_core::mesh::Mesh;
use fsi_core::pressure::pressure_recover;
use fsi_core::saddle::StokesSolver;
use fsi_core::spectral::{ShellTrajectory, SpectralField};
use fsi_core::FsiError;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::config::{ConfigError, CouplingMode, RunConfig, VelocityInit};
use crate::snapshot::Snapshot;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_SOLVER_STOP: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Solver(FsiError),
    Io(std::io::Error),
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "configuration: {e}"),
            RunError::Solver(e) => write!(f, "solver: {e}"),
            RunError::Io(e) => write!(f, "i/o: {e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<FsiError> for RunError {
    fn from(e: FsiError) -> Self {
        match e {
            FsiError::Io(m) => RunError::Io(std::io::Error::other(m)),
            other => RunError::Solver(other),
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(ConfigError::Io(_)) | RunError::Io(_) => EXIT_IO,
            RunError::Config(_) => EXIT_VALIDATION,
            RunError::Solver(e) => solver_exit_code(e),
        }
    }
}

fn solver_exit_code(e: &FsiError) -> i32 {
    match e {
        FsiError::InvalidArgument(_) | FsiError::IncompatibleData { .. } | FsiError::Mesh(_) | FsiError::AmplitudeExceeded { .. } => {
            EXIT_VALIDATION
        }
        FsiError::Io(_) => EXIT_IO,
        _ => EXIT_SOLVER_STOP,
    }
}

/// Variant name used as the structured reason in manifests.
pub fn reason_kind(e: &FsiError) -> &'static str {
    match e {
        FsiError::OutOfTube { .. } => "OutOfTube",
        FsiError::AmplitudeExceeded { .. } => "AmplitudeExceeded",
        FsiError::NonInvertible { .. } => "NonInvertible",
        FsiError::Mesh(_) => "Mesh",
        FsiError::IncompatibleFlux { .. } => "IncompatibleFlux",
        FsiError::IncompatibleData { .. } => "IncompatibleData",
        FsiError::EigensolveFailure(_) => "EigensolveFailure",
        FsiError::InfSupDeficient => "InfSupDeficient",
        FsiError::SingularSolve(_) => "SingularSolve",
        FsiError::NotSpd => "NotSpd",
        FsiError::NoConvergence { .. } => "NoConvergence",
        FsiError::SelfIntersection { .. } => "SelfIntersection",
        FsiError::NoContraction { .. } => "NoContraction",
        FsiError::InsufficientHistory { .. } => "InsufficientHistory",
        FsiError::DegenerateWeight => "DegenerateWeight",
        FsiError::Io(_) => "Io",
        FsiError::InvalidArgument(_) => "InvalidArgument",
    }
}

fn reason_json(e: &FsiError) -> Value {
    let mut r = json!({ "kind": reason_kind(e), "message": e.to_string() });
    match *e {
        FsiError::SelfIntersection { t, amplitude } => {
            r["t"] = json!(t);
            r["amplitude"] = json!(amplitude);
        }
        FsiError::NoContraction { iterations, gap } => {
            r["iterations"] = json!(iterations);
            r["gap"] = json!(gap);
        }
        FsiError::NoConvergence { iterations, residual } => {
            r["iterations"] = json!(iterations);
            r["residual"] = json!(residual);
        }
        _ => {}
    }
    r
}

/// Outcome of [`simulate`] once the manifest has been written.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub exit_code: i32,
    /// `None` on success, otherwise the manifest reason.
    pub reason: Option<String>,
    pub steps: usize,
    pub t_end: f64,
    pub output_dir: PathBuf,
}

/// Mesh, quadrature, solver and basis for a config.
pub struct Discretization {
    pub mesh: Mesh,
    pub quad: Quadrature,
    pub basis: GalerkinBasis,
    pub basis_hash: String,
    pub basis_cached: bool,
}

pub fn basis_cache_path(cfg: &RunConfig, mesh: &Mesh) -> PathBuf {
    cfg.output_dir.join("cache").join(format!("basis_{}_{}.bin", mesh.hash(), cfg.pairs))
}

fn file_hash(path: &Path) -> std::io::Result<String> {
    let digest = Sha256::digest(fs::read(path)?);
    Ok(digest.iter().take(8).map(|b| format!("{b:02x}")).collect())
}

/// Builds the discretization, reusing a cached basis when one matches the mesh.
pub fn discretize(cfg: &RunConfig) -> Result<Discretization, RunError> {
    let mesh = Mesh::onion(cfg.rings, cfg.segments)?;
    let quad = Quadrature::new(&mesh);
    let cache = basis_cache_path(cfg, &mesh);
    let (basis, cached) = match GalerkinBasis::load(&cache, &mesh) {
        Ok(b) if b.len() == cfg.pairs => (b, true),
        _ => {
            let solver = StokesSolver::new(&mesh, &quad)?;
            let b = GalerkinBasis::build(&mesh, &quad, &solver, cfg.pairs)?;
            fs::create_dir_all(cache.parent().expect("cache path has a parent"))?;
            b.save(&cache)?;
            (b, false)
        }
    };
    let basis_hash = file_hash(&cache)?;
    Ok(Discretization { mesh, quad, basis, basis_hash, basis_cached: cached })
}

fn shell_field(e: &Expr, k_max: usize, m: usize) -> SpectralField {
    SpectralField::from_fn(k_max, m, |y| e.eval(Point { y, ..Point::default() }))
}

pub fn initial_data(cfg: &RunConfig, mesh: &Mesh) -> Result<InitialData, FsiError> {
    let (k, m) = (cfg.shell_modes, cfg.grid_size());
    let data = InitialData {
        eta0: shell_field(&cfg.eta0, k, m),
        eta_star: shell_field(&cfg.eta_star, k, m),
        velocity: match cfg.velocity {
            VelocityInit::Lift => InitialVelocity::Lift,
            VelocityInit::Zero => InitialVelocity::Zero,
        },
    };
    regularize_initial_data(&data, cfg.mollify, mesh)
}

/// Reads a prescribed geometry: one line per time level, `t` followed by the
/// `m` grid samples `ζ(t, j/m)`. Times must be uniform and start at 0.
/// Velocities are second-order differences in time.
pub fn read_trajectory(path: &Path, k_max: usize) -> Result<ShellTrajectory, RunError> {
    let text = fs::read_to_string(path)?;
    let invalid = |m: String| RunError::Config(ConfigError::Validation { field: "coupling.trajectory", message: m });
    let mut times = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| invalid(format!("line {}: bad number {s:?}", i + 1))))
            .collect::<Result<_, _>>()?;
        times.push(vals[0]);
        rows.push(vals[1..].to_vec());
    }
    if rows.is_empty() {
        return Err(invalid("no samples".into()));
    }
    let m = rows[0].len();
    if m <= 2 * k_max || rows.iter().any(|r| r.len() != m) {
        return Err(invalid(format!("every line needs the same number (> {}) of samples", 2 * k_max)));
    }
    if times[0] != 0.0 {
        return Err(invalid("first sample must be at t = 0".into()));
    }
    let eta: Vec<SpectralField> = rows.iter().map(|r| SpectralField::from_grid(r, k_max)).collect();
    if eta.len() == 1 {
        return Ok(ShellTrajectory::constant(eta[0].clone()));
    }
    let dt = times[1] - times[0];
    if !(dt > 0.0) || times.iter().enumerate().any(|(i, &t)| (t - i as f64 * dt).abs() > 1e-9 * (1.0 + t.abs())) {
        return Err(invalid("times must be uniformly spaced and increasing".into()));
    }
    let n = eta.len();
    let eta_t = (0..n)
        .map(|i| match i {
            0 if n == 2 => eta[1].sub(&eta[0]).scaled(1.0 / dt),
            0 => eta[0].scaled(-1.5).axpy(2.0, &eta[1]).axpy(-0.5, &eta[2]).scaled(1.0 / dt),
            _ if i == n - 1 && n == 2 => eta[1].sub(&eta[0]).scaled(1.0 / dt),
            _ if i == n - 1 => eta[i].scaled(1.5).axpy(-2.0, &eta[i - 1]).axpy(0.5, &eta[i - 2]).scaled(1.0 / dt),
            _ => eta[i + 1].sub(&eta[i - 1]).scaled(0.5 / dt),
        })
        .collect();
    Ok(ShellTrajectory { dt, eta, eta_t })
}

struct Solved {
    run: RunOutput,
    geometry: ShellTrajectory,
    coupling: Option<Value>,
    failure: Option<FsiError>,
}

fn solve(cfg: &RunConfig, disc: &Discretization, model: &Model<'_>) -> Result<Solved, RunError> {
    let data = initial_data(cfg, &disc.mesh)?;
    let opts = RunOptions { t_final: cfg.t_final, dt: cfg.dt };
    match &cfg.coupling {
        CouplingMode::Decoupled { trajectory } => {
            let geometry = read_trajectory(trajectory, cfg.shell_modes)?.mollify(cfg.mollify);
            let run = model.run_decoupled(&geometry, &data, &disc.quad, opts)?;
            let failure = run.stop.clone();
            Ok(Solved { run, geometry, coupling: None, failure })
        }
        CouplingMode::Coupled { max_outer, tol, relaxation } => {
            let c = model.run_coupled(
                &data,
                &disc.quad,
                opts,
                &CouplingOptions { max_outer: *max_outer, tol: *tol, relaxation: *relaxation, mollify: cfg.mollify },
            )?;
            let failure = match &c.run.stop {
                Some(e) => Some(e.clone()),
                None if !c.converged => {
                    Some(FsiError::NoContraction { iterations: c.iterations, gap: c.gaps.last().copied().unwrap_or(f64::NAN) })
                }
                None => None,
            };
            let coupling = json!({
                "iterations": c.iterations,
                "converged": c.converged,
                "gaps": c.gaps,
                "contraction_factor": c.contraction_factor(1e-13),
            });
            let geometry = c.run.trajectory.mollify(cfg.mollify);
            Ok(Solved { run: c.run, geometry, coupling: Some(coupling), failure })
        }
    }
}

fn write_plot_data(dir: &Path, rows: &[Row]) -> std::io::Result<()> {
    let mut dat = BufWriter::new(fs::File::create(dir.join("energy.dat"))?);
    writeln!(dat, "# t energy_total energy_kinetic_fluid energy_kinetic_shell energy_elastic dissipation_cum accel_energy")?;
    for r in rows {
        writeln!(
            dat,
            "{:?} {:?} {:?} {:?} {:?} {:?} {:?}",
            r.t, r.energy_total, r.energy_kinetic_fluid, r.energy_kinetic_shell, r.energy_elastic, r.dissipation_cum, r.accel_energy
        )?;
    }
    dat.flush()?;
    let script = "\
set xlabel 't'
set ylabel 'energy'
set key outside
plot 'energy.dat' using 1:2 with lines title 'total', \\
     '' using 1:3 with lines title 'kinetic (fluid)', \\
     '' using 1:4 with lines title 'kinetic (shell)', \\
     '' using 1:5 with lines title 'elastic', \\
     '' using 1:6 with lines title 'cumulative dissipation'
";
    fs::write(dir.join("energy.gp"), script)
}

fn write_snapshots(dir: &Path, cfg: &RunConfig, disc: &Discretization, model: &Model<'_>, solved: &Solved) -> Result<usize, RunError> {
    fs::write(dir.join("mesh.txt"), disc.mesh.to_text())?;
    let run = &solved.run;
    let last = run.states.len() - 1;
    let mut written = 0;
    for (step, state) in run.states.iter().enumerate() {
        if step % cfg.cadence != 0 && step != last {
            continue;
        }
        let (zeta, _) = solved.geometry.eval(state.t);
        let velocity = model.velocity_nodal(&zeta, &state.alpha)?;
        let pressure = if run.states.len() >= 3 {
            let p = pressure_recover(model, &disc.quad, &solved.geometry, run, step)?;
            (0..disc.mesh.num_vertices()).map(|v| p.at_vertex(v)).collect()
        } else {
            vec![0.0; disc.mesh.num_vertices()]
        };
        let snap = Snapshot {
            step,
            t: state.t,
            velocity,
            pressure,
            eta: run.trajectory.eta[step].clone(),
            eta_t: run.trajectory.eta_t[step].clone(),
        };
        snap.write(&dir.join(format!("snap_{step:06}.snap")))?;
        written += 1;
    }
    Ok(written)
}

fn config_json(cfg: &RunConfig) -> Value {
    let mut m = Map::new();
    for (k, v) in cfg.entries() {
        m.insert(k.to_string(), Value::String(v));
    }
    Value::Object(m)
}

fn write_manifest(dir: &Path, manifest: &Value) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(dir.join("manifest.json"), text)
}

/// Runs a validated config. Every outcome past directory creation leaves a
/// `manifest.json`; the returned summary carries the exit code.
pub fn simulate(cfg: &RunConfig) -> Result<RunSummary, RunError> {
    cfg.validate()?;
    let dir = cfg.output_dir.clone();
    fs::create_dir_all(&dir)?;
    let mut manifest = json!({
        "program": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "config": config_json(cfg),
    });

    let result = (|| -> Result<(RunSummary, Value), RunError> {
        let disc = discretize(cfg)?;
        let domain = cfg.domain()?;
        let forcing = ForcingSpec { f: [cfg.f1.clone(), cfg.f2.clone()], g: cfg.g.clone() };
        let physics = Physics { rho_f: cfg.rho_f, rho_s: cfg.rho_s, mu: cfg.mu, stiffness: cfg.stiffness };
        let model = Model::new(&domain, &disc.mesh, &disc.quad, &disc.basis, physics, forcing, cfg.epsilon, cfg.grid_size());
        let mut extra = json!({
            "mesh_hash": disc.mesh.hash(),
            "basis_hash": disc.basis_hash,
            "mesh": { "vertices": disc.mesh.num_vertices(), "velocity_nodes": disc.mesh.num_nodes(), "triangles": disc.mesh.triangles.len() },
        });
        let solved = solve(cfg, &disc, &model)?;
        let run = &solved.run;
        write_csv(&run.rows, BufWriter::new(fs::File::create(dir.join("diagnostics.csv"))?))?;
        write_plot_data(&dir, &run.rows)?;
        let snapshots = if cfg.snapshots { write_snapshots(&dir, cfg, &disc, &model, &solved)? } else { 0 };
        let last = run.rows.last().copied().unwrap_or_default();
        extra["steps"] = json!(last.step);
        extra["t_end"] = json!(last.t);
        extra["snapshots"] = json!(snapshots);
        extra["mass_symmetry_defect"] = json!(run.mass_symmetry_defect);
        extra["mass_min_eigenvalue"] = json!(run.mass_min_eigenvalue);
        if let Some(c) = &solved.coupling {
            extra["coupling"] = c.clone();
        }
        let summary = RunSummary {
            exit_code: solved.failure.as_ref().map_or(EXIT_OK, solver_exit_code),
            reason: solved.failure.as_ref().map(|e| reason_kind(e).to_string()),
            steps: last.step,
            t_end: last.t,
            output_dir: dir.clone(),
        };
        match &solved.failure {
            None => extra["status"] = json!("ok"),
            Some(e) => {
                extra["status"] = json!("stopped");
                extra["reason"] = reason_json(e);
            }
        }
        Ok((summary, extra))
    })();

    match result {
        Ok((summary, extra)) => {
            for (k, v) in extra.as_object().expect("object").iter() {
                manifest[k] = v.clone();
            }
            write_manifest(&dir, &manifest)?;
            Ok(summary)
        }
        Err(e) => {
            manifest["status"] = json!("failed");
            manifest["reason"] = match &e {
                RunError::Solver(s) => reason_json(s),
                RunError::Config(c) => json!({ "kind": "Validation", "message": c.to_string() }),
                RunError::Io(io) => json!({ "kind": "Io", "message": io.to_string() }),
            };
            // the original error matters more than a failure to record it
            let _ = write_manifest(&dir, &manifest);
            Err(e)
        }
    }
}

/// Builds the basis for a config and stores it in the cache.
pub fn build_basis(cfg: &RunConfig) -> Result<(PathBuf, Discretization), RunError> {
    cfg.validate()?;
    let disc = discretize(cfg)?;
    Ok((basis_cache_path(cfg, &disc.mesh), disc))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trajectory_file_velocities_are_exact_for_linear_motion() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("zeta.txt");
        let m = 8;
        let mut text = String::from("# t samples\n");
        for i in 0..4 {
            let t = i as f64 * 0.5;
            text.push_str(&format!("{t}"));
            for j in 0..m {
                let y = j as f64 / m as f64;
                text.push_str(&format!(" {}", 0.01 * t * (2.0 * std::f64::consts::PI * y).sin()));
            }
            text.push('\n');
        }
        fs::write(&path, text).unwrap();
        let tr = read_trajectory(&path, 3).unwrap();
        assert_eq!(tr.len(), 4);
        assert_eq!(tr.dt, 0.5);
        let expected = SpectralField::sin_mode(3, 1, 0.01);
        for v in &tr.eta_t {
            assert!(v.sub(&expected).sup_norm() < 1e-15);
        }
        fs::write(&path, "0 1 2\n1 1\n").unwrap();
        assert!(read_trajectory(&path, 0).is_err());
    }

    #[test]
    fn stop_reasons_map_to_exit_codes() {
        assert_eq!(solver_exit_code(&FsiError::SelfIntersection { t: 0.1, amplitude: 0.2 }), EXIT_SOLVER_STOP);
        assert_eq!(solver_exit_code(&FsiError::NoContraction { iterations: 3, gap: 1.0 }), EXIT_SOLVER_STOP);
        assert_eq!(solver_exit_code(&FsiError::InvalidArgument("x".into())), EXIT_VALIDATION);
        assert_eq!(RunError::Io(std::io::Error::other("disk")).exit_code(), EXIT_IO);
        assert_eq!(reason_json(&FsiError::SelfIntersection { t: 0.5, amplitude: 0.2 })["kind"], "SelfIntersection");
    }
}
