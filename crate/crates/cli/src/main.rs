use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fsi_cli::config::RunConfig;
use fsi_cli::run::{self, RunError, EXIT_IO, EXIT_OK, EXIT_VALIDATION};
use fsi_cli::verify;
use fsi_core::diagnostics::{gronwall_check, COLUMNS};

#[derive(Parser)]
#[command(name = "fsi", version, about = "Fluid-shell interaction simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its artifacts to output.dir.
    Simulate { config: PathBuf },
    /// Run a property suite: geometry, correction, basis, gronwall or all.
    Verify {
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Build the Galerkin basis for a scenario and cache it.
    Basis { config: PathBuf },
    /// Check a diagnostics CSV (accel_energy against forcing_functional) with the comparison ODE.
    Gronwall { csv: PathBuf, c0: f64, c1: f64, p: f64 },
}

fn load(path: &PathBuf) -> Result<RunConfig, i32> {
    RunConfig::load(path).map_err(|e| {
        eprintln!("error: {e}");
        RunError::Config(e).exit_code()
    })
}

fn simulate(path: &PathBuf) -> i32 {
    let cfg = match load(path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    match run::simulate(&cfg) {
        Ok(s) => {
            match &s.reason {
                None => println!("completed {} steps to t = {} ({})", s.steps, s.t_end, s.output_dir.display()),
                Some(r) => println!("stopped after {} steps at t = {}: {r} ({})", s.steps, s.t_end, s.output_dir.display()),
            }
            s.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn basis(path: &PathBuf) -> i32 {
    let cfg = match load(path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    match run::build_basis(&cfg) {
        Ok((cache, disc)) => {
            let l: Vec<String> = disc.basis.stokes.iter().map(|m| format!("{:.6}", m.lambda)).collect();
            println!("{} pairs, {} ({})", disc.basis.len(), cache.display(), if disc.basis_cached { "cached" } else { "built" });
            println!("stokes eigenvalues: {}", l.join(" "));
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn read_columns(path: &PathBuf) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or("empty file")?.split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).ok_or(format!("missing column {name}"));
    let (it, ia, ih) = (col(COLUMNS[1])?, col("accel_energy")?, col("forcing_functional")?);
    let (mut t, mut f, mut h) = (Vec::new(), Vec::new(), Vec::new());
    for (i, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        let get = |j: usize| -> Result<f64, String> {
            cells.get(j).and_then(|c| c.parse().ok()).ok_or(format!("row {}: bad value in column {j}", i + 2))
        };
        t.push(get(it)?);
        f.push(get(ia)?);
        h.push(get(ih)?);
    }
    Ok((t, f, h))
}

fn gronwall(path: &PathBuf, c0: f64, c1: f64, p: f64) -> i32 {
    let (t, f, h) = match read_columns(path) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return if e.contains(&path.display().to_string()) { EXIT_IO } else { EXIT_VALIDATION };
        }
    };
    if t.len() < 2 {
        eprintln!("error: need at least two rows");
        return EXIT_VALIDATION;
    }
    let dt = t[1] - t[0];
    match gronwall_check(&f, &h, dt, c0, c1, p) {
        Ok(r) => {
            println!("T~ = {}", r.t_tilde);
            if let Some(b) = r.blowup {
                println!("comparison blowup at t = {b}");
            }
            if let Some(v) = r.first_violation {
                println!("first violation at t = {v}");
            }
            println!("margin = {:e}", r.margin);
            println!("{}", if r.pass { "PASS" } else { "FAIL" });
            if r.pass { EXIT_OK } else { 1 }
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_VALIDATION
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match &cli.command {
        Command::Simulate { config } => simulate(config),
        Command::Basis { config } => basis(config),
        Command::Gronwall { csv, c0, c1, p } => gronwall(csv, *c0, *c1, *p),
        Command::Verify { suite, seed } => match verify::run_suite(suite, *seed) {
            None => {
                eprintln!("error: unknown suite {suite:?} (expected one of {:?} or all)", verify::SUITES);
                EXIT_VALIDATION
            }
            Some(Err(e)) => {
                eprintln!("error: {e}");
                3
            }
            Some(Ok(checks)) => {
                for c in &checks {
                    println!("{} {}  {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
                }
                if checks.iter().all(|c| c.pass) { EXIT_OK } else { 1 }
            }
        },
    };
    ExitCode::from(code as u8)
}
