//! `landau`: batch front end for the particle simulator.
//!
//! Exit codes: 0 success, 1 configuration or I/O error, 2 a run aborted on
//! a non-finite velocity (outputs are still written), 3 validation failed.

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use landau_core::experiments::{maxwell_covariance_oracle, summarize_stability};
use landau_core::validation::validate;
use landau_core::{run, run_coupled, KernelFault, Mat3};
use rayon::prelude::*;

use crate::output::{coupled_csv, sim_csv, write_atomic, write_json, Manifest, ReportDoc};

#[derive(Debug, Parser)]
#[command(name = "landau", version, about = "Particle simulation of the homogeneous Landau equation")]
struct Cli {
    /// Worker threads (default: one per core).
    #[arg(long, global = true, env = "LANDAU_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one ensemble and write its diagnostic series.
    Simulate { config: PathBuf },
    /// Run the coupled pair for each seed and write the stability report.
    Couple { config: PathBuf },
    /// Run the fast invariant suite.
    Validate {
        #[arg(long, hide = true, value_enum)]
        inject_fault: Option<Fault>,
    },
    /// Closed-form reference solutions.
    #[command(subcommand)]
    Oracle(Oracle),
}

#[derive(Debug, Subcommand)]
enum Oracle {
    /// Covariance at time t for Maxwell molecules (gamma = 0).
    Maxwell {
        /// Initial covariance, row-major.
        #[arg(long, num_args = 9, allow_negative_numbers = true, required = true)]
        sigma0: Vec<f64>,
        #[arg(long, allow_negative_numbers = true)]
        t: f64,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Fault {
    DriftSign,
}

const EXIT_CONFIG: u8 = 1;
const EXIT_BLOW_UP: u8 = 2;
const EXIT_VALIDATION: u8 = 3;

type Outcome = Result<u8, (u8, String)>;

fn config_failure(e: impl std::fmt::Display) -> (u8, String) {
    (EXIT_CONFIG, e.to_string())
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn write_outputs(files: &[(PathBuf, Vec<u8>)]) -> Result<(), (u8, String)> {
    for (path, bytes) in files {
        write_atomic(path, bytes).map_err(|e| config_failure(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn simulate(path: &Path) -> Outcome {
    let started_at = unix_now();
    let clock = Instant::now();
    let loaded = config::load(path).map_err(config_failure)?;
    let cfg = loaded.sim_config().map_err(config_failure)?;
    let series = run(&cfg).map_err(config_failure)?;

    let dir = loaded.output_dir();
    let prefix = &loaded.file.output.prefix;
    let csv = dir.join(format!("{prefix}.csv"));
    let manifest_path = dir.join(format!("{prefix}.manifest.json"));
    write_outputs(&[(csv.clone(), sim_csv(&series).into_bytes())])?;
    let blow_up = series.blow_up.is_some();
    let manifest = Manifest {
        command: "simulate",
        version: env!("CARGO_PKG_VERSION"),
        config_path: path,
        config: &loaded.file,
        seeds: vec![cfg.seed],
        threads: rayon::current_num_threads(),
        started_at,
        wall_clock_seconds: clock.elapsed().as_secs_f64(),
        outputs: vec![csv.clone(), manifest_path.clone()],
        blow_up,
    };
    write_json(&manifest_path, &manifest).map_err(config_failure)?;
    println!("wrote {} ({} records)", csv.display(), series.records.len());
    match series.blow_up {
        Some(b) => {
            eprintln!("run aborted: {b}");
            Ok(EXIT_BLOW_UP)
        }
        None => Ok(0),
    }
}

fn couple(path: &Path) -> Outcome {
    let started_at = unix_now();
    let clock = Instant::now();
    let loaded = config::load(path).map_err(config_failure)?;
    let (cfg, seeds) = loaded.coupled_config().map_err(config_failure)?;
    let runs: Vec<_> =
        seeds.par_iter().map(|&s| run_coupled(&cfg.for_seed(s))).collect::<Result<_, _>>().map_err(config_failure)?;
    let report = summarize_stability(&runs, &seeds, loaded.envelope_slack()).map_err(config_failure)?;

    let dir = loaded.output_dir();
    let prefix = &loaded.file.output.prefix;
    let mut files = Vec::new();
    for (s, series) in seeds.iter().zip(&runs) {
        let name = if seeds.len() == 1 { format!("{prefix}.csv") } else { format!("{prefix}.seed-{s}.csv") };
        files.push((dir.join(name), coupled_csv(series).into_bytes()));
    }
    write_outputs(&files)?;
    let report_path = dir.join(format!("{prefix}.report.json"));
    let manifest_path = dir.join(format!("{prefix}.manifest.json"));
    let blow_up = report.blow_up;
    let trivial = report.trivial;
    let c_hat = report.c_hat;
    write_json(&report_path, &ReportDoc::from(report)).map_err(config_failure)?;
    let mut outputs: Vec<PathBuf> = files.into_iter().map(|(p, _)| p).collect();
    outputs.extend([report_path.clone(), manifest_path.clone()]);
    let manifest = Manifest {
        command: "couple",
        version: env!("CARGO_PKG_VERSION"),
        config_path: path,
        config: &loaded.file,
        seeds: seeds.clone(),
        threads: rayon::current_num_threads(),
        started_at,
        wall_clock_seconds: clock.elapsed().as_secs_f64(),
        outputs,
        blow_up,
    };
    write_json(&manifest_path, &manifest).map_err(config_failure)?;
    if trivial {
        println!("identical initial ensembles: W2 = 0 throughout (trivial case)");
    } else if let Some(c) = c_hat {
        println!("fitted growth rate C = {c:.6e} over {} seed(s)", seeds.len());
    }
    println!("wrote {}", report_path.display());
    if blow_up {
        eprintln!("a coupled run aborted on a non-finite velocity");
        return Ok(EXIT_BLOW_UP);
    }
    Ok(0)
}

fn validate_cmd(fault: Option<Fault>) -> Outcome {
    let fault = fault.map(|Fault::DriftSign| KernelFault::DriftSignFlip);
    let report = validate(fault);
    print!("{report}");
    if report.passed() {
        println!("all {} checks passed", report.checks.len());
        return Ok(0);
    }
    let failed: Vec<_> = report.failures().map(|c| c.name).collect();
    Err((EXIT_VALIDATION, format!("failed checks: {}", failed.join(", "))))
}

fn oracle(which: Oracle) -> Outcome {
    let Oracle::Maxwell { sigma0, t } = which;
    let rows = [0, 1, 2].map(|i| [sigma0[3 * i], sigma0[3 * i + 1], sigma0[3 * i + 2]]);
    let s = maxwell_covariance_oracle(&Mat3::from_rows(rows), t).map_err(config_failure)?;
    for row in s.m {
        println!("{:.16e} {:.16e} {:.16e}", row[0], row[1], row[2]);
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot set up {n} threads: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    let outcome = match cli.command {
        Command::Simulate { config } => simulate(&config),
        Command::Couple { config } => couple(&config),
        Command::Validate { inject_fault } => validate_cmd(inject_fault),
        Command::Oracle(o) => oracle(o),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
