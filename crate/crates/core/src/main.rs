use clap::{Parser, Subcommand};
use rsma_vlc::bench::{emit_csv, load_config, run_sweep, write_sidecar, Config};
use rsma_vlc::driver::{brute_force_oracle, prepare, run_scheme, Scheme};
use rsma_vlc::rates::{worst_case_validate, BeamformingSolution};
use rsma_vlc::Scenario;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(version, about = "Robust max-min fair beamforming for VLC downlinks")]
struct Cli {
    /// Debug logging; RUST_LOG overrides.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one scenario with RSMA and SDMA.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Write both solutions as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the sweep section of a config and write CSV.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Monte-Carlo samples per row.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Monte-Carlo margins of a solution file written by `solve`.
    Validate {
        solution: PathBuf,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Grid search on a tiny perfect-CSI instance next to the solver value.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 24)]
        grid: usize,
    },
}

#[derive(Serialize, Deserialize)]
struct SolutionFile {
    scenario: Scenario,
    solutions: Vec<(Scheme, BeamformingSolution)>,
}

type Failure = Box<dyn std::error::Error>;

fn read_config(path: &Path, seed: Option<u64>) -> Result<Config, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut cfg = load_config(&text)?;
    if let Some(s) = seed {
        cfg.users.seed = s;
        cfg.driver.seed = s;
    }
    Ok(cfg)
}

fn solve(config: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<(), Failure> {
    let cfg = read_config(config, seed)?;
    let scenario = cfg.scenario()?;
    let mut solutions = Vec::new();
    for scheme in [Scheme::Rsma, Scheme::Sdma] {
        let sol = run_scheme(&scenario, &cfg.driver, scheme, None)?;
        let d = &sol.diagnostics;
        println!(
            "{}: mmf {:.6} bit/s/Hz, {} outer iterations, rank gap {:.2e}, scale {:.4}",
            scheme.name(),
            sol.mmf_value,
            d.outer_iterations,
            d.max_rank_gap(),
            d.scale
        );
        if let Some(w) = &d.warning {
            println!("  warning: {w}");
        }
        solutions.push((scheme, sol));
    }
    if let Some(path) = out {
        let file = SolutionFile { scenario, solutions };
        std::fs::write(path, serde_json::to_string_pretty(&file)? + "\n")?;
    }
    Ok(())
}

fn sweep(config: &Path, seed: Option<u64>, out: &Path, samples: Option<usize>) -> Result<(), Failure> {
    let cfg = read_config(config, seed)?;
    let mut spec = cfg.sweep_spec()?;
    if let Some(n) = samples {
        spec.samples = n;
    }
    let rows = run_sweep(&spec)?;
    for r in rows.iter().filter(|r| r.error.is_some()) {
        eprintln!("{} at {} = {}: {}", r.scheme.name(), r.axis, r.axis_value, r.error.as_deref().unwrap_or(""));
    }
    emit_csv(&rows, out)?;
    let mut sidecar = out.as_os_str().to_owned();
    sidecar.push(".users.json");
    write_sidecar(&spec, Path::new(&sidecar))?;
    println!("{} rows written to {}", rows.len(), out.display());
    Ok(())
}

fn validate(path: &Path, samples: usize, seed: u64) -> Result<bool, Failure> {
    let file: SolutionFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let mut ok = true;
    for (scheme, sol) in &file.solutions {
        let prep = prepare(&file.scenario, *scheme)?;
        let m = worst_case_validate(&prep.estimates, sol, &prep.dists, file.scenario.params.noise_power, samples, seed)?;
        println!(
            "{}: private margin {:.3e}, common margin {:.3e} over {} samples",
            scheme.name(),
            m.private_margin,
            m.common_margin,
            m.samples
        );
        ok &= m.worst() >= rsma_vlc::bench::MARGIN_TOL;
    }
    Ok(ok)
}

fn oracle(config: &Path, grid: usize) -> Result<(), Failure> {
    let cfg = read_config(config, None)?;
    let scenario = cfg.scenario()?;
    for scheme in [Scheme::Rsma, Scheme::Sdma] {
        let best = brute_force_oracle(&scenario, scheme, grid)?;
        let sol = run_scheme(&scenario, &cfg.driver, scheme, None)?;
        println!("{}: oracle {:.6}, solver {:.6}", scheme.name(), best, sol.mmf_value);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match &cli.command {
        Command::Solve { config, seed, out } => solve(config, *seed, out.as_deref()).map(|_| true),
        Command::Sweep { config, seed, out, samples } => sweep(config, *seed, out, *samples).map(|_| true),
        Command::Validate { solution, samples, seed } => validate(solution, *samples, *seed),
        Command::Oracle { config, grid } => oracle(config, *grid).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
