use std::path::PathBuf;
use std::process::ExitCode;

use aoheom_cli::{
    parse_config, run_absorption, run_dump_matrices, run_equilibrate, run_golden_rule, run_truncation_study, AppError,
    AppResult, RunConfig,
};
use clap::{Parser, Subcommand};

/// Absorption spectra of a hydrogenic system in three Drude baths via
/// hierarchical equations of motion.
#[derive(Parser)]
#[command(name = "aoheom", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads for the hierarchy right-hand side.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Output directory, overriding `output_dir` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Equilibrate, then compute the linear absorption spectrum.
    Absorb,
    /// Golden-rule stick spectrum of the isolated system.
    GoldenRule,
    /// Relax to the correlated equilibrium and write a checkpoint.
    Equilibrate,
    /// Absorption spectra over `truncation_n_max`, normalized and compared.
    TruncationStudy,
    /// Write the Hamiltonian, coupling and dipole matrices as CSV.
    DumpMatrices,
}

fn load(cli: &Cli) -> AppResult<RunConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| AppError::Validation("--config <path> is required".into()))?;
    let text = std::fs::read_to_string(path).map_err(|e| AppError::io(format!("reading {}", path.display()), e))?;
    let mut config = parse_config(&text)?;
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(AppError::Validation("--workers must be at least 1".into()));
        }
        config.workers = Some(w);
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    Ok(config)
}

fn run(cli: &Cli) -> AppResult<()> {
    let config = load(cli)?;
    match cli.command {
        Command::Absorb => {
            let out = run_absorption(&config)?;
            for c in &out.metadata.components {
                for (w, i) in &c.peaks {
                    println!("{} peak omega = {w:.6} intensity = {i:.6e}", c.component);
                }
            }
        }
        Command::GoldenRule => {
            for (c, sticks) in run_golden_rule(&config)? {
                for l in &sticks.lines {
                    println!("{c} {} {}->{} omega = {:.6} weight = {:.6e}", l.series, l.n, l.n_prime, l.omega, l.weight);
                }
            }
        }
        Command::Equilibrate => {
            let (_, summary) = run_equilibrate(&config)?;
            println!("steps = {} residual = {:e} converged = {}", summary.steps, summary.residual, summary.converged);
        }
        Command::TruncationStudy => {
            for d in run_truncation_study(&config)? {
                println!("{} n_max {} vs {}: linf = {:.6e}", d.component, d.n_max_a, d.n_max_b, d.linf);
            }
        }
        Command::DumpMatrices => {
            for f in run_dump_matrices(&config)? {
                println!("{}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
