use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rfm_cli::{parse_seeds, run, Command, ExperimentConfig, Overrides};

#[derive(Parser)]
#[command(
    name = "rfm",
    version,
    about = "Random feature solver experiments for 1D boundary value problems"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// JSON experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Seeds, e.g. `0..20` or `1,4,9`; overrides the config.
    #[arg(long, global = true)]
    seeds: Option<String>,
    /// Relative singular value cutoff; overrides the config.
    #[arg(long, global = true)]
    rcond: Option<f64>,
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// One solve per seed: JSON record and solution samples.
    Solve,
    /// Singular values with bound overlays, plus the sparsity pattern.
    Spectrum,
    /// Error versus number of frequencies, with a rate fit.
    ConvergeN,
    /// Error versus patch radius, with a rate fit.
    ConvergeR,
    /// Monte-Carlo and quadrature checks of the probabilistic claims.
    Probability,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = (|| {
        let path = cli
            .config
            .as_ref()
            .ok_or_else(|| rfm_cli::CliError::Config("--config is required".into()))?;
        let text = std::fs::read_to_string(path)
            .map_err(|e| rfm_cli::CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let config = ExperimentConfig::from_json(&text)?;
        let seeds = cli.seeds.as_deref().map(parse_seeds).transpose()?;
        let command = match cli.command {
            Cmd::Solve => Command::Solve,
            Cmd::Spectrum => Command::Spectrum,
            Cmd::ConvergeN => Command::ConvergeN,
            Cmd::ConvergeR => Command::ConvergeR,
            Cmd::Probability => Command::Probability,
        };
        run(
            command,
            config,
            &Overrides {
                seeds,
                rcond: cli.rcond,
            },
            &cli.out,
            cli.quiet,
        )
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rfm: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
