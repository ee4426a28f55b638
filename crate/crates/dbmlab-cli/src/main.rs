use clap::{Args, Parser, Subcommand};
use dbmlab_cli::{run_experiment, CliError, ExperimentConfig, Kind, RunOptions};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "dbmlab", version, about = "Dyson Brownian motion laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Free-convolution density and classical locations
    Freeconv(Common),
    /// DBM flow against the matrix marginal
    Simulate(Common),
    /// Homogenization residuals of coupled flows
    Homog(Common),
    /// Mesoscopic linear-statistic CLT
    Meso(Common),
    /// Unfolded gap statistics
    Gaps(Common),
    /// Gaussian beta-ensemble linear statistics
    Beta(Common),
    /// Print an example config of the given kind
    Example { kind: String },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
}

fn execute(kind: Kind, args: Common) -> Result<bool, CliError> {
    let text = std::fs::read_to_string(&args.config)?;
    let mut cfg = ExperimentConfig::from_toml(&text)?;
    if cfg.kind != kind {
        return Err(CliError::Parse(format!(
            "config is for `{}` but the `{}` subcommand was used",
            cfg.kind.name(),
            kind.name()
        )));
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(m) = args.replicas {
        cfg.replicas = m;
    }
    let out = args
        .out
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(kind.name()));
    let rec = run_experiment(&cfg, &out, &RunOptions { threads: args.threads })?;
    println!("{}", serde_json::to_string_pretty(&rec.summary)?);
    Ok(rec.summary.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::Freeconv(a) => (Kind::Freeconv, a),
        Command::Simulate(a) => (Kind::Simulate, a),
        Command::Homog(a) => (Kind::Homog, a),
        Command::Meso(a) => (Kind::Meso, a),
        Command::Gaps(a) => (Kind::Gaps, a),
        Command::Beta(a) => (Kind::Beta, a),
        Command::Example { kind } => {
            let Some(k) = Kind::ALL.into_iter().find(|k| k.name() == kind) else {
                eprintln!("error: unknown experiment kind `{kind}`");
                return ExitCode::from(1);
            };
            return match ExperimentConfig::example(k).to_toml() {
                Ok(s) => {
                    print!("{s}");
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            };
        }
    };
    match execute(kind, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
