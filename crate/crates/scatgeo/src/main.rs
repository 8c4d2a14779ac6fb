use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use scatgeo::harness::{emit, run, ExperimentConfig, Format};
use scatgeo::{Error, ErrorClass};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "scatgeo",
    version,
    about = "Few-body scattering geometry experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the partition of unity and check its identities.
    PartitionVerify(Args),
    /// Sample cone covering and disjointness.
    Lemma31(Args),
    /// Split-step propagation with a time series.
    Simulate(Args),
    /// Finite-time channel occupations.
    Channels(Args),
    /// Shell estimates of the eikonal phase and residual.
    Eikonal(Args),
    /// Wave-operator convergence with and without the modifier.
    Probe(Args),
}

#[derive(clap::Args)]
struct Args {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
}

#[derive(ValueEnum, Clone, Copy)]
enum FormatArg {
    Json,
    Csv,
}

impl Command {
    fn parts(self) -> (&'static str, Args) {
        match self {
            Command::PartitionVerify(a) => ("partition-verify", a),
            Command::Lemma31(a) => ("lemma31-sample", a),
            Command::Simulate(a) => ("simulate", a),
            Command::Channels(a) => ("channels", a),
            Command::Eikonal(a) => ("eikonal-residual", a),
            Command::Probe(a) => ("wave-probe", a),
        }
    }
}

fn fail(class: ErrorClass, message: String) -> ExitCode {
    eprintln!(
        "{}",
        json!({"error": class.to_string(), "message": message})
    );
    ExitCode::from(match class {
        ErrorClass::Schema => 2,
        ErrorClass::Numeric => 3,
        ErrorClass::Io => 1,
    })
}

fn execute(kind: &str, args: Args) -> Result<PathBuf, Error> {
    let text = std::fs::read_to_string(&args.config)?;
    let mut config = ExperimentConfig::from_json(&text)?;
    if config.experiment.kind() != kind {
        return Err(Error::Parameter(format!(
            "config kind {} does not match subcommand {kind}",
            config.experiment.kind()
        )));
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    let out = match (args.out, &config.output) {
        (Some(p), _) => p,
        (None, Some(p)) => p.clone(),
        (None, None) => return Err(Error::Parameter("--out is required".into())),
    };
    let artifacts = run(&config)?;
    let format = match args.format {
        FormatArg::Json => Format::Json,
        FormatArg::Csv => Format::Csv,
    };
    emit(&artifacts, &out, format)?;
    Ok(out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = cli.command.parts();
    match execute(kind, args) {
        Ok(out) => {
            println!("{}", json!({"status": "ok", "kind": kind, "out": out}));
            ExitCode::SUCCESS
        }
        Err(e) => fail(e.class(), e.to_string()),
    }
}
