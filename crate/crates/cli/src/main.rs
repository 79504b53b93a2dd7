mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::Invocation;
use config::RunConfig;
use error::{CliError, CliResult};

#[derive(Parser, Debug)]
#[command(name = "inbetween", version, about = "Stochastic video inbetweening from two key frames")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Write a deterministic synthetic dataset.
    MakeSynthetic,
    /// Train a model and select the best checkpoint.
    Train,
    /// Sample inbetween clips for test pairs.
    Generate,
    /// Score a checkpoint with the evaluation metrics.
    Evaluate,
    /// Decode from intermediate latent layers.
    Probe,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::MakeSynthetic => "make-synthetic",
            Command::Train => "train",
            Command::Generate => "generate",
            Command::Evaluate => "evaluate",
            Command::Probe => "probe",
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum VariantArg {
    Full,
    #[value(name = "no_fusion")]
    NoFusion,
    Naive,
}

#[derive(Args, Debug)]
struct Flags {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    variant: Option<VariantArg>,
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    /// Output directory; relative paths resolve under $INBETWEEN_OUT_ROOT when set.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    n_samples: Option<u64>,
    /// Comma-separated subset of frechet, ssim_best_of_n, diversity.
    #[arg(long, global = true)]
    metrics: Option<String>,
    /// Latent layers to probe, e.g. `17..24` or `18,20,24`.
    #[arg(long, global = true)]
    layers: Option<String>,
    /// Number of synthetic videos.
    #[arg(long, global = true)]
    count: Option<u64>,
    /// Frames per synthetic video.
    #[arg(long, global = true)]
    length: Option<u64>,
    /// Number of test pairs to use (0 means all).
    #[arg(long, global = true)]
    pairs: Option<u64>,
    /// Index of the test pair to probe.
    #[arg(long, global = true)]
    pair: Option<u64>,
}

fn int(v: u64) -> CliResult<toml::Value> {
    i64::try_from(v)
        .map(toml::Value::Integer)
        .map_err(|_| CliError::validation(format!("{v} is too large")))
}

fn path(p: &std::path::Path) -> toml::Value {
    toml::Value::String(p.display().to_string())
}

fn overrides(cmd: Command, f: &Flags) -> CliResult<Vec<(String, toml::Value)>> {
    let mut o: Vec<(String, toml::Value)> = Vec::new();
    let mut push = |k: &str, v: toml::Value| o.push((k.to_string(), v));
    if let Some(v) = f.seed {
        push("seed", int(v)?);
    }
    if let Some(v) = f.variant {
        let name = match v {
            VariantArg::Full => "full",
            VariantArg::NoFusion => "no_fusion",
            VariantArg::Naive => "naive",
        };
        push("model.variant", toml::Value::String(name.into()));
    }
    if let Some(p) = &f.dataset {
        push("dataset", path(p));
    }
    if let Some(p) = &f.checkpoint {
        push("checkpoint", path(p));
    }
    if let Some(p) = &f.out {
        push("out", path(p));
    }
    if let Some(v) = f.n_samples {
        push("eval.n_samples", int(v)?);
    }
    if let Some(m) = &f.metrics {
        let list = m.split(',').map(|s| toml::Value::String(s.trim().to_string())).collect();
        push("eval.metrics", toml::Value::Array(list));
    }
    if let Some(l) = &f.layers {
        push("probe.layers", toml::Value::String(l.clone()));
    }
    if let Some(v) = f.count {
        push("synthetic.count", int(v)?);
    }
    if let Some(v) = f.length {
        push("synthetic.length", int(v)?);
    }
    if let Some(v) = f.pairs {
        let key = if matches!(cmd, Command::Generate) { "generate.pairs" } else { "eval.pairs" };
        push(key, int(v)?);
    }
    if let Some(v) = f.pair {
        push("probe.pair", int(v)?);
    }
    Ok(o)
}

fn run(cli: Cli) -> CliResult<()> {
    let (base, file_keys) = match &cli.flags.config {
        Some(p) => RunConfig::load(p)?,
        None => (RunConfig::default(), Default::default()),
    };
    let (config, conflicts) = base.apply(&file_keys, &overrides(cli.command, &cli.flags)?)?;
    for c in &conflicts {
        eprintln!(
            "note: flag sets {} = {}, overriding {} from the config file",
            c.key, c.cli_value, c.file_value
        );
    }
    let inv = Invocation {
        command: cli.command.name(),
        config,
        conflicts,
    };
    match cli.command {
        Command::MakeSynthetic => commands::make_synthetic(&inv),
        Command::Train => commands::train_cmd(&inv),
        Command::Generate => commands::generate(&inv),
        Command::Evaluate => commands::evaluate(&inv),
        Command::Probe => commands::probe(&inv),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
