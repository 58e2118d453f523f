use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ropescope_cli::config::{parse_mask_flag, parse_scaling_flag, ExperimentConfig};
use ropescope_cli::{run_pipeline, CliError, Command};

/// Dimension-level analysis of rotary attention: contribution
/// decomposition, positional-head detection, masking and extrapolation
/// experiments.
#[derive(Parser)]
#[command(name = "ropescope", version, about)]
struct Cli {
    #[command(subcommand)]
    command: CommandArg,

    /// JSON experiment config; flags below override it.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Master seed: overrides the sampling, mask, passkey, and weight seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output root; each run writes to <out>/<command>-<confighash>/.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Head masking: top:<fraction> | random:<fraction> | none.
    #[arg(long, global = true, value_name = "SPEC")]
    mask: Option<String>,

    /// Frequency scaling: none | pi:<s> | yarn:<s>[,alpha,beta] | base:<b>
    /// | selfextend:<G>,<w>.
    #[arg(long, global = true, value_name = "SPEC")]
    scaling: Option<String>,

    /// Skip rotation of queries (keys stay rotated).
    #[arg(long, global = true)]
    disable_query_rotation: bool,
}

#[derive(Subcommand)]
enum CommandArg {
    /// Emit the frequency schedule before and after scaling.
    Freqs,
    /// Emit per-distance cosine profiles and wrap boundaries.
    TrigCurves,
    /// Decompose sampled attention scores of one head into per-dimension
    /// contributions.
    Decompose,
    /// Emit the dominant dimension of every sampled pair.
    Dominant,
    /// Emit per-head distance vs dominant-dimension curves.
    Corr,
    /// Emit the layer-by-head mean top-contributing-dimension grid.
    Heatmap,
    /// Rank heads by distance-dimension rank correlation.
    ScoreHeads,
    /// Compare masked vs baseline perplexity (and pass-key retrieval).
    MaskEval,
    /// Run pass-key retrieval trials through the toy model.
    Passkey,
    /// Compute perplexity of the configured prompts.
    Ppl,
}

impl CommandArg {
    fn command(&self) -> Command {
        match self {
            CommandArg::Freqs => Command::Freqs,
            CommandArg::TrigCurves => Command::TrigCurves,
            CommandArg::Decompose => Command::Decompose,
            CommandArg::Dominant => Command::Dominant,
            CommandArg::Corr => Command::Corr,
            CommandArg::Heatmap => Command::Heatmap,
            CommandArg::ScoreHeads => Command::ScoreHeads,
            CommandArg::MaskEval => Command::MaskEval,
            CommandArg::Passkey => Command::Passkey,
            CommandArg::Ppl => Command::Ppl,
        }
    }
}

fn effective_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(mask) = &cli.mask {
        let parsed = parse_mask_flag(mask)?;
        cfg.mask.strategy = parsed.strategy;
        cfg.mask.fraction = parsed.fraction;
    }
    if let Some(scaling) = &cli.scaling {
        cfg.scaling = parse_scaling_flag(scaling)?;
    }
    if cli.disable_query_rotation {
        cfg.disable_query_rotation = true;
    }
    if let Some(seed) = cli.seed {
        cfg.sampling.seed = seed;
        cfg.mask.seed = seed;
        cfg.passkey.seed = seed;
        cfg.model.weight_seed = seed;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = cli.command.command();
    let result = effective_config(&cli).and_then(|cfg| run_pipeline(command, &cfg));
    match result {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("{}", err.to_json());
            ExitCode::from(err.exit_code())
        }
    }
}
