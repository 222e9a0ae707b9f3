//! `relgen`: split relations, generate samples, build preference data and
//! measure diversity from one TOML config.
//!
//! Exit codes: 0 success, 2 config or input error, 3 backend failure,
//! 4 split hygiene violation, 1 anything else.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::PipelineConfig;

#[derive(Parser)]
#[command(name = "relgen", version, about = "Relation extraction data generation pipeline")]
struct Cli {
    /// Pipeline config file.
    #[arg(short, long, global = true, default_value = "relgen.toml")]
    config: PathBuf,

    /// Overrides the root seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Overrides the output directory from the config.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split the catalog's relations into a preference half and a generation half.
    Split {
        /// Use the first half for generation and the second for preference data.
        #[arg(long)]
        swap: bool,
    },
    /// Generate samples for the relations of the generation half.
    Generate(GenerateArgs),
    /// Build the preference dataset from gold samples of the preference half.
    DpoPrep {
        /// Also write dpo.alias.jsonl with prompt/chosen/rejected keys.
        #[arg(long)]
        alias: bool,
    },
    /// Report pairwise cosine similarity and word repetition of a sample file.
    Diversity {
        #[arg(long)]
        input: PathBuf,
        /// Second sample file; the report ends with the difference of overall means.
        #[arg(long)]
        compare: Option<PathBuf>,
        /// Output file stem inside the output directory.
        #[arg(long, default_value = "diversity")]
        name: String,
    },
    /// Validate samples and write them in another format.
    Export {
        /// Defaults to the gold data of the config.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        input_format: Option<config::GoldFormat>,
        /// normalized-jsonl or tacred-json.
        #[arg(long, default_value = "normalized-jsonl")]
        format: relgen_core::ExportFormat,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum, default_value = "obo")]
    mode: commands::GenMode,
    /// Samples per relation in all-at-once mode (defaults to `rounds`).
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    rounds: Option<usize>,
    /// Only generate these relations (repeatable).
    #[arg(long = "relation")]
    relations: Vec<String>,
    /// Scripted mock file used instead of the HTTP backend.
    #[arg(long)]
    mock: Option<PathBuf>,
    /// Write every backend response to this file in mock format.
    #[arg(long)]
    record: Option<PathBuf>,
    /// Relations generated concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Drop the diversity sentence from the prompt.
    #[arg(long)]
    no_diversity_instruction: bool,
    /// Output file stem inside the output directory.
    #[arg(long, default_value = "generated")]
    name: String,
}

fn run(cli: Cli) -> Result<(), commands::Failure> {
    let mut cfg = PipelineConfig::load(&cli.config).map_err(commands::Failure::Config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = cli.output_dir {
        cfg.output_dir = dir;
    }
    match cli.command {
        Command::Split { swap } => commands::split(&cfg, swap),
        Command::Generate(args) => commands::generate(
            &cfg,
            &commands::GenerateOptions {
                mode: args.mode,
                count: args.count,
                rounds: args.rounds,
                relations: args.relations,
                mock: args.mock,
                record: args.record,
                jobs: args.jobs,
                diversity_instruction: !args.no_diversity_instruction,
                name: args.name,
            },
        ),
        Command::DpoPrep { alias } => commands::dpo_prep(&cfg, alias),
        Command::Diversity {
            input,
            compare,
            name,
        } => commands::diversity(&cfg, &input, compare.as_deref(), &name),
        Command::Export {
            input,
            input_format,
            format,
            output,
        } => commands::export(&cfg, input.as_deref(), input_format, format, &output),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error());
            ExitCode::from(failure.code())
        }
    }
}
