//! The `flowspeaker` command line: corpus generation, training, generation
//! and evaluation, each reproducible from its seeds.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{EvaluateSection, GenerateSection, RunConfig};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "flowspeaker", version, about = "Generate speaker embeddings from text descriptions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic corpus (speakers.jsonl, prompts.jsonl).
    GenCorpus {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train a model on a corpus and write a checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        corpus_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// External token embeddings (JSON lines) instead of the corpus vocabulary.
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Sample speaker embeddings for one or more prompts.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long = "prompt", required = true)]
        prompts: Vec<String>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        temperature: Option<f64>,
        /// Defaults to the config's generate seed, then the training seed.
        #[arg(long)]
        seed: Option<u64>,
        /// JSON lines output; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Generate from test prompts and score against a corpus.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus_dir: PathBuf,
        /// Test prompts (JSON lines). Defaults to twenty labeled descriptions
        /// whose words need a corpus generated with 13 styled annotators.
        #[arg(long)]
        prompts: Option<PathBuf>,
        #[arg(long)]
        n_per_prompt: Option<usize>,
        #[arg(long)]
        temperature: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Report JSON; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the generated embeddings as JSON lines.
        #[arg(long)]
        generated: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenCorpus { config, out_dir } => commands::gen_corpus(&config, &out_dir),
        Command::Train { config, corpus_dir, out, embeddings } => {
            commands::train(&config, &corpus_dir, &out, embeddings.as_deref())
        }
        Command::Generate { checkpoint, prompts, n, temperature, seed, out, config, embeddings } => {
            commands::generate(commands::GenerateArgs {
                checkpoint: &checkpoint,
                prompts: &prompts,
                n,
                temperature,
                seed,
                out: out.as_deref(),
                config: config.as_deref(),
                embeddings: embeddings.as_deref(),
            })
        }
        Command::Evaluate {
            checkpoint,
            corpus_dir,
            prompts,
            n_per_prompt,
            temperature,
            seed,
            out,
            generated,
            config,
            embeddings,
        } => commands::evaluate(commands::EvaluateArgs {
            checkpoint: &checkpoint,
            corpus_dir: &corpus_dir,
            prompts: prompts.as_deref(),
            n_per_prompt,
            temperature,
            seed,
            out: out.as_deref(),
            generated: generated.as_deref(),
            config: config.as_deref(),
            embeddings: embeddings.as_deref(),
        }),
    }
}
