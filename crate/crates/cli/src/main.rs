//! `claimlens` command line: corpus generation, training, transcript replay,
//! evaluation, the streaming service and self-checks.

mod commands;
mod server;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "claimlens",
    version,
    about = "Dialogue keyword extraction for insurance assessment"
)]
pub struct Cli {
    /// Versioned config file; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Data root; overrides the config and CLAIMLENS_DATA_DIR.
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Single,
    Mtl,
    Adv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic corpus with its schema, knowledge base and
    /// standard questions.
    Gen {
        #[arg(long, default_value_t = 60)]
        dialogues: usize,
        #[arg(long, default_value_t = 0.3)]
        negation_rate: f64,
        /// Character error rate of the transcript noise.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Entries per knowledge-base type.
        #[arg(long, default_value_t = 30)]
        kb_size: usize,
    },
    /// Train the tagger, question and negation classifiers into one bundle.
    Train {
        /// Question-classifier mode; repeat to train several, the last is used.
        #[arg(long = "mode", value_enum)]
        modes: Vec<ModeArg>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay a transcript and print the event log as JSON lines.
    Run {
        transcript: PathBuf,
        #[arg(long)]
        bundle: Option<PathBuf>,
        #[arg(long)]
        no_dst: bool,
        /// Print the final snapshot after the events.
        #[arg(long)]
        snapshot: bool,
    },
    /// Evaluate on the held-out split and print the report tables.
    Eval {
        #[arg(long)]
        bundle: Option<PathBuf>,
        #[arg(long)]
        no_dst: bool,
        #[arg(long)]
        no_baseline: bool,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        /// Directory receiving report.jsonl and report.txt.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve sessions over a websocket at /ws.
    Serve {
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        bundle: Option<PathBuf>,
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long)]
        sessions: Option<PathBuf>,
    },
    /// Gradient and invariant self-tests.
    Check {
        #[arg(long, default_value_t = 20)]
        seeds: u64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
