//! `proofloom`: prove hypotheses, answer questions, run batches and score
//! entailment trees from the command line.
//!
//! Exit statuses: 0 success (and a complete tree for `prove`), 1 invalid
//! configuration or input, 2 I/O failure, 3 incomplete tree, 4 provider
//! failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use proofloom::eval::Partition;
use tracing_subscriber::EnvFilter;

use commands::{AnswerArgs, BatchArgs, Exit, ExportArgs, ImportArgs, ProveArgs, ScoreArgs};
use config::EngineArgs;

#[derive(Parser)]
#[command(name = "proofloom", version, about = "Entailment-tree proof search over video transcripts and frames")]
struct Cli {
    #[command(flatten)]
    engine: EngineArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PartitionArg {
    Modality,
    Complexity,
}

impl From<PartitionArg> for Partition {
    fn from(p: PartitionArg) -> Self {
        match p {
            PartitionArg::Modality => Partition::Modality,
            PartitionArg::Complexity => Partition::Complexity,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Prove one answer to one question against an episode.
    Prove {
        episode: PathBuf,
        #[arg(long)]
        question: String,
        #[arg(long)]
        answer: String,
        /// Use this hypothesis instead of generating one.
        #[arg(long)]
        hypothesis: Option<String>,
        /// Write the tree here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the decision trace (JSON lines) here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Answer one multiple-choice question of an episode.
    Answer {
        episode: PathBuf,
        /// Question position in the episode, from 0.
        #[arg(long, conflicts_with = "qid")]
        index: Option<usize>,
        #[arg(long)]
        qid: Option<String>,
        /// Directory for the option trees and the verdict.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Answer every question of a dataset and write a run directory.
    Batch {
        dataset: PathBuf,
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long)]
        run_id: Option<String>,
        /// Sample at most this many questions.
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write per-proof decision traces.
        #[arg(long)]
        trace: bool,
    },
    /// Judge a run's trees with the critic (or imported judgments) and
    /// aggregate composition scores.
    ScoreTrees {
        run_dir: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value = "modality")]
        by: PartitionArg,
        /// Score every option's tree, not only the chosen one.
        #[arg(long)]
        all: bool,
        /// Judgments written by import-annotations.
        #[arg(long)]
        judgments: Option<PathBuf>,
    },
    /// Write human annotation task files for a run's trees.
    ExportAnnotations {
        run_dir: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        all: bool,
    },
    /// Map annotator answers back onto tree judgments.
    ImportAnnotations {
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long, required = true, num_args = 1..)]
        answers: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a run's report.
    Report { run_dir: PathBuf },
    /// Write a synthetic oracle suite with its world document.
    GenerateSuite {
        dir: PathBuf,
        #[arg(long, default_value_t = 200)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run(cli: Cli) -> commands::Outcome {
    let engine = &cli.engine;
    match cli.command {
        Command::Prove {
            episode,
            question,
            answer,
            hypothesis,
            out,
            trace,
        } => commands::prove(
            engine,
            ProveArgs {
                episode,
                question,
                answer,
                hypothesis,
                out,
                trace,
            },
        ),
        Command::Answer { episode, index, qid, out } => commands::answer(
            engine,
            AnswerArgs {
                episode,
                index,
                qid,
                out,
            },
        ),
        Command::Batch {
            dataset,
            run_dir,
            run_id,
            limit,
            seed,
            trace,
        } => {
            let cancel = Arc::new(AtomicBool::new(false));
            let flag = Arc::clone(&cancel);
            if let Err(e) = ctrlc::set_handler(move || {
                eprintln!("interrupted: finishing questions in flight");
                flag.store(true, Ordering::SeqCst);
            }) {
                tracing::warn!(error = %e, "no interrupt handler");
            }
            commands::batch(
                engine,
                BatchArgs {
                    dataset,
                    run_dir,
                    run_id,
                    limit,
                    seed,
                    trace,
                },
                cancel,
            )
        }
        Command::ScoreTrees {
            run_dir,
            dataset,
            by,
            all,
            judgments,
        } => commands::score_trees(
            engine,
            ScoreArgs {
                run_dir,
                dataset,
                partition: by.into(),
                all,
                judgments,
            },
        ),
        Command::ExportAnnotations {
            run_dir,
            dataset,
            out,
            all,
        } => commands::export_annotations(ExportArgs {
            run_dir,
            dataset,
            out,
            all,
        }),
        Command::ImportAnnotations { tasks, answers, out } => {
            commands::import_annotations(ImportArgs { tasks, answers, out })
        }
        Command::Report { run_dir } => commands::report(&run_dir),
        Command::GenerateSuite { dir, episodes, seed } => commands::generate_suite(&dir, episodes, seed),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { Exit::Config as u8 } else { Exit::Ok as u8 });
        }
    };
    match run(cli) {
        Ok(exit) => ExitCode::from(exit as u8),
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit as u8)
        }
    }
}
