//! `dsthmm`: generate synthetic dialog corpora, train HMM dialog-state
//! trackers under the manual / automatic / EM conditions, evaluate, decode,
//! and run learning-curve experiments.
//!
//! Exit codes: 0 success, 2 input error (I/O, parse, validation, dimension
//! mismatch), 3 degenerate training (a sequence with zero probability or an
//! unreachable row without smoothing).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dsthmm_core::{
    evaluate_model, generate_corpus, read_corpus_file, run_curve, sequence_log_likelihood,
    train_condition, viterbi_decode, write_corpus_file, write_curve_csv, Condition, DialogDomain,
    DialogRecord, ExperimentConfig, HmmError, HmmModel, StateSpace, TrainingConfig,
};
use serde_json::{json, Map, Value};

const CURVE_HELP: &str = "\
Seeding: for each experiment seed s, with mix(a, b) = splitmix64(a ^ splitmix64(b)):
  training dialogs   first n dialogs of the stream seeded mix(s, 1)
                     (so every training size extends the smaller ones)
  held-out dialogs   stream seeded mix(s, 2), shared by all cells of seed s
  EM restarts        base = mix(mix(s, 3), n); restart r starts from a
                     random model seeded mix(base, r)
The `seed` field of the embedded training config is not used.";

#[derive(Parser)]
#[command(name = "dsthmm", version, about = "HMM dialog-state tracking toolkit")]
struct Cli {
    /// Pretty-print JSON output instead of one line per object.
    #[arg(long, global = true)]
    pretty: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a corpus of dialogs from a domain file.
    Generate {
        #[arg(long)]
        domain: PathBuf,
        #[arg(long)]
        num_dialogs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        min_len: usize,
        #[arg(long, default_value_t = 20)]
        max_len: usize,
    },
    /// Train a model under one of the three conditions.
    Train {
        #[arg(long)]
        condition: Condition,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        num_states: usize,
        #[arg(long)]
        num_symbols: usize,
        #[arg(long, default_value_t = TrainingConfig::default().max_iterations)]
        max_iterations: usize,
        #[arg(long, default_value_t = TrainingConfig::default().rel_tolerance)]
        rel_tolerance: f64,
        #[arg(long, default_value_t = TrainingConfig::default().smoothing_epsilon)]
        smoothing: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of random EM restarts; the best by training likelihood wins.
        #[arg(long, default_value_t = 10)]
        restarts: usize,
        /// Output model file.
        #[arg(long)]
        out: PathBuf,
        /// Iteration-trace CSV (EM only).
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Score a model on a corpus.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Write the Viterbi path of every dialog, one JSON object per line.
    Decode {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a learning-curve experiment and write its CSV.
    #[command(after_help = CURVE_HELP)]
    Curve {
        #[arg(long)]
        config: PathBuf,
        /// Output CSV; defaults to `<output_dir>/curve.csv` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(summary) => {
            let text = if cli.pretty {
                serde_json::to_string_pretty(&summary)
            } else {
                serde_json::to_string(&summary)
            };
            println!("{}", text.expect("summary serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &HmmError) -> u8 {
    match e {
        HmmError::DegenerateCorpus { .. }
        | HmmError::DegenerateRow { .. }
        | HmmError::ZeroProbabilitySequence { .. } => 3,
        _ => 2,
    }
}

/// JSON has no infinities; non-finite metrics are written as strings.
fn metric(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!(x.to_string())
    }
}

fn check_corpus(corpus: &[DialogRecord], space: &StateSpace) -> dsthmm_core::Result<()> {
    corpus.iter().try_for_each(|d| d.check(space))
}

fn run(command: Command) -> dsthmm_core::Result<Value> {
    match command {
        Command::Generate {
            domain,
            num_dialogs,
            seed,
            out,
            min_len,
            max_len,
        } => {
            let domain = DialogDomain::read_json(&domain)?;
            let corpus = generate_corpus(&domain, num_dialogs, min_len, max_len, seed)?;
            write_corpus_file(&out, &corpus)?;
            Ok(json!({
                "dialogs": corpus.len(),
                "turns": corpus.iter().map(DialogRecord::len).sum::<usize>(),
                "channel_error_rate": dsthmm_core::disagreement_rate(&corpus),
            }))
        }
        Command::Train {
            condition,
            corpus,
            num_states,
            num_symbols,
            max_iterations,
            rel_tolerance,
            smoothing,
            seed,
            restarts,
            out,
            trace,
        } => {
            let corpus = read_corpus_file(&corpus)?;
            let space = StateSpace::new(num_states, num_symbols)?;
            let config = TrainingConfig {
                max_iterations,
                rel_tolerance,
                smoothing_epsilon: smoothing,
                seed,
            };
            let trained = train_condition(condition, &corpus, &space, &config, restarts)?;
            trained.model.write_json(&out)?;
            let mut summary = Map::new();
            summary.insert("condition".into(), json!(condition.as_str()));
            match &trained.report {
                Some(report) => {
                    if let Some(path) = &trace {
                        report.write_trace_csv(BufWriter::new(File::create(path)?))?;
                    }
                    summary.insert(
                        "final_log_likelihood".into(),
                        metric(report.final_log_likelihood()),
                    );
                    summary.insert("iterations".into(), json!(report.iterations.len()));
                    summary.insert("stop_reason".into(), json!(report.stop_reason));
                    summary.insert("restart".into(), json!(trained.restart));
                }
                None => {
                    let ll: f64 = corpus
                        .iter()
                        .map(|d| sequence_log_likelihood(&trained.model, &d.observed))
                        .sum();
                    summary.insert("final_log_likelihood".into(), metric(ll));
                }
            }
            Ok(Value::Object(summary))
        }
        Command::Eval { model, corpus } => {
            let model = HmmModel::read_json(&model)?;
            let corpus = read_corpus_file(&corpus)?;
            check_corpus(&corpus, model.space())?;
            let result = evaluate_model(&model, &corpus)?;
            Ok(json!({
                "normalized_log_likelihood": metric(result.normalized_log_likelihood),
                "tracking_accuracy": result.tracking_accuracy,
                "neg_inf_dialogs": result.impossible_dialogs,
                "dialogs": result.dialogs,
                "turns": result.turns,
            }))
        }
        Command::Decode { model, corpus, out } => {
            let model = HmmModel::read_json(&model)?;
            let corpus = read_corpus_file(&corpus)?;
            check_corpus(&corpus, model.space())?;
            let mut w = BufWriter::new(File::create(&out)?);
            let mut impossible = 0usize;
            for d in &corpus {
                let line = match viterbi_decode(&model, &d.observed) {
                    Ok((path, log_prob)) => json!({ "path": path, "log_prob": log_prob }),
                    Err(HmmError::ZeroProbabilitySequence { .. }) => {
                        impossible += 1;
                        json!({ "path": null, "log_prob": null })
                    }
                    Err(e) => return Err(e),
                };
                writeln!(w, "{line}")?;
            }
            w.flush()?;
            Ok(json!({ "dialogs": corpus.len(), "impossible_dialogs": impossible }))
        }
        Command::Curve { config, out } => {
            let config = ExperimentConfig::read_json(&config)?;
            let domain = DialogDomain::read_json(&config.domain)?;
            let rows = run_curve(&domain, &config)?;
            let out = match out {
                Some(p) => p,
                None => {
                    std::fs::create_dir_all(&config.output_dir)?;
                    config.output_dir.join("curve.csv")
                }
            };
            write_curve_csv(BufWriter::new(File::create(&out)?), &rows)?;
            Ok(json!({
                "rows": rows.len(),
                "failed_cells": rows.iter().filter(|r| r.error.is_some()).count(),
                "out": out.display().to_string(),
            }))
        }
    }
}
