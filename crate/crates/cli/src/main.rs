use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use codesat_core::codebook::read_entries_file;
use codesat_core::compiler::{compile, evaluate, split, CompileParams, ExampleBank};
use codesat_core::config::{JudgeMode, RunConfig};
use codesat_core::gateway::{CompletionSettings, Gateway};
use codesat_core::judge::{SimilarityTable, TableGateway};
use codesat_core::metrics::its_ratio;
use codesat_core::pipeline::{self, CellStatus};
use codesat_core::program::Meaning;
use codesat_core::sequence::{builtin_by_name, builtin_sequences};
use codesat_core::similarity::{
    compare_codebooks, export_matrix, optimal_diagonal_ordering, EmbeddingProvider, HashEmbedding, VectorsFile,
};
use codesat_core::{Error, Result};

#[derive(Parser)]
#[command(name = "codesat", version, about = "LLM-assisted thematic coding and saturation metrics")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; for compile-judge, the program file to write.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Redo cells that already have results.
    #[arg(long, global = true)]
    force: bool,
    /// zero-shot, compiled, stub:always-similar, stub:always-different or stub:lookup.
    #[arg(long, global = true)]
    judge: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate initial codes for every (sequence, iteration) cell.
    Code,
    /// Reduce coded cells to unique codebooks with the configured judge.
    Reduce,
    /// Build the few-shot duplicate judge from a labelled example bank.
    CompileJudge {
        #[arg(long)]
        bank: PathBuf,
        #[arg(long, value_enum, default_value_t = Teacher::Oracle)]
        teacher: Teacher,
        #[arg(long, default_value_t = 0.8)]
        train_fraction: f64,
        #[arg(long, default_value_t = 8)]
        candidates: usize,
    },
    /// Print the ITS ratio for explicit counts or a reduction directory.
    Its {
        #[arg(long, requires = "total")]
        unique: Option<usize>,
        #[arg(long, requires = "unique")]
        total: Option<usize>,
        #[arg(long, conflicts_with_all = ["unique", "total"])]
        dir: Option<PathBuf>,
    },
    /// Cosine-similarity matrix between two unique codebooks.
    EvalSimilarity {
        #[arg(long)]
        left: PathBuf,
        #[arg(long)]
        right: PathBuf,
        /// hash, vectors or remote.
        #[arg(long, default_value = "hash")]
        provider: String,
        #[arg(long)]
        vectors: Option<PathBuf>,
    },
    /// Assemble ITS tables, stability summary and curve charts.
    Report,
    /// Print the built-in analysis sequences.
    Sequences {
        #[arg(long, default_value_t = 12)]
        n: usize,
        #[arg(long)]
        name: Option<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Teacher {
    /// The configured gateway.
    Live,
    /// Answers from the bank's own labels.
    Oracle,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let path = cli.config.as_deref().ok_or_else(|| Error::Config("this command needs --config".into()))?;
    let mut config = RunConfig::load(path)?;
    if let Some(out) = &cli.out {
        config.output = out.clone();
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(judge) = &cli.judge {
        config.judge = judge.parse()?;
    }
    config.check()?;
    Ok(config)
}

fn optional_config(cli: &Cli) -> Result<Option<RunConfig>> {
    cli.config.as_ref().map(|_| load_config(cli)).transpose()
}

fn status_word(s: &CellStatus) -> &'static str {
    match s {
        CellStatus::Ran => "done",
        CellStatus::Skipped => "skipped (exists)",
        CellStatus::Resumed => "resumed",
    }
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Code => {
            let config = load_config(cli)?;
            for (cell, status) in pipeline::cmd_code(&config, cli.force)? {
                println!("{}\t{}", cell.run_id(), status_word(&status));
            }
        }
        Command::Reduce => {
            let config = load_config(cli)?;
            println!("run\tjudge\ttotal\tunique\tITS\tstatus");
            for (r, status) in pipeline::cmd_reduce(&config, cli.force)? {
                println!(
                    "{}\t{}\t{}\t{}\t{}\t{}",
                    r.run_id,
                    r.judge,
                    r.total_codes,
                    r.unique_codes,
                    r.its_display(),
                    status_word(&status)
                );
            }
        }
        Command::Report => {
            let out = match (&cli.out, optional_config(cli)?) {
                (Some(out), _) => out.clone(),
                (None, Some(c)) => c.output,
                (None, None) => return Err(Error::Config("report needs --out or --config".into())),
            };
            let summary = pipeline::cmd_report(&out)?;
            println!("run\tjudge\ttotal\tunique\tITS");
            for r in &summary.reports {
                println!("{}\t{}\t{}\t{}\t{}", r.run_id, r.judge, r.total_codes, r.unique_codes, r.its_display());
            }
            for j in &summary.judges {
                if let Some(s) = &j.stability {
                    println!("{}: CoV {:.2}% over {} runs, range {:.2}", j.judge, s.cov_percent, j.runs, s.range);
                }
            }
            for c in &summary.fit_mse {
                println!("{}: MSE between {} and {} fits {:.2}", c.run_id, c.judge_a, c.judge_b, c.mse);
            }
            println!("wrote {}", out.join(pipeline::REPORT_DIR).display());
        }
        Command::CompileJudge { bank, teacher, train_fraction, candidates } => {
            let config = optional_config(cli)?;
            let seed = cli.seed.or(config.as_ref().map(|c| c.seed)).unwrap_or(0);
            let bank = ExampleBank::load(bank)?;
            let (train, test) = split(&bank.examples, *train_fraction, seed)?;
            let (lm, settings): (Box<dyn Gateway>, CompletionSettings) = match teacher {
                Teacher::Oracle => {
                    let mut table = SimilarityTable::new();
                    for e in bank.examples.iter().filter(|e| e.meaning == Meaning::Similar) {
                        table.insert(&e.text_1, &e.text_2);
                    }
                    (Box::new(TableGateway::new(table)), CompletionSettings::new("oracle"))
                }
                Teacher::Live => {
                    let config = config.ok_or_else(|| Error::Config("--teacher live needs --config".into()))?;
                    let mut s = CompletionSettings::new(config.model_id.clone());
                    s.temperature = config.temperature;
                    (pipeline::judge_gateway(&config)?, s)
                }
            };
            let params = CompileParams { num_candidates: *candidates, seed, ..CompileParams::default() };
            let program = compile(&train, &params, lm.as_ref(), &settings)?;
            let eval = evaluate(&program, &test, lm.as_ref(), &settings)?;
            let path = cli.out.clone().unwrap_or_else(|| PathBuf::from("compiled_judge.json"));
            program.save(&path)?;
            println!(
                "train {} / test {}; validation score {:.3}; test accuracy {:.3} ({}/{})",
                train.len(),
                test.len(),
                program.validation_score().unwrap_or(0.0),
                eval.accuracy,
                eval.correct,
                eval.total
            );
            println!("wrote {}", path.display());
        }
        Command::Its { unique, total, dir } => {
            let (u, t) = match (unique, total, dir) {
                (Some(u), Some(t), _) => (*u, *t),
                (_, _, Some(dir)) => {
                    let r = pipeline::audit_reduce_dir(dir)?;
                    (r.unique_codes, r.total_codes)
                }
                _ => return Err(Error::Config("its needs --unique and --total, or --dir".into())),
            };
            let its = its_ratio(u, t)?;
            println!("ITS {its:.2} ({u}/{t} = {its})");
        }
        Command::EvalSimilarity { left, right, provider, vectors } => {
            let config = optional_config(cli)?;
            let emb = config.as_ref().map(|c| c.embeddings.clone()).unwrap_or_default();
            let provider = make_provider(provider, vectors.as_deref().or(emb.vectors.as_deref()), &emb)?;
            let l = read_entries_file(left)?;
            let r = read_entries_file(right)?;
            let m = compare_codebooks(&l, &r, provider.as_ref())?;
            let (ordering, ordered) = optimal_diagonal_ordering(&m)?;
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("similarity"));
            export_matrix(&m, &out, "matrix", Some(emb.highlight))?;
            export_matrix(&ordered, &out, "matrix_ordered", Some(emb.highlight))?;
            let path = out.join("ordering.json");
            std::fs::write(&path, serde_json::to_string_pretty(&ordering)? + "\n").map_err(|e| Error::io(&path, e))?;
            println!(
                "{}x{} matrix via {}; matched {} pairs, total similarity {:.4}, mean {:.4}",
                m.rows(),
                m.cols(),
                provider.name(),
                ordering.pairs.len(),
                ordering.score,
                ordering.score / ordering.pairs.len() as f64
            );
            println!("wrote {}", out.display());
        }
        Command::Sequences { n, name } => {
            let seqs = match name {
                Some(name) => vec![builtin_by_name(name, *n)?],
                None => builtin_sequences(*n)?,
            };
            for s in seqs {
                let order: Vec<String> = s.order.iter().map(ToString::to_string).collect();
                println!("{}\t{}", s.name, order.join(","));
            }
        }
    }
    Ok(())
}

fn make_provider(
    name: &str,
    vectors: Option<&Path>,
    emb: &codesat_core::config::EmbeddingSection,
) -> Result<Box<dyn EmbeddingProvider>> {
    match name {
        "hash" => Ok(Box::new(HashEmbedding::new(emb.hash_dim))),
        "vectors" => {
            let path = vectors.ok_or_else(|| Error::Config("provider 'vectors' needs --vectors".into()))?;
            Ok(Box::new(VectorsFile::load(path)?))
        }
        #[cfg(feature = "live")]
        "remote" => Ok(Box::new(codesat_core::similarity::RemoteEmbedding::new(
            &emb.endpoint,
            &emb.model_id,
            &emb.api_key_env,
        )?)),
        other => Err(Error::Config(format!("unknown embedding provider '{other}'"))),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(j) = &cli.judge {
        if let Err(e) = j.parse::<JudgeMode>() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            if let Error::Reduction { .. } = &e {
                eprintln!("progress was checkpointed; rerun the same command to resume");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
