//! `g2`: drive the dual-graph QA pipeline from the command line.
//!
//! Exit codes: 0 on success, 1 on any domain error, 2 on usage errors.
//! Results go to stdout, diagnostics to stderr.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use g2_core::graph::{evolve_graph, ContentGraph};
use g2_core::plan::{answer_query, PipelineConfig};
use g2_core::{dot, eval, store, EvolutionMode, MockClient, ModelClient, RunConfig, Schedule, WireClient};

#[derive(Parser)]
#[command(name = "g2", version, about = "Dual-graph retrieval QA over parsed multimodal documents")]
struct Cli {
    /// JSON config file; flags override file values, which override defaults
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Run fully offline against a scripted mock client
    #[arg(long, global = true, value_name = "FILE")]
    mock_script: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a parser interchange file and copy it into a store
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        store: PathBuf,
    },
    /// Build the content graph over an ingested corpus and evolve it
    Build {
        #[arg(long)]
        store: PathBuf,
        /// Structural window width
        #[arg(long)]
        window: Option<usize>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Evolution passes
        #[arg(long)]
        iters: Option<u64>,
        #[arg(long, value_enum)]
        schedule: Option<ScheduleArg>,
    },
    /// Answer a question over a built store
    Query {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        question: String,
        /// Retrieval node budget
        #[arg(long)]
        k: Option<usize>,
        /// Maximum refinement rounds
        #[arg(long = "tau-max")]
        tau_max: Option<u64>,
        /// Write the execution trace to this file instead of the store
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Print exactly the final answer on stdout
        #[arg(long)]
        quiet: bool,
    },
    /// Export the content graph, or one DAG revision of a trace, as DOT
    ExportDot {
        #[arg(long)]
        store: PathBuf,
        /// TRACE_FILE:REV selects a planning DAG revision from a trace
        #[arg(long, value_name = "TRACE:REV")]
        dag: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Judge a batch of question/gold/predicted records
    Eval {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the effective configuration as JSON
    Config,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Vlm,
    Lite,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScheduleArg {
    #[value(name = "seq", alias = "sequential")]
    Seq,
    #[value(name = "par", alias = "parallel")]
    Par,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        None => RunConfig::default(),
        Some(path) => {
            let raw = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read config file {}", path.display()))?;
            serde_json::from_str(&raw)
                .with_context(|| format!("malformed config file {}", path.display()))?
        }
    };
    if let Some(script) = &cli.mock_script {
        config.mock_script = Some(script.clone());
    }
    Ok(config)
}

fn make_client(config: &RunConfig) -> Result<Box<dyn ModelClient>> {
    match &config.mock_script {
        Some(script) => Ok(Box::new(MockClient::from_script_file(script)?)),
        None => Ok(Box::new(WireClient::new(config.client.clone())?)),
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut config = load_config(&cli)?;
    match cli.command {
        Command::Ingest { input, store: store_dir } => {
            let corpus = g2_core::load_corpus(&input)?;
            let paths = store::StorePaths::new(&store_dir);
            paths.ensure_dirs()?;
            store::save_corpus(&corpus, &paths.corpus_file())?;
            println!(
                "ingested {} units from {} document(s) into {}",
                corpus.len(),
                corpus.source_manifest().len(),
                store_dir.display()
            );
        }
        Command::Build { store: store_dir, window, mode, iters, schedule } => {
            if let Some(w) = window {
                if w == 0 {
                    return Err(anyhow!("--window must be at least 1"));
                }
                config.window = w;
            }
            if let Some(mode) = mode {
                config.mode = match mode {
                    ModeArg::Vlm => EvolutionMode::Vlm,
                    ModeArg::Lite => EvolutionMode::Lite,
                };
            }
            if let Some(iters) = iters {
                config.iters = iters;
            }
            if let Some(schedule) = schedule {
                config.schedule = match schedule {
                    ScheduleArg::Seq => Schedule::Sequential,
                    ScheduleArg::Par => Schedule::Parallel,
                };
            }
            let paths = store::StorePaths::new(&store_dir);
            let corpus = store::load_corpus(&paths.corpus_file())?;
            if corpus.is_empty() {
                return Err(anyhow!("store {} holds an empty corpus", store_dir.display()));
            }
            let client = make_client(&config)?;
            eprintln!(
                "building graph over {} units (window {}, {:?} x{} {:?})",
                corpus.len(),
                config.window,
                config.mode,
                config.iters,
                config.schedule
            );
            let mut graph = ContentGraph::build(&corpus, client.as_ref(), config.window)?;
            evolve_graph(&mut graph, client.as_ref(), &config.evolution())?;
            store::save_graph(&graph, &paths.graph_file())?;
            let ledger = client.ledger();
            eprintln!(
                "model usage: {} chat call(s), {} embed call(s), ~{} tokens",
                ledger.total_chat_calls(),
                ledger.embed_calls,
                ledger.total_tokens()
            );
            println!(
                "built graph: {} nodes, {} structural edge(s), {} semantic link(s), epoch {}",
                graph.len(),
                graph.structural_edges().len(),
                graph.semantic_edges().len(),
                graph.epoch()
            );
        }
        Command::Query { store: store_dir, question, k, tau_max, trace, quiet } => {
            if let Some(k) = k {
                if k == 0 {
                    return Err(anyhow!("--k must be at least 1"));
                }
                config.k = k;
            }
            if let Some(tau_max) = tau_max {
                config.tau_max = tau_max;
            }
            let paths = store::StorePaths::new(&store_dir);
            let graph = store::load_graph(&paths.graph_file())?;
            let client = make_client(&config)?;
            let pipeline = PipelineConfig { k: config.k, tau_max: config.tau_max };
            let result = answer_query(&question, &graph, &pipeline, client.as_ref());
            let (trace_record, outcome) = match result {
                Ok(trace) => (trace, Ok(())),
                Err(failure) => {
                    let error = anyhow!("{}", failure.error);
                    (*failure.trace, Err(error))
                }
            };
            let trace_path = match &trace {
                Some(path) => {
                    store::save_trace_to(&trace_record, path)?;
                    path.clone()
                }
                None => {
                    paths.ensure_dirs()?;
                    store::save_trace(&trace_record, &paths)?
                }
            };
            eprintln!(
                "trace: {} ({} dag version(s), {} exchange(s))",
                trace_path.display(),
                trace_record.dag_versions.len(),
                trace_record.model_exchanges.len()
            );
            outcome?;
            if quiet {
                println!("{}", trace_record.final_answer);
            } else {
                println!("{}", trace_record.final_answer);
                eprintln!(
                    "verdicts: {:?}",
                    trace_record
                        .verdicts
                        .iter()
                        .map(|v| v.sufficient)
                        .collect::<Vec<_>>()
                );
            }
        }
        Command::ExportDot { store: store_dir, dag, out } => {
            let rendered = match dag {
                None => {
                    let paths = store::StorePaths::new(&store_dir);
                    let graph = store::load_graph(&paths.graph_file())?;
                    dot::content_graph_dot(&graph)
                }
                Some(spec) => {
                    let (trace_path, revision) = spec
                        .rsplit_once(':')
                        .ok_or_else(|| anyhow!("--dag expects TRACE_FILE:REV, got {spec:?}"))?;
                    let revision: usize = revision
                        .parse()
                        .with_context(|| format!("bad revision in --dag {spec:?}"))?;
                    let trace = store::load_trace(Path::new(trace_path))?;
                    let version = trace.dag_versions.get(revision).ok_or_else(|| {
                        anyhow!(
                            "trace has {} dag version(s), no index {revision}",
                            trace.dag_versions.len()
                        )
                    })?;
                    dot::planning_dag_dot(version)
                }
            };
            std::fs::write(&out, rendered)
                .with_context(|| format!("cannot write {}", out.display()))?;
            println!("wrote {}", out.display());
        }
        Command::Eval { input, out } => {
            let raw = std::fs::read_to_string(&input)
                .with_context(|| format!("cannot read {}", input.display()))?;
            let records = eval::parse_records(&raw)
                .map_err(|reason| anyhow!("malformed eval input {}: {reason}", input.display()))?;
            let client = make_client(&config)?;
            let report = eval::eval_batch(&records, client.as_ref());
            std::fs::write(&out, serde_json::to_string_pretty(&report)?)
                .with_context(|| format!("cannot write {}", out.display()))?;
            match report.summary.mean_accuracy_percent {
                Some(mean) => println!(
                    "accuracy {:.1}% over {} item(s), {} judge failure(s)",
                    mean, report.summary.count, report.summary.judge_failures
                ),
                None => println!(
                    "no items judged ({} failure(s))",
                    report.summary.judge_failures
                ),
            }
        }
        Command::Config => {
            println!("{}", serde_json::to_string_pretty(&config)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
