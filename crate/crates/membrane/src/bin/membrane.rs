//! Command-line front end: validate, run, explore, oracle-audit, emit
//! bundled examples, and drive supervised tissues of engine instances.
//!
//! Exit codes are a stable contract:
//! 0 ok/halted · 1 invalid input · 2 unreadable file · 3 budget exhausted ·
//! 4 recognizer produced an invalid answer · 5 truncated/oracle too large ·
//! 6 maximality violation (reproducer printed).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use membrane::config::Configuration;
use membrane::engine::explore::{distinct_results, explore};
use membrane::engine::oracle::{enumerate_selections, DEFAULT_NODE_LIMIT};
use membrane::engine::{self, Answer, EngineError, OutputPayload, RunStatus};
use membrane::model::{validate_spec, PSystemSpec};
use membrane::mos::{parse_fault_plan, MosStatus, Tissue};
use membrane::parser::parse;

const EXIT_OK: u8 = 0;
const EXIT_INVALID: u8 = 1;
const EXIT_UNREADABLE: u8 = 2;
const EXIT_BUDGET: u8 = 3;
const EXIT_BAD_ANSWER: u8 = 4;
const EXIT_TRUNCATED: u8 = 5;
const EXIT_ORACLE_VIOLATION: u8 = 6;

#[derive(Parser)]
#[command(name = "membrane", version, about = "Membrane-system simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    path: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10_000)]
    max_steps: u64,
    /// Worker threads; defaults to $MEMBRANE_WORKERS, then 1.
    #[arg(long)]
    workers: Option<usize>,
    /// Write the JSON-lines trace here.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, default_value = "text", value_parser = ["text", "jsonl"])]
    format: String,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a system description.
    Validate { path: PathBuf },
    /// Run a system to halting or the step budget.
    Run(RunArgs),
    /// Expand the computation tree breadth-first over all maximal selections.
    Explore {
        path: PathBuf,
        #[arg(long, default_value_t = 4)]
        depth: u64,
        #[arg(long, default_value_t = 10_000)]
        max_nodes: usize,
    },
    /// Audit the selection stage against exhaustive enumeration.
    Oracle {
        path: PathBuf,
        #[arg(long, default_value_t = 3)]
        steps: u64,
        #[arg(long, default_value_t = 100)]
        trials: u64,
    },
    /// Print a bundled example system in canonical DSL text.
    Example { name: String },
    /// Run a supervised tissue, one group per spec file.
    Tissue {
        /// System description files; each becomes one instance group.
        specs: Vec<PathBuf>,
        /// Instances per group.
        #[arg(long, default_value_t = 1)]
        instances: u64,
        /// Comma-separated seeds, assigned in instance creation order
        /// (defaults to 0,1,2,…).
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        /// Fault-plan JSON: [{"instance": "...", "at": clock}, …].
        #[arg(long)]
        faults: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        max_steps: u64,
        /// Write the JSON-lines event log here.
        #[arg(long)]
        log: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    ExitCode::from(dispatch(Cli::parse().command))
}

fn read_file(path: &Path) -> Result<String, u8> {
    std::fs::read_to_string(path).map_err(|e| {
        eprintln!("cannot read {}: {e}", path.display());
        EXIT_UNREADABLE
    })
}

fn load_spec(path: &Path) -> Result<PSystemSpec, u8> {
    let text = read_file(path)?;
    let spec = match parse(&text) {
        Ok(s) => s,
        Err(diags) => {
            for d in diags {
                eprintln!("{}: {d}", path.display());
            }
            return Err(EXIT_INVALID);
        }
    };
    let violations = validate_spec(&spec);
    if !violations.is_empty() {
        for v in violations {
            eprintln!("{}: {v}", path.display());
        }
        return Err(EXIT_INVALID);
    }
    Ok(spec)
}

fn workers_or_env(flag: Option<usize>) -> usize {
    flag.or_else(|| {
        std::env::var("MEMBRANE_WORKERS").ok().and_then(|v| v.parse().ok())
    })
    .unwrap_or(1)
    .max(1)
}

fn dispatch(command: Command) -> u8 {
    match command {
        Command::Validate { path } => match load_spec(&path) {
            Ok(_) => {
                println!("ok");
                EXIT_OK
            }
            Err(code) => code,
        },
        Command::Run(args) => cmd_run(args),
        Command::Explore { path, depth, max_nodes } => cmd_explore(&path, depth, max_nodes),
        Command::Oracle { path, steps, trials } => cmd_oracle(&path, steps, trials),
        Command::Example { name } => match membrane::bundled::by_name(&name) {
            Some(text) => {
                print!("{text}");
                EXIT_OK
            }
            None => {
                eprintln!(
                    "unknown example {name:?}; available: {}",
                    membrane::bundled::NAMES.join(", ")
                );
                EXIT_INVALID
            }
        },
        Command::Tissue { specs, instances, seeds, faults, max_steps, log } => {
            cmd_tissue(&specs, instances, &seeds, faults.as_deref(), max_steps, log.as_deref())
        }
    }
}

fn cmd_run(args: RunArgs) -> u8 {
    let spec = match load_spec(&args.path) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let workers = workers_or_env(args.workers);
    let (trace, result) = match engine::run(&spec, args.seed, args.max_steps, workers) {
        Ok(out) => out,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_INVALID;
        }
    };
    if let Some(path) = &args.trace {
        if let Err(e) = std::fs::write(path, trace.to_jsonl()) {
            eprintln!("cannot write {}: {e}", path.display());
            return EXIT_UNREADABLE;
        }
    }
    if args.format == "jsonl" {
        // The final line of the trace is the result record.
        print!("{}", trace.to_jsonl().lines().last().unwrap_or_default());
        println!();
    } else {
        let output = match &result.output {
            OutputPayload::Objects(m) => m.canonical(),
            OutputPayload::OutputDissolved => "dissolved".into(),
        };
        println!(
            "status: {} answer: {} output: {} steps: {}",
            result.status.as_str(),
            result.answer.as_str(),
            output,
            result.steps
        );
    }
    if result.answer == Answer::Invalid {
        return EXIT_BAD_ANSWER;
    }
    match result.status {
        RunStatus::Halted => EXIT_OK,
        RunStatus::BudgetExhausted => EXIT_BUDGET,
    }
}

fn cmd_explore(path: &Path, depth: u64, max_nodes: usize) -> u8 {
    let spec = match load_spec(path) {
        Ok(s) => s,
        Err(code) => return code,
    };
    match explore(&spec, depth, max_nodes, DEFAULT_NODE_LIMIT) {
        Ok(report) => {
            println!("nodes: {}", report.nodes_total);
            println!("frontiers: {:?}", report.frontier_sizes);
            println!("halting leaves: {}", report.halting.len());
            for r in distinct_results(&report) {
                let output = match &r.output {
                    OutputPayload::Objects(m) => m.canonical(),
                    OutputPayload::OutputDissolved => "dissolved".into(),
                };
                println!("result: answer: {} output: {}", r.answer.as_str(), output);
            }
            if report.truncated {
                println!("truncated");
                EXIT_TRUNCATED
            } else {
                EXIT_OK
            }
        }
        Err(EngineError::OracleTooLarge { limit }) => {
            eprintln!("exploration aborted: oracle exceeded {limit} nodes");
            EXIT_TRUNCATED
        }
        Err(e) => {
            eprintln!("{e}");
            EXIT_INVALID
        }
    }
}

fn cmd_oracle(path: &Path, steps: u64, trials: u64) -> u8 {
    let spec = match load_spec(path) {
        Ok(s) => s,
        Err(code) => return code,
    };
    for seed in 0..trials {
        let mut config = Configuration::initial(&spec);
        for _ in 0..steps {
            let legal = match enumerate_selections(&spec, &config, DEFAULT_NODE_LIMIT) {
                Ok(s) => s,
                Err(EngineError::OracleTooLarge { limit }) => {
                    eprintln!("oracle exceeded {limit} nodes");
                    return EXIT_TRUNCATED;
                }
                Err(e) => {
                    eprintln!("{e}");
                    return EXIT_INVALID;
                }
            };
            let selection = engine::select(&spec, &config, seed);
            if !legal.contains(&selection.core()) {
                println!(
                    "violation: seed {seed} step {}: selection not maximal/legal",
                    config.step
                );
                return EXIT_ORACLE_VIOLATION;
            }
            if selection.is_empty() {
                break;
            }
            config = match engine::apply(&spec, &config, &selection, seed) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("{e}");
                    return EXIT_INVALID;
                }
            };
        }
    }
    println!("ok: {trials} trials x {steps} steps");
    EXIT_OK
}

fn cmd_tissue(
    specs: &[PathBuf],
    instances: u64,
    seeds: &[u64],
    faults: Option<&Path>,
    max_steps: u64,
    log: Option<&Path>,
) -> u8 {
    let mut tissue = Tissue::new();
    let mut next_seed = 0usize;
    for path in specs {
        let spec = match load_spec(path) {
            Ok(s) => s,
            Err(code) => return code,
        };
        let group = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "group".into());
        for k in 0..instances {
            let seed = seeds.get(next_seed).copied().unwrap_or(next_seed as u64);
            next_seed += 1;
            let name = format!("{group}-{k}");
            if let Err(e) = tissue.add_instance(&group, &name, spec.clone(), seed) {
                eprintln!("{e}");
                return EXIT_INVALID;
            }
        }
    }
    if let Some(path) = faults {
        let text = match read_file(path) {
            Ok(t) => t,
            Err(code) => return code,
        };
        let plan = match parse_fault_plan(&text) {
            Ok(p) => p,
            Err(e) => {
                eprintln!("invalid fault plan {}: {e}", path.display());
                return EXIT_INVALID;
            }
        };
        if let Err(e) = tissue.set_fault_plan(plan) {
            eprintln!("{e}");
            return EXIT_INVALID;
        }
    }
    let summaries = match tissue.run(max_steps) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_INVALID;
        }
    };
    if let Some(path) = log {
        if let Err(e) = std::fs::write(path, tissue.log.to_jsonl()) {
            eprintln!("cannot write {}: {e}", path.display());
            return EXIT_UNREADABLE;
        }
    }
    for s in &summaries {
        let detail = match (&s.result, s.status) {
            (Some(r), _) => format!(
                "answer: {} output: {}",
                r.answer.as_str(),
                match &r.output {
                    OutputPayload::Objects(m) => m.canonical(),
                    OutputPayload::OutputDissolved => "dissolved".into(),
                }
            ),
            (None, MosStatus::Failed) => "replaced by replica".into(),
            (None, _) => String::new(),
        };
        println!(
            "{} {} {} clock: {} {}",
            s.group,
            s.name,
            s.status.as_str(),
            s.clock,
            detail
        );
    }
    EXIT_OK
}
