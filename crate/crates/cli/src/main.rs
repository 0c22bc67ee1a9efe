//! Command-line driver: run experiments, compare metric streams, generate
//! worlds and evaluate saved students.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use evoqa_core::evolution::{protocol_accuracy, protocol_eval_set};
use evoqa_core::experiment::{compare_runs, load_config, read_metrics, run, RunConfig};
use evoqa_core::kg::{KnowledgeGraph, WorldSpec};
use evoqa_core::policy::PolicyParams;

#[derive(Debug, Parser)]
#[command(name = "evoqa", version, about = "Examiner/student co-evolution on a synthetic knowledge graph")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment from a TOML configuration.
    Run {
        config: PathBuf,
    },
    /// Compare steps-to-threshold of two metric streams.
    Compare {
        metrics_a: PathBuf,
        metrics_b: PathBuf,
        #[arg(long)]
        threshold: f64,
    },
    /// World utilities.
    World {
        #[command(subcommand)]
        command: WorldCommand,
    },
    /// Held-out accuracy of a student checkpoint.
    Eval(EvalArgs),
}

#[derive(Debug, Subcommand)]
enum WorldCommand {
    /// Generate a world and write it in text form.
    Gen(WorldGenArgs),
}

#[derive(Debug, Args)]
struct WorldGenArgs {
    #[arg(long, default_value_t = WorldSpec::default().seed)]
    seed: u64,
    #[arg(long, default_value_t = WorldSpec::default().n_entities)]
    n_entities: u32,
    #[arg(long, default_value_t = WorldSpec::default().n_relations)]
    n_relations: u32,
    #[arg(long, default_value_t = WorldSpec::default().max_hops)]
    max_hops: usize,
    /// Writes to stdout when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    checkpoint: PathBuf,
    world: PathBuf,
    /// Run configuration whose evaluation protocol is used; defaults otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config } => run_cmd(&config),
        Command::Compare {
            metrics_a,
            metrics_b,
            threshold,
        } => {
            let a = read_metrics(&metrics_a)?;
            let b = read_metrics(&metrics_b)?;
            println!("{}", compare_runs(&a, &b, threshold)?);
            Ok(())
        }
        Command::World {
            command: WorldCommand::Gen(args),
        } => world_gen(args),
        Command::Eval(args) => eval_cmd(args),
    }
}

fn run_cmd(path: &Path) -> Result<()> {
    let config = load_config(path).with_context(|| format!("loading {}", path.display()))?;
    let outcome = run(&config).with_context(|| {
        format!(
            "run failed; partial artifacts are in {}",
            config.output.dir.display()
        )
    })?;
    let s = &outcome.summary;
    println!("run {} finished: {} iterations", s.run, s.iterations_completed);
    if let Some(acc) = s.initial_accuracy {
        println!("initial accuracy: {acc:.4}");
    }
    for best in &s.best_accuracy_per_iteration {
        println!("iteration {} best accuracy: {:.4}", best.iteration, best.accuracy);
    }
    if let Some(acc) = s.final_accuracy {
        println!("final accuracy: {acc:.4}");
    }
    println!("artifacts: {}", outcome.dir.display());
    Ok(())
}

fn world_gen(args: WorldGenArgs) -> Result<()> {
    let spec = WorldSpec {
        seed: args.seed,
        n_entities: args.n_entities,
        n_relations: args.n_relations,
        max_hops: args.max_hops,
        ..WorldSpec::default()
    };
    let text = KnowledgeGraph::generate(&spec)?.to_text();
    match args.out {
        Some(path) => {
            std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn eval_cmd(args: EvalArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => load_config(path).with_context(|| format!("loading {}", path.display()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(noise) = args.noise {
        config.world.noise = noise;
    }
    if let Some(size) = args.size {
        config.evolution.eval_size = size;
    }
    if let Some(trials) = args.trials {
        config.evolution.eval_trials = trials;
    }
    let evo = config.evolution_config();
    evo.validate()?;

    let text = std::fs::read_to_string(&args.world)
        .with_context(|| format!("reading {}", args.world.display()))?;
    let graph = KnowledgeGraph::from_text(&text)?;
    let student = PolicyParams::load(&args.checkpoint)?;
    let eval_set = protocol_eval_set(&evo, &graph)?;
    let accuracy = protocol_accuracy(&student, &eval_set, &graph, &evo)?;
    println!("accuracy: {accuracy:.4} ({} questions)", eval_set.len());
    Ok(())
}
