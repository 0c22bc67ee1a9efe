use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::metrics::{metric_records, write_metrics};
use super::RunConfig;
use crate::evolution::{run_evolution, EvolutionReport};
use crate::kg::KnowledgeGraph;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationBest {
    pub iteration: usize,
    pub accuracy: f64,
}

/// Headline numbers of a run, written to `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub run: String,
    pub completed: bool,
    pub iterations_completed: usize,
    pub initial_accuracy: Option<f64>,
    pub final_accuracy: Option<f64>,
    pub best_accuracy_per_iteration: Vec<IterationBest>,
}

#[derive(Debug, Serialize)]
struct Manifest {
    config_sha256: String,
    seed: u64,
    world_seed: u64,
    completed: bool,
    error: Option<String>,
    checkpoints: Vec<String>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub report: EvolutionReport,
    pub summary: Summary,
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn config_digest(cfg: &RunConfig) -> String {
    let text = serde_json::to_string(cfg).expect("config serializes");
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Generates the world, runs the co-evolution loop and writes every artifact
/// under `config.output.dir`:
///
/// - `world.kg`
/// - `metrics.jsonl`
/// - `checkpoints/iter-<j>/{examiner,student,teacher}.ckpt`
/// - `manifest.json` (config digest and seeds)
/// - `summary.json`
///
/// If the loop fails, the artifacts of the completed part are still written
/// before the error is returned.
pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    let dir = config.output.dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let world = config.world_spec();
    let graph = KnowledgeGraph::generate(&world)?;
    write_file(&dir.join("world.kg"), graph.to_text().as_bytes())?;

    let evo = config.evolution_config();
    let (report, failure) = match run_evolution(&evo, &graph) {
        Ok(report) => (report, None),
        Err(aborted) => {
            let aborted = *aborted;
            (aborted.partial, Some(aborted.error))
        }
    };

    let records = metric_records(&config.output.run_id, &evo, &report);
    write_metrics(&dir.join("metrics.jsonl"), &records)?;

    let mut checkpoints = Vec::new();
    for snap in &report.iterations {
        let sub = format!("checkpoints/iter-{}", snap.iteration);
        let path = dir.join(&sub);
        std::fs::create_dir_all(&path).map_err(|e| Error::io(&path, e))?;
        for (name, params) in [
            ("examiner", &snap.examiner),
            ("student", &snap.student),
            ("teacher", &snap.teacher),
        ] {
            params.save(&path.join(format!("{name}.ckpt")))?;
            checkpoints.push(format!("{sub}/{name}.ckpt"));
        }
    }

    let manifest = Manifest {
        config_sha256: config_digest(config),
        seed: config.seed,
        world_seed: world.seed,
        completed: failure.is_none(),
        error: failure.as_ref().map(|e| e.to_string()),
        checkpoints,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&dir.join("manifest.json"), text.as_bytes())?;

    let summary = Summary {
        run: config.output.run_id.clone(),
        completed: failure.is_none(),
        iterations_completed: report.iterations.len(),
        initial_accuracy: report.evaluations.first().map(|e| e.accuracy),
        final_accuracy: report.final_accuracy(),
        best_accuracy_per_iteration: report
            .best_accuracy_per_iteration()
            .into_iter()
            .map(|(iteration, accuracy)| IterationBest { iteration, accuracy })
            .collect(),
    };
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_file(&dir.join("summary.json"), text.as_bytes())?;

    match failure {
        Some(e) => Err(e),
        None => Ok(RunOutcome {
            dir,
            report,
            summary,
        }),
    }
}
