//! Experiment configuration, execution and artifacts.

mod metrics;
mod run;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::advantages::Normalizer;
use crate::evolution::EvolutionConfig;
use crate::kg::WorldSpec;
use crate::policy::{PrivilegedMode, TeacherContext, TeacherView};
use crate::{Error, Result};

pub use metrics::{
    compare_runs, metric_records, read_metrics, write_metrics, EfficiencyReport, MetricPhase,
    MetricRecord,
};
pub use run::{run, RunOutcome, Summary};

/// Environment variable that replaces the configured seed.
pub const SEED_ENV: &str = "EVOQA_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldSection {
    /// Defaults to the run seed.
    pub seed: Option<u64>,
    pub n_entities: u32,
    pub n_relations: u32,
    pub max_hops: usize,
    pub noise: f64,
}

impl Default for WorldSection {
    fn default() -> Self {
        let w = WorldSpec::default();
        WorldSection {
            seed: None,
            n_entities: w.n_entities,
            n_relations: w.n_relations,
            max_hops: w.max_hops,
            noise: w.noise,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationSection {
    pub disable_distillation: bool,
    pub privileged_mode: PrivilegedMode,
    pub teacher_context: TeacherContext,
    /// Divide centered rewards by the variance instead of `std + delta`.
    pub literal_variance_normalizer: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Identifier written into every metric record.
    pub run_id: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("runs/default"),
            run_id: "run".into(),
        }
    }
}

/// Everything one experiment needs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub world: WorldSection,
    pub evolution: EvolutionConfig,
    pub ablation: AblationSection,
    pub output: OutputSection,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn world_spec(&self) -> WorldSpec {
        WorldSpec {
            seed: self.world.seed.unwrap_or(self.seed),
            n_entities: self.world.n_entities,
            n_relations: self.world.n_relations,
            max_hops: self.world.max_hops,
            noise: self.world.noise,
        }
    }

    /// The loop configuration with seed, noise and ablation settings applied.
    pub fn evolution_config(&self) -> EvolutionConfig {
        let mut evo = self.evolution.clone();
        evo.seed = self.seed;
        evo.noise = self.world.noise;
        evo.teacher_view = TeacherView {
            mode: self.ablation.privileged_mode,
            context: self.ablation.teacher_context,
        };
        evo.distill_enabled = !self.ablation.disable_distillation;
        evo.normalizer = if self.ablation.literal_variance_normalizer {
            Normalizer::LiteralVariance
        } else {
            Normalizer::StdPlusDelta
        };
        evo
    }

    pub fn validate(&self) -> Result<()> {
        if self.world.max_hops < self.evolution.hop_ratio.len() {
            return Err(Error::Config(format!(
                "world.max_hops = {} is shorter than evolution.hop_ratio ({} entries)",
                self.world.max_hops,
                self.evolution.hop_ratio.len()
            )));
        }
        if self.output.run_id.is_empty() || self.output.run_id.contains(char::is_whitespace) {
            return Err(Error::Config("output.run_id must be a non-empty word".into()));
        }
        self.evolution_config().validate()
    }
}

/// Reads, validates and completes a TOML run configuration.
///
/// A set `EVOQA_SEED` variable replaces the file's seed.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cfg = RunConfig::from_toml_str(&text)?;
    if let Ok(v) = std::env::var(SEED_ENV) {
        cfg.seed = v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{SEED_ENV} must be an unsigned integer, got `{v}`")))?;
    }
    Ok(cfg)
}
