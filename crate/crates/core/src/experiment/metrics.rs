//! Line-delimited metric records and run comparison.

use std::fmt;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::evolution::{EvolutionConfig, EvolutionReport, Phase};
use crate::{Error, Result};

/// Stage a record belongs to; `Setup` precedes training in each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricPhase {
    Setup,
    Examiner,
    Student,
}

impl From<Phase> for MetricPhase {
    fn from(p: Phase) -> Self {
        match p {
            Phase::Examiner => MetricPhase::Examiner,
            Phase::Student => MetricPhase::Student,
        }
    }
}

/// One metric value. Streams are strictly ordered by
/// `(iteration, phase, step, name)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricRecord {
    pub run: String,
    pub iteration: usize,
    pub phase: MetricPhase,
    pub step: usize,
    pub name: String,
    pub value: f64,
}

impl MetricRecord {
    fn order_key(&self) -> (usize, MetricPhase, usize, &str) {
        (self.iteration, self.phase, self.step, &self.name)
    }
}

/// 48 bits of a digest, exactly representable as `f64`.
fn digest_value(bytes: &[u8]) -> f64 {
    let d = Sha256::digest(bytes);
    let mut v = 0u64;
    for b in &d[..6] {
        v = (v << 8) | *b as u64;
    }
    v as f64
}

/// Flattens a report into its metric stream.
///
/// Iteration 0 carries the evaluation protocol and the untrained student's
/// accuracy; student records carry `student_steps`, the number of student
/// updates made so far in the run.
pub fn metric_records(run: &str, config: &EvolutionConfig, report: &EvolutionReport) -> Vec<MetricRecord> {
    let mut out = Vec::new();
    let mut push = |iteration, phase, step, name: &str, value| {
        out.push(MetricRecord {
            run: run.to_string(),
            iteration,
            phase,
            step,
            name: name.to_string(),
            value,
        })
    };
    let eval_digest = digest_value(
        serde_json::to_string(&report.eval_set)
            .expect("triplets serialize")
            .as_bytes(),
    );
    let mut setup = vec![
        ("protocol_eval_digest", eval_digest),
        ("protocol_eval_size", report.eval_set.len() as f64),
        ("protocol_eval_trials", config.eval_trials as f64),
        ("protocol_noise", config.noise),
    ];
    if let Some(first) = report.evaluations.first() {
        setup.push(("eval_accuracy", first.accuracy));
    }
    setup.sort_by(|a, b| a.0.cmp(b.0));
    for (name, value) in setup {
        push(0, MetricPhase::Setup, 0, name, value);
    }
    for r in &report.records {
        let mut fields: Vec<(&str, f64)> = vec![
            ("mean_reward", r.mean_reward),
            ("version", r.version as f64),
        ];
        if let Some(v) = r.eval_accuracy {
            fields.push(("eval_accuracy", v));
        }
        if let Some(v) = r.distill_kl {
            fields.push(("distill_kl", v));
        }
        if let Some(v) = r.lambda {
            fields.push(("lambda", v));
        }
        if let Some(v) = r.format_rate {
            fields.push(("format_rate", v));
        }
        if r.phase == Phase::Student {
            let steps = (r.iteration - 1) * config.steps_per_phase + r.step;
            fields.push(("student_steps", steps as f64));
        }
        fields.sort_by(|a, b| a.0.cmp(b.0));
        for (name, value) in fields {
            push(r.iteration, r.phase.into(), r.step, name, value);
        }
    }
    out
}

pub fn write_metrics(path: &Path, records: &[MetricRecord]) -> Result<()> {
    let mut text = Vec::new();
    for r in records {
        serde_json::to_writer(&mut text, r).expect("records serialize");
        text.push(b'\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&text).map_err(|e| Error::io(path, e))
}

/// Parses a metric stream and checks its ordering.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_metrics(&text)
}

fn parse_metrics(text: &str) -> Result<Vec<MetricRecord>> {
    let mut out: Vec<MetricRecord> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: MetricRecord =
            serde_json::from_str(line).map_err(|e| Error::parse(i + 1, e.to_string()))?;
        if let Some(prev) = out.last() {
            if prev.order_key() >= rec.order_key() {
                return Err(Error::parse(i + 1, "records are not strictly ordered"));
            }
        }
        out.push(rec);
    }
    Ok(out)
}

/// Steps-to-threshold comparison of two runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub threshold: f64,
    /// Student steps until run A first reached the threshold.
    pub steps_a: Option<usize>,
    pub steps_b: Option<usize>,
    /// `steps_b / steps_a`; above 1 when A got there first. Absent unless
    /// both runs reached the threshold.
    pub ratio: Option<f64>,
}

impl fmt::Display for EfficiencyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let show = |s: Option<usize>| match s {
            Some(n) => format!("{n} student steps"),
            None => "not reached".to_string(),
        };
        writeln!(f, "threshold: {}", self.threshold)?;
        writeln!(f, "run a: {}", show(self.steps_a))?;
        writeln!(f, "run b: {}", show(self.steps_b))?;
        match self.ratio {
            Some(r) => write!(f, "ratio (b / a): {r}"),
            None => write!(f, "ratio (b / a): not available"),
        }
    }
}

fn protocol(records: &[MetricRecord]) -> Vec<(&str, f64)> {
    records
        .iter()
        .filter(|r| r.name.starts_with("protocol_"))
        .map(|r| (r.name.as_str(), r.value))
        .collect()
}

fn steps_to_threshold(records: &[MetricRecord], threshold: f64) -> Option<usize> {
    let mut steps_at = std::collections::BTreeMap::new();
    for r in records.iter().filter(|r| r.name == "student_steps") {
        steps_at.insert((r.iteration, r.phase, r.step), r.value as usize);
    }
    records
        .iter()
        .filter(|r| r.name == "eval_accuracy" && r.value >= threshold)
        .map(|r| match r.phase {
            MetricPhase::Setup => Some(0),
            _ => steps_at.get(&(r.iteration, r.phase, r.step)).copied(),
        })
        .find_map(|s| s)
}

/// First student step at which each run's held-out accuracy reached
/// `threshold`, and their ratio.
pub fn compare_runs(a: &[MetricRecord], b: &[MetricRecord], threshold: f64) -> Result<EfficiencyReport> {
    let (pa, pb) = (protocol(a), protocol(b));
    if pa.is_empty() || pb.is_empty() {
        return Err(Error::Comparison("metric stream has no protocol records".into()));
    }
    if pa != pb {
        return Err(Error::Comparison(format!(
            "runs used different evaluation protocols: {pa:?} vs {pb:?}"
        )));
    }
    let steps_a = steps_to_threshold(a, threshold);
    let steps_b = steps_to_threshold(b, threshold);
    let ratio = match (steps_a, steps_b) {
        (Some(0), Some(0)) => Some(1.0),
        (Some(x), Some(y)) => Some(y as f64 / x as f64),
        _ => None,
    };
    Ok(EfficiencyReport {
        threshold,
        steps_a,
        steps_b,
        ratio,
    })
}
