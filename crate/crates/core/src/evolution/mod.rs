//! The alternating examiner / student training loop.
//!
//! Each iteration trains the examiner for `W` steps against the current
//! student, samples a fresh dataset from it, then trains the student for `W`
//! steps on that dataset. After every student step the teacher takes one EMA
//! step toward the freshly updated student.

mod eval;
mod phases;

use serde::{Deserialize, Serialize};

use crate::advantages::Normalizer;
use crate::kg::{QATriplet, SolveConfig};
use crate::losses::LossConfig;
use crate::policy::{PolicyParams, TeacherView};
use crate::{Error, Result};

pub use eval::{
    build_eval_set, evaluate_student, is_held_out, scripted_accuracy, ScriptedAgent,
};
pub use phases::{
    examiner_phase, generate_dataset, protocol_accuracy, protocol_eval_set, run_evolution,
    student_phase, Aborted, ExaminerPhase,
    StudentPhase,
};

/// Every scalar the loop needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolutionConfig {
    /// `M`
    pub iterations: usize,
    /// `W`, shared by both phases.
    pub steps_per_phase: usize,
    /// `N`, questions per examiner step.
    pub examiner_batch: usize,
    /// `N_D`
    pub dataset_size: usize,
    /// Questions per student step.
    pub student_batch: usize,
    /// `G`
    pub group_size: usize,
    /// `n`, student attempts behind each difficulty reward.
    pub predictions: usize,
    pub tau: f64,
    pub lambda_schedule: Vec<f64>,
    /// Relative weights of 1, 2, ... hop questions.
    pub hop_ratio: Vec<f64>,
    pub examiner_lr: f64,
    pub student_lr: f64,
    pub examiner_beta: f64,
    pub student_beta: f64,
    pub epsilon: f64,
    pub top_k: usize,
    pub tail_cap: f64,
    pub delta: f64,
    pub format_bonus: f64,
    /// Logit bump the base policy puts on the action a privileged cue names.
    pub cue_prior: f64,
    pub max_turns: usize,
    /// Results returned per search (`m`).
    pub results: usize,
    pub reliability_spread: f64,
    pub eval_size: usize,
    pub eval_trials: usize,
    /// Fraction of question identities reserved for evaluation.
    pub held_out_fraction: f64,
    /// Dataset generation gives up after `dataset_size * retry_factor` draws.
    pub retry_factor: usize,
    /// Re-anchor the examiner's KL reference at the start of every iteration
    /// instead of keeping the base policy.
    pub reset_examiner_reference: bool,

    // Set from other configuration sections.
    #[serde(skip)]
    pub seed: u64,
    #[serde(skip)]
    pub noise: f64,
    #[serde(skip)]
    pub teacher_view: TeacherView,
    #[serde(skip)]
    pub distill_enabled: bool,
    #[serde(skip)]
    pub normalizer: Normalizer,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            iterations: 3,
            steps_per_phase: 50,
            examiner_batch: 16,
            dataset_size: 128,
            student_batch: 8,
            group_size: 5,
            predictions: 5,
            tau: 0.05,
            lambda_schedule: vec![3.0, 0.9, 0.9],
            hop_ratio: vec![4.0, 3.0, 2.0, 1.0],
            examiner_lr: 0.5,
            student_lr: 0.5,
            examiner_beta: 0.0,
            student_beta: 0.001,
            epsilon: 0.2,
            top_k: 50,
            tail_cap: 30.0,
            delta: 1e-4,
            format_bonus: 0.2,
            cue_prior: 3.0,
            max_turns: 5,
            results: 3,
            reliability_spread: 1.0,
            eval_size: 200,
            eval_trials: 1,
            held_out_fraction: 0.1,
            retry_factor: 50,
            reset_examiner_reference: false,
            seed: 0,
            noise: 0.25,
            teacher_view: TeacherView::default(),
            distill_enabled: true,
            normalizer: Normalizer::StdPlusDelta,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("examiner_batch", self.examiner_batch),
            ("dataset_size", self.dataset_size),
            ("student_batch", self.student_batch),
            ("eval_trials", self.eval_trials),
            ("max_turns", self.max_turns),
            ("results", self.results),
            ("retry_factor", self.retry_factor),
        ];
        for (name, v) in counts {
            if v < 1 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.group_size < 2 {
            return Err(Error::Config("group_size must be at least 2".into()));
        }
        if self.predictions < 2 {
            return Err(Error::Config("predictions must be at least 2".into()));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Config(format!("tau must lie in (0, 1], got {}", self.tau)));
        }
        if self.lambda_schedule.len() < self.iterations {
            return Err(Error::Config(format!(
                "lambda_schedule has {} entries but iterations = {}",
                self.lambda_schedule.len(),
                self.iterations
            )));
        }
        if self.lambda_schedule.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(Error::Config("lambda_schedule entries must be finite and non-negative".into()));
        }
        if self.hop_ratio.is_empty()
            || self.hop_ratio.iter().any(|w| !w.is_finite() || *w < 0.0)
            || self.hop_ratio.iter().sum::<f64>() <= 0.0
        {
            return Err(Error::Config("hop_ratio needs non-negative weights with a positive sum".into()));
        }
        if self.hop_ratio.len() > u8::MAX as usize {
            return Err(Error::Config("hop_ratio is too long".into()));
        }
        for (name, v) in [("examiner_lr", self.examiner_lr), ("student_lr", self.student_lr)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.examiner_beta.is_finite() && self.examiner_beta >= 0.0) {
            return Err(Error::Config("examiner_beta must be non-negative".into()));
        }
        if !self.cue_prior.is_finite() || !self.format_bonus.is_finite() {
            return Err(Error::Config("cue_prior and format_bonus must be finite".into()));
        }
        if !(0.0..1.0).contains(&self.noise) {
            return Err(Error::Config(format!("noise must lie in [0, 1), got {}", self.noise)));
        }
        if !(self.held_out_fraction > 0.0 && self.held_out_fraction < 1.0) {
            return Err(Error::Config("held_out_fraction must lie in (0, 1)".into()));
        }
        if !(self.reliability_spread.is_finite() && self.reliability_spread >= 0.0) {
            return Err(Error::Config("reliability_spread must be non-negative".into()));
        }
        self.loss_config(0.0).validate()
    }

    /// Longest question the loop will ask for.
    pub fn max_hops(&self) -> usize {
        self.hop_ratio.len()
    }

    pub fn solve_config(&self) -> SolveConfig {
        let mut cfg = SolveConfig {
            max_turns: self.max_turns,
            ..SolveConfig::default()
        };
        cfg.retriever.noise = self.noise;
        cfg.retriever.results = self.results;
        cfg.retriever.reliability_spread = self.reliability_spread;
        cfg
    }

    /// Student loss settings with the given distillation weight.
    pub fn loss_config(&self, lambda: f64) -> LossConfig {
        LossConfig {
            beta: self.student_beta,
            lambda,
            epsilon: self.epsilon,
            top_k: self.top_k,
            tail_cap: self.tail_cap,
            delta: self.delta,
            normalizer: self.normalizer,
            distill_enabled: self.distill_enabled,
        }
    }
}

/// Distillation weight in effect during `iteration` (1-based).
pub fn lambda_at(config: &EvolutionConfig, iteration: usize) -> Result<f64> {
    if iteration == 0 || iteration > config.iterations || iteration > config.lambda_schedule.len() {
        return Err(Error::Config(format!(
            "iteration {iteration} is outside 1..={}",
            config.iterations.min(config.lambda_schedule.len())
        )));
    }
    Ok(config.lambda_schedule[iteration - 1])
}

/// Moves every teacher logit toward the student: `(1 - tau) psi + tau theta`.
pub fn ema_update(teacher: &PolicyParams, student: &PolicyParams, tau: f64) -> Result<PolicyParams> {
    if !teacher.same_shape(student) {
        return Err(Error::Contract("teacher and student tables differ in shape".into()));
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Contract(format!("tau must lie in [0, 1], got {tau}")));
    }
    let mut out = teacher.clone();
    let keys: Vec<_> = teacher.rows().map(|(k, _)| *k).collect();
    for key in keys {
        let theta = student.row(&key).expect("same shape");
        let psi = out.row_mut(&key);
        for (p, t) in psi.iter_mut().zip(theta) {
            *p = (1.0 - tau) * *p + tau * t;
        }
    }
    out.version += 1;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Examiner,
    Student,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Examiner => "examiner",
            Phase::Student => "student",
        }
    }
}

/// Summary of one training step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub iteration: usize,
    pub phase: Phase,
    /// 1-based within the phase.
    pub step: usize,
    pub mean_reward: f64,
    /// Held-out accuracy after a student step.
    pub eval_accuracy: Option<f64>,
    pub distill_kl: Option<f64>,
    pub lambda: Option<f64>,
    /// Version of the parameters this step updated.
    pub version: u64,
    /// Examiner steps only: share of constructions with valid format.
    pub format_rate: Option<f64>,
}

/// Held-out accuracy of the student after `student_steps` student updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub iteration: usize,
    pub student_steps: usize,
    pub accuracy: f64,
}

/// Parameters and data at the end of one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationSnapshot {
    pub iteration: usize,
    pub lambda: f64,
    pub examiner: PolicyParams,
    pub student: PolicyParams,
    pub teacher: PolicyParams,
    pub dataset: Vec<QATriplet>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionReport {
    /// One record per training step, in execution order.
    pub records: Vec<StepRecord>,
    /// Starts with the untrained student.
    pub evaluations: Vec<EvalRecord>,
    pub iterations: Vec<IterationSnapshot>,
    pub eval_set: Vec<QATriplet>,
    pub examiner: PolicyParams,
    pub student: PolicyParams,
    pub teacher: PolicyParams,
}

impl EvolutionReport {
    pub fn final_accuracy(&self) -> Option<f64> {
        self.evaluations.last().map(|e| e.accuracy)
    }

    /// Highest held-out accuracy observed during each iteration.
    pub fn best_accuracy_per_iteration(&self) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> = Vec::new();
        for e in self.evaluations.iter().filter(|e| e.iteration > 0) {
            match out.last_mut() {
                Some((it, best)) if *it == e.iteration => *best = best.max(e.accuracy),
                _ => out.push((e.iteration, e.accuracy)),
            }
        }
        out
    }
}
