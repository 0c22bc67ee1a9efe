use rand::Rng as _;

use super::eval::{build_eval_set, evaluate_student, is_held_out};
use super::{
    ema_update, lambda_at, EvalRecord, EvolutionConfig, EvolutionReport, IterationSnapshot,
    Phase, StepRecord,
};
use crate::kg::{sample_hops, simple_chain_exists, Answer, KnowledgeGraph, QATriplet};
use crate::losses::{examiner_loss, student_loss, ExaminerSample, RolloutGroup};
use crate::policy::{construction_rollout, rollout, PolicyParams, Role, Sampling};
use crate::rewards::{difficulty_reward, format_reward};
use crate::{seeded_rng, Error, Result, Rng};

const EVAL_SET_STREAM: u64 = 1;
const EVAL_STREAM: u64 = 2;
const EXAMINER_STREAM: u64 = 1_000;
const DATASET_STREAM: u64 = 2_000;
const STUDENT_STREAM: u64 = 3_000;

/// Result of [`examiner_phase`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExaminerPhase {
    pub examiner: PolicyParams,
    pub records: Vec<StepRecord>,
}

/// Result of [`student_phase`].
#[derive(Debug, Clone, PartialEq)]
pub struct StudentPhase {
    pub student: PolicyParams,
    pub teacher: PolicyParams,
    pub records: Vec<StepRecord>,
    pub evaluations: Vec<EvalRecord>,
}

/// A run that stopped early, with everything recorded up to the failure.
#[derive(Debug)]
pub struct Aborted {
    pub partial: EvolutionReport,
    pub error: Error,
}

/// `W` examiner updates against a fixed student.
///
/// Each step draws `N` hop counts from the hop ratio and random start
/// entities, lets the examiner build a question for each, scores every
/// question with `n` sampled student attempts and takes one gradient step on
/// the hop-grouped objective.
#[allow(clippy::too_many_arguments)]
pub fn examiner_phase(
    examiner: &PolicyParams,
    reference: &PolicyParams,
    student: &PolicyParams,
    graph: &KnowledgeGraph,
    config: &EvolutionConfig,
    iteration: usize,
    rng: &mut Rng,
) -> Result<ExaminerPhase> {
    let student_version = student.version;
    let solve = config.solve_config();
    let mut examiner = examiner.clone();
    let mut records = Vec::with_capacity(config.steps_per_phase);
    for step in 1..=config.steps_per_phase {
        let mut batch = Vec::with_capacity(config.examiner_batch);
        let mut labels = Vec::with_capacity(config.examiner_batch);
        let mut valid = 0usize;
        for _ in 0..config.examiner_batch {
            let hops = sample_hops(&config.hop_ratio, rng)?;
            let start = rng.gen_range(0..graph.n_entities());
            let construction =
                construction_rollout(&examiner, graph, start, hops, rng, Sampling::Sample)?;
            let reward = match construction.triplet() {
                Some(t) => {
                    let ok = format_reward(&t.path, hops);
                    valid += ok as usize;
                    let mut predictions = Vec::with_capacity(config.predictions);
                    for _ in 0..config.predictions {
                        let r = rollout(student, graph, &t, None, &solve, rng, Sampling::Sample)?;
                        predictions.push(r.answer);
                    }
                    let gold = Answer::Entity(t.gold_answer);
                    difficulty_reward(gold, &predictions, ok, config.format_bonus)?.value
                }
                None => 0.0,
            };
            batch.push(ExaminerSample {
                construction,
                reward,
            });
            labels.push(hops);
        }
        let report = examiner_loss(
            &batch,
            &labels,
            &examiner,
            reference,
            config.examiner_beta,
            config.delta,
        )?;
        examiner.ascend(&report.gradient, config.examiner_lr);
        if student.version != student_version {
            return Err(Error::Contract("student changed during the examiner phase".into()));
        }
        let mean_reward = batch.iter().map(|s| s.reward).sum::<f64>() / batch.len() as f64;
        records.push(StepRecord {
            iteration,
            phase: Phase::Examiner,
            step,
            mean_reward,
            eval_accuracy: None,
            distill_kl: None,
            lambda: None,
            version: examiner.version,
            format_rate: Some(valid as f64 / batch.len() as f64),
        });
    }
    Ok(ExaminerPhase { examiner, records })
}

/// Samples `size` well-formed training questions from the examiner.
///
/// Constructions that stop early, and questions reserved for evaluation, are
/// redrawn; after `size * retry_factor` draws generation fails.
pub fn generate_dataset(
    examiner: &PolicyParams,
    graph: &KnowledgeGraph,
    config: &EvolutionConfig,
    size: usize,
    rng: &mut Rng,
) -> Result<Vec<QATriplet>> {
    if size == 0 {
        return Err(Error::Config("dataset size must be at least 1".into()));
    }
    let budget = size.saturating_mul(config.retry_factor);
    let mut out = Vec::with_capacity(size);
    let mut valid = 0usize;
    let mut draws = 0usize;
    while out.len() < size {
        if draws == budget {
            return Err(Error::Generation(format!(
                "dataset generation gave up after {draws} draws ({valid} valid, rate {:.3})",
                valid as f64 / draws as f64
            )));
        }
        draws += 1;
        let hops = sample_hops(&config.hop_ratio, rng)?;
        let start = rng.gen_range(0..graph.n_entities());
        let c = construction_rollout(examiner, graph, start, hops, rng, Sampling::Sample)?;
        if !format_reward(&c.path, hops) {
            continue;
        }
        valid += 1;
        let t = c.triplet().expect("well-formed paths are non-empty");
        if is_held_out(&t.question.id(), config.held_out_fraction) {
            continue;
        }
        out.push(t);
    }
    Ok(out)
}

/// Evaluation settings shared by every student step of a run.
pub(super) struct EvalPlan<'a> {
    pub eval_set: &'a [QATriplet],
    pub seed: u64,
    pub steps_before: usize,
}

/// `W` student updates on `dataset`, each followed by one EMA teacher step.
///
/// Per step: draw `student_batch` questions uniformly with replacement, play
/// `G` sampled rollouts for each (recording their log-probabilities), take a
/// gradient step on the student objective, then move the teacher toward the
/// updated student.
#[allow(clippy::too_many_arguments)]
pub fn student_phase(
    student: &PolicyParams,
    teacher: &PolicyParams,
    reference: &PolicyParams,
    dataset: &[QATriplet],
    graph: &KnowledgeGraph,
    config: &EvolutionConfig,
    lambda: f64,
    iteration: usize,
    rng: &mut Rng,
) -> Result<StudentPhase> {
    student_phase_with_eval(
        student, teacher, reference, dataset, graph, config, lambda, iteration, rng, None,
    )
}

#[allow(clippy::too_many_arguments)]
pub(super) fn student_phase_with_eval(
    student: &PolicyParams,
    teacher: &PolicyParams,
    reference: &PolicyParams,
    dataset: &[QATriplet],
    graph: &KnowledgeGraph,
    config: &EvolutionConfig,
    lambda: f64,
    iteration: usize,
    rng: &mut Rng,
    eval: Option<&EvalPlan<'_>>,
) -> Result<StudentPhase> {
    if dataset.is_empty() {
        return Err(Error::Contract("student phase needs a non-empty dataset".into()));
    }
    let solve = config.solve_config();
    let loss_cfg = config.loss_config(lambda);
    let mut student = student.clone();
    let mut teacher = teacher.clone();
    let mut records = Vec::with_capacity(config.steps_per_phase);
    let mut evaluations = Vec::new();
    for step in 1..=config.steps_per_phase {
        let mut batch = Vec::with_capacity(config.student_batch);
        for _ in 0..config.student_batch {
            let triplet = &dataset[rng.gen_range(0..dataset.len())];
            let mut rollouts = Vec::with_capacity(config.group_size);
            for _ in 0..config.group_size {
                rollouts.push(rollout(&student, graph, triplet, None, &solve, rng, Sampling::Sample)?);
            }
            batch.push(RolloutGroup {
                triplet: triplet.clone(),
                rollouts,
            });
        }
        let report = student_loss(
            &batch,
            &student,
            &teacher,
            reference,
            &config.teacher_view,
            config.group_size,
            &loss_cfg,
        )?;
        student.ascend(&report.gradient, config.student_lr);
        teacher = ema_update(&teacher, &student, config.tau)?;

        let rewards: Vec<f64> = batch.iter().flat_map(|g| g.rewards()).collect();
        let mean_reward = rewards.iter().sum::<f64>() / rewards.len() as f64;
        let eval_accuracy = match eval {
            Some(plan) => {
                let mut r = seeded_rng(plan.seed, EVAL_STREAM);
                let acc = evaluate_student(
                    &student,
                    plan.eval_set,
                    graph,
                    &solve,
                    &mut r,
                    config.eval_trials,
                )?;
                evaluations.push(EvalRecord {
                    iteration,
                    student_steps: plan.steps_before + step,
                    accuracy: acc,
                });
                Some(acc)
            }
            None => None,
        };
        records.push(StepRecord {
            iteration,
            phase: Phase::Student,
            step,
            mean_reward,
            eval_accuracy,
            distill_kl: Some(report.parts.distill),
            lambda: Some(lambda),
            version: student.version,
            format_rate: None,
        });
    }
    Ok(StudentPhase {
        student,
        teacher,
        records,
        evaluations,
    })
}

/// The held-out questions a run with `config` evaluates on.
pub fn protocol_eval_set(config: &EvolutionConfig, graph: &KnowledgeGraph) -> Result<Vec<QATriplet>> {
    build_eval_set(
        graph,
        &config.hop_ratio,
        config.eval_size,
        config.held_out_fraction,
        &mut seeded_rng(config.seed, EVAL_SET_STREAM),
    )
}

/// Held-out accuracy exactly as the loop measures it.
pub fn protocol_accuracy(
    student: &PolicyParams,
    eval_set: &[QATriplet],
    graph: &KnowledgeGraph,
    config: &EvolutionConfig,
) -> Result<f64> {
    evaluate_student(
        student,
        eval_set,
        graph,
        &config.solve_config(),
        &mut seeded_rng(config.seed, EVAL_STREAM),
        config.eval_trials,
    )
}

/// Runs `M` iterations of examiner phase, dataset generation and student
/// phase from freshly initialized roles.
///
/// All randomness derives from `config.seed`, one stream per phase and
/// iteration, so a run is reproducible bit for bit.
pub fn run_evolution(
    config: &EvolutionConfig,
    graph: &KnowledgeGraph,
) -> std::result::Result<EvolutionReport, Box<Aborted>> {
    let base_solver = PolicyParams::solver_base(config.max_hops(), config.results, config.cue_prior);
    let base_examiner =
        PolicyParams::examiner_base(graph.n_entities(), config.max_hops(), graph.n_relations());
    let mut report = EvolutionReport {
        records: Vec::new(),
        evaluations: Vec::new(),
        iterations: Vec::new(),
        eval_set: Vec::new(),
        examiner: base_examiner.with_role(Role::Examiner),
        student: base_solver.with_role(Role::Student),
        teacher: base_solver.with_role(Role::Teacher),
    };
    let abort = |report: EvolutionReport, error: Error| Box::new(Aborted { partial: report, error });

    if let Err(e) = config.validate() {
        return Err(abort(report, e));
    }
    if let Some(start) = graph
        .entities()
        .find(|&e| !simple_chain_exists(graph, e, config.max_hops()))
    {
        let e = Error::Config(format!(
            "hop_ratio asks for {}-hop questions but entity {start} starts no such chain",
            config.max_hops()
        ));
        return Err(abort(report, e));
    }
    report.eval_set = match protocol_eval_set(config, graph) {
        Ok(set) => set,
        Err(e) => return Err(abort(report, e)),
    };
    let initial = protocol_accuracy(&report.student, &report.eval_set, graph, config);
    match initial {
        Ok(accuracy) => report.evaluations.push(EvalRecord {
            iteration: 0,
            student_steps: 0,
            accuracy,
        }),
        Err(e) => return Err(abort(report, e)),
    }

    let mut examiner_reference = base_examiner.clone();
    for iteration in 1..=config.iterations {
        let step = run_iteration(
            config,
            graph,
            iteration,
            &mut report,
            &mut examiner_reference,
            &base_solver,
        );
        if let Err(e) = step {
            return Err(abort(report, e));
        }
    }
    Ok(report)
}

fn run_iteration(
    config: &EvolutionConfig,
    graph: &KnowledgeGraph,
    iteration: usize,
    report: &mut EvolutionReport,
    examiner_reference: &mut PolicyParams,
    solver_reference: &PolicyParams,
) -> Result<()> {
    let it = iteration as u64;
    let lambda = lambda_at(config, iteration)?;
    if config.reset_examiner_reference {
        *examiner_reference = report.examiner.with_role(Role::Reference);
    }

    let mut rng = seeded_rng(config.seed, EXAMINER_STREAM + it);
    let phase = examiner_phase(
        &report.examiner,
        examiner_reference,
        &report.student,
        graph,
        config,
        iteration,
        &mut rng,
    )?;
    report.examiner = phase.examiner;
    report.records.extend(phase.records);

    let mut rng = seeded_rng(config.seed, DATASET_STREAM + it);
    let dataset = generate_dataset(&report.examiner, graph, config, config.dataset_size, &mut rng)?;

    let examiner_version = report.examiner.version;
    let mut rng = seeded_rng(config.seed, STUDENT_STREAM + it);
    let plan = EvalPlan {
        eval_set: &report.eval_set,
        seed: config.seed,
        steps_before: (iteration - 1) * config.steps_per_phase,
    };
    let phase = student_phase_with_eval(
        &report.student,
        &report.teacher,
        solver_reference,
        &dataset,
        graph,
        config,
        lambda,
        iteration,
        &mut rng,
        Some(&plan),
    )?;
    if report.examiner.version != examiner_version {
        return Err(Error::Contract("examiner changed during the student phase".into()));
    }
    report.student = phase.student;
    report.teacher = phase.teacher;
    report.records.extend(phase.records);
    report.evaluations.extend(phase.evaluations);
    report.iterations.push(IterationSnapshot {
        iteration,
        lambda,
        examiner: report.examiner.clone(),
        student: report.student.clone(),
        teacher: report.teacher.clone(),
        dataset,
    });
    Ok(())
}
