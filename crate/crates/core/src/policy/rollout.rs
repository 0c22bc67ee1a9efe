use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::keys::{student_key, teacher_key, ExaminerKey, ObservationKey, TeacherView};
use super::{ActionDistribution, PolicyParams};
use crate::kg::{
    solve_step, Action, Answer, ConstructionPath, EntityId, KnowledgeGraph, Observation,
    PathStep, QATriplet, Question, SolveConfig, SolveState, StepContext,
};
use crate::{Result, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sampling {
    Sample,
    /// Argmax action, lowest index on ties.
    Greedy,
}

impl Sampling {
    pub fn pick(self, dist: &ActionDistribution, rng: &mut Rng) -> usize {
        match self {
            Sampling::Greedy => dist.argmax(),
            Sampling::Sample => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let mut last = 0;
                for (i, &p) in dist.probs.iter().enumerate() {
                    if p > 0.0 {
                        last = i;
                    }
                    acc += p;
                    if u < acc {
                        return i;
                    }
                }
                last
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutStep {
    pub key: ObservationKey,
    pub action: usize,
    /// Log-probability under the parameters that generated the rollout.
    pub log_prob: f64,
    pub context: StepContext,
    pub observation: Observation,
}

/// A solving trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub steps: Vec<RolloutStep>,
    pub answer: Answer,
    pub privileged: bool,
    pub params_version: u64,
}

impl Rollout {
    pub fn turn_count(&self) -> usize {
        self.steps.len()
    }
}

/// Plays one solving episode with `params`.
///
/// With a teacher view the agent acts on privileged keys; without one it only
/// ever sees student keys and the construction path is not consulted.
pub fn rollout(
    params: &PolicyParams,
    graph: &KnowledgeGraph,
    triplet: &QATriplet,
    view: Option<&TeacherView>,
    cfg: &SolveConfig,
    rng: &mut Rng,
    sampling: Sampling,
) -> Result<Rollout> {
    let privileged_path = view.map(|_| triplet.path.clone());
    let mut state = SolveState::start(triplet.question.clone(), privileged_path, graph, cfg, rng);
    let mut steps = Vec::new();
    while !state.done {
        let context = state.context();
        let key = match view {
            Some(v) => teacher_key(&context, &triplet.path, v),
            None => student_key(&context),
        };
        let dist = params.action_distribution(&key);
        let action = sampling.pick(&dist, rng);
        let log_prob = params.log_prob(&key, action)?;
        let act = Action::from_index(action, cfg.retriever.results)
            .expect("policy arity matches the solver action set");
        let (next, observation) = solve_step(state, act, graph, cfg, rng)?;
        state = next;
        steps.push(RolloutStep {
            key,
            action,
            log_prob,
            context,
            observation,
        });
    }
    Ok(Rollout {
        steps,
        answer: state.answer.unwrap_or(Answer::NoAnswer),
        privileged: view.is_some(),
        params_version: params.version,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstructionStep {
    pub key: ObservationKey,
    pub action: usize,
    pub log_prob: f64,
}

/// An examiner's attempt at building a `declared_hops`-link question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Construction {
    pub declared_hops: usize,
    pub start: EntityId,
    pub steps: Vec<ConstructionStep>,
    /// Searches actually made; shorter than declared if the examiner stopped early.
    pub path: ConstructionPath,
}

impl Construction {
    /// The triplet this construction produced, if it made any search at all.
    pub fn triplet(&self) -> Option<QATriplet> {
        QATriplet::from_path(self.path.clone()).ok()
    }

    pub fn question(&self) -> Question {
        Question {
            start: self.start,
            relations: self.path.steps.iter().map(|s| s.relation).collect(),
        }
    }
}

/// Lets the examiner build a question from `start`.
///
/// At key `(current entity, hops remaining)` the examiner picks a relation,
/// which is searched without noise, or the finish action (the last index).
pub fn construction_rollout(
    examiner: &PolicyParams,
    graph: &KnowledgeGraph,
    start: EntityId,
    declared_hops: usize,
    rng: &mut Rng,
    sampling: Sampling,
) -> Result<Construction> {
    let finish = graph.n_relations() as usize;
    let mut entity = start;
    let mut steps = Vec::new();
    let mut path = Vec::new();
    for remaining in (1..=declared_hops).rev() {
        let key = ObservationKey::Examiner(ExaminerKey {
            entity,
            remaining: remaining as u8,
        });
        let dist = examiner.action_distribution(&key);
        let action = sampling.pick(&dist, rng);
        let log_prob = examiner.log_prob(&key, action)?;
        steps.push(ConstructionStep {
            key,
            action,
            log_prob,
        });
        if action == finish {
            break;
        }
        let relation = action as u32;
        let retrieved = graph
            .object(entity, relation)
            .expect("generated worlds define every (entity, relation)");
        path.push(PathStep {
            entity,
            relation,
            retrieved,
        });
        entity = retrieved;
    }
    Ok(Construction {
        declared_hops,
        start,
        steps,
        path: ConstructionPath {
            steps: path,
            terminal_entity: entity,
        },
    })
}
