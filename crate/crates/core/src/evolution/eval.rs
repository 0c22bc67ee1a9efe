//! Held-out evaluation and scripted reference agents.

use rand::Rng as _;
use sha2::{Digest, Sha256};

use crate::kg::{
    exact_match, sample_chain, sample_hops, solve_step, Action, Answer, KnowledgeGraph,
    QATriplet, QuestionId, SolveConfig, SolveState,
};
use crate::policy::{rollout, PolicyParams, Sampling};
use crate::{seeded_rng, Error, Result, Rng};

fn id_digest(id: &QuestionId, salt: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(salt.to_le_bytes());
    h.update(id.start.to_le_bytes());
    for r in &id.relations {
        h.update(r.to_le_bytes());
    }
    let bytes = h.finalize();
    u64::from_le_bytes(bytes[..8].try_into().expect("digest is 32 bytes"))
}

/// Whether a question identity belongs to the evaluation split.
///
/// The split is a fixed hash of the identity, so it does not depend on the
/// order in which questions are drawn.
pub fn is_held_out(id: &QuestionId, fraction: f64) -> bool {
    (id_digest(id, 0) as f64 / u64::MAX as f64) < fraction
}

/// Samples `size` held-out questions with hop counts drawn from `hop_ratio`.
/// Repeats are allowed.
pub fn build_eval_set(
    graph: &KnowledgeGraph,
    hop_ratio: &[f64],
    size: usize,
    held_out_fraction: f64,
    rng: &mut Rng,
) -> Result<Vec<QATriplet>> {
    let budget = size.saturating_mul(1000).max(1000);
    let mut out = Vec::with_capacity(size);
    for _ in 0..budget {
        if out.len() == size {
            break;
        }
        let hops = sample_hops(hop_ratio, rng)?;
        let start = rng.gen_range(0..graph.n_entities());
        let t = sample_chain(graph, start, hops, rng)?;
        if is_held_out(&t.question.id(), held_out_fraction) {
            out.push(t);
        }
    }
    if out.len() < size {
        return Err(Error::Generation(format!(
            "found only {} of {size} held-out questions",
            out.len()
        )));
    }
    Ok(out)
}

/// Exact-match rate of greedy student rollouts.
///
/// One value is drawn from `rng`; each (question, trial) pair then gets its own
/// search stream derived from the question identity, which makes the result
/// independent of the order of `eval_set`.
pub fn evaluate_student(
    student: &PolicyParams,
    eval_set: &[QATriplet],
    graph: &KnowledgeGraph,
    cfg: &SolveConfig,
    rng: &mut Rng,
    trials: usize,
) -> Result<f64> {
    let base: u64 = rng.gen();
    if eval_set.is_empty() || trials == 0 {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for t in eval_set {
        let gold = Answer::Entity(t.gold_answer);
        for trial in 0..trials {
            let mut r = seeded_rng(base, id_digest(&t.question.id(), trial as u64 + 1));
            let out = rollout(student, graph, t, None, cfg, &mut r, Sampling::Greedy)?;
            if exact_match(out.answer, gold) {
                hits += 1;
            }
        }
    }
    Ok(hits as f64 / (eval_set.len() * trials) as f64)
}

/// Hand-written solvers used as reference points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScriptedAgent {
    /// Reads the construction path: selects the true next entity when it is
    /// listed and searches again when it is not.
    QcpFollower,
    /// Always takes the top search result.
    Rank1Follower,
}

impl ScriptedAgent {
    fn act(self, state: &SolveState, triplet: &QATriplet) -> Action {
        if state.current_hop >= state.hop_count() {
            return Action::Answer;
        }
        match self {
            ScriptedAgent::Rank1Follower => Action::Select(0),
            ScriptedAgent::QcpFollower => {
                let path = state.privileged_path.as_ref().unwrap_or(&triplet.path);
                let truth = path.steps[state.current_hop].retrieved;
                match state.results.rank_of(truth) {
                    Some(rank) => Action::Select(rank),
                    None => Action::Research,
                }
            }
        }
    }

    pub fn solve(
        self,
        triplet: &QATriplet,
        graph: &KnowledgeGraph,
        cfg: &SolveConfig,
        rng: &mut Rng,
    ) -> Result<Answer> {
        let privileged = match self {
            ScriptedAgent::QcpFollower => Some(triplet.path.clone()),
            ScriptedAgent::Rank1Follower => None,
        };
        let mut state = SolveState::start(triplet.question.clone(), privileged, graph, cfg, rng);
        while !state.done {
            let action = self.act(&state, triplet);
            state = solve_step(state, action, graph, cfg, rng)?.0;
        }
        Ok(state.answer.unwrap_or(Answer::NoAnswer))
    }
}

/// Exact-match rate of a scripted agent, one episode per triplet.
pub fn scripted_accuracy(
    agent: ScriptedAgent,
    triplets: &[QATriplet],
    graph: &KnowledgeGraph,
    cfg: &SolveConfig,
    rng: &mut Rng,
) -> Result<f64> {
    if triplets.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for t in triplets {
        if exact_match(agent.solve(t, graph, cfg, rng)?, Answer::Entity(t.gold_answer)) {
            hits += 1;
        }
    }
    Ok(hits as f64 / triplets.len() as f64)
}
