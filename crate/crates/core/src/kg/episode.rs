use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::search::{Retriever, SearchResult};
use super::{ConstructionPath, EntityId, KnowledgeGraph, Question};
use crate::{Error, Result, Rng};

/// An extracted answer. Truncated episodes answer [`Answer::NoAnswer`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Answer {
    Entity(EntityId),
    NoAnswer,
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Answer::Entity(e) => write!(f, "e{e}"),
            Answer::NoAnswer => f.write_str("<no-answer>"),
        }
    }
}

impl FromStr for Answer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if t == "<no-answer>" {
            return Ok(Answer::NoAnswer);
        }
        t.strip_prefix('e')
            .unwrap_or(t)
            .parse()
            .map(Answer::Entity)
            .map_err(|_| Error::parse(0, format!("invalid answer token `{s}`")))
    }
}

/// True iff both answers name the same entity. The no-answer token never matches.
pub fn exact_match(pred: Answer, gold: Answer) -> bool {
    matches!((pred, gold), (Answer::Entity(a), Answer::Entity(b)) if a == b)
}

/// Solver actions. Indexed `Select(0..m)`, then `Research`, then `Answer`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    /// Adopt the candidate at this rank as the next entity in the chain.
    Select(usize),
    /// Repeat the search for the current link.
    Research,
    /// Answer with the current entity.
    Answer,
}

impl Action {
    pub fn count(results: usize) -> usize {
        results + 2
    }

    pub fn index(self, results: usize) -> usize {
        match self {
            Action::Select(j) => j,
            Action::Research => results,
            Action::Answer => results + 1,
        }
    }

    pub fn from_index(i: usize, results: usize) -> Option<Action> {
        match i {
            j if j < results => Some(Action::Select(j)),
            j if j == results => Some(Action::Research),
            j if j == results + 1 => Some(Action::Answer),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveConfig {
    pub max_turns: usize,
    pub retriever: Retriever,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            max_turns: 5,
            retriever: Retriever {
                noise: 0.25,
                results: 3,
                reliability_spread: 1.0,
            },
        }
    }
}

impl SolveConfig {
    pub fn action_count(&self) -> usize {
        Action::count(self.retriever.results)
    }
}

/// What an agent sees at a decision point, plus the resolved entity it came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepContext {
    pub hops: usize,
    pub hop: usize,
    pub entity: EntityId,
    pub candidates: Vec<EntityId>,
    pub corroborated: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Observation {
    Results(SearchResult),
    /// All links resolved; only answering is useful now.
    ChainComplete,
    /// The action had no effect but consumed a turn.
    Wasted,
    Answered(Answer),
    /// Turn budget exhausted without an answer.
    Truncated,
}

/// State of one solving episode.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveState {
    pub question: Question,
    pub current_hop: usize,
    /// Start entity followed by one entity per resolved link.
    pub resolved_entities: Vec<EntityId>,
    /// Latest search result for the current link (empty once all links are resolved).
    pub results: SearchResult,
    /// Entities returned by earlier searches for the current link.
    prior: Vec<EntityId>,
    /// Only set for teacher-role episodes.
    pub privileged_path: Option<ConstructionPath>,
    pub turns: usize,
    pub done: bool,
    pub answer: Option<Answer>,
}

impl SolveState {
    /// Opens an episode; the first link is searched before the first turn.
    pub fn start(
        question: Question,
        privileged_path: Option<ConstructionPath>,
        graph: &KnowledgeGraph,
        cfg: &SolveConfig,
        rng: &mut Rng,
    ) -> SolveState {
        let results = match question.relations.first() {
            Some(&r) => cfg.retriever.search(graph, question.start, r, rng),
            None => SearchResult::empty(),
        };
        SolveState {
            resolved_entities: vec![question.start],
            question,
            current_hop: 0,
            results,
            prior: Vec::new(),
            privileged_path,
            turns: 0,
            done: false,
            answer: None,
        }
    }

    pub fn current_entity(&self) -> EntityId {
        *self.resolved_entities.last().expect("start entity is always resolved")
    }

    pub fn hop_count(&self) -> usize {
        self.question.hop_count()
    }

    /// Best rank whose entity also appeared in an earlier search for this link.
    pub fn corroborated_rank(&self) -> Option<usize> {
        self.results.entities().position(|e| self.prior.contains(&e))
    }

    pub fn context(&self) -> StepContext {
        StepContext {
            hops: self.hop_count(),
            hop: self.current_hop,
            entity: self.current_entity(),
            candidates: self.results.entities().collect(),
            corroborated: self.corroborated_rank(),
        }
    }
}

/// Applies one action. Acting on a finished episode is a contract violation.
pub fn solve_step(
    mut state: SolveState,
    action: Action,
    graph: &KnowledgeGraph,
    cfg: &SolveConfig,
    rng: &mut Rng,
) -> Result<(SolveState, Observation)> {
    if state.done {
        return Err(Error::Contract("solve_step called on a finished episode".into()));
    }
    if let Action::Select(j) = action {
        if j >= cfg.retriever.results {
            return Err(Error::Contract(format!("select rank {j} is not a legal action")));
        }
    }
    state.turns += 1;
    let hops = state.hop_count();
    let mut obs = match action {
        Action::Answer => {
            let answer = Answer::Entity(state.current_entity());
            state.answer = Some(answer);
            state.done = true;
            Observation::Answered(answer)
        }
        Action::Research if state.current_hop < hops => {
            let r = state.question.relations[state.current_hop];
            let entity = state.current_entity();
            let old: Vec<EntityId> = state.results.entities().collect();
            for e in old {
                if !state.prior.contains(&e) {
                    state.prior.push(e);
                }
            }
            state.results = cfg.retriever.search(graph, entity, r, rng);
            Observation::Results(state.results.clone())
        }
        Action::Select(j) if state.current_hop < hops && j < state.results.candidates.len() => {
            let chosen = state.results.candidates[j].0;
            state.resolved_entities.push(chosen);
            state.current_hop += 1;
            state.prior.clear();
            if state.current_hop < hops {
                let r = state.question.relations[state.current_hop];
                state.results = cfg.retriever.search(graph, chosen, r, rng);
                Observation::Results(state.results.clone())
            } else {
                state.results = SearchResult::empty();
                Observation::ChainComplete
            }
        }
        _ => Observation::Wasted,
    };
    if !state.done && state.turns >= cfg.max_turns {
        state.done = true;
        state.answer = Some(Answer::NoAnswer);
        obs = Observation::Truncated;
    }
    Ok((state, obs))
}
