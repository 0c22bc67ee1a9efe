//! Synthetic knowledge-graph world.
//!
//! The graph is functional: every `(subject, relation)` pair has exactly one
//! object. Questions are relation chains starting at an entity, and the gold
//! answer is the entity reached by following the chain. A noisy search tool
//! ([`search`]) is the only way agents observe facts while solving.

mod chain;
mod episode;
mod search;

pub use chain::{replay_path, sample_chain, sample_hops, simple_chain_exists};
pub use episode::{
    exact_match, solve_step, Action, Answer, Observation, SolveConfig, SolveState, StepContext,
};
pub use search::{search, Retriever, SearchResult};

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::{seeded_rng, Error, Result};

pub type EntityId = u32;
pub type RelationId = u32;

/// Attempts made to redraw a world whose chains do not cover every entity.
const GENERATION_ATTEMPTS: usize = 64;

/// Size and seed parameters of a generated world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldSpec {
    pub seed: u64,
    pub n_entities: u32,
    pub n_relations: u32,
    /// Longest question the world has to support from every start entity.
    pub max_hops: usize,
    /// Base retrieval noise used while solving.
    pub noise: f64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        WorldSpec {
            seed: 7,
            n_entities: 30,
            n_relations: 4,
            max_hops: 4,
            noise: 0.25,
        }
    }
}

/// A `(subject, relation, object)` triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Fact {
    pub subject: EntityId,
    pub relation: RelationId,
    pub object: EntityId,
}

/// Immutable functional knowledge graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeGraph {
    seed: u64,
    n_entities: u32,
    n_relations: u32,
    /// `objects[s * n_relations + r]`
    objects: Vec<Option<EntityId>>,
}

/// A multi-hop question: a start entity and the relations to follow from it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Question {
    pub start: EntityId,
    pub relations: Vec<RelationId>,
}

impl Question {
    pub fn hop_count(&self) -> usize {
        self.relations.len()
    }

    /// Identity used to keep evaluation questions out of training data.
    pub fn id(&self) -> QuestionId {
        QuestionId {
            start: self.start,
            relations: self.relations.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct QuestionId {
    pub start: EntityId,
    pub relations: Vec<RelationId>,
}

/// One noiseless search made while constructing a question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathStep {
    pub entity: EntityId,
    pub relation: RelationId,
    pub retrieved: EntityId,
}

/// Question construction path: the searches the examiner made, in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstructionPath {
    pub steps: Vec<PathStep>,
    pub terminal_entity: EntityId,
}

impl ConstructionPath {
    /// Keeps the first `steps` searches and the terminal entity.
    pub fn truncated(&self, steps: usize) -> ConstructionPath {
        ConstructionPath {
            steps: self.steps.iter().take(steps).copied().collect(),
            terminal_entity: self.terminal_entity,
        }
    }
}

/// Question, construction path and gold answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QATriplet {
    pub question: Question,
    pub path: ConstructionPath,
    pub gold_answer: EntityId,
}

impl QATriplet {
    /// Builds a triplet from a path, deriving the question from its steps.
    pub fn from_path(path: ConstructionPath) -> Result<QATriplet> {
        let first = path
            .steps
            .first()
            .ok_or_else(|| Error::Contract("construction path has no steps".into()))?;
        let question = Question {
            start: first.entity,
            relations: path.steps.iter().map(|s| s.relation).collect(),
        };
        Ok(QATriplet {
            question,
            gold_answer: path.terminal_entity,
            path,
        })
    }
}

impl KnowledgeGraph {
    /// Generates a seed-deterministic world.
    ///
    /// Each `(subject, relation)` gets one object drawn uniformly from the
    /// other entities. The draw is repeated until every entity starts a
    /// simple chain of `max_hops` links; if that never happens the call fails.
    pub fn generate(spec: &WorldSpec) -> Result<KnowledgeGraph> {
        if spec.n_entities < 4 {
            return Err(Error::Generation(format!(
                "n_entities must be at least 4 (got {})",
                spec.n_entities
            )));
        }
        if spec.n_relations < 1 {
            return Err(Error::Generation("n_relations must be at least 1".into()));
        }
        if spec.max_hops < 1 {
            return Err(Error::Generation("max_hops must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&spec.noise) {
            return Err(Error::Generation(format!(
                "noise must lie in [0, 1) (got {})",
                spec.noise
            )));
        }
        if (spec.n_entities as usize) <= spec.max_hops {
            return Err(Error::Generation(format!(
                "n_entities ({}) must exceed max_hops ({}) for simple chains to exist",
                spec.n_entities, spec.max_hops
            )));
        }

        let mut rng = seeded_rng(spec.seed, 0);
        let n = spec.n_entities;
        let r = spec.n_relations;
        for _ in 0..GENERATION_ATTEMPTS {
            let mut objects = Vec::with_capacity((n * r) as usize);
            for s in 0..n {
                for _ in 0..r {
                    let o = rng.gen_range(0..n - 1);
                    objects.push(Some(if o >= s { o + 1 } else { o }));
                }
            }
            let graph = KnowledgeGraph {
                seed: spec.seed,
                n_entities: n,
                n_relations: r,
                objects,
            };
            if graph.entities().all(|e| simple_chain_exists(&graph, e, spec.max_hops)) {
                return Ok(graph);
            }
        }
        Err(Error::Generation(format!(
            "no draw in {GENERATION_ATTEMPTS} attempts gives every entity a {}-hop simple chain",
            spec.max_hops
        )))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_entities(&self) -> u32 {
        self.n_entities
    }

    pub fn n_relations(&self) -> u32 {
        self.n_relations
    }

    pub fn entities(&self) -> impl Iterator<Item = EntityId> {
        0..self.n_entities
    }

    /// The object of `(subject, relation)`, if that fact exists.
    pub fn object(&self, subject: EntityId, relation: RelationId) -> Option<EntityId> {
        if subject >= self.n_entities || relation >= self.n_relations {
            return None;
        }
        self.objects[(subject * self.n_relations + relation) as usize]
    }

    pub fn facts(&self) -> impl Iterator<Item = Fact> + '_ {
        (0..self.n_entities).flat_map(move |s| {
            (0..self.n_relations).filter_map(move |r| {
                self.object(s, r).map(|o| Fact {
                    subject: s,
                    relation: r,
                    object: o,
                })
            })
        })
    }

    pub fn fact_count(&self) -> usize {
        self.objects.iter().filter(|o| o.is_some()).count()
    }

    /// Follows `relations` from `start`; `None` if a link is missing.
    pub fn follow(&self, start: EntityId, relations: &[RelationId]) -> Option<EntityId> {
        relations
            .iter()
            .try_fold(start, |e, &r| self.object(e, r))
    }

    /// Serializes to the line format `kg <seed> <n_entities> <n_relations>`
    /// followed by one `fact <s> <r> <o>` line per triple.
    pub fn to_text(&self) -> String {
        let mut out = format!("kg {} {} {}\n", self.seed, self.n_entities, self.n_relations);
        for f in self.facts() {
            let _ = writeln!(out, "fact {} {} {}", f.subject, f.relation, f.object);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<KnowledgeGraph> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| Error::parse(1, "empty world file"))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 || fields[0] != "kg" {
            return Err(Error::parse(1, "expected `kg <seed> <n_entities> <n_relations>`"));
        }
        let seed: u64 = parse_field(fields[1], 1, "seed")?;
        let n_entities: u32 = parse_field(fields[2], 1, "n_entities")?;
        let n_relations: u32 = parse_field(fields[3], 1, "n_relations")?;
        let mut objects = vec![None; (n_entities as usize) * (n_relations as usize)];
        let mut seen = BTreeSet::new();
        for (idx, line) in lines {
            let lineno = idx + 1;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 4 || f[0] != "fact" {
                return Err(Error::parse(lineno, "expected `fact <s> <r> <o>`"));
            }
            let s: u32 = parse_field(f[1], lineno, "subject")?;
            let r: u32 = parse_field(f[2], lineno, "relation")?;
            let o: u32 = parse_field(f[3], lineno, "object")?;
            if s >= n_entities || o >= n_entities || r >= n_relations {
                return Err(Error::parse(lineno, "fact references an unknown entity or relation"));
            }
            if !seen.insert((s, r)) {
                return Err(Error::parse(
                    lineno,
                    format!("second object for ({s}, {r}) breaks functionality"),
                ));
            }
            objects[(s * n_relations + r) as usize] = Some(o);
        }
        Ok(KnowledgeGraph {
            seed,
            n_entities,
            n_relations,
            objects,
        })
    }
}

fn parse_field<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::parse(line, format!("invalid {what} `{s}`")))
}
