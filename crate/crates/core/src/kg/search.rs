use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{EntityId, KnowledgeGraph, RelationId};
use crate::Rng;

/// Ranked candidates returned by one search call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    /// `(entity, score)` pairs, best first.
    pub candidates: Vec<(EntityId, f64)>,
    /// Whether the true object is among the candidates. Agents never read this.
    pub contains_truth: bool,
}

impl SearchResult {
    pub fn empty() -> Self {
        SearchResult {
            candidates: Vec::new(),
            contains_truth: false,
        }
    }

    pub fn entities(&self) -> impl Iterator<Item = EntityId> + '_ {
        self.candidates.iter().map(|&(e, _)| e)
    }

    pub fn rank_of(&self, entity: EntityId) -> Option<usize> {
        self.entities().position(|e| e == entity)
    }
}

/// Looks up `(entity, relation)` and returns at most `m` candidates.
///
/// With probability `1 - noise` the true object is ranked first and the other
/// slots hold distinct uniform distractors. Otherwise all `m` slots are a
/// uniform sample of entities in random order, so the truth is demoted or
/// dropped. Unknown pairs give an empty result.
pub fn search(
    graph: &KnowledgeGraph,
    entity: EntityId,
    relation: RelationId,
    noise: f64,
    rng: &mut Rng,
    m: usize,
) -> SearchResult {
    let Some(truth) = graph.object(entity, relation) else {
        return SearchResult::empty();
    };
    let n = graph.n_entities() as usize;
    let m = m.min(n);
    if m == 0 {
        return SearchResult::empty();
    }
    let noisy = rng.gen::<f64>() < noise;
    let entities: Vec<EntityId> = if noisy {
        index::sample(rng, n, m).iter().map(|i| i as EntityId).collect()
    } else {
        let mut v = vec![truth];
        v.extend(index::sample(rng, n - 1, m - 1).iter().map(|i| {
            let i = i as EntityId;
            if i >= truth {
                i + 1
            } else {
                i
            }
        }));
        v
    };
    let contains_truth = entities.contains(&truth);
    SearchResult {
        candidates: entities
            .into_iter()
            .enumerate()
            .map(|(rank, e)| (e, 1.0 / (rank as f64 + 1.0)))
            .collect(),
        contains_truth,
    }
}

/// Search tool used during solving, with per-relation reliability.
///
/// Relations differ in how well they are covered by retrieval: the noise for
/// relation `r` is `noise ^ w_r`, where the exponents `w_r` are spread
/// geometrically over `[2^-spread, 2^spread]`. Relation 0 is the most
/// reliable. `spread = 0` gives every relation the base noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Retriever {
    pub noise: f64,
    pub results: usize,
    pub reliability_spread: f64,
}

impl Retriever {
    pub fn link_noise(&self, relation: RelationId, n_relations: u32) -> f64 {
        if n_relations <= 1 || self.reliability_spread == 0.0 {
            return self.noise;
        }
        let pos = relation as f64 / (n_relations - 1) as f64;
        let exponent = 2f64.powf(self.reliability_spread * (1.0 - 2.0 * pos));
        self.noise.powf(exponent)
    }

    pub fn search(
        &self,
        graph: &KnowledgeGraph,
        entity: EntityId,
        relation: RelationId,
        rng: &mut Rng,
    ) -> SearchResult {
        let noise = self.link_noise(relation, graph.n_relations());
        search(graph, entity, relation, noise, rng, self.results)
    }
}
