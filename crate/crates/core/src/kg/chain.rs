use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;

use super::{ConstructionPath, EntityId, KnowledgeGraph, PathStep, QATriplet, RelationId};
use crate::{Error, Result, Rng};

/// Whether a chain of `hops` links without repeated entities starts at `start`.
pub fn simple_chain_exists(graph: &KnowledgeGraph, start: EntityId, hops: usize) -> bool {
    let mut visited = vec![start];
    extendable(graph, &mut visited, hops)
}

fn extendable(graph: &KnowledgeGraph, visited: &mut Vec<EntityId>, remaining: usize) -> bool {
    if remaining == 0 {
        return true;
    }
    let here = *visited.last().expect("chain has a start");
    for r in 0..graph.n_relations() {
        let Some(next) = graph.object(here, r) else {
            continue;
        };
        if visited.contains(&next) {
            continue;
        }
        visited.push(next);
        let ok = extendable(graph, visited, remaining - 1);
        visited.pop();
        if ok {
            return true;
        }
    }
    false
}

/// Draws a hop count (1-based) with probabilities proportional to `ratio`.
pub fn sample_hops(ratio: &[f64], rng: &mut Rng) -> Result<usize> {
    let dist = WeightedIndex::new(ratio)
        .map_err(|e| Error::Config(format!("invalid hop_ratio {ratio:?}: {e}")))?;
    Ok(dist.sample(rng) + 1)
}

/// Builds a random `hops`-link question from `start` by noiseless lookups.
///
/// Relations are chosen uniformly among those that keep the chain simple and
/// still leave room for the remaining links.
pub fn sample_chain(
    graph: &KnowledgeGraph,
    start: EntityId,
    hops: usize,
    rng: &mut Rng,
) -> Result<QATriplet> {
    if hops == 0 || start >= graph.n_entities() || !simple_chain_exists(graph, start, hops) {
        return Err(Error::NoChain { start, hops });
    }
    let mut visited = vec![start];
    let mut steps = Vec::with_capacity(hops);
    for left in (0..hops).rev() {
        let here = *visited.last().expect("non-empty");
        let options: Vec<(RelationId, EntityId)> = (0..graph.n_relations())
            .filter_map(|r| graph.object(here, r).map(|o| (r, o)))
            .filter(|&(_, o)| {
                if visited.contains(&o) {
                    return false;
                }
                visited.push(o);
                let ok = extendable(graph, &mut visited, left);
                visited.pop();
                ok
            })
            .collect();
        let &(relation, retrieved) = options
            .choose(rng)
            .ok_or(Error::NoChain { start, hops })?;
        steps.push(PathStep {
            entity: here,
            relation,
            retrieved,
        });
        visited.push(retrieved);
    }
    let terminal_entity = steps.last().expect("hops >= 1").retrieved;
    QATriplet::from_path(ConstructionPath {
        steps,
        terminal_entity,
    })
}

/// Replays a construction path against the graph and returns its answer.
pub fn replay_path(graph: &KnowledgeGraph, path: &ConstructionPath) -> Result<EntityId> {
    let mut prev: Option<EntityId> = None;
    for (i, step) in path.steps.iter().enumerate() {
        if let Some(p) = prev {
            if step.entity != p {
                return Err(Error::Contract(format!(
                    "step {i} queries entity {} but the previous step retrieved {p}",
                    step.entity
                )));
            }
        }
        match graph.object(step.entity, step.relation) {
            Some(o) if o == step.retrieved => prev = Some(o),
            _ => {
                return Err(Error::Contract(format!(
                    "step {i} ({}, {}) -> {} is not a fact",
                    step.entity, step.relation, step.retrieved
                )))
            }
        }
    }
    match prev {
        Some(end) if end == path.terminal_entity => Ok(end),
        Some(end) => Err(Error::Contract(format!(
            "terminal entity {} differs from last retrieved {end}",
            path.terminal_entity
        ))),
        None => Err(Error::Contract("empty construction path".into())),
    }
}
