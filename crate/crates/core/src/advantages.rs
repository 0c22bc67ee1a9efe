//! Group-normalized advantages.
//!
//! Statistics are population statistics accumulated in index order:
//! `mean = sum / n`, `std = sqrt(sum((r - mean)^2) / n)`, and each advantage is
//! `(r - mean) / (std + delta)`. Groups whose rewards are all equal get exact
//! zeros.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// How rewards are scaled after centering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalizer {
    /// `(r - mean) / (std + delta)`
    #[default]
    StdPlusDelta,
    /// `(r - mean) / var`, zero for constant groups. Kept for comparison only.
    LiteralVariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Grouping {
    Hops(Vec<usize>),
    SingleGroup,
}

/// Advantages aligned with the reward vector they were computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvantageVector {
    pub values: Vec<f64>,
    pub grouping: Grouping,
    pub delta: f64,
}

fn normalize(rewards: &[f64], delta: f64, normalizer: Normalizer) -> Vec<f64> {
    let n = rewards.len();
    if n < 2 || rewards.iter().all(|&r| r == rewards[0]) {
        return vec![0.0; n];
    }
    let mean = rewards.iter().sum::<f64>() / n as f64;
    let var = rewards.iter().map(|&r| (r - mean) * (r - mean)).sum::<f64>() / n as f64;
    let scale = match normalizer {
        Normalizer::StdPlusDelta => var.sqrt() + delta,
        Normalizer::LiteralVariance => var,
    };
    if scale == 0.0 {
        return vec![0.0; n];
    }
    rewards.iter().map(|&r| (r - mean) / scale).collect()
}

/// Normalizes each reward within the group of items sharing its hop label.
/// Singleton groups get zero advantage.
pub fn hop_group_advantages(
    rewards: &[f64],
    hop_labels: &[usize],
    delta: f64,
) -> Result<AdvantageVector> {
    if rewards.len() != hop_labels.len() {
        return Err(Error::Contract(format!(
            "{} rewards but {} hop labels",
            rewards.len(),
            hop_labels.len()
        )));
    }
    check_delta(delta)?;
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &h) in hop_labels.iter().enumerate() {
        groups.entry(h).or_default().push(i);
    }
    let mut values = vec![0.0; rewards.len()];
    for members in groups.values() {
        let group: Vec<f64> = members.iter().map(|&i| rewards[i]).collect();
        for (&i, a) in members.iter().zip(normalize(&group, delta, Normalizer::StdPlusDelta)) {
            values[i] = a;
        }
    }
    Ok(AdvantageVector {
        values,
        grouping: Grouping::Hops(hop_labels.to_vec()),
        delta,
    })
}

/// Normalizes the rewards of one question's rollout group.
pub fn grpo_advantages(group_rewards: &[f64], delta: f64) -> Result<AdvantageVector> {
    grpo_advantages_with(group_rewards, delta, Normalizer::StdPlusDelta)
}

pub fn grpo_advantages_with(
    group_rewards: &[f64],
    delta: f64,
    normalizer: Normalizer,
) -> Result<AdvantageVector> {
    if group_rewards.len() < 2 {
        return Err(Error::Config(format!(
            "group size must be at least 2, got {}",
            group_rewards.len()
        )));
    }
    check_delta(delta)?;
    Ok(AdvantageVector {
        values: normalize(group_rewards, delta, normalizer),
        grouping: Grouping::SingleGroup,
        delta,
    })
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("delta must be positive, got {delta}")))
    }
}
