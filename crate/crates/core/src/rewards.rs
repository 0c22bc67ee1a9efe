//! Scalar rewards: the examiner's difficulty + format reward and the
//! student's exact-match outcome reward.

use serde::{Deserialize, Serialize};

use crate::kg::{exact_match, Answer, ConstructionPath};
use crate::{Error, Result};

/// A reward with its labelled parts; `value` is the sum of the parts present.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardValue {
    pub value: f64,
    pub difficulty: Option<f64>,
    pub format: Option<f64>,
    pub outcome: Option<f64>,
}

/// `1{0 < k < n} (n - k) / (n - 1) + format_bonus * 1{format_ok}`, where `k`
/// counts predictions that exactly match `gold`.
///
/// Peaks when exactly one of the `n` attempts succeeds. The format part is
/// added whether or not the difficulty indicator fires.
pub fn difficulty_reward(
    gold: Answer,
    predictions: &[Answer],
    format_ok: bool,
    format_bonus: f64,
) -> Result<RewardValue> {
    let n = predictions.len();
    if n < 2 {
        return Err(Error::Config(format!(
            "difficulty reward needs at least 2 predictions, got {n}"
        )));
    }
    let k = predictions.iter().filter(|&&p| exact_match(p, gold)).count();
    let difficulty = if k > 0 && k < n {
        (n - k) as f64 / (n - 1) as f64
    } else {
        0.0
    };
    let format = if format_ok { format_bonus } else { 0.0 };
    Ok(RewardValue {
        value: difficulty + format,
        difficulty: Some(difficulty),
        format: Some(format),
        outcome: None,
    })
}

/// Whether a construction path has exactly `declared_hops` chained searches
/// ending at its terminal entity. One search per link.
pub fn format_reward(path: &ConstructionPath, declared_hops: usize) -> bool {
    if path.steps.len() != declared_hops || declared_hops == 0 {
        return false;
    }
    let chained = path
        .steps
        .windows(2)
        .all(|w| w[1].entity == w[0].retrieved);
    chained && path.steps.last().map(|s| s.retrieved) == Some(path.terminal_entity)
}

pub fn outcome_reward(gold: Answer, pred: Answer) -> RewardValue {
    let outcome = if exact_match(pred, gold) { 1.0 } else { 0.0 };
    RewardValue {
        value: outcome,
        outcome: Some(outcome),
        ..Default::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::PathStep;

    fn preds(n: usize, k: usize) -> Vec<Answer> {
        (0..n)
            .map(|i| if i < k { Answer::Entity(1) } else { Answer::Entity(2) })
            .collect()
    }

    fn diff(n: usize, k: usize) -> f64 {
        difficulty_reward(Answer::Entity(1), &preds(n, k), false, 0.2)
            .unwrap()
            .difficulty
            .unwrap()
    }

    #[test]
    fn five_prediction_examples() {
        assert_eq!(diff(5, 1), 1.0);
        assert_eq!(diff(5, 0), 0.0);
        assert_eq!(diff(5, 5), 0.0);
        assert_eq!(diff(5, 3), 0.5);
    }

    #[test]
    fn too_few_predictions_is_a_config_error() {
        assert!(matches!(
            difficulty_reward(Answer::Entity(1), &preds(1, 1), true, 0.2),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn format_part_is_unconditional() {
        let r = difficulty_reward(Answer::Entity(1), &preds(5, 0), true, 0.2).unwrap();
        assert_eq!(r.value, 0.2);
        assert_eq!(r.format, Some(0.2));
        let r = difficulty_reward(Answer::Entity(1), &preds(5, 2), true, 0.2).unwrap();
        assert!((r.value - (0.75 + 0.2)).abs() < 1e-15);
    }

    #[test]
    fn no_answer_predictions_never_count() {
        let p = vec![Answer::NoAnswer; 4];
        let r = difficulty_reward(Answer::Entity(1), &p, false, 0.0).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn strictly_decreasing_between_extremes() {
        for n in 2..=16 {
            for k in 1..n - 1 {
                assert!(diff(n, k) > diff(n, k + 1));
            }
        }
    }

    fn path(entities: &[u32]) -> ConstructionPath {
        ConstructionPath {
            steps: entities
                .windows(2)
                .map(|w| PathStep {
                    entity: w[0],
                    relation: 0,
                    retrieved: w[1],
                })
                .collect(),
            terminal_entity: *entities.last().unwrap(),
        }
    }

    #[test]
    fn format_rules() {
        assert!(format_reward(&path(&[1, 2, 3, 4]), 3));
        let mut broken = path(&[1, 2, 3, 4]);
        broken.steps[2].entity = 9;
        assert!(!format_reward(&broken, 3));
        assert!(!format_reward(&path(&[1, 2, 3]), 3));
        let mut bad_end = path(&[1, 2, 3, 4]);
        bad_end.terminal_entity = 2;
        assert!(!format_reward(&bad_end, 3));
        assert!(!format_reward(&path(&[1]), 0));
    }

    #[test]
    fn outcome_is_exact_match_indicator() {
        assert_eq!(outcome_reward(Answer::Entity(3), Answer::Entity(3)).value, 1.0);
        assert_eq!(outcome_reward(Answer::Entity(3), Answer::Entity(4)).value, 0.0);
        assert_eq!(outcome_reward(Answer::Entity(3), Answer::NoAnswer).value, 0.0);
    }
}
