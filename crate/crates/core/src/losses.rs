//! Training objectives and their analytic gradients.
//!
//! Every objective here is written for gradient *ascent*: `total` is the
//! quantity being maximized and `gradient` is its derivative with respect to
//! the trained policy's logit rows.

use serde::{Deserialize, Serialize};

use crate::advantages::{grpo_advantages_with, hop_group_advantages, Normalizer};
use crate::kg::{exact_match, Answer, QATriplet};
use crate::policy::{
    teacher_key, top_k_mass, ActionDistribution, Construction, Gradient, PolicyParams, Rollout,
    TeacherView,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    /// Reference-KL coefficient.
    pub beta: f64,
    /// Distillation coefficient.
    pub lambda: f64,
    /// Clip radius of the importance ratio.
    pub epsilon: f64,
    /// Student top-K set size for the distillation KL.
    pub top_k: usize,
    /// Bound on a log-ratio whose teacher mass is zero, in nats.
    pub tail_cap: f64,
    pub delta: f64,
    pub normalizer: Normalizer,
    /// When false the distillation term is skipped entirely.
    pub distill_enabled: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            beta: 0.001,
            lambda: 0.1,
            epsilon: 0.2,
            top_k: 50,
            tail_cap: 30.0,
            delta: 1e-4,
            normalizer: Normalizer::StdPlusDelta,
            distill_enabled: true,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.beta, self.lambda, self.epsilon, self.tail_cap, self.delta]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("loss coefficients must be finite".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Config(format!("epsilon must lie in (0, 1), got {}", self.epsilon)));
        }
        if self.beta < 0.0 || self.lambda < 0.0 {
            return Err(Error::Config("beta and lambda must be non-negative".into()));
        }
        if self.top_k < 1 {
            return Err(Error::Config("top_k must be at least 1".into()));
        }
        if self.delta <= 0.0 {
            return Err(Error::Config("delta must be positive".into()));
        }
        Ok(())
    }

    fn distills(&self) -> bool {
        self.distill_enabled && self.lambda != 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossParts {
    pub surrogate: f64,
    pub ref_kl: f64,
    pub distill: f64,
}

/// `total = surrogate - beta * ref_kl - lambda * distill`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub total: f64,
    pub parts: LossParts,
    pub gradient: Gradient,
}

impl LossReport {
    /// The minimization form, `-total`.
    pub fn loss(&self) -> f64 {
        -self.total
    }
}

/// `min(r A, clip(r, 1 - eps, 1 + eps) A)` with `r = exp(logp_new - logp_old)`.
pub fn grpo_clipped_term(logp_new: f64, logp_old: f64, advantage: f64, epsilon: f64) -> f64 {
    let ratio = (logp_new - logp_old).exp();
    let clipped = ratio.clamp(1.0 - epsilon, 1.0 + epsilon);
    (ratio * advantage).min(clipped * advantage)
}

/// Derivative of [`grpo_clipped_term`] with respect to `logp_new`.
fn clipped_term_slope(logp_new: f64, logp_old: f64, advantage: f64, epsilon: f64) -> f64 {
    let ratio = (logp_new - logp_old).exp();
    let clipped = ratio.clamp(1.0 - epsilon, 1.0 + epsilon);
    if ratio * advantage <= clipped * advantage {
        ratio * advantage
    } else {
        0.0
    }
}

fn check_support(p: &ActionDistribution, q: &ActionDistribution) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::Contract(format!(
            "distribution supports differ ({} vs {})",
            p.len(),
            q.len()
        )));
    }
    Ok(())
}

/// Exact `KL(policy || reference)` over the full support.
pub fn reference_kl(policy: &ActionDistribution, reference: &ActionDistribution) -> Result<f64> {
    check_support(policy, reference)?;
    Ok(policy
        .probs
        .iter()
        .zip(&reference.probs)
        .filter(|(&p, _)| p > 0.0)
        .map(|(&p, &q)| p * (p / q).ln())
        .sum())
}

/// Gradient of `KL(p || q)` with respect to the logits of `p`:
/// `p_j (ln(p_j / q_j) - KL)`.
fn reference_kl_logit_grad(p: &ActionDistribution, q: &ActionDistribution, kl: f64) -> Vec<f64> {
    p.probs
        .iter()
        .zip(&q.probs)
        .map(|(&pj, &qj)| if pj > 0.0 { pj * ((pj / qj).ln() - kl) } else { 0.0 })
        .collect()
}

/// `ln(p / q)` bounded above by `cap`; also reports whether the bound bit.
fn capped_log_ratio(p: f64, q: f64, cap: f64) -> (f64, bool) {
    if q <= 0.0 {
        return (cap, true);
    }
    let l = (p / q).ln();
    if l > cap {
        (cap, true)
    } else {
        (l, false)
    }
}

/// Reverse KL restricted to the student's top-K actions, with the remaining
/// mass of both distributions collapsed into one residual term.
pub fn topk_reverse_kl(
    student: &ActionDistribution,
    teacher: &ActionDistribution,
    k: usize,
    tail_cap: f64,
) -> Result<f64> {
    Ok(topk_reverse_kl_with_grad(student, teacher, k, tail_cap)?.0)
}

/// [`topk_reverse_kl`] and its gradient with respect to the student logits.
///
/// The top-K set is held fixed; within it each term is `s_i ln(s_i / t_i)`,
/// and the residual is `T_s ln(T_s / T_t)` with `T` the mass outside the set.
pub fn topk_reverse_kl_with_grad(
    student: &ActionDistribution,
    teacher: &ActionDistribution,
    k: usize,
    tail_cap: f64,
) -> Result<(f64, Vec<f64>)> {
    check_support(student, teacher)?;
    let n = student.len();
    let top = top_k_mass(student, k);
    // d value / d s_i
    let mut ds = vec![0.0; n];
    let mut in_top = vec![false; n];
    let mut value = 0.0;
    for &i in &top.indices {
        in_top[i] = true;
        let s = student.probs[i];
        if s > 0.0 {
            let (l, capped) = capped_log_ratio(s, teacher.probs[i], tail_cap);
            value += s * l;
            ds[i] = if capped { l } else { l + 1.0 };
        }
    }
    // Summed directly rather than as `1 - top mass`, which cancels badly
    // when the tail is small.
    let tail = |d: &ActionDistribution| -> f64 {
        (0..n).filter(|&i| !in_top[i]).map(|i| d.probs[i]).sum()
    };
    let tail_s = tail(student);
    if tail_s > 0.0 {
        let tail_t = tail(teacher);
        let (l, capped) = capped_log_ratio(tail_s, tail_t, tail_cap);
        value += tail_s * l;
        let d = if capped { l } else { l + 1.0 };
        for i in (0..n).filter(|&i| !in_top[i]) {
            ds[i] = d;
        }
    }
    let mean: f64 = student.probs.iter().zip(&ds).map(|(s, d)| s * d).sum();
    let grad = student
        .probs
        .iter()
        .zip(&ds)
        .map(|(s, d)| s * (d - mean))
        .collect();
    Ok((value, grad))
}

/// Mean per-step top-K reverse KL from the student to the privileged teacher
/// along a student rollout, with its gradient on the student rows only.
pub fn distill_loss(
    rollout: &Rollout,
    student: &PolicyParams,
    teacher: &PolicyParams,
    triplet: &QATriplet,
    view: &TeacherView,
    k: usize,
    tail_cap: f64,
) -> Result<(f64, Gradient)> {
    let mut grad = Gradient::new();
    if rollout.steps.is_empty() {
        return Ok((0.0, grad));
    }
    let inv_len = 1.0 / rollout.steps.len() as f64;
    let mut value = 0.0;
    for step in &rollout.steps {
        if step.key.is_privileged() {
            return Err(Error::Contract("distillation needs a student rollout".into()));
        }
        let s = student.action_distribution(&step.key);
        let t = teacher.action_distribution(&teacher_key(&step.context, &triplet.path, view));
        let (d, g) = topk_reverse_kl_with_grad(&s, &t, k, tail_cap)?;
        value += inv_len * d;
        grad.add_logit_grad(&step.key, inv_len, &g);
    }
    Ok((value, grad))
}

/// One question and the student rollouts sampled for it.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutGroup {
    pub triplet: QATriplet,
    pub rollouts: Vec<Rollout>,
}

impl RolloutGroup {
    pub fn rewards(&self) -> Vec<f64> {
        let gold = Answer::Entity(self.triplet.gold_answer);
        self.rollouts
            .iter()
            .map(|r| if exact_match(r.answer, gold) { 1.0 } else { 0.0 })
            .collect()
    }
}

/// Student objective: clipped GRPO surrogate summed over steps and averaged
/// over rollouts, minus `beta` times the per-step-mean reference KL, minus
/// `lambda` times the per-step-mean distillation KL.
///
/// Old log-probabilities are the ones recorded in each rollout step.
pub fn student_loss(
    batch: &[RolloutGroup],
    student: &PolicyParams,
    teacher: &PolicyParams,
    reference: &PolicyParams,
    view: &TeacherView,
    group_size: usize,
    cfg: &LossConfig,
) -> Result<LossReport> {
    cfg.validate()?;
    let total_rollouts: usize = batch.iter().map(|g| g.rollouts.len()).sum();
    let mut grad = Gradient::new();
    let mut parts = LossParts::default();
    if total_rollouts == 0 {
        return Ok(LossReport {
            total: 0.0,
            parts,
            gradient: grad,
        });
    }
    let w = 1.0 / total_rollouts as f64;
    for group in batch {
        if group.rollouts.len() != group_size {
            return Err(Error::Contract(format!(
                "group has {} rollouts, expected {group_size}",
                group.rollouts.len()
            )));
        }
        let adv = grpo_advantages_with(&group.rewards(), cfg.delta, cfg.normalizer)?;
        for (rollout, &a) in group.rollouts.iter().zip(&adv.values) {
            if rollout.steps.is_empty() {
                return Err(Error::Contract("rollout without steps".into()));
            }
            let inv_len = 1.0 / rollout.steps.len() as f64;
            for step in &rollout.steps {
                if !step.log_prob.is_finite() {
                    return Err(Error::Contract("rollout step has no recorded old log-prob".into()));
                }
                if step.key.is_privileged() {
                    return Err(Error::Contract("student loss given a privileged rollout".into()));
                }
                let dist = student.action_distribution(&step.key);
                let logp = student.log_prob(&step.key, step.action)?;
                parts.surrogate += w * grpo_clipped_term(logp, step.log_prob, a, cfg.epsilon);
                let slope = clipped_term_slope(logp, step.log_prob, a, cfg.epsilon);
                if slope != 0.0 {
                    let score: Vec<f64> = dist
                        .probs
                        .iter()
                        .enumerate()
                        .map(|(j, &p)| if j == step.action { 1.0 - p } else { -p })
                        .collect();
                    grad.add_logit_grad(&step.key, w * slope, &score);
                }
                if cfg.beta != 0.0 {
                    let ref_dist = reference.action_distribution(&step.key);
                    let kl = reference_kl(&dist, &ref_dist)?;
                    parts.ref_kl += w * inv_len * kl;
                    let g = reference_kl_logit_grad(&dist, &ref_dist, kl);
                    grad.add_logit_grad(&step.key, -cfg.beta * w * inv_len, &g);
                }
            }
            if cfg.distills() {
                let (d, g) = distill_loss(
                    rollout,
                    student,
                    teacher,
                    &group.triplet,
                    view,
                    cfg.top_k,
                    cfg.tail_cap,
                )?;
                parts.distill += w * d;
                grad.add(&g, -cfg.lambda * w);
            }
        }
    }
    let lambda = if cfg.distills() { cfg.lambda } else { 0.0 };
    Ok(LossReport {
        total: parts.surrogate - cfg.beta * parts.ref_kl - lambda * parts.distill,
        parts,
        gradient: grad,
    })
}

/// One examiner construction and the reward it earned.
#[derive(Debug, Clone, PartialEq)]
pub struct ExaminerSample {
    pub construction: Construction,
    pub reward: f64,
}

/// Examiner objective: `(1/N) sum_i A_i sum_t log pi(a_t | k_t)` with
/// advantages normalized within hop groups, minus `beta` times the
/// per-step-mean reference KL.
pub fn examiner_loss(
    batch: &[ExaminerSample],
    hop_labels: &[usize],
    examiner: &PolicyParams,
    reference: &PolicyParams,
    beta: f64,
    delta: f64,
) -> Result<LossReport> {
    let rewards: Vec<f64> = batch.iter().map(|s| s.reward).collect();
    let adv = hop_group_advantages(&rewards, hop_labels, delta)?;
    let mut grad = Gradient::new();
    let mut parts = LossParts::default();
    if batch.is_empty() {
        return Ok(LossReport {
            total: 0.0,
            parts,
            gradient: grad,
        });
    }
    let w = 1.0 / batch.len() as f64;
    for (sample, &a) in batch.iter().zip(&adv.values) {
        let steps = &sample.construction.steps;
        let inv_len = 1.0 / steps.len().max(1) as f64;
        for step in steps {
            let dist = examiner.action_distribution(&step.key);
            let logp = examiner.log_prob(&step.key, step.action)?;
            parts.surrogate += w * a * logp;
            if a != 0.0 {
                let score: Vec<f64> = dist
                    .probs
                    .iter()
                    .enumerate()
                    .map(|(j, &p)| if j == step.action { 1.0 - p } else { -p })
                    .collect();
                grad.add_logit_grad(&step.key, w * a, &score);
            }
            if beta != 0.0 {
                let ref_dist = reference.action_distribution(&step.key);
                let kl = reference_kl(&dist, &ref_dist)?;
                parts.ref_kl += w * inv_len * kl;
                let g = reference_kl_logit_grad(&dist, &ref_dist, kl);
                grad.add_logit_grad(&step.key, -beta * w * inv_len, &g);
            }
        }
    }
    Ok(LossReport {
        total: parts.surrogate - beta * parts.ref_kl,
        parts,
        gradient: grad,
    })
}
