//! Tabular softmax policies for the examiner, student, teacher and the frozen
//! reference.
//!
//! A policy is a table of logit rows. An [`ObservationKey`] selects one or two
//! rows and the action logits are their sum: student keys select a single
//! solver row, teacher keys add a privileged cue row read from the
//! construction path, and examiner keys select one examiner row. Student and
//! teacher therefore share one parameter shape, and the teacher is simply the
//! same function evaluated with extra context.

mod checkpoint;
mod keys;
mod rollout;

pub use keys::{
    cue_for, student_key, teacher_key, Cue, ExaminerKey, ObservationKey, PathView, PrivilegedMode, RowKey,
    SolverKey, TeacherContext, TeacherView,
};
pub use rollout::{
    construction_rollout, rollout, Construction, ConstructionStep, Rollout, RolloutStep, Sampling,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::kg::Action;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Examiner,
    Student,
    Teacher,
    Reference,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Examiner => "examiner",
            Role::Student => "student",
            Role::Teacher => "teacher",
            Role::Reference => "reference",
        }
    }
}

impl std::str::FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "examiner" => Ok(Role::Examiner),
            "student" => Ok(Role::Student),
            "teacher" => Ok(Role::Teacher),
            "reference" => Ok(Role::Reference),
            _ => Err(Error::parse(0, format!("unknown role `{s}`"))),
        }
    }
}

/// Probability vector over the actions `0..probs.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution {
    pub probs: Vec<f64>,
}

impl ActionDistribution {
    /// Numerically stable softmax.
    pub fn from_logits(logits: &[f64]) -> Self {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        ActionDistribution {
            probs: exps.into_iter().map(|e| e / total).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Highest-probability action, lowest index on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

/// Result of [`top_k_mass`].
#[derive(Debug, Clone, PartialEq)]
pub struct TopK {
    pub indices: Vec<usize>,
    pub probs: Vec<f64>,
    pub tail_mass: f64,
}

/// The `k` most likely actions (ties to the lower index) and the mass left over.
pub fn top_k_mass(dist: &ActionDistribution, k: usize) -> TopK {
    let mut order: Vec<usize> = (0..dist.len()).collect();
    order.sort_by(|&a, &b| dist.probs[b].total_cmp(&dist.probs[a]).then(a.cmp(&b)));
    order.truncate(k.max(1));
    let probs: Vec<f64> = order.iter().map(|&i| dist.probs[i]).collect();
    let tail_mass = if order.len() == dist.len() {
        0.0
    } else {
        (1.0 - probs.iter().sum::<f64>()).max(0.0)
    };
    TopK {
        indices: order,
        probs,
        tail_mass,
    }
}

/// Sparse gradient over logit rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradient {
    rows: BTreeMap<RowKey, Vec<f64>>,
}

impl Gradient {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `coef * logit_grad` to every row the key reads.
    pub fn add_logit_grad(&mut self, key: &ObservationKey, coef: f64, logit_grad: &[f64]) {
        for row in key.rows() {
            let acc = self
                .rows
                .entry(row)
                .or_insert_with(|| vec![0.0; logit_grad.len()]);
            for (a, g) in acc.iter_mut().zip(logit_grad) {
                *a += coef * g;
            }
        }
    }

    pub fn add(&mut self, other: &Gradient, coef: f64) {
        for (row, g) in &other.rows {
            let acc = self.rows.entry(*row).or_insert_with(|| vec![0.0; g.len()]);
            for (a, x) in acc.iter_mut().zip(g) {
                *a += coef * x;
            }
        }
    }

    pub fn get(&self, row: &RowKey) -> Option<&[f64]> {
        self.rows.get(row).map(Vec::as_slice)
    }

    pub fn rows(&self) -> impl Iterator<Item = (&RowKey, &Vec<f64>)> {
        self.rows.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.rows
            .values()
            .flat_map(|r| r.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }
}

/// Tabular softmax policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub role: Role,
    /// Incremented by every update.
    pub version: u64,
    arity: usize,
    rows: BTreeMap<RowKey, Vec<f64>>,
}

impl PolicyParams {
    /// Empty table; unseen rows read as zero logits.
    pub fn new(role: Role, arity: usize) -> Self {
        PolicyParams {
            role,
            version: 0,
            arity,
            rows: BTreeMap::new(),
        }
    }

    /// Base solver table shared by student, teacher and reference.
    ///
    /// Every solver row starts at zero (uniform policy). Cue rows carry
    /// `cue_prior` on the action the privileged context points to, which is
    /// how the base policy makes use of a construction path it is shown.
    /// Student keys never read cue rows, so student updates leave them intact.
    pub fn solver_base(max_hops: usize, results: usize, cue_prior: f64) -> Self {
        let arity = Action::count(results);
        let mut p = PolicyParams::new(Role::Reference, arity);
        for key in SolverKey::enumerate(max_hops, results) {
            p.rows.insert(RowKey::Solver(key), vec![0.0; arity]);
        }
        for cue in Cue::enumerate(results) {
            let mut row = vec![0.0; arity];
            let target = match cue {
                Cue::TruthAt(j) => Some(Action::Select(j as usize)),
                Cue::Absent => Some(Action::Research),
                Cue::FinalCorrect => Some(Action::Answer),
                Cue::OffPath | Cue::FinalWrong => None,
            };
            if let Some(a) = target {
                row[a.index(results)] = cue_prior;
            }
            p.rows.insert(RowKey::Cue(cue), row);
        }
        p
    }

    /// Uniform examiner table over relations plus the finish action.
    pub fn examiner_base(n_entities: u32, max_hops: usize, n_relations: u32) -> Self {
        let arity = n_relations as usize + 1;
        let mut p = PolicyParams::new(Role::Reference, arity);
        for remaining in 1..=max_hops as u8 {
            p.rows.insert(RowKey::ExaminerShared(remaining), vec![0.0; arity]);
        }
        for entity in 0..n_entities {
            for remaining in 1..=max_hops as u8 {
                p.rows.insert(
                    RowKey::Examiner(ExaminerKey { entity, remaining }),
                    vec![0.0; arity],
                );
            }
        }
        p
    }

    pub fn with_role(&self, role: Role) -> Self {
        PolicyParams {
            role,
            ..self.clone()
        }
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn row(&self, key: &RowKey) -> Option<&[f64]> {
        self.rows.get(key).map(Vec::as_slice)
    }

    pub fn row_mut(&mut self, key: &RowKey) -> &mut Vec<f64> {
        let arity = self.arity;
        self.rows.entry(*key).or_insert_with(|| vec![0.0; arity])
    }

    pub fn rows(&self) -> impl Iterator<Item = (&RowKey, &Vec<f64>)> {
        self.rows.iter()
    }

    /// Same row keys and arity, so the tables can be averaged entry by entry.
    pub fn same_shape(&self, other: &PolicyParams) -> bool {
        self.arity == other.arity && self.rows.keys().eq(other.rows.keys())
    }

    pub fn logits(&self, key: &ObservationKey) -> Vec<f64> {
        let mut z = vec![0.0; self.arity];
        for row in key.rows() {
            if let Some(r) = self.rows.get(&row) {
                for (a, b) in z.iter_mut().zip(r) {
                    *a += b;
                }
            }
        }
        z
    }

    pub fn action_distribution(&self, key: &ObservationKey) -> ActionDistribution {
        ActionDistribution::from_logits(&self.logits(key))
    }

    /// Log-softmax of `action` at `key`.
    pub fn log_prob(&self, key: &ObservationKey, action: usize) -> Result<f64> {
        self.check_action(action)?;
        let z = self.logits(key);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = z.iter().map(|&v| (v - max).exp()).sum::<f64>().ln() + max;
        Ok(z[action] - lse)
    }

    /// Score function: `1{j = action} - p_j` on every row the key reads.
    pub fn grad_log_prob(&self, key: &ObservationKey, action: usize) -> Result<Gradient> {
        self.check_action(action)?;
        let dist = self.action_distribution(key);
        let g: Vec<f64> = dist
            .probs
            .iter()
            .enumerate()
            .map(|(j, &p)| if j == action { 1.0 - p } else { -p })
            .collect();
        let mut grad = Gradient::new();
        grad.add_logit_grad(key, 1.0, &g);
        Ok(grad)
    }

    /// Gradient ascent step.
    pub fn ascend(&mut self, grad: &Gradient, lr: f64) {
        for (key, g) in grad.rows() {
            let row = self.row_mut(key);
            for (w, d) in row.iter_mut().zip(g) {
                *w += lr * d;
            }
        }
        self.version += 1;
    }

    pub fn is_finite(&self) -> bool {
        self.rows.values().flatten().all(|x| x.is_finite())
    }

    fn check_action(&self, action: usize) -> Result<()> {
        if action >= self.arity {
            return Err(Error::Contract(format!(
                "action {action} outside support of size {}",
                self.arity
            )));
        }
        Ok(())
    }
}
