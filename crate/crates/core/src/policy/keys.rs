use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::kg::{ConstructionPath, EntityId, PathStep, StepContext};
use crate::{Error, Result};

/// What the student sees: question length, progress and which rank (if any)
/// repeated from an earlier search of the same link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SolverKey {
    pub hops: u8,
    pub hop: u8,
    pub corroborated: Option<u8>,
}

impl SolverKey {
    pub fn from_context(ctx: &StepContext) -> Self {
        SolverKey {
            hops: ctx.hops as u8,
            hop: ctx.hop as u8,
            corroborated: ctx.corroborated.map(|c| c as u8),
        }
    }

    /// Every key reachable with questions of up to `max_hops` links.
    pub fn enumerate(max_hops: usize, results: usize) -> Vec<SolverKey> {
        let mut out = Vec::new();
        for hops in 1..=max_hops as u8 {
            for hop in 0..=hops {
                out.push(SolverKey {
                    hops,
                    hop,
                    corroborated: None,
                });
                if hop < hops {
                    for c in 0..results as u8 {
                        out.push(SolverKey {
                            hops,
                            hop,
                            corroborated: Some(c),
                        });
                    }
                }
            }
        }
        out
    }
}

/// Privileged signal read from the construction path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Cue {
    /// The path's next entity sits at this rank of the current results.
    TruthAt(u8),
    /// The path's next entity is not among the current results.
    Absent,
    /// The agent has already left the path (full-chain context only).
    OffPath,
    /// All links resolved and the current entity is the gold answer.
    FinalCorrect,
    FinalWrong,
}

impl Cue {
    pub fn enumerate(results: usize) -> Vec<Cue> {
        let mut out: Vec<Cue> = (0..results as u8).map(Cue::TruthAt).collect();
        out.extend([Cue::Absent, Cue::OffPath, Cue::FinalCorrect, Cue::FinalWrong]);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ExaminerKey {
    pub entity: EntityId,
    pub remaining: u8,
}

/// Address of one logit row in a [`super::PolicyParams`] table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RowKey {
    Solver(SolverKey),
    Cue(Cue),
    Examiner(ExaminerKey),
    /// Examiner row shared by every entity with this many links remaining.
    ExaminerShared(u8),
}

impl fmt::Display for RowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowKey::Solver(k) => {
                write!(f, "s/h{}/t{}/c", k.hops, k.hop)?;
                match k.corroborated {
                    Some(c) => write!(f, "{c}"),
                    None => f.write_str("-"),
                }
            }
            RowKey::Cue(c) => match c {
                Cue::TruthAt(j) => write!(f, "cue/truth{j}"),
                Cue::Absent => f.write_str("cue/absent"),
                Cue::OffPath => f.write_str("cue/offpath"),
                Cue::FinalCorrect => f.write_str("cue/final_correct"),
                Cue::FinalWrong => f.write_str("cue/final_wrong"),
            },
            RowKey::Examiner(k) => write!(f, "x/e{}/r{}", k.entity, k.remaining),
            RowKey::ExaminerShared(r) => write!(f, "x/r{r}"),
        }
    }
}

impl FromStr for RowKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::parse(0, format!("invalid row key `{s}`"));
        let parts: Vec<&str> = s.split('/').collect();
        let num = |p: &str, prefix: &str| -> Result<u32> {
            p.strip_prefix(prefix)
                .and_then(|v| v.parse().ok())
                .ok_or_else(bad)
        };
        match parts.as_slice() {
            ["s", h, t, c] => Ok(RowKey::Solver(SolverKey {
                hops: num(h, "h")? as u8,
                hop: num(t, "t")? as u8,
                corroborated: match *c {
                    "c-" => None,
                    _ => Some(num(c, "c")? as u8),
                },
            })),
            ["cue", "absent"] => Ok(RowKey::Cue(Cue::Absent)),
            ["cue", "offpath"] => Ok(RowKey::Cue(Cue::OffPath)),
            ["cue", "final_correct"] => Ok(RowKey::Cue(Cue::FinalCorrect)),
            ["cue", "final_wrong"] => Ok(RowKey::Cue(Cue::FinalWrong)),
            ["cue", t] => Ok(RowKey::Cue(Cue::TruthAt(num(t, "truth")? as u8))),
            ["x", e, r] => Ok(RowKey::Examiner(ExaminerKey {
                entity: num(e, "e")?,
                remaining: num(r, "r")? as u8,
            })),
            ["x", r] => Ok(RowKey::ExaminerShared(num(r, "r")? as u8)),
            _ => Err(bad()),
        }
    }
}

/// Role-specific encoding of a decision point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObservationKey {
    /// Student keys have no cue; teacher keys extend them with one.
    Solver { base: SolverKey, cue: Option<Cue> },
    Examiner(ExaminerKey),
}

impl ObservationKey {
    pub fn student(base: SolverKey) -> Self {
        ObservationKey::Solver { base, cue: None }
    }

    pub fn rows(&self) -> impl Iterator<Item = RowKey> {
        let (a, b) = match *self {
            ObservationKey::Solver { base, cue } => (RowKey::Solver(base), cue.map(RowKey::Cue)),
            ObservationKey::Examiner(k) => (
                RowKey::ExaminerShared(k.remaining),
                Some(RowKey::Examiner(k)),
            ),
        };
        std::iter::once(a).chain(b)
    }

    pub fn is_privileged(&self) -> bool {
        matches!(self, ObservationKey::Solver { cue: Some(_), .. })
    }

    /// The key with any privileged component removed.
    pub fn without_privilege(&self) -> Self {
        match *self {
            ObservationKey::Solver { base, .. } => ObservationKey::student(base),
            other => other,
        }
    }
}

/// Which privileged information the teacher receives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrivilegedMode {
    /// Full construction path, ending at the gold answer.
    #[default]
    Qcp,
    /// Gold answer only.
    GtOnly,
    /// Gold answer and hop count.
    GtPlusHop,
    /// First `ceil(h/2)` construction steps; the gold answer is cut off
    /// with the rest of the path.
    PartialQcp,
    /// No privileged information; teacher keys equal student keys.
    None,
}

/// The part of a construction path a teacher is shown.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathView {
    /// A prefix of the construction steps.
    pub steps: Vec<PathStep>,
    pub answer: Option<EntityId>,
}

impl PrivilegedMode {
    pub fn view(self, path: &ConstructionPath) -> Option<PathView> {
        let answer = Some(path.terminal_entity);
        match self {
            PrivilegedMode::Qcp => Some(PathView {
                steps: path.steps.clone(),
                answer,
            }),
            PrivilegedMode::PartialQcp => Some(PathView {
                steps: path.steps[..path.steps.len().div_ceil(2)].to_vec(),
                answer: None,
            }),
            // The hop count is already part of every solver key.
            PrivilegedMode::GtOnly | PrivilegedMode::GtPlusHop => Some(PathView {
                steps: Vec::new(),
                answer,
            }),
            PrivilegedMode::None => None,
        }
    }
}

/// How much of the visible path enters the teacher key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeacherContext {
    /// Only the true next-hop entity.
    NextHop,
    /// Next hop, plus whether the agent is still on the path as far as the
    /// view can tell.
    #[default]
    FullChain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TeacherView {
    pub mode: PrivilegedMode,
    pub context: TeacherContext,
}

pub fn student_key(ctx: &StepContext) -> ObservationKey {
    ObservationKey::student(SolverKey::from_context(ctx))
}

/// Cue the teacher reads from its view of the path at this decision point.
pub fn cue_for(ctx: &StepContext, view: &PathView, context: TeacherContext) -> Option<Cue> {
    if ctx.hop >= ctx.hops {
        return view.answer.map(|a| {
            if ctx.entity == a {
                Cue::FinalCorrect
            } else {
                Cue::FinalWrong
            }
        });
    }
    let step = view.steps.get(ctx.hop);
    if context == TeacherContext::FullChain {
        let expected = match step {
            Some(s) => Some(s.entity),
            None => ctx
                .hop
                .checked_sub(1)
                .and_then(|prev| view.steps.get(prev))
                .map(|s| s.retrieved),
        };
        if expected.is_some_and(|e| e != ctx.entity) {
            return Some(Cue::OffPath);
        }
    }
    // The last link's object is the gold answer.
    let target = match step {
        Some(s) => s.retrieved,
        None if ctx.hop + 1 == ctx.hops => view.answer?,
        None => return None,
    };
    Some(match ctx.candidates.iter().position(|&e| e == target) {
        Some(rank) => Cue::TruthAt(rank as u8),
        None => Cue::Absent,
    })
}

/// Student key extended with the privileged cue, if the view yields one.
pub fn teacher_key(ctx: &StepContext, path: &ConstructionPath, view: &TeacherView) -> ObservationKey {
    let base = SolverKey::from_context(ctx);
    let cue = view
        .mode
        .view(path)
        .and_then(|v| cue_for(ctx, &v, view.context));
    ObservationKey::Solver { base, cue }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path() -> ConstructionPath {
        ConstructionPath {
            steps: vec![
                PathStep { entity: 0, relation: 1, retrieved: 5 },
                PathStep { entity: 5, relation: 0, retrieved: 9 },
                PathStep { entity: 9, relation: 2, retrieved: 3 },
            ],
            terminal_entity: 3,
        }
    }

    fn ctx(hop: usize, entity: u32, candidates: Vec<u32>) -> StepContext {
        StepContext {
            hops: 3,
            hop,
            entity,
            candidates,
            corroborated: None,
        }
    }

    #[test]
    fn row_keys_round_trip_through_text() {
        let mut keys: Vec<RowKey> = SolverKey::enumerate(4, 3).into_iter().map(RowKey::Solver).collect();
        keys.extend(Cue::enumerate(3).into_iter().map(RowKey::Cue));
        keys.push(RowKey::ExaminerShared(2));
        keys.push(RowKey::Examiner(ExaminerKey { entity: 17, remaining: 3 }));
        for k in keys {
            assert_eq!(k.to_string().parse::<RowKey>().unwrap(), k, "{k}");
        }
        assert!("s/h1/t0".parse::<RowKey>().is_err());
    }

    #[test]
    fn teacher_key_extends_student_key() {
        let c = ctx(1, 5, vec![2, 9, 4]);
        let t = teacher_key(&c, &path(), &TeacherView::default());
        assert_eq!(t.without_privilege(), student_key(&c));
        assert!(t.is_privileged());
        assert_eq!(t.rows().count(), 2);
        assert!(matches!(t, ObservationKey::Solver { cue: Some(Cue::TruthAt(1)), .. }));
    }

    #[test]
    fn cues_by_mode() {
        let qcp = TeacherView::default();
        let gt = TeacherView { mode: PrivilegedMode::GtOnly, ..qcp };
        let partial = TeacherView { mode: PrivilegedMode::PartialQcp, ..qcp };
        let off = TeacherView { mode: PrivilegedMode::None, ..qcp };
        let first = ctx(0, 0, vec![5, 1, 2]);
        let cue = |c: &StepContext, v: &TeacherView| match teacher_key(c, &path(), v) {
            ObservationKey::Solver { cue, .. } => cue,
            _ => unreachable!(),
        };
        assert_eq!(cue(&first, &qcp), Some(Cue::TruthAt(0)));
        assert_eq!(cue(&first, &partial), Some(Cue::TruthAt(0)));
        assert_eq!(cue(&first, &gt), None);
        assert_eq!(cue(&first, &off), None);
        // Second link is inside the ceil(3/2) = 2 step prefix.
        let second = ctx(1, 5, vec![1, 2, 9]);
        assert_eq!(cue(&second, &partial), Some(Cue::TruthAt(2)));
        assert_eq!(cue(&second, &gt), None);
        // Last link: the answer names the target for views that keep it.
        let last = ctx(2, 9, vec![3, 1, 2]);
        assert_eq!(cue(&last, &qcp), Some(Cue::TruthAt(0)));
        assert_eq!(cue(&last, &gt), Some(Cue::TruthAt(0)));
        assert_eq!(cue(&last, &partial), None);
        let missing = ctx(2, 9, vec![7, 1, 2]);
        assert_eq!(cue(&missing, &gt), Some(Cue::Absent));
        let done = ctx(3, 3, vec![]);
        assert_eq!(cue(&done, &gt), Some(Cue::FinalCorrect));
        assert_eq!(cue(&done, &partial), None);
        let wrong = ctx(3, 4, vec![]);
        assert_eq!(cue(&wrong, &qcp), Some(Cue::FinalWrong));
    }

    #[test]
    fn full_chain_context_flags_off_path() {
        let full = TeacherView::default();
        let next = TeacherView {
            context: TeacherContext::NextHop,
            ..full
        };
        let c = ctx(1, 6, vec![9, 1, 2]);
        assert!(matches!(
            teacher_key(&c, &path(), &full),
            ObservationKey::Solver { cue: Some(Cue::OffPath), .. }
        ));
        assert!(matches!(
            teacher_key(&c, &path(), &next),
            ObservationKey::Solver { cue: Some(Cue::TruthAt(0)), .. }
        ));
        // Past the prefix, the last visible step still shows where the agent should be.
        let partial = TeacherView {
            mode: PrivilegedMode::PartialQcp,
            ..full
        };
        let c = ctx(2, 4, vec![3, 1, 2]);
        assert!(matches!(
            teacher_key(&c, &path(), &partial),
            ObservationKey::Solver { cue: Some(Cue::OffPath), .. }
        ));
    }
}
