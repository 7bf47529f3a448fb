//! Contact-state transitions and the three consistency rules.
//!
//! - Rule 1: the grasps and releases of a sequence must turn the starting
//!   contact set into the annotated successor contact set.
//! - Rule 2: an object already in contact cannot be reached or grasped.
//! - Rule 3: an object not in contact cannot be moved, oriented, used or
//!   released (and, with `strict_hold`, held).

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vocab::{ContactSet, ObjectVocabulary, Therblig, TherbligSequence, Verb};

/// Maximum number of therblig annotations per sequence.
pub const DEFAULT_MAX_LEN: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Rule {
    /// Rule 1: the net contact change must match the successor state.
    Transition = 1,
    /// Rule 2: no reach or grasp of an object already in contact.
    AlreadyHeld = 2,
    /// Rule 3: no manipulation of an object not in contact.
    NotHeld = 3,
}

impl Rule {
    pub fn number(self) -> u8 {
        self as u8
    }
}

impl From<Rule> for u8 {
    fn from(r: Rule) -> u8 {
        r.number()
    }
}

impl TryFrom<u8> for Rule {
    type Error = Error;

    fn try_from(n: u8) -> Result<Self> {
        match n {
            1 => Ok(Rule::Transition),
            2 => Ok(Rule::AlreadyHeld),
            3 => Ok(Rule::NotHeld),
            _ => Err(Error::Invalid(format!("no rule {n}"))),
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Rule {}", self.number())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleViolation {
    pub rule: Rule,
    /// Zero-based step index; absent for Rule 1.
    pub step: Option<usize>,
    pub therblig: Option<Therblig>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<RuleViolation>,
    /// `derived_states[0]` is the starting state; one more entry per step.
    pub derived_states: Vec<ContactSet>,
}

impl ValidationReport {
    pub fn is_consistent(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn final_state(&self) -> &ContactSet {
        self.derived_states
            .last()
            .expect("derived states always hold the start state")
    }

    pub fn count(&self, rule: Rule) -> usize {
        self.violations.iter().filter(|v| v.rule == rule).count()
    }

    pub fn has(&self, rule: Rule) -> bool {
        self.violations.iter().any(|v| v.rule == rule)
    }
}

/// Discrete contact effect of one therblig: grasp inserts, release removes,
/// everything else leaves the set alone. No rule checking happens here.
pub fn apply_tuple(state: &ContactSet, t: Therblig) -> ContactSet {
    let mut next = state.clone();
    apply_in_place(&mut next, t);
    next
}

fn apply_in_place(state: &mut ContactSet, t: Therblig) {
    match (t.verb(), t.object()) {
        (Verb::Grasp, Some(o)) => {
            state.insert(o);
        }
        (Verb::Release, Some(o)) => {
            state.remove(o);
        }
        _ => {}
    }
}

/// Folds [`apply_tuple`] over a sequence.
pub fn fold_sequence(start: &ContactSet, seq: &TherbligSequence) -> ContactSet {
    let mut state = start.clone();
    for &t in seq {
        apply_in_place(&mut state, t);
    }
    state
}

/// Rule configuration shared by validation and candidate filtering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rules {
    /// Treat Hold like Move: it requires the object to be in contact.
    pub strict_hold: bool,
    /// Maximum sequence length `N`.
    pub max_len: usize,
}

impl Default for Rules {
    fn default() -> Self {
        Self {
            strict_hold: true,
            max_len: DEFAULT_MAX_LEN,
        }
    }
}

impl Rules {
    pub fn new(strict_hold: bool, max_len: usize) -> Self {
        Self {
            strict_hold,
            max_len,
        }
    }

    /// Rule 2/3 check of a single step against the contact state before it.
    /// The two rules cover disjoint verbs, so at most one violation exists.
    pub fn step_violation(
        &self,
        state: &ContactSet,
        t: Therblig,
        step: usize,
    ) -> Option<RuleViolation> {
        let object = t.object()?;
        let held = state.contains(object);
        let rule = match t.verb() {
            Verb::Reach | Verb::Grasp if held => Rule::AlreadyHeld,
            Verb::Move | Verb::Orient | Verb::Use | Verb::Release if !held => Rule::NotHeld,
            Verb::Hold if self.strict_hold && !held => Rule::NotHeld,
            _ => return None,
        };
        let message = match rule {
            Rule::AlreadyHeld => format!(
                "step {step}: cannot {} object {object}, it is already in contact",
                t.verb().name()
            ),
            _ => format!(
                "step {step}: cannot {} object {object}, it is not in contact",
                t.verb().name()
            ),
        };
        Some(RuleViolation {
            rule,
            step: Some(step),
            therblig: Some(t),
            message,
        })
    }

    pub fn is_legal(&self, state: &ContactSet, t: Therblig) -> bool {
        self.step_violation(state, t, 0).is_none()
    }

    /// Folds the sequence from `start`, checking every step against the
    /// running state, then checks the final state against `end`.
    pub fn validate(
        &self,
        start: &ContactSet,
        seq: &TherbligSequence,
        end: &ContactSet,
    ) -> Result<ValidationReport> {
        if seq.len() > self.max_len {
            return Err(Error::SequenceTooLong {
                len: seq.len(),
                max: self.max_len,
            });
        }
        let mut violations = Vec::new();
        let mut derived_states = Vec::with_capacity(seq.len() + 1);
        let mut state = start.clone();
        for (k, &t) in seq.iter().enumerate() {
            violations.extend(self.step_violation(&state, t, k));
            derived_states.push(state.clone());
            apply_in_place(&mut state, t);
        }
        if &state != end {
            violations.push(RuleViolation {
                rule: Rule::Transition,
                step: None,
                therblig: None,
                message: format!(
                    "sequence ends in contact state {:?} but the annotated successor is {:?}",
                    ids(&state),
                    ids(end)
                ),
            });
        }
        derived_states.push(state);
        Ok(ValidationReport {
            violations,
            derived_states,
        })
    }

    /// Every tuple that may legally follow `state`, plus the null therblig.
    pub fn candidates(&self, state: &ContactSet, vocab: &ObjectVocabulary) -> BTreeSet<Therblig> {
        vocab
            .all_therbligs()
            .into_iter()
            .filter(|&t| self.is_legal(state, t))
            .collect()
    }

    /// Closed-form size of [`Rules::candidates`] for a state of `held`
    /// objects out of `size`.
    pub fn candidate_count(&self, held: usize, size: usize) -> usize {
        let unheld_verbs = if self.strict_hold { 2 } else { 3 };
        5 * held + unheld_verbs * (size - held) + 1
    }

    /// Candidates from which `end` is still reachable within the steps left
    /// after this one. The null therblig (stop here) qualifies only when the
    /// current state already equals `end`.
    ///
    /// A legal step changes the membership of at most one object, and any
    /// single membership change is legal (grasp an unheld object, release a
    /// held one), so the shortest legal path between two contact sets has
    /// exactly as many steps as their symmetric difference has members.
    pub fn candidates_with_goal(
        &self,
        state: &ContactSet,
        end: &ContactSet,
        remaining: usize,
        vocab: &ObjectVocabulary,
    ) -> Result<BTreeSet<Therblig>> {
        if remaining == 0 {
            return Err(Error::Invalid("no steps remaining".into()));
        }
        if state.distance(end) > remaining {
            return Ok(BTreeSet::new());
        }
        Ok(self
            .candidates(state, vocab)
            .into_iter()
            .filter(|&t| {
                if t.is_null() {
                    state == end
                } else {
                    apply_tuple(state, t).distance(end) < remaining
                }
            })
            .collect())
    }
}

fn ids(set: &ContactSet) -> Vec<usize> {
    set.iter().map(|o| o.index()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::ObjectId;

    const KNIFE: ObjectId = ObjectId(0);
    const BOWL: ObjectId = ObjectId(1);
    const TOMATO: ObjectId = ObjectId(2);

    fn vocab() -> ObjectVocabulary {
        ObjectVocabulary::new(["knife", "bowl", "tomato"]).unwrap()
    }

    fn set(objs: &[ObjectId]) -> ContactSet {
        objs.iter().copied().collect()
    }

    fn t(v: Verb, o: ObjectId) -> Therblig {
        Therblig::new(v, o)
    }

    fn seq(steps: &[Therblig]) -> TherbligSequence {
        TherbligSequence::new(steps.iter().copied()).unwrap()
    }

    #[test]
    fn apply_tuple_examples() {
        assert_eq!(apply_tuple(&set(&[]), t(Verb::Grasp, KNIFE)), set(&[KNIFE]));
        assert_eq!(apply_tuple(&set(&[KNIFE]), t(Verb::Release, KNIFE)), set(&[]));
        assert_eq!(apply_tuple(&set(&[KNIFE]), t(Verb::Move, KNIFE)), set(&[KNIFE]));
        assert_eq!(apply_tuple(&set(&[KNIFE]), Therblig::NULL), set(&[KNIFE]));
    }

    #[test]
    fn step_violation_examples() {
        let rules = Rules::default();
        let v = rules.step_violation(&set(&[KNIFE]), t(Verb::Grasp, KNIFE), 0).unwrap();
        assert_eq!(v.rule, Rule::AlreadyHeld);
        assert_eq!(v.step, Some(0));
        let v = rules.step_violation(&set(&[]), t(Verb::Move, TOMATO), 3).unwrap();
        assert_eq!(v.rule, Rule::NotHeld);
        assert_eq!(v.step, Some(3));
        assert!(rules.step_violation(&set(&[]), t(Verb::Reach, KNIFE), 0).is_none());
        assert!(rules.step_violation(&set(&[]), Therblig::NULL, 0).is_none());
    }

    #[test]
    fn hold_depends_on_strictness() {
        let strict = Rules::new(true, 6);
        let lenient = Rules::new(false, 6);
        let hold = t(Verb::Hold, BOWL);
        assert_eq!(
            strict.step_violation(&set(&[]), hold, 0).map(|v| v.rule),
            Some(Rule::NotHeld)
        );
        assert!(lenient.step_violation(&set(&[]), hold, 0).is_none());
        assert!(strict.step_violation(&set(&[BOWL]), hold, 0).is_none());
    }

    #[test]
    fn validate_examples() {
        let rules = Rules::default();
        let pick_place = seq(&[
            t(Verb::Reach, KNIFE),
            t(Verb::Grasp, KNIFE),
            t(Verb::Move, KNIFE),
            t(Verb::Release, KNIFE),
        ]);
        let report = rules.validate(&set(&[]), &pick_place, &set(&[])).unwrap();
        assert!(report.is_consistent());
        assert_eq!(report.derived_states.len(), 5);
        assert_eq!(report.derived_states[0], set(&[]));
        assert_eq!(report.derived_states[2], set(&[KNIFE]));
        assert_eq!(report.final_state(), &set(&[]));

        let half = seq(&[t(Verb::Reach, KNIFE), t(Verb::Grasp, KNIFE)]);
        let report = rules.validate(&set(&[]), &half, &set(&[])).unwrap();
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].rule, Rule::Transition);
        assert_eq!(report.violations[0].step, None);
        assert_eq!(report.final_state(), &set(&[KNIFE]));

        let regrasp = seq(&[t(Verb::Grasp, KNIFE)]);
        let report = rules.validate(&set(&[KNIFE]), &regrasp, &set(&[KNIFE])).unwrap();
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].rule, Rule::AlreadyHeld);
        assert_eq!(report.violations[0].step, Some(0));
    }

    #[test]
    fn validate_rejects_overlong_sequences() {
        let rules = Rules::new(true, 2);
        let s = seq(&[t(Verb::Reach, KNIFE); 3]);
        assert_eq!(
            rules.validate(&set(&[]), &s, &set(&[])),
            Err(Error::SequenceTooLong { len: 3, max: 2 })
        );
    }

    #[test]
    fn candidate_examples() {
        let rules = Rules::default();
        let v = vocab();
        let empty = rules.candidates(&set(&[]), &v);
        assert_eq!(empty.len(), 7);
        assert!(empty.contains(&Therblig::NULL));
        assert!(empty.iter().all(|c| matches!(c.verb(), Verb::Reach | Verb::Grasp | Verb::Null)));
        assert_eq!(rules.candidates(&set(&[KNIFE]), &v).len(), 10);
        assert_eq!(v.all_therbligs().len(), 3 * 7 + 1);
    }

    #[test]
    fn goal_candidate_examples() {
        let rules = Rules::default();
        let v = vocab();
        let grasp_only = rules.candidates_with_goal(&set(&[]), &set(&[KNIFE]), 1, &v).unwrap();
        assert_eq!(grasp_only.into_iter().collect::<Vec<_>>(), vec![t(Verb::Grasp, KNIFE)]);

        let idle = rules.candidates_with_goal(&set(&[]), &set(&[]), 1, &v).unwrap();
        let mut expected: BTreeSet<_> = v.ids().map(|o| t(Verb::Reach, o)).collect();
        expected.insert(Therblig::NULL);
        assert_eq!(idle, expected);

        let keep = rules
            .candidates_with_goal(&set(&[KNIFE]), &set(&[KNIFE]), 2, &v)
            .unwrap();
        assert!(keep.contains(&t(Verb::Release, KNIFE)));
        for verb in [Verb::Move, Verb::Orient, Verb::Use, Verb::Hold] {
            assert!(keep.contains(&t(verb, KNIFE)));
        }
        assert!(keep.contains(&Therblig::NULL));

        let unreachable = rules
            .candidates_with_goal(&set(&[]), &set(&[KNIFE, BOWL]), 1, &v)
            .unwrap();
        assert!(unreachable.is_empty());
        assert!(rules.candidates_with_goal(&set(&[]), &set(&[]), 0, &v).is_err());
    }

    #[test]
    fn grasp_release_inverse() {
        for o in [KNIFE, BOWL, TOMATO] {
            let s = set(&[BOWL]);
            if s.contains(o) {
                continue;
            }
            let there = apply_tuple(&s, t(Verb::Grasp, o));
            assert_eq!(apply_tuple(&there, t(Verb::Release, o)), s);
        }
    }

    #[test]
    fn rule_serializes_as_number() {
        assert_eq!(serde_json::to_string(&Rule::NotHeld).unwrap(), "3");
        assert_eq!(serde_json::from_str::<Rule>("1").unwrap(), Rule::Transition);
        assert!(serde_json::from_str::<Rule>("4").is_err());
    }
}
