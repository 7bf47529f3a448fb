//! Per-hand mode-of-responses consensus.
//!
//! Consensus is a pure function of the pooled response multiset. A hand is
//! decided once at least [`QUORUM`] responses exist and a single answer has
//! strictly more votes than any other. A tie leaves the contact unresolved so
//! one more response can be solicited.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use therblig_core::{HandContact, ObjectId};

pub const QUORUM: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsensusStatus {
    Resolved,
    NeedsMore,
}

/// Vote tally for one hand, `None` meaning an empty hand.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Tally(BTreeMap<Option<ObjectId>, usize>);

impl Tally {
    pub fn add(&mut self, vote: Option<ObjectId>) {
        *self.0.entry(vote).or_default() += 1;
    }

    pub fn iter(&self) -> impl Iterator<Item = (Option<ObjectId>, usize)> + '_ {
        self.0.iter().map(|(&k, &v)| (k, v))
    }

    pub fn total(&self) -> usize {
        self.0.values().sum()
    }

    /// The unique most frequent answer, if there is one.
    pub fn mode(&self) -> Option<Option<ObjectId>> {
        let top = self.0.values().copied().max()?;
        let mut leaders = self.0.iter().filter(|(_, &n)| n == top);
        let (&winner, _) = leaders.next()?;
        leaders.next().is_none().then_some(winner)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Consensus {
    pub status: ConsensusStatus,
    pub hands: Option<HandContact>,
    pub right: Tally,
    pub left: Tally,
}

impl Consensus {
    pub fn is_resolved(&self) -> bool {
        self.status == ConsensusStatus::Resolved
    }
}

pub fn consensus<'a>(responses: impl IntoIterator<Item = &'a HandContact>) -> Consensus {
    let (mut right, mut left) = (Tally::default(), Tally::default());
    for r in responses {
        right.add(r.right);
        left.add(r.left);
    }
    let hands = match (right.total() >= QUORUM, right.mode(), left.mode()) {
        (true, Some(r), Some(l)) => Some(HandContact::new(r, l)),
        _ => None,
    };
    Consensus {
        status: if hands.is_some() {
            ConsensusStatus::Resolved
        } else {
            ConsensusStatus::NeedsMore
        },
        hands,
        right,
        left,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const KNIFE: Option<ObjectId> = Some(ObjectId(0));
    const TOMATO: Option<ObjectId> = Some(ObjectId(1));

    fn right(votes: &[Option<ObjectId>]) -> Vec<HandContact> {
        votes.iter().map(|&v| HandContact::new(v, None)).collect()
    }

    #[test]
    fn mode_of_five() {
        let c = consensus(&right(&[KNIFE, KNIFE, KNIFE, TOMATO, None]));
        assert_eq!(c.status, ConsensusStatus::Resolved);
        assert_eq!(c.hands, Some(HandContact::new(KNIFE, None)));
    }

    #[test]
    fn tie_needs_one_more() {
        let mut votes = vec![KNIFE, KNIFE, TOMATO, TOMATO, None];
        assert_eq!(consensus(&right(&votes)).status, ConsensusStatus::NeedsMore);
        votes.push(KNIFE);
        let c = consensus(&right(&votes));
        assert_eq!(c.hands, Some(HandContact::new(KNIFE, None)));
        assert_eq!(c.right.iter().collect::<Vec<_>>(), vec![(None, 1), (KNIFE, 3), (TOMATO, 2)]);
    }

    #[test]
    fn below_quorum_is_unresolved() {
        let c = consensus(&right(&[KNIFE; 4]));
        assert_eq!(c.status, ConsensusStatus::NeedsMore);
        assert!(c.hands.is_none());
    }

    #[test]
    fn each_hand_needs_a_mode() {
        let votes: Vec<_> = [None, None, KNIFE, KNIFE, TOMATO]
            .iter()
            .map(|&l| HandContact::new(KNIFE, l))
            .collect();
        assert!(!consensus(&votes).is_resolved());
    }
}
