//! Brute-force enumeration of consistent sequences and a seeded generator of
//! rule-consistent synthetic annotations.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::record::{name_sequence, AnnotationRecord, NamedHands, Source};
use crate::rules::{apply_tuple, Rule, Rules};
use crate::vocab::{ContactSet, HandContact, ObjectId, ObjectVocabulary, Therblig, TherbligSequence, Verb};

pub const MAX_BRUTE_FORCE_OBJECTS: usize = 6;
pub const MAX_BRUTE_FORCE_LEN: usize = 6;
/// Upper bound on the number of sequences a brute-force call may visit.
pub const MAX_ENUMERATION: u128 = 10_000_000;

/// Frames per annotated chunk in generated data.
pub const CHUNK_FRAMES: u64 = 100;
/// Contact states in generated data are limited to what two hands can hold.
pub const HAND_CAPACITY: usize = 2;

fn enumeration_size(objects: usize, max_len: usize) -> u128 {
    let alphabet = (objects * Verb::ACTIVE.len()) as u128;
    (0..=max_len as u32).map(|l| alphabet.pow(l)).sum()
}

fn guard(vocab: &ObjectVocabulary, max_len: usize) -> Result<()> {
    if vocab.len() > MAX_BRUTE_FORCE_OBJECTS || max_len > MAX_BRUTE_FORCE_LEN {
        return Err(Error::Guard(format!(
            "|C| = {} and max_len = {max_len} (limits {MAX_BRUTE_FORCE_OBJECTS} and {MAX_BRUTE_FORCE_LEN})",
            vocab.len()
        )));
    }
    let size = enumeration_size(vocab.len(), max_len);
    if size > MAX_ENUMERATION {
        return Err(Error::Guard(format!(
            "{size} sequences exceeds the limit of {MAX_ENUMERATION}"
        )));
    }
    Ok(())
}

/// Calls `visit` on every null-free sequence of length `0..=max_len` over the
/// full tuple alphabet. Null padding is canonicalised away, so padded
/// variants are not visited separately.
fn for_each_sequence(vocab: &ObjectVocabulary, max_len: usize, mut visit: impl FnMut(TherbligSequence)) {
    let alphabet: Vec<Therblig> = vocab.all_therbligs().into_iter().filter(|t| !t.is_null()).collect();
    for len in 0..=max_len {
        let mut digits = vec![0usize; len];
        'next: loop {
            visit(
                TherbligSequence::new(digits.iter().map(|&d| alphabet[d]))
                    .expect("null-free sequences are well formed"),
            );
            let mut pos = len;
            loop {
                if pos == 0 {
                    break 'next;
                }
                pos -= 1;
                digits[pos] += 1;
                if digits[pos] < alphabet.len() {
                    continue 'next;
                }
                digits[pos] = 0;
            }
        }
    }
}

/// Every sequence of length at most `max_len` whose validation report from
/// `c_start` to `c_end` is empty, found by exhaustive enumeration.
pub fn brute_force_consistent(
    c_start: &ContactSet,
    c_end: &ContactSet,
    vocab: &ObjectVocabulary,
    max_len: usize,
    rules: &Rules,
) -> Result<BTreeSet<TherbligSequence>> {
    guard(vocab, max_len)?;
    let rules = Rules::new(rules.strict_hold, max_len);
    let mut out = BTreeSet::new();
    for_each_sequence(vocab, max_len, |seq| {
        let report = rules.validate(c_start, &seq, c_end).expect("length within bound");
        if report.is_consistent() {
            out.insert(seq);
        }
    });
    Ok(out)
}

/// [`brute_force_consistent`] for every end state at once: one enumeration,
/// each sequence free of step violations filed under the state it ends in.
pub fn brute_force_by_end(
    c_start: &ContactSet,
    vocab: &ObjectVocabulary,
    max_len: usize,
    rules: &Rules,
) -> Result<BTreeMap<ContactSet, BTreeSet<TherbligSequence>>> {
    guard(vocab, max_len)?;
    let rules = Rules::new(rules.strict_hold, max_len);
    let mut out: BTreeMap<ContactSet, BTreeSet<TherbligSequence>> = BTreeMap::new();
    for_each_sequence(vocab, max_len, |seq| {
        let report = rules.validate(c_start, &seq, c_start).expect("length within bound");
        if report.violations.iter().all(|v| v.rule == Rule::Transition) {
            out.entry(report.final_state().clone()).or_default().insert(seq);
        }
    });
    Ok(out)
}

/// Every sequence reachable by choosing, step after step, among
/// [`Rules::candidates_with_goal`]; choosing null ends the sequence.
pub fn chain_goal_candidates(
    c_start: &ContactSet,
    c_end: &ContactSet,
    vocab: &ObjectVocabulary,
    max_len: usize,
    rules: &Rules,
) -> Result<BTreeSet<TherbligSequence>> {
    fn walk(
        state: &ContactSet,
        end: &ContactSet,
        remaining: usize,
        prefix: &mut Vec<Therblig>,
        ctx: (&ObjectVocabulary, &Rules),
        out: &mut BTreeSet<TherbligSequence>,
    ) -> Result<()> {
        if remaining == 0 {
            if state == end {
                out.insert(TherbligSequence::new(prefix.iter().copied())?);
            }
            return Ok(());
        }
        for t in ctx.1.candidates_with_goal(state, end, remaining, ctx.0)? {
            if t.is_null() {
                out.insert(TherbligSequence::new(prefix.iter().copied())?);
                continue;
            }
            prefix.push(t);
            walk(&apply_tuple(state, t), end, remaining - 1, prefix, ctx, out)?;
            prefix.pop();
        }
        Ok(())
    }
    let mut out = BTreeSet::new();
    walk(c_start, c_end, max_len, &mut Vec::new(), (vocab, rules), &mut out)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chunk {
    pub start: ContactSet,
    pub sequence: TherbligSequence,
}

/// Consecutive annotated chunks; chunk `i` ends where chunk `i + 1` starts,
/// and the last one ends in `terminal`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub vocab: ObjectVocabulary,
    pub seed: u64,
    pub chunks: Vec<Chunk>,
    pub terminal: ContactSet,
}

impl Trajectory {
    /// `(c_start, sequence, c_end)` for every chunk.
    pub fn bracketed(&self) -> impl Iterator<Item = (&ContactSet, &TherbligSequence, &ContactSet)> {
        self.chunks.iter().enumerate().map(move |(i, c)| {
            let end = self.chunks.get(i + 1).map_or(&self.terminal, |n| &n.start);
            (&c.start, &c.sequence, end)
        })
    }
}

fn small_sets(objects: usize) -> Vec<ContactSet> {
    let mut out = vec![ContactSet::new()];
    for a in 0..objects {
        out.push([ObjectId(a)].into_iter().collect());
        for b in a + 1..objects {
            out.push([ObjectId(a), ObjectId(b)].into_iter().collect());
        }
    }
    out
}

/// Seeded generator of consistent chunks. Goals are drawn uniformly among
/// hand-holdable contact sets reachable within `max_len` steps; each step is
/// drawn uniformly among the goal-filtered candidates.
pub struct TrajectoryGenerator {
    rng: ChaCha8Rng,
    rules: Rules,
    vocab: ObjectVocabulary,
    goals: Vec<ContactSet>,
}

impl TrajectoryGenerator {
    pub fn new(vocab: ObjectVocabulary, rules: Rules, seed: u64) -> Self {
        let goals = small_sets(vocab.len());
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            rules,
            vocab,
            goals,
        }
    }

    pub fn random_state(&mut self) -> ContactSet {
        self.goals.choose(&mut self.rng).expect("empty set always present").clone()
    }

    pub fn random_goal(&mut self, from: &ContactSet) -> ContactSet {
        let max_len = self.rules.max_len;
        let reachable: Vec<&ContactSet> = self.goals.iter().filter(|g| from.distance(g) <= max_len).collect();
        (*reachable.choose(&mut self.rng).expect("current state is reachable")).clone()
    }

    /// A consistent sequence from `start` to `goal`.
    pub fn sequence(&mut self, start: &ContactSet, goal: &ContactSet) -> Result<TherbligSequence> {
        let mut state = start.clone();
        let mut seq = TherbligSequence::empty();
        for remaining in (1..=self.rules.max_len).rev() {
            let options: Vec<Therblig> = self
                .rules
                .candidates_with_goal(&state, goal, remaining, &self.vocab)?
                .into_iter()
                .collect();
            let &t = options
                .choose(&mut self.rng)
                .ok_or_else(|| Error::Invalid("goal became unreachable".into()))?;
            if t.is_null() {
                break;
            }
            state = apply_tuple(&state, t);
            seq.push(t);
        }
        debug_assert_eq!(&state, goal);
        Ok(seq)
    }

    pub fn trajectory(&mut self, chunks: usize, seed: u64) -> Result<Trajectory> {
        let mut state = self.random_state();
        let mut out = Vec::with_capacity(chunks);
        for _ in 0..chunks {
            let goal = self.random_goal(&state);
            let sequence = self.sequence(&state, &goal)?;
            out.push(Chunk {
                start: std::mem::replace(&mut state, goal),
                sequence,
            });
        }
        Ok(Trajectory {
            vocab: self.vocab.clone(),
            seed,
            chunks: out,
            terminal: state,
        })
    }
}

pub fn gen_trajectory(vocab: &ObjectVocabulary, chunks: usize, rules: &Rules, seed: u64) -> Result<Trajectory> {
    if chunks == 0 {
        return Err(Error::Invalid("chunk count must be at least 1".into()));
    }
    TrajectoryGenerator::new(vocab.clone(), *rules, seed).trajectory(chunks, seed)
}

/// Synthetic records for `videos` videos of `chunks` chunks each.
pub fn gen_records(
    vocab: &ObjectVocabulary,
    videos: usize,
    chunks: usize,
    rules: &Rules,
    seed: u64,
) -> Result<Vec<AnnotationRecord>> {
    if videos == 0 || chunks == 0 {
        return Err(Error::Invalid("video and chunk counts must be at least 1".into()));
    }
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(videos * chunks);
    for v in 0..videos {
        let video_id = format!("synth_{v:03}");
        let traj = gen_trajectory(vocab, chunks, rules, seeds.random())?;
        for (i, (start, seq, end)) in traj.bracketed().enumerate() {
            out.push(AnnotationRecord {
                segment_id: format!("{video_id}_{i:04}"),
                video_id: video_id.clone(),
                start_frame: i as u64 * CHUNK_FRAMES,
                end_frame: (i as u64 + 1) * CHUNK_FRAMES,
                c_prev: NamedHands::from_hands(HandContact::from_set(start)?, vocab)?,
                c_next: NamedHands::from_hands(HandContact::from_set(end)?, vocab)?,
                therbligs: name_sequence(seq, vocab)?,
                source: Source::Synthetic,
            });
        }
    }
    Ok(out)
}

/// Writes [`gen_records`] output as canonical JSON lines.
pub fn gen_dataset(
    vocab: &ObjectVocabulary,
    videos: usize,
    chunks: usize,
    rules: &Rules,
    seed: u64,
    path: &Path,
) -> Result<Vec<AnnotationRecord>> {
    let records = gen_records(vocab, videos, chunks, rules, seed)?;
    let file = std::fs::File::create(path)
        .map_err(|e| Error::Invalid(format!("cannot write {}: {e}", path.display())))?;
    crate::record::write_jsonl(std::io::BufWriter::new(file), &records)
        .map_err(|e| Error::Invalid(format!("cannot write {}: {e}", path.display())))?;
    Ok(records)
}

pub fn verb_histogram<'a>(sequences: impl IntoIterator<Item = &'a TherbligSequence>) -> BTreeMap<Verb, usize> {
    let mut hist: BTreeMap<Verb, usize> = Verb::ACTIVE.iter().map(|&v| (v, 0)).collect();
    for seq in sequences {
        for t in seq {
            *hist.entry(t.verb()).or_default() += 1;
        }
    }
    hist
}
