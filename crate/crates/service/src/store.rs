//! Append-only JSON-lines event log with an in-memory index.
//!
//! The first line of a log records the store configuration; every later line
//! is one event. On open the log is replayed and every event re-checked, so an
//! edited log that would admit an inconsistent annotation is refused. All
//! mutations run under the index write lock: check, append, then apply.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::Path;
use std::sync::{RwLock, RwLockReadGuard, RwLockWriteGuard};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use therblig_core::record::{
    name_sequence, resolve_sequence, AnnotationRecord, NamedHands, ReportView, Source,
};
use therblig_core::{hand_to_set, ContactSet, HandContact, ObjectVocabulary, Rules, TherbligSequence, DEFAULT_MAX_LEN};

use crate::consensus::{consensus, Consensus, Tally};
use crate::error::{Result, ServiceError};
use crate::ingest::parse_segments;
use crate::model::*;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoreConfig {
    pub vocabulary: ObjectVocabulary,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
    #[serde(default = "default_strict_hold")]
    pub strict_hold: bool,
}

fn default_max_len() -> usize {
    DEFAULT_MAX_LEN
}

fn default_strict_hold() -> bool {
    true
}

impl StoreConfig {
    pub fn new(vocabulary: ObjectVocabulary) -> Self {
        Self {
            vocabulary,
            max_len: DEFAULT_MAX_LEN,
            strict_hold: true,
        }
    }

    pub fn rules(&self) -> Rules {
        Rules::new(self.strict_hold, self.max_len)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum Event {
    Config(StoreConfig),
    Segment(SegmentRecord),
    ContactResponse(StoredResponse),
    Annotation(TherbligAnnotationRecord),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StoredResponse {
    task_id: String,
    worker: String,
    right: Option<String>,
    left: Option<String>,
    timestamp: u64,
}

#[derive(Debug, Clone)]
struct ContactSlot {
    task: ContactTask,
    workers: BTreeSet<String>,
    responses: Vec<HandContact>,
}

struct Index {
    config: StoreConfig,
    rules: Rules,
    segments: BTreeMap<String, SegmentRecord>,
    contacts: BTreeMap<(String, u64), ContactSlot>,
    annotations: BTreeMap<String, TherbligAnnotationRecord>,
    log: Option<File>,
}

pub struct Store {
    index: RwLock<Index>,
}

fn now_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

impl Index {
    fn new(config: StoreConfig, log: Option<File>) -> Self {
        Self {
            rules: config.rules(),
            config,
            segments: BTreeMap::new(),
            contacts: BTreeMap::new(),
            annotations: BTreeMap::new(),
            log,
        }
    }

    fn vocab(&self) -> &ObjectVocabulary {
        &self.config.vocabulary
    }

    fn slot(&self, task_id: &str) -> Result<&ContactSlot> {
        parse_contact_task_id(task_id)
            .and_then(|(video, frame)| self.contacts.get(&(video.to_owned(), frame)))
            .ok_or_else(|| ServiceError::NotFound {
                kind: "contact task",
                id: task_id.to_owned(),
            })
    }

    fn segment(&self, segment_id: &str) -> Result<&SegmentRecord> {
        self.segments.get(segment_id).ok_or_else(|| ServiceError::NotFound {
            kind: "segment",
            id: segment_id.to_owned(),
        })
    }

    fn resolved(&self, video: &str, frame: u64) -> Result<HandContact> {
        let id = contact_task_id(video, frame);
        consensus(&self.slot(&id)?.responses)
            .hands
            .ok_or(ServiceError::Stage1Incomplete(id))
    }

    fn consensus_pair(&self, seg: &SegmentRecord) -> Result<(HandContact, HandContact)> {
        Ok((
            self.resolved(&seg.video_id, seg.start_frame)?,
            self.resolved(&seg.video_id, seg.end_frame)?,
        ))
    }

    fn name_hands(&self, h: HandContact) -> NamedHands {
        NamedHands::from_hands(h, self.vocab()).expect("stored contacts use the store vocabulary")
    }

    fn check(&self, event: &Event) -> Result<()> {
        match event {
            Event::Config(c) if *c == self.config => Ok(()),
            Event::Config(_) => Err(ServiceError::ConfigMismatch("second configuration event".into())),
            Event::Segment(seg) => {
                if seg.start_frame >= seg.end_frame
                    || seg.segment_id != segment_id(&seg.video_id, seg.start_frame, seg.end_frame)
                {
                    return Err(ServiceError::BadRequest(format!("malformed segment {}", seg.segment_id)));
                }
                Ok(())
            }
            Event::ContactResponse(r) => {
                let slot = self.slot(&r.task_id)?;
                if slot.workers.contains(&r.worker) {
                    return Err(ServiceError::DuplicateResponse {
                        task: r.task_id.clone(),
                        worker: r.worker.clone(),
                    });
                }
                NamedHands { right: r.right.clone(), left: r.left.clone() }.resolve(self.vocab())?;
                Ok(())
            }
            Event::Annotation(a) => {
                let seg = self.segment(&a.segment_id)?;
                if self.annotations.contains_key(&a.segment_id) {
                    return Err(ServiceError::TaskClosed(a.segment_id.clone()));
                }
                let (prev, next) = self.consensus_pair(seg)?;
                if self.name_hands(prev) != a.consensus_prev || self.name_hands(next) != a.consensus_next {
                    return Err(ServiceError::BadRequest("annotation consensus does not match the log".into()));
                }
                let (c_prev, c_next, seq) = self.resolve_contacts(&a.c_prev, &a.c_next, &a.therbligs)?;
                let report = self.rules.validate(&c_prev, &seq, &c_next)?;
                if !report.is_consistent() {
                    return Err(ServiceError::BadRequest(format!(
                        "annotation for {} violates the contact rules",
                        a.segment_id
                    )));
                }
                Ok(())
            }
        }
    }

    fn resolve_contacts(
        &self,
        prev: &NamedHands,
        next: &NamedHands,
        steps: &[therblig_core::record::NamedTherblig],
    ) -> Result<(ContactSet, ContactSet, TherbligSequence)> {
        let vocab = self.vocab();
        let seq = resolve_sequence(steps, vocab)?;
        if seq.len() > self.config.max_len {
            return Err(therblig_core::Error::SequenceTooLong {
                len: seq.len(),
                max: self.config.max_len,
            }
            .into());
        }
        Ok((
            hand_to_set(prev.resolve(vocab)?, vocab)?,
            hand_to_set(next.resolve(vocab)?, vocab)?,
            seq,
        ))
    }

    fn apply(&mut self, event: Event) {
        match event {
            Event::Config(_) => {}
            Event::Segment(seg) => {
                for frame in [seg.start_frame, seg.end_frame] {
                    let key = (seg.video_id.clone(), frame);
                    let vocabulary = self.config.vocabulary.names().to_vec();
                    self.contacts.entry(key).or_insert_with(|| ContactSlot {
                        task: ContactTask {
                            task_id: contact_task_id(&seg.video_id, frame),
                            video_id: seg.video_id.clone(),
                            frame,
                            image: format!("{}/{frame:08}.jpg", seg.video_id),
                            clip: seg.clip.clone(),
                            vocabulary,
                        },
                        workers: BTreeSet::new(),
                        responses: Vec::new(),
                    });
                }
                self.segments.insert(seg.segment_id.clone(), seg);
            }
            Event::ContactResponse(r) => {
                let hands = NamedHands { right: r.right, left: r.left }
                    .resolve(&self.config.vocabulary)
                    .expect("checked before apply");
                let (video, frame) = parse_contact_task_id(&r.task_id).expect("checked before apply");
                let slot = self
                    .contacts
                    .get_mut(&(video.to_owned(), frame))
                    .expect("checked before apply");
                slot.workers.insert(r.worker);
                slot.responses.push(hands);
            }
            Event::Annotation(a) => {
                self.annotations.insert(a.segment_id.clone(), a);
            }
        }
    }

    fn append(&mut self, event: &Event) -> Result<()> {
        if let Some(log) = self.log.as_mut() {
            let mut line = serde_json::to_vec(event).map_err(std::io::Error::other)?;
            line.push(b'\n');
            log.write_all(&line)?;
            log.flush()?;
        }
        Ok(())
    }

    fn commit(&mut self, event: Event) -> Result<()> {
        self.check(&event)?;
        self.append(&event)?;
        self.apply(event);
        Ok(())
    }

    fn consensus_view(&self, task_id: &str, c: &Consensus, responses: usize) -> ConsensusView {
        let votes = |t: &Tally| {
            t.iter()
                .map(|(o, count)| Vote {
                    object: o.map(|o| self.vocab().name(o).expect("stored").to_owned()),
                    count,
                })
                .collect()
        };
        ConsensusView {
            task_id: task_id.to_owned(),
            status: c.status,
            hands: c.hands.map(|h| self.name_hands(h)),
            responses,
            support: Support {
                right: votes(&c.right),
                left: votes(&c.left),
            },
        }
    }

    fn therblig_task(&self, seg: &SegmentRecord) -> Result<TherbligTask> {
        let (prev, next) = self.consensus_pair(seg)?;
        Ok(TherbligTask {
            task_id: seg.segment_id.clone(),
            segment: seg.clone(),
            c_prev: self.name_hands(prev),
            c_next: self.name_hands(next),
            vocabulary: self.vocab().names().to_vec(),
            max_len: self.config.max_len,
        })
    }

    /// Open stage-2 task for `segment_id` plus its consensus contacts.
    fn open(&self, segment_id: &str) -> Result<(&SegmentRecord, HandContact, HandContact)> {
        let seg = self.segment(segment_id)?;
        if self.annotations.contains_key(segment_id) {
            return Err(ServiceError::TaskClosed(segment_id.to_owned()));
        }
        let (prev, next) = self.consensus_pair(seg)?;
        Ok((seg, prev, next))
    }
}

impl Store {
    /// A store without a backing file.
    pub fn in_memory(config: StoreConfig) -> Self {
        Self {
            index: RwLock::new(Index::new(config, None)),
        }
    }

    /// Opens or creates the log at `path`. A new log needs `config`; an
    /// existing one must match it when given.
    pub fn open(path: impl AsRef<Path>, config: Option<StoreConfig>) -> Result<Self> {
        let path = path.as_ref();
        let exists = path.metadata().map(|m| m.len() > 0).unwrap_or(false);
        if !exists {
            let config = config.ok_or_else(|| {
                ServiceError::ConfigMismatch(format!("{} is a new store and needs a vocabulary", path.display()))
            })?;
            let file = OpenOptions::new().create(true).append(true).open(path)?;
            let mut index = Index::new(config.clone(), Some(file));
            index.append(&Event::Config(config))?;
            return Ok(Self { index: RwLock::new(index) });
        }

        let mut text = String::new();
        File::open(path)?.read_to_string(&mut text)?;
        let terminated = text.ends_with('\n');
        let mut lines = text.lines().enumerate().peekable();
        let first: Event = match lines.next() {
            Some((_, line)) => serde_json::from_str(line).map_err(|e| ServiceError::CorruptLog {
                line: 1,
                message: e.to_string(),
            })?,
            None => unreachable!("non-empty file has a first line"),
        };
        let Event::Config(stored) = first else {
            return Err(ServiceError::CorruptLog {
                line: 1,
                message: "log does not start with a configuration event".into(),
            });
        };
        if let Some(given) = config {
            if given != stored {
                return Err(ServiceError::ConfigMismatch(format!(
                    "{} was created with a different vocabulary or rule settings",
                    path.display()
                )));
            }
        }
        let mut index = Index::new(stored, None);
        let mut torn = false;
        while let Some((i, line)) = lines.next() {
            if line.trim().is_empty() {
                continue;
            }
            let event: Event = match serde_json::from_str(line) {
                Ok(e) => e,
                // a partial final write from a crash
                Err(_) if lines.peek().is_none() && !terminated => {
                    torn = true;
                    break;
                }
                Err(e) => {
                    return Err(ServiceError::CorruptLog {
                        line: i + 1,
                        message: e.to_string(),
                    })
                }
            };
            index.check(&event).map_err(|e| ServiceError::CorruptLog {
                line: i + 1,
                message: e.to_string(),
            })?;
            index.apply(event);
        }
        let mut file = OpenOptions::new().append(true).open(path)?;
        if torn {
            file.set_len(text.rfind('\n').map_or(0, |i| i as u64 + 1))?;
        } else if !terminated {
            file.write_all(b"\n")?;
        }
        index.log = Some(file);
        Ok(Self { index: RwLock::new(index) })
    }

    fn read(&self) -> RwLockReadGuard<'_, Index> {
        self.index.read().unwrap_or_else(|e| e.into_inner())
    }

    fn write(&self) -> RwLockWriteGuard<'_, Index> {
        self.index.write().unwrap_or_else(|e| e.into_inner())
    }

    pub fn config(&self) -> StoreConfig {
        self.read().config.clone()
    }

    /// Adds a segment unless one with the same video and frame span exists.
    pub fn add_segment(&self, seg: SegmentRecord) -> Result<bool> {
        let mut index = self.write();
        if index.segments.contains_key(&seg.segment_id) {
            return Ok(false);
        }
        index.commit(Event::Segment(seg))?;
        Ok(true)
    }

    pub fn ingest_csv<R: Read>(&self, input: R) -> Result<IngestReport> {
        let mut report = IngestReport::default();
        for row in parse_segments(input)? {
            match row {
                Ok(seg) => match self.add_segment(seg)? {
                    true => report.added += 1,
                    false => report.duplicates += 1,
                },
                Err(e) => report.errors.push(e),
            }
        }
        Ok(report)
    }

    pub fn segments(&self) -> Vec<SegmentRecord> {
        self.read().segments.values().cloned().collect()
    }

    /// First unresolved contact task the worker has not answered yet.
    pub fn next_contact_task(&self, worker: &str) -> Option<ContactTask> {
        let index = self.read();
        let task = index
            .contacts
            .values()
            .find(|s| !s.workers.contains(worker) && !consensus(&s.responses).is_resolved())
            .map(|s| s.task.clone());
        task
    }

    pub fn contact_consensus(&self, task_id: &str) -> Result<ConsensusView> {
        let index = self.read();
        let slot = index.slot(task_id)?;
        Ok(index.consensus_view(task_id, &consensus(&slot.responses), slot.responses.len()))
    }

    pub fn submit_contact_response(&self, task_id: &str, r: ContactResponse) -> Result<ConsensusView> {
        if r.worker.trim().is_empty() {
            return Err(ServiceError::BadRequest("worker id is empty".into()));
        }
        let mut index = self.write();
        index.commit(Event::ContactResponse(StoredResponse {
            task_id: task_id.to_owned(),
            worker: r.worker,
            right: r.right,
            left: r.left,
            timestamp: r.timestamp.unwrap_or_else(now_millis),
        }))?;
        let slot = index.slot(task_id)?;
        Ok(index.consensus_view(task_id, &consensus(&slot.responses), slot.responses.len()))
    }

    pub fn open_therblig_task(&self, segment_id: &str) -> Result<TherbligTask> {
        let index = self.read();
        let (seg, _, _) = index.open(segment_id)?;
        index.therblig_task(seg)
    }

    /// First unannotated segment whose bracketing contacts are resolved.
    /// Assignment does not depend on the worker.
    pub fn next_therblig_task(&self) -> Option<TherbligTask> {
        let index = self.read();
        let task = index
            .segments
            .values()
            .filter(|s| !index.annotations.contains_key(&s.segment_id))
            .find_map(|s| index.therblig_task(s).ok());
        task
    }

    pub fn next_candidates(&self, segment_id: &str, req: &CandidateRequest) -> Result<CandidateResponse> {
        let index = self.read();
        let (_, prev, next) = index.open(segment_id)?;
        let prev = req.c_prev.clone().unwrap_or_else(|| index.name_hands(prev));
        let next = req.c_next.clone().unwrap_or_else(|| index.name_hands(next));
        let (c_prev, c_next, partial) = index.resolve_contacts(&prev, &next, &req.partial)?;
        let remaining = index.config.max_len - partial.len();
        if remaining == 0 {
            return Err(ServiceError::BadRequest(format!(
                "partial sequence already has {} steps",
                index.config.max_len
            )));
        }
        let report = index.rules.validate(&c_prev, &partial, &c_next)?;
        if report.violations.iter().any(|v| v.step.is_some()) {
            return Err(ServiceError::InconsistentPartial(Box::new(ReportView::new(&report, index.vocab())?)));
        }
        let state = report.final_state().clone();
        let vocab = index.vocab();
        let candidates = index
            .rules
            .candidates_with_goal(&state, &c_next, remaining, vocab)?
            .into_iter()
            .map(|t| therblig_core::record::NamedTherblig::from_therblig(t, vocab))
            .collect::<therblig_core::Result<_>>()?;
        Ok(CandidateResponse {
            candidates,
            remaining,
            state: state.iter().map(|o| vocab.name(o).map(str::to_owned)).collect::<therblig_core::Result<_>>()?,
        })
    }

    /// Re-validates a stage-2 submission. Accepted records are persisted and
    /// close the task; rejected ones leave it open.
    pub fn submit_annotation(&self, segment_id: &str, sub: Submission) -> Result<SubmitOutcome> {
        if sub.worker.trim().is_empty() {
            return Err(ServiceError::BadRequest("worker id is empty".into()));
        }
        let mut index = self.write();
        let (_, prev, next) = index.open(segment_id)?;
        let (consensus_prev, consensus_next) = (index.name_hands(prev), index.name_hands(next));
        let c_prev = sub.c_prev.unwrap_or_else(|| consensus_prev.clone());
        let c_next = sub.c_next.unwrap_or_else(|| consensus_next.clone());
        let (start, end, seq) = index.resolve_contacts(&c_prev, &c_next, &sub.therbligs)?;
        let report = index.rules.validate(&start, &seq, &end)?;
        if !report.is_consistent() {
            return Ok(SubmitOutcome::Rejected {
                report: ReportView::new(&report, index.vocab())?,
            });
        }
        let record = TherbligAnnotationRecord {
            segment_id: segment_id.to_owned(),
            worker: sub.worker,
            c_prev,
            c_next,
            consensus_prev,
            consensus_next,
            therbligs: name_sequence(&seq, index.vocab())?,
            timestamp: now_millis(),
        };
        index.commit(Event::Annotation(record.clone()))?;
        Ok(SubmitOutcome::Accepted { record: Box::new(record) })
    }

    pub fn annotations(&self) -> Vec<TherbligAnnotationRecord> {
        self.read().annotations.values().cloned().collect()
    }

    /// Accepted annotations in the canonical record format, ordered by
    /// segment id, optionally restricted to one video.
    pub fn export(&self, video: Option<&str>) -> Vec<AnnotationRecord> {
        let index = self.read();
        index
            .annotations
            .values()
            .filter_map(|a| {
                let seg = &index.segments[&a.segment_id];
                video.is_none_or(|v| v == seg.video_id).then(|| AnnotationRecord {
                    segment_id: a.segment_id.clone(),
                    video_id: seg.video_id.clone(),
                    start_frame: seg.start_frame,
                    end_frame: seg.end_frame,
                    c_prev: a.c_prev.clone(),
                    c_next: a.c_next.clone(),
                    therbligs: a.therbligs.clone(),
                    source: Source::Human,
                })
            })
            .collect()
    }

    pub fn export_to(&self, video: Option<&str>, path: impl AsRef<Path>) -> Result<usize> {
        let records = self.export(video);
        let file = File::create(path)?;
        therblig_core::record::write_jsonl(std::io::BufWriter::new(file), &records)?;
        Ok(records.len())
    }
}
