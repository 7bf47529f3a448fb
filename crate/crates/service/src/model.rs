//! Request, response and stored record types of the annotation service.

use serde::{Deserialize, Serialize};
use therblig_core::record::{NamedHands, NamedTherblig};

use crate::consensus::ConsensusStatus;

/// One action segment, a chunk of video bracketed by two contact states.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentRecord {
    pub segment_id: String,
    pub video_id: String,
    pub start_frame: u64,
    pub end_frame: u64,
    pub image: String,
    pub clip: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verb: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noun: Option<String>,
}

impl SegmentRecord {
    pub fn new(video_id: &str, start_frame: u64, end_frame: u64) -> Self {
        Self {
            segment_id: segment_id(video_id, start_frame, end_frame),
            video_id: video_id.to_owned(),
            start_frame,
            end_frame,
            image: format!("{video_id}/{end_frame:08}.jpg"),
            clip: format!("{video_id}/{start_frame:08}_{end_frame:08}.mp4"),
            verb: None,
            noun: None,
        }
    }
}

pub fn segment_id(video_id: &str, start_frame: u64, end_frame: u64) -> String {
    format!("{video_id}_{start_frame:08}_{end_frame:08}")
}

/// Contact tasks are anchored at segment boundary frames.
pub fn contact_task_id(video_id: &str, frame: u64) -> String {
    format!("{video_id}@{frame}")
}

pub fn parse_contact_task_id(id: &str) -> Option<(&str, u64)> {
    let (video, frame) = id.rsplit_once('@')?;
    Some((video, frame.parse().ok()?))
}

/// Stage-1 payload: which objects are in contact at `frame`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContactTask {
    pub task_id: String,
    pub video_id: String,
    pub frame: u64,
    pub image: String,
    pub clip: String,
    pub vocabulary: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactResponse {
    pub worker: String,
    #[serde(default)]
    pub right: Option<String>,
    #[serde(default)]
    pub left: Option<String>,
    /// Milliseconds since the Unix epoch; filled in by the server if absent.
    #[serde(default)]
    pub timestamp: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    pub object: Option<String>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Support {
    pub right: Vec<Vote>,
    pub left: Vec<Vote>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusView {
    pub task_id: String,
    pub status: ConsensusStatus,
    pub hands: Option<NamedHands>,
    pub responses: usize,
    pub support: Support,
}

/// Stage-2 payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TherbligTask {
    pub task_id: String,
    pub segment: SegmentRecord,
    pub c_prev: NamedHands,
    pub c_next: NamedHands,
    pub vocabulary: Vec<String>,
    pub max_len: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateRequest {
    /// Corrected contacts; the consensus is used when absent.
    #[serde(default)]
    pub c_prev: Option<NamedHands>,
    #[serde(default)]
    pub c_next: Option<NamedHands>,
    #[serde(default)]
    pub partial: Vec<NamedTherblig>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateResponse {
    pub candidates: Vec<NamedTherblig>,
    pub remaining: usize,
    pub state: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Submission {
    pub worker: String,
    #[serde(default)]
    pub c_prev: Option<NamedHands>,
    #[serde(default)]
    pub c_next: Option<NamedHands>,
    pub therbligs: Vec<NamedTherblig>,
}

/// An accepted stage-2 annotation. Both the corrected contacts and the
/// stage-1 consensus they replace are kept.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TherbligAnnotationRecord {
    pub segment_id: String,
    pub worker: String,
    pub c_prev: NamedHands,
    pub c_next: NamedHands,
    pub consensus_prev: NamedHands,
    pub consensus_next: NamedHands,
    pub therbligs: Vec<NamedTherblig>,
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SubmitOutcome {
    Accepted { record: Box<TherbligAnnotationRecord> },
    Rejected { report: therblig_core::record::ReportView },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub added: usize,
    pub duplicates: usize,
    pub errors: Vec<RowError>,
}
