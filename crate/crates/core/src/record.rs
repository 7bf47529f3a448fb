//! Canonical JSON-lines annotation records.
//!
//! One record per line:
//!
//! ```text
//! {"segment_id":"P01_01_0003","video_id":"P01_01","start_frame":300,"end_frame":400,
//!  "c_prev":{"right":"knife","left":null},"c_next":{"right":null,"left":null},
//!  "therbligs":[{"verb":"M","object":"knife"},{"verb":"R","object":"knife"}],
//!  "source":"human"}
//! ```
//!
//! Files start with the [`JSONL_HEADER`] comment line. Readers skip blank
//! lines and lines starting with `#`.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rules::{RuleViolation, Rules, ValidationReport};
use crate::vocab::{hand_to_set, ContactSet, HandContact, ObjectVocabulary, Therblig, TherbligSequence, Verb};

pub const JSONL_HEADER: &str = "# therblig-annotations v1";

/// Per-hand contact with object names.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedHands {
    #[serde(default)]
    pub right: Option<String>,
    #[serde(default)]
    pub left: Option<String>,
}

impl NamedHands {
    pub fn resolve(&self, vocab: &ObjectVocabulary) -> Result<HandContact> {
        let id = |n: &Option<String>| n.as_deref().map(|n| vocab.id(n)).transpose();
        Ok(HandContact::new(id(&self.right)?, id(&self.left)?))
    }

    pub fn from_hands(h: HandContact, vocab: &ObjectVocabulary) -> Result<Self> {
        let name = |o: Option<_>| -> Result<Option<String>> {
            o.map(|o| vocab.name(o).map(str::to_owned)).transpose()
        };
        Ok(Self {
            right: name(h.right)?,
            left: name(h.left)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedTherblig {
    pub verb: Verb,
    #[serde(default)]
    pub object: Option<String>,
}

impl NamedTherblig {
    pub fn resolve(&self, vocab: &ObjectVocabulary) -> Result<Therblig> {
        let object = self.object.as_deref().map(|n| vocab.id(n)).transpose()?;
        Therblig::from_parts(self.verb, object)
    }

    pub fn from_therblig(t: Therblig, vocab: &ObjectVocabulary) -> Result<Self> {
        Ok(Self {
            verb: t.verb(),
            object: t.object().map(|o| vocab.name(o).map(str::to_owned)).transpose()?,
        })
    }
}

pub fn resolve_sequence(steps: &[NamedTherblig], vocab: &ObjectVocabulary) -> Result<TherbligSequence> {
    TherbligSequence::new(steps.iter().map(|s| s.resolve(vocab)).collect::<Result<Vec<_>>>()?)
}

pub fn name_sequence(seq: &TherbligSequence, vocab: &ObjectVocabulary) -> Result<Vec<NamedTherblig>> {
    seq.iter().map(|&t| NamedTherblig::from_therblig(t, vocab)).collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    #[default]
    Human,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationRecord {
    pub segment_id: String,
    pub video_id: String,
    pub start_frame: u64,
    pub end_frame: u64,
    pub c_prev: NamedHands,
    pub c_next: NamedHands,
    pub therbligs: Vec<NamedTherblig>,
    #[serde(default)]
    pub source: Source,
}

/// A record with names resolved against a vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedRecord {
    pub c_prev: HandContact,
    pub c_next: HandContact,
    pub sequence: TherbligSequence,
}

impl ResolvedRecord {
    pub fn start_set(&self, vocab: &ObjectVocabulary) -> Result<ContactSet> {
        hand_to_set(self.c_prev, vocab)
    }

    pub fn end_set(&self, vocab: &ObjectVocabulary) -> Result<ContactSet> {
        hand_to_set(self.c_next, vocab)
    }

    pub fn validate(&self, rules: &Rules, vocab: &ObjectVocabulary) -> Result<ValidationReport> {
        rules.validate(&self.start_set(vocab)?, &self.sequence, &self.end_set(vocab)?)
    }
}

impl AnnotationRecord {
    pub fn resolve(&self, vocab: &ObjectVocabulary) -> Result<ResolvedRecord> {
        if self.start_frame >= self.end_frame {
            return Err(Error::Invalid(format!(
                "segment {}: start frame {} is not before end frame {}",
                self.segment_id, self.start_frame, self.end_frame
            )));
        }
        Ok(ResolvedRecord {
            c_prev: self.c_prev.resolve(vocab)?,
            c_next: self.c_next.resolve(vocab)?,
            sequence: resolve_sequence(&self.therbligs, vocab)?,
        })
    }
}

pub fn write_jsonl<W: Write>(mut out: W, records: &[AnnotationRecord]) -> std::io::Result<()> {
    writeln!(out, "{JSONL_HEADER}")?;
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<AnnotationRecord>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::Invalid(format!("line {}: {e}", i + 1)))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let rec = serde_json::from_str(line)
            .map_err(|e| Error::Invalid(format!("line {}: {e}", i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

/// A rule violation rendered with object names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NamedViolation {
    pub rule: u8,
    pub step: Option<usize>,
    pub therblig: Option<NamedTherblig>,
    pub message: String,
}

/// Validation report rendered with object names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportView {
    pub consistent: bool,
    pub violations: Vec<NamedViolation>,
    pub derived_states: Vec<Vec<String>>,
}

impl ReportView {
    pub fn new(report: &ValidationReport, vocab: &ObjectVocabulary) -> Result<Self> {
        let names = |s: &ContactSet| -> Result<Vec<String>> {
            s.iter().map(|o| vocab.name(o).map(str::to_owned)).collect()
        };
        Ok(Self {
            consistent: report.is_consistent(),
            violations: report
                .violations
                .iter()
                .map(|v| name_violation(v, vocab))
                .collect::<Result<_>>()?,
            derived_states: report.derived_states.iter().map(names).collect::<Result<_>>()?,
        })
    }
}

fn name_violation(v: &RuleViolation, vocab: &ObjectVocabulary) -> Result<NamedViolation> {
    let therblig = v.therblig.map(|t| NamedTherblig::from_therblig(t, vocab)).transpose()?;
    let message = match (&therblig, v.step) {
        (Some(NamedTherblig { verb, object: Some(obj) }), Some(step)) => match v.rule.number() {
            2 => format!("step {step}: cannot {} {obj}, it is already in contact", verb.name()),
            _ => format!("step {step}: cannot {} {obj}, it is not in contact", verb.name()),
        },
        _ => v.message.clone(),
    };
    Ok(NamedViolation {
        rule: v.rule.number(),
        step: v.step,
        therblig,
        message,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> ObjectVocabulary {
        ObjectVocabulary::new(["knife", "bowl"]).unwrap()
    }

    fn record() -> AnnotationRecord {
        AnnotationRecord {
            segment_id: "v1_0000".into(),
            video_id: "v1".into(),
            start_frame: 0,
            end_frame: 100,
            c_prev: NamedHands::default(),
            c_next: NamedHands {
                right: Some("knife".into()),
                left: None,
            },
            therbligs: vec![
                NamedTherblig { verb: Verb::Reach, object: Some("knife".into()) },
                NamedTherblig { verb: Verb::Grasp, object: Some("knife".into()) },
            ],
            source: Source::Human,
        }
    }

    #[test]
    fn record_roundtrip_and_validation() {
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &[record()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(JSONL_HEADER));
        let back = read_jsonl(text.as_bytes()).unwrap();
        assert_eq!(back, vec![record()]);
        let resolved = back[0].resolve(&vocab()).unwrap();
        assert!(resolved.validate(&Rules::default(), &vocab()).unwrap().is_consistent());
    }

    #[test]
    fn empty_file_is_header_only() {
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{JSONL_HEADER}\n"));
    }

    #[test]
    fn read_reports_line_numbers() {
        let err = read_jsonl("# header\n\n{not json}\n".as_bytes()).unwrap_err();
        assert!(err.to_string().starts_with("line 3"), "{err}");
        let unknown = r#"{"segment_id":"a","video_id":"v","start_frame":0,"end_frame":1,"c_prev":{},"c_next":{},"therbligs":[],"extra":1}"#;
        assert!(read_jsonl(unknown.as_bytes()).is_err());
    }

    #[test]
    fn resolve_rejects_bad_records() {
        let mut r = record();
        r.therbligs.push(NamedTherblig { verb: Verb::Move, object: Some("spoon".into()) });
        assert!(r.resolve(&vocab()).is_err());
        let mut r = record();
        r.therbligs.insert(0, NamedTherblig { verb: Verb::Null, object: None });
        assert!(matches!(r.resolve(&vocab()), Err(Error::NullInsideSequence(0))));
        let mut r = record();
        r.end_frame = 0;
        assert!(r.resolve(&vocab()).is_err());
    }

    #[test]
    fn report_view_uses_names() {
        let v = vocab();
        let mut r = record();
        r.therbligs.push(NamedTherblig { verb: Verb::Move, object: Some("bowl".into()) });
        let report = r.resolve(&v).unwrap().validate(&Rules::default(), &v).unwrap();
        let view = ReportView::new(&report, &v).unwrap();
        assert!(!view.consistent);
        assert_eq!(view.violations[0].rule, 3);
        assert_eq!(view.violations[0].step, Some(2));
        assert!(view.violations[0].message.contains("move bowl"));
        assert_eq!(view.derived_states[2], vec!["knife".to_string()]);
    }
}
