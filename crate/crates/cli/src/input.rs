use std::collections::BTreeSet;
use std::fs;
use std::io::BufReader;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use therblig_core::record::{read_jsonl, AnnotationRecord};
use therblig_core::ObjectVocabulary;

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

pub fn load_vocab(path: &Path) -> Result<ObjectVocabulary> {
    ObjectVocabulary::from_text(&read_text(path)?).with_context(|| format!("vocabulary {}", path.display()))
}

pub fn load_records(path: &Path) -> Result<Vec<AnnotationRecord>> {
    let file = fs::File::open(path).with_context(|| format!("cannot read {}", path.display()))?;
    read_jsonl(BufReader::new(file)).with_context(|| format!("{}", path.display()))
}

/// The given vocabulary, or one made of every object named in `records`.
pub fn vocab_for<'a>(
    given: Option<&Path>,
    records: impl IntoIterator<Item = &'a AnnotationRecord>,
) -> Result<ObjectVocabulary> {
    if let Some(path) = given {
        return load_vocab(path);
    }
    let mut names = BTreeSet::new();
    for r in records {
        let hands = [&r.c_prev, &r.c_next];
        names.extend(hands.iter().flat_map(|h| [h.right.as_ref(), h.left.as_ref()]).flatten().cloned());
        names.extend(r.therbligs.iter().filter_map(|t| t.object.clone()));
    }
    if names.is_empty() {
        bail!("the records name no objects; pass --vocab");
    }
    Ok(ObjectVocabulary::new(names)?)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameLabeling {
    pub video_id: String,
    pub labels: Vec<String>,
}

pub fn load_frame_labelings(path: &Path) -> Result<Vec<FrameLabeling>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        out.push(serde_json::from_str(line).with_context(|| format!("{} line {}", path.display(), i + 1))?);
    }
    Ok(out)
}
