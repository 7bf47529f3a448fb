use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use therblig_core::metrics::{
    elementwise_accuracy, f1_at_k, frame_accuracy, logical_consistency, segmental_edit_score, sequence_levenshtein,
};
use therblig_core::record::AnnotationRecord;
use therblig_core::{ObjectVocabulary, Rules, TherbligSequence};

use crate::input::FrameLabeling;

/// Prints `value` as JSON. A closed stdout (e.g. `| head`) is not an error.
pub fn emit(value: &impl Serialize) {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

#[derive(Debug, Default, Clone, Serialize)]
pub struct TherbligScores {
    pub segments: usize,
    pub elementwise_accuracy: f64,
    pub levenshtein: f64,
    pub logical_consistency: f64,
}

#[derive(Default)]
struct Sums {
    n: usize,
    acc: f64,
    lev: f64,
    cons: f64,
}

impl Sums {
    fn scores(&self) -> TherbligScores {
        let d = self.n.max(1) as f64;
        TherbligScores {
            segments: self.n,
            elementwise_accuracy: self.acc / d,
            levenshtein: self.lev / d,
            logical_consistency: self.cons / d,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct TherbligReport {
    pub kind: &'static str,
    pub n: usize,
    /// Ground-truth segments without a prediction, scored as empty predictions.
    pub missing_predictions: usize,
    pub unmatched_predictions: usize,
    #[serde(flatten)]
    pub overall: TherbligScores,
    pub per_video: BTreeMap<String, TherbligScores>,
}

/// Scores predicted Therblig sequences against ground truth matched by
/// segment id. Consistency is judged against the ground-truth contacts.
pub fn therblig_report(
    pred: &[AnnotationRecord],
    gt: &[AnnotationRecord],
    vocab: &ObjectVocabulary,
    rules: &Rules,
) -> Result<TherbligReport> {
    let by_id: HashMap<&str, &AnnotationRecord> = pred.iter().map(|r| (r.segment_id.as_str(), r)).collect();
    let (mut total, mut videos) = (Sums::default(), BTreeMap::<String, Sums>::new());
    let mut missing = 0;
    for g in gt {
        let ctx = || format!("segment {}", g.segment_id);
        let truth = g.resolve(vocab).with_context(ctx)?;
        let predicted = match by_id.get(g.segment_id.as_str()) {
            Some(p) => p.resolve(vocab).with_context(ctx)?.sequence,
            None => {
                missing += 1;
                TherbligSequence::empty()
            }
        };
        let (start, end) = (truth.start_set(vocab)?, truth.end_set(vocab)?);
        let acc = 100.0 * elementwise_accuracy(&predicted, &truth.sequence, rules.max_len);
        let lev = sequence_levenshtein(&predicted, &truth.sequence) as f64;
        let cons = logical_consistency(&predicted, &start, &end, rules).with_context(ctx)?;
        for s in [&mut total, videos.entry(g.video_id.clone()).or_default()] {
            s.n += 1;
            s.acc += acc;
            s.lev += lev;
            s.cons += cons;
        }
    }
    let gt_ids: std::collections::HashSet<&str> = gt.iter().map(|r| r.segment_id.as_str()).collect();
    Ok(TherbligReport {
        kind: "therblig",
        n: rules.max_len,
        missing_predictions: missing,
        unmatched_predictions: pred.iter().filter(|p| !gt_ids.contains(p.segment_id.as_str())).count(),
        overall: total.scores(),
        per_video: videos.into_iter().map(|(k, v)| (k, v.scores())).collect(),
    })
}

pub const F1_THRESHOLDS: [f64; 3] = [10.0, 25.0, 50.0];

#[derive(Debug, Default, Clone, Serialize)]
pub struct FrameScores {
    pub frames: usize,
    pub accuracy: f64,
    pub edit: f64,
    #[serde(rename = "f1@10")]
    pub f1_10: f64,
    #[serde(rename = "f1@25")]
    pub f1_25: f64,
    #[serde(rename = "f1@50")]
    pub f1_50: f64,
}

#[derive(Debug, Serialize)]
pub struct FrameReport {
    pub kind: &'static str,
    pub videos: usize,
    /// Unweighted mean over videos; accuracy is frame-weighted.
    #[serde(flatten)]
    pub overall: FrameScores,
    pub per_video: BTreeMap<String, FrameScores>,
}

pub fn frame_report(pred: &[FrameLabeling], gt: &[FrameLabeling]) -> Result<FrameReport> {
    let by_id: HashMap<&str, &FrameLabeling> = pred.iter().map(|p| (p.video_id.as_str(), p)).collect();
    let mut per_video = BTreeMap::new();
    let (mut frames, mut correct) = (0usize, 0.0);
    for g in gt {
        let Some(p) = by_id.get(g.video_id.as_str()) else {
            bail!("no prediction for video {}", g.video_id);
        };
        let ctx = || format!("video {}", g.video_id);
        let f1 = |k| f1_at_k(&p.labels, &g.labels, k).map(|s| 100.0 * s.f1).with_context(ctx);
        let scores = FrameScores {
            frames: g.labels.len(),
            accuracy: 100.0 * frame_accuracy(&p.labels, &g.labels).with_context(ctx)?,
            edit: segmental_edit_score(&p.labels, &g.labels).with_context(ctx)?,
            f1_10: f1(F1_THRESHOLDS[0])?,
            f1_25: f1(F1_THRESHOLDS[1])?,
            f1_50: f1(F1_THRESHOLDS[2])?,
        };
        frames += scores.frames;
        correct += scores.accuracy * scores.frames as f64;
        per_video.insert(g.video_id.clone(), scores);
    }
    let d = per_video.len().max(1) as f64;
    let mean = |f: fn(&FrameScores) -> f64| per_video.values().map(f).sum::<f64>() / d;
    let overall = FrameScores {
        frames,
        accuracy: correct / frames.max(1) as f64,
        edit: mean(|s| s.edit),
        f1_10: mean(|s| s.f1_10),
        f1_25: mean(|s| s.f1_25),
        f1_50: mean(|s| s.f1_50),
    };
    Ok(FrameReport {
        kind: "frames",
        videos: per_video.len(),
        overall,
        per_video,
    })
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &BTreeMap<String, T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    for (i, (video_id, scores)) in rows.iter().enumerate() {
        let serde_json::Value::Object(fields) = serde_json::to_value(scores)? else {
            bail!("scores must serialize as an object");
        };
        if i == 0 {
            w.write_record(std::iter::once("video_id").chain(fields.keys().map(String::as_str)))?;
        }
        let values = fields.values().map(|v| v.to_string());
        w.write_record(std::iter::once(video_id.clone()).chain(values))?;
    }
    w.flush()?;
    Ok(())
}
