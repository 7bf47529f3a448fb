//! Sequence-level and frame-level evaluation metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rules::Rules;
use crate::vocab::{ContactSet, Therblig, TherbligSequence};

/// Fraction of the `n` null-padded slots where prediction and ground truth
/// hold the same tuple. Null matches null.
pub fn elementwise_accuracy(pred: &TherbligSequence, gt: &TherbligSequence, n: usize) -> f64 {
    let slots = n.max(pred.len()).max(gt.len());
    if slots == 0 {
        return 1.0;
    }
    let (p, g) = (pred.padded(slots), gt.padded(slots));
    let hits = p.iter().zip(&g).filter(|(a, b)| a == b).count();
    hits as f64 / slots as f64
}

/// Unit-cost insert/delete/substitute distance.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let next = (diag + usize::from(x != y)).min(row[j] + 1).min(row[j + 1] + 1);
            diag = row[j + 1];
            row[j + 1] = next;
        }
    }
    row[b.len()]
}

/// Levenshtein distance between two therblig sequences, null padding ignored.
pub fn sequence_levenshtein(pred: &TherbligSequence, gt: &TherbligSequence) -> usize {
    let strip = |s: &TherbligSequence| -> Vec<Therblig> {
        s.iter().copied().filter(|t| !t.is_null()).collect()
    };
    levenshtein(&strip(pred), &strip(gt))
}

/// Rule 1-3 violations of `pred` divided by its non-null length (at least 1).
pub fn logical_consistency(
    pred: &TherbligSequence,
    c_start: &ContactSet,
    c_end: &ContactSet,
    rules: &Rules,
) -> Result<f64> {
    let report = rules.validate(c_start, pred, c_end)?;
    Ok(report.violations.len() as f64 / pred.len().max(1) as f64)
}

/// Fraction of frames with matching labels.
pub fn frame_accuracy<L: PartialEq>(pred: &[L], gt: &[L]) -> Result<f64> {
    check_frames(pred, gt)?;
    let hits = pred.iter().zip(gt).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / gt.len() as f64)
}

fn check_frames<L>(pred: &[L], gt: &[L]) -> Result<()> {
    if gt.is_empty() || pred.is_empty() {
        return Err(Error::Invalid("frame labelings must be non-empty".into()));
    }
    if pred.len() != gt.len() {
        return Err(Error::Dimension {
            what: "frame count",
            expected: gt.len(),
            got: pred.len(),
        });
    }
    Ok(())
}

/// A maximal run of one label over frames `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment<L> {
    pub label: L,
    pub start: usize,
    pub end: usize,
}

impl<L> Segment<L> {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    fn iou(&self, other: &Segment<L>) -> f64 {
        let inter = self.end.min(other.end).saturating_sub(self.start.max(other.start));
        let union = self.end.max(other.end) - self.start.min(other.start);
        inter as f64 / union as f64
    }
}

pub fn segments_from_frames<L: PartialEq + Clone>(frames: &[L]) -> Vec<Segment<L>> {
    let mut out: Vec<Segment<L>> = Vec::new();
    for (i, label) in frames.iter().enumerate() {
        match out.last_mut() {
            Some(seg) if &seg.label == label => seg.end = i + 1,
            _ => out.push(Segment {
                label: label.clone(),
                start: i,
                end: i + 1,
            }),
        }
    }
    out
}

pub fn frames_from_segments<L: Clone>(segments: &[Segment<L>]) -> Vec<L> {
    segments
        .iter()
        .flat_map(|s| std::iter::repeat_n(s.label.clone(), s.len()))
        .collect()
}

/// Levenshtein distance between the segment label strings.
pub fn segmental_edit_distance<L: PartialEq + Clone>(pred: &[L], gt: &[L]) -> Result<usize> {
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::Invalid("frame labelings must be non-empty".into()));
    }
    let labels = |f: &[L]| -> Vec<L> { segments_from_frames(f).into_iter().map(|s| s.label).collect() };
    Ok(levenshtein(&labels(pred), &labels(gt)))
}

/// `100 * (1 - edit / max(#segments))`.
pub fn segmental_edit_score<L: PartialEq + Clone>(pred: &[L], gt: &[L]) -> Result<f64> {
    let dist = segmental_edit_distance(pred, gt)?;
    let longest = segments_from_frames(pred).len().max(segments_from_frames(gt).len());
    Ok(100.0 * (1.0 - dist as f64 / longest as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentF1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Segmental F1 at overlap threshold `k` percent.
///
/// Predicted segments are visited in temporal order; each is matched to the
/// unmatched same-label ground-truth segment of highest IoU. The match is a
/// true positive (and consumes that segment) when the IoU reaches `k / 100`,
/// otherwise the prediction is a false positive.
pub fn f1_at_k<L: PartialEq + Clone>(pred: &[L], gt: &[L], k: f64) -> Result<SegmentF1> {
    check_frames(pred, gt)?;
    if !(k > 0.0 && k < 100.0) {
        return Err(Error::Invalid(format!("overlap threshold {k} outside (0, 100)")));
    }
    let threshold = k / 100.0;
    let pred_segs = segments_from_frames(pred);
    let gt_segs = segments_from_frames(gt);
    let mut matched = vec![false; gt_segs.len()];
    let mut tp = 0usize;
    for p in &pred_segs {
        let best = gt_segs
            .iter()
            .enumerate()
            .filter(|(j, g)| !matched[*j] && g.label == p.label)
            .map(|(j, g)| (j, p.iou(g)))
            .fold(None, |best: Option<(usize, f64)>, (j, iou)| match best {
                Some((_, b)) if b >= iou => best,
                _ => Some((j, iou)),
            });
        if let Some((j, iou)) = best {
            if iou >= threshold {
                matched[j] = true;
                tp += 1;
            }
        }
    }
    let precision = tp as f64 / pred_segs.len() as f64;
    let recall = tp as f64 / gt_segs.len() as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(SegmentF1 {
        precision,
        recall,
        f1,
    })
}
