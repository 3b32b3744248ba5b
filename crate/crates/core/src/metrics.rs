//! Detection metrics: center-distance box matching, average precision,
//! F1-optimal score thresholds, and threshold application.
//!
//! Matching is greedy in descending score order with nuScenes-style 2D
//! center distance. A key property used throughout: because matching
//! processes predictions in score order, the matches of the top-k
//! predictions do not depend on lower-scored predictions, so one matching
//! pass yields the TP/FP labels for every score threshold at once.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{ClassName, Dataset, ObjectBox, Sample, Submission};
use crate::stats;

/// Matching distances averaged by [`mean_ap`], meters.
pub const DEFAULT_MATCH_DISTANCES: [f64; 4] = [0.5, 1.0, 2.0, 4.0];
/// Single matching distance used for F1 threshold selection, meters.
pub const DEFAULT_F1_MATCH_DISTANCE: f64 = 2.0;

/// One matched (ground truth, prediction) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchPair {
    /// Index into the ground-truth list passed to [`match_boxes`].
    pub gt: usize,
    /// Index into the prediction list passed to [`match_boxes`].
    pub pred: usize,
    /// Center distance, meters.
    pub distance: f64,
}

/// Result of matching one sample's boxes for one class.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub pairs: Vec<MatchPair>,
    pub unmatched_gt: Vec<usize>,
    pub unmatched_pred: Vec<usize>,
}

/// Greedily match same-class predictions to ground truth by center distance.
///
/// Predictions are processed in descending score order (ties by lower index);
/// each one takes the nearest still-unmatched ground-truth box within
/// `dist_threshold` (distance ties by lower ground-truth index). Indices in
/// the result refer to the input slices. Boxes of other classes are ignored.
pub fn match_boxes(
    gt: &[ObjectBox],
    pred: &[ObjectBox],
    class: &ClassName,
    dist_threshold: f64,
) -> MatchResult {
    let gt_idx: Vec<usize> = (0..gt.len()).filter(|&i| &gt[i].class_name == class).collect();
    let mut pred_idx: Vec<usize> =
        (0..pred.len()).filter(|&i| &pred[i].class_name == class).collect();
    pred_idx.sort_by(|&a, &b| {
        let sa = pred[a].score.unwrap_or(0.0);
        let sb = pred[b].score.unwrap_or(0.0);
        sb.total_cmp(&sa).then(a.cmp(&b))
    });

    let mut gt_taken = vec![false; gt_idx.len()];
    let mut pairs = Vec::new();
    let mut unmatched_pred = Vec::new();

    for &pi in &pred_idx {
        let (px, py) = pred[pi].center();
        let mut best: Option<(f64, usize)> = None; // (distance, position in gt_idx)
        for (slot, &gi) in gt_idx.iter().enumerate() {
            if gt_taken[slot] {
                continue;
            }
            let (gx, gy) = gt[gi].center();
            let d = (px - gx).hypot(py - gy);
            if d > dist_threshold {
                continue;
            }
            let better = match best {
                None => true,
                Some((bd, _)) => d < bd, // distance tie keeps the lower gt index
            };
            if better {
                best = Some((d, slot));
            }
        }
        match best {
            Some((d, slot)) => {
                gt_taken[slot] = true;
                pairs.push(MatchPair {
                    gt: gt_idx[slot],
                    pred: pi,
                    distance: d,
                });
            }
            None => unmatched_pred.push(pi),
        }
    }
    unmatched_pred.sort_unstable();

    let unmatched_gt = gt_idx
        .iter()
        .enumerate()
        .filter(|&(slot, _)| !gt_taken[slot])
        .map(|(_, &gi)| gi)
        .collect();

    MatchResult {
        pairs,
        unmatched_gt,
        unmatched_pred,
    }
}

/// `(score, is_true_positive)` for every prediction of `class` over the given
/// samples, plus the total ground-truth count. Marks come back sorted by
/// descending score.
fn detection_marks<'a>(
    samples: impl Iterator<Item = &'a Sample>,
    submission: &Submission,
    class: &ClassName,
    dist_threshold: f64,
) -> (Vec<(f64, bool)>, usize) {
    let mut marks = Vec::new();
    let mut n_gt = 0usize;
    for sample in samples {
        let preds = submission.boxes_for(&sample.sample_id);
        let mr = match_boxes(&sample.gt_boxes, preds, class, dist_threshold);
        n_gt += sample.gt_boxes.iter().filter(|b| &b.class_name == class).count();
        let mut matched = vec![false; preds.len()];
        for p in &mr.pairs {
            matched[p.pred] = true;
        }
        for (i, b) in preds.iter().enumerate() {
            if &b.class_name == class {
                marks.push((b.score.unwrap_or(0.0), matched[i]));
            }
        }
    }
    marks.sort_by(|a, b| b.0.total_cmp(&a.0));
    (marks, n_gt)
}

fn ap_from_marks(marks: &[(f64, bool)], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return 0.0;
    }
    if marks.is_empty() {
        return 0.0;
    }
    let mut recalls = Vec::with_capacity(marks.len());
    let mut precisions = Vec::with_capacity(marks.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for &(_, is_tp) in marks {
        if is_tp {
            tp += 1;
        } else {
            fp += 1;
        }
        recalls.push(tp as f64 / n_gt as f64);
        precisions.push(tp as f64 / (tp + fp) as f64);
    }
    // Interpolated precision: max precision at any recall >= r.
    let mut interp = precisions.clone();
    for i in (0..interp.len() - 1).rev() {
        interp[i] = interp[i].max(interp[i + 1]);
    }
    // 101-point integration over recall 0.00, 0.01, ..., 1.00.
    let mut total = 0.0;
    let mut rank = 0usize;
    for r in 0..=100 {
        let target = r as f64 / 100.0;
        while rank < recalls.len() && recalls[rank] < target {
            rank += 1;
        }
        if rank < recalls.len() {
            total += interp[rank];
        }
    }
    total / 101.0
}

/// Average precision of one class at one matching distance: area under the
/// interpolated precision-recall curve of score-ranked detections,
/// integrated at 101 recall points. Zero when the class has no ground truth.
pub fn average_precision(
    dataset: &Dataset,
    submission: &Submission,
    class: &ClassName,
    dist_threshold: f64,
) -> f64 {
    let (marks, n_gt) = detection_marks(dataset.samples(), submission, class, dist_threshold);
    ap_from_marks(&marks, n_gt)
}

/// Sorted class names present in the ground truth of the given samples.
fn gt_classes<'a>(samples: impl Iterator<Item = &'a Sample>) -> Vec<ClassName> {
    let mut set = std::collections::BTreeSet::new();
    for s in samples {
        for b in &s.gt_boxes {
            set.insert(b.class_name.clone());
        }
    }
    set.into_iter().collect()
}

/// Mean AP over the classes present in the ground truth and over the given
/// matching distances.
pub fn mean_ap(dataset: &Dataset, submission: &Submission, dist_thresholds: &[f64]) -> f64 {
    let samples: Vec<&Sample> = dataset.samples().collect();
    mean_ap_over(&samples, submission, dist_thresholds)
}

/// [`mean_ap`] restricted to a sample subset; used by the binned analyses.
pub fn mean_ap_over(samples: &[&Sample], submission: &Submission, dist_thresholds: &[f64]) -> f64 {
    assert!(!dist_thresholds.is_empty(), "need at least one matching distance");
    let classes = gt_classes(samples.iter().copied());
    if classes.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for class in &classes {
        for &dist in dist_thresholds {
            let (marks, n_gt) =
                detection_marks(samples.iter().copied(), submission, class, dist);
            total += ap_from_marks(&marks, n_gt);
        }
    }
    total / (classes.len() * dist_thresholds.len()) as f64
}

/// The score threshold maximizing dataset-level F1 for one class.
///
/// Candidates are the distinct observed scores of that class plus 0; ties
/// break toward the larger threshold (fewer boxes kept). Returns 0 when the
/// class has no predictions.
pub fn f1_optimal_threshold(
    dataset: &Dataset,
    submission: &Submission,
    class: &ClassName,
    dist_threshold: f64,
) -> f64 {
    let (marks, n_gt) = detection_marks(dataset.samples(), submission, class, dist_threshold);
    if marks.is_empty() {
        return 0.0;
    }
    let mut best: Option<(f64, f64)> = None; // (f1, threshold)
    let mut consider = |f1: f64, threshold: f64| {
        if best.map_or(true, |(bf, _)| f1 > bf) {
            best = Some((f1, threshold));
        }
    };
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < marks.len() {
        let score = marks[i].0;
        // Include the whole tie group: the kept set at threshold t is
        // everything with score >= t.
        while i < marks.len() && marks[i].0 == score {
            if marks[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let f1 = f1_score(tp, fp, n_gt - tp.min(n_gt));
        consider(f1, score);
    }
    if marks.last().map(|&(s, _)| s != 0.0).unwrap_or(false) {
        // Threshold 0 keeps the same full set as the smallest score; it only
        // differs as a distinct candidate label.
        let f1 = f1_score(tp, fp, n_gt - tp.min(n_gt));
        consider(f1, 0.0);
    }
    best.map(|(_, t)| t).unwrap_or(0.0)
}

fn f1_score(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Per-class optimal score thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ThresholdTable(BTreeMap<ClassName, f64>);

impl ThresholdTable {
    pub fn new(entries: BTreeMap<ClassName, f64>) -> Result<Self> {
        for (class, &t) in &entries {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Validation(format!(
                    "threshold {t} for class `{class}` outside [0, 1]"
                )));
            }
        }
        Ok(Self(entries))
    }

    pub fn get(&self, class: &ClassName) -> Option<f64> {
        self.0.get(class).copied()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&ClassName, f64)> {
        self.0.iter().map(|(c, &t)| (c, t))
    }

    /// Copy of the table with one class overridden.
    pub fn with_override(&self, class: &ClassName, threshold: f64) -> Result<Self> {
        let mut m = self.0.clone();
        m.insert(class.clone(), threshold);
        Self::new(m)
    }
}

/// Compute the F1-optimal threshold for every class present in the ground
/// truth or the submission. Classes without predictions get threshold 0.
pub fn f1_threshold_table(
    dataset: &Dataset,
    submission: &Submission,
    dist_threshold: f64,
) -> ThresholdTable {
    let mut classes: std::collections::BTreeSet<ClassName> =
        gt_classes(dataset.samples()).into_iter().collect();
    classes.extend(submission.classes());
    let entries = classes
        .into_iter()
        .map(|c| {
            let t = f1_optimal_threshold(dataset, submission, &c, dist_threshold);
            (c, t)
        })
        .collect();
    ThresholdTable(entries)
}

/// Keep exactly the boxes with `score >= threshold[class]`. Sample keys are
/// preserved even when their box lists empty out. Errors when a box's class
/// has no table entry.
pub fn apply_thresholds(submission: &Submission, thresholds: &ThresholdTable) -> Result<Submission> {
    let mut out = BTreeMap::new();
    for (sample_id, dets) in submission.entries() {
        let mut kept = Vec::with_capacity(dets.len());
        for b in dets {
            let t = thresholds
                .get(&b.class_name)
                .ok_or_else(|| Error::MissingClass(b.class_name.to_string()))?;
            if b.score.unwrap_or(0.0) >= t {
                kept.push(b.clone());
            }
        }
        out.insert(sample_id.clone(), kept);
    }
    Ok(Submission::new(
        submission.method_name.clone(),
        submission.modality,
        out,
    ))
}

/// Spearman rank correlation with average ranks for ties. See
/// [`stats::spearman`] for the generic kernel.
pub fn spearman_rank_correlation(xs: &[f64], ys: &[f64]) -> Result<f64> {
    stats::spearman(xs, ys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{dataset_from_boxes, detection, gt_car, submission_from_boxes};

    #[test]
    fn match_exact_center_hit() {
        let gt = vec![gt_car(0.0, 0.0)];
        let pred = vec![detection(0.0, 0.0, "car", 0.9)];
        let mr = match_boxes(&gt, &pred, &"car".into(), 2.0);
        assert_eq!(mr.pairs.len(), 1);
        assert_eq!(mr.pairs[0].distance, 0.0);
        assert!(mr.unmatched_gt.is_empty() && mr.unmatched_pred.is_empty());
    }

    #[test]
    fn match_respects_distance_threshold() {
        let gt = vec![gt_car(0.0, 0.0)];
        let pred = vec![detection(3.0, 0.0, "car", 0.9)];
        let mr = match_boxes(&gt, &pred, &"car".into(), 2.0);
        assert!(mr.pairs.is_empty());
        assert_eq!(mr.unmatched_gt, vec![0]);
        assert_eq!(mr.unmatched_pred, vec![0]);
    }

    #[test]
    fn match_greedy_order_hand_case() {
        // GT at x=0 and x=1; preds at x=0.4 (score .9) and x=0.6 (score .8).
        // The higher-scored prediction takes GT@0 at distance 0.4, the second
        // takes GT@1 at distance 0.4.
        let gt = vec![gt_car(0.0, 0.0), gt_car(1.0, 0.0)];
        let pred = vec![
            detection(0.4, 0.0, "car", 0.9),
            detection(0.6, 0.0, "car", 0.8),
        ];
        let mr = match_boxes(&gt, &pred, &"car".into(), 2.0);
        assert_eq!(mr.pairs.len(), 2);
        assert_eq!((mr.pairs[0].gt, mr.pairs[0].pred), (0, 0));
        assert!((mr.pairs[0].distance - 0.4).abs() < 1e-12);
        assert_eq!((mr.pairs[1].gt, mr.pairs[1].pred), (1, 1));
        assert!((mr.pairs[1].distance - 0.4).abs() < 1e-12);
    }

    #[test]
    fn match_ignores_other_classes() {
        let gt = vec![gt_car(0.0, 0.0)];
        let pred = vec![detection(0.0, 0.0, "pedestrian", 0.9)];
        let mr = match_boxes(&gt, &pred, &"car".into(), 2.0);
        assert!(mr.pairs.is_empty());
        assert_eq!(mr.unmatched_gt, vec![0]);
        assert!(mr.unmatched_pred.is_empty());
    }

    #[test]
    fn perfect_detector_ap_is_one() {
        let ds = dataset_from_boxes(vec![
            vec![gt_car(12.0, 10.0), gt_car(8.0, 12.0)],
            vec![gt_car(14.0, 9.0)],
        ]);
        let sub = Submission::identity(&ds, "perfect");
        assert_eq!(average_precision(&ds, &sub, &"car".into(), 0.5), 1.0);
        assert_eq!(mean_ap(&ds, &sub, &DEFAULT_MATCH_DISTANCES), 1.0);
    }

    #[test]
    fn no_predictions_ap_is_zero() {
        let ds = dataset_from_boxes(vec![vec![gt_car(12.0, 10.0)]]);
        let sub = submission_from_boxes(&ds, vec![vec![]]);
        assert_eq!(average_precision(&ds, &sub, &"car".into(), 2.0), 0.0);
    }

    #[test]
    fn ap_tp_then_fp_is_one_under_interpolation() {
        // 1 GT; TP at score .9 and FP at score .8: PR points (1.0 @ r=1)
        // then (0.5 @ r=1); max-interpolation keeps precision 1 at every
        // recall point.
        let ds = dataset_from_boxes(vec![vec![gt_car(12.0, 10.0)]]);
        let sub = submission_from_boxes(
            &ds,
            vec![vec![
                detection(12.0, 10.0, "car", 0.9),
                detection(17.0, 10.0, "car", 0.8),
            ]],
        );
        assert_eq!(average_precision(&ds, &sub, &"car".into(), 2.0), 1.0);
    }

    #[test]
    fn ap_invariant_under_monotone_score_rescaling() {
        let ds = dataset_from_boxes(vec![vec![gt_car(12.0, 10.0), gt_car(8.0, 12.0)]]);
        let boxes = vec![
            detection(12.3, 10.0, "car", 0.9),
            detection(15.0, 14.0, "car", 0.6),
            detection(8.0, 12.4, "car", 0.4),
        ];
        let rescaled: Vec<_> = boxes
            .iter()
            .map(|b| {
                let mut c = b.clone();
                // strictly monotone map [0,1] -> [0,1]
                c.score = Some(b.score.unwrap().powi(3) * 0.5 + 0.1);
                c
            })
            .collect();
        let a = average_precision(
            &ds,
            &submission_from_boxes(&ds, vec![boxes]),
            &"car".into(),
            2.0,
        );
        let b = average_precision(
            &ds,
            &submission_from_boxes(&ds, vec![rescaled]),
            &"car".into(),
            2.0,
        );
        assert_eq!(a, b);
    }

    #[test]
    fn f1_threshold_hand_case() {
        // 2 GT cars; preds TP@.9, FP@.8, TP@.4:
        // F1(.9) = 2/3, F1(.8) = 1/2, F1(.4) = 4/5 -> threshold 0.4.
        let ds = dataset_from_boxes(vec![vec![gt_car(10.0, 10.0), gt_car(15.0, 10.0)]]);
        let sub = submission_from_boxes(
            &ds,
            vec![vec![
                detection(10.0, 10.0, "car", 0.9),
                detection(10.0, 15.0, "car", 0.8),
                detection(15.0, 10.0, "car", 0.4),
            ]],
        );
        let t = f1_optimal_threshold(&ds, &sub, &"car".into(), 2.0);
        assert_eq!(t, 0.4);
    }

    #[test]
    fn f1_tie_breaks_toward_larger_threshold() {
        // All predictions are exact TPs with score .7: F1 = 1 at t=.7 and at
        // t=0; the larger threshold wins.
        let ds = dataset_from_boxes(vec![vec![gt_car(10.0, 10.0), gt_car(15.0, 10.0)]]);
        let sub = submission_from_boxes(
            &ds,
            vec![vec![
                detection(10.0, 10.0, "car", 0.7),
                detection(15.0, 10.0, "car", 0.7),
            ]],
        );
        assert_eq!(f1_optimal_threshold(&ds, &sub, &"car".into(), 2.0), 0.7);
    }

    #[test]
    fn f1_no_predictions_returns_zero() {
        let ds = dataset_from_boxes(vec![vec![gt_car(10.0, 10.0)]]);
        let sub = submission_from_boxes(&ds, vec![vec![]]);
        assert_eq!(f1_optimal_threshold(&ds, &sub, &"car".into(), 2.0), 0.0);
    }

    #[test]
    fn threshold_table_rejects_out_of_range() {
        let mut m = BTreeMap::new();
        m.insert(ClassName::new("car"), 1.01);
        assert!(ThresholdTable::new(m).is_err());
    }

    #[test]
    fn apply_thresholds_boundary_inclusive_and_idempotent() {
        let ds = dataset_from_boxes(vec![vec![gt_car(10.0, 10.0)]]);
        let sub = submission_from_boxes(
            &ds,
            vec![vec![
                detection(10.0, 10.0, "car", 0.4),
                detection(11.0, 10.0, "car", 0.5),
                detection(12.0, 10.0, "car", 0.6),
            ]],
        );
        let mut m = BTreeMap::new();
        m.insert(ClassName::new("car"), 0.5);
        let table = ThresholdTable::new(m).unwrap();
        let once = apply_thresholds(&sub, &table).unwrap();
        let kept: Vec<f64> = once
            .boxes_for(ds.samples().next().unwrap().sample_id.as_str())
            .iter()
            .map(|b| b.score.unwrap())
            .collect();
        assert_eq!(kept, vec![0.5, 0.6]);
        let twice = apply_thresholds(&once, &table).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn apply_thresholds_zero_table_is_identity() {
        let ds = dataset_from_boxes(vec![vec![gt_car(10.0, 10.0)]]);
        let sub = submission_from_boxes(&ds, vec![vec![detection(10.0, 10.0, "car", 0.3)]]);
        let table = f1_threshold_table(&ds, &sub, 2.0);
        let mut zeros = BTreeMap::new();
        for (c, _) in table.entries() {
            zeros.insert(c.clone(), 0.0);
        }
        let zero_table = ThresholdTable::new(zeros).unwrap();
        assert_eq!(apply_thresholds(&sub, &zero_table).unwrap(), sub);
    }

    #[test]
    fn apply_thresholds_missing_class_errors() {
        let ds = dataset_from_boxes(vec![vec![gt_car(10.0, 10.0)]]);
        let sub = submission_from_boxes(&ds, vec![vec![detection(10.0, 10.0, "car", 0.3)]]);
        let empty = ThresholdTable::new(BTreeMap::new()).unwrap();
        assert!(matches!(
            apply_thresholds(&sub, &empty),
            Err(Error::MissingClass(_))
        ));
    }
}
