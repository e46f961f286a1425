use crate::eval::bbox::{Detection, GroundTruth};
use crate::eval::matching::match_detections;

/// All-points average precision from ranked `(confidence, is_tp)` labels.
///
/// Labels must be sorted by descending confidence. Runs of equal confidence
/// count as one threshold step, so the curve only has points where a real
/// confidence cut can land. Returns `None` when `n_gt == 0`.
pub fn average_precision_ranked(labels: &[(f64, bool)], n_gt: usize) -> Option<f64> {
    if n_gt == 0 {
        return None;
    }
    let mut points: Vec<(f64, f64)> = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < labels.len() {
        let conf = labels[i].0;
        while i < labels.len() && labels[i].0 == conf {
            if labels[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((tp as f64 / n_gt as f64, tp as f64 / (tp + fp) as f64));
    }
    // precision envelope, right to left
    let mut best = 0.0f64;
    for p in points.iter_mut().rev() {
        best = best.max(p.1);
        p.1 = best;
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (r, p) in points {
        ap += (r - prev_recall) * p;
        prev_recall = r;
    }
    Some(ap)
}

/// AP for one class at the given IoU threshold; `None` without ground truth.
pub fn average_precision(dets: &[Detection], gts: &[GroundTruth], iou_thresh: f64) -> Option<f64> {
    let labels: Vec<(f64, bool)> = match_detections(dets, gts, iou_thresh)
        .iter()
        .map(|m| (m.confidence, m.is_tp()))
        .collect();
    average_precision_ranked(&labels, gts.len())
}

/// Harmonic mean; 0 when both inputs are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Unweighted mean over the defined per-class APs; `None` if there are none.
pub fn mean_ap<I: IntoIterator<Item = Option<f64>>>(aps: I) -> Option<f64> {
    let defined: Vec<f64> = aps.into_iter().flatten().collect();
    if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_case() {
        let ap = average_precision_ranked(&[(0.9, true), (0.8, false), (0.7, true)], 2).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn trivial_cases() {
        assert_eq!(average_precision_ranked(&[(1.0, true), (1.0, true)], 2), Some(1.0));
        assert_eq!(average_precision_ranked(&[], 3), Some(0.0));
        assert_eq!(average_precision_ranked(&[(0.5, true)], 0), None);
    }

    #[test]
    fn tie_group_is_one_step() {
        // a TP and an FP at the same confidence cannot be separated by any cut
        let ap = average_precision_ranked(&[(0.9, false), (0.9, true)], 1).unwrap();
        assert_eq!(ap, 0.5);
        let ap = average_precision_ranked(&[(0.9, true), (0.9, false)], 1).unwrap();
        assert_eq!(ap, 0.5);
    }

    #[test]
    fn f1_and_map() {
        assert!((f1_score(0.99, 0.99) - 0.99).abs() < 1e-15);
        assert_eq!(f1_score(0.0, 0.0), 0.0);
        assert_eq!(mean_ap([Some(1.0), Some(0.5), None]), Some(0.75));
        assert_eq!(mean_ap([None]), None);
    }
}
