use crate::eval::bbox::{iou, Detection, GroundTruth};

/// Result for one detection, in ranked (descending confidence) order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchOutcome {
    /// Index into the detection slice.
    pub det: usize,
    pub confidence: f64,
    /// Index into the ground-truth slice when this detection is a TP.
    pub gt: Option<usize>,
    pub iou: f64,
}

impl MatchOutcome {
    pub fn is_tp(&self) -> bool {
        self.gt.is_some()
    }
}

/// Detection indices by descending confidence; equal confidences keep input
/// order.
pub fn rank(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].confidence.total_cmp(&dets[a].confidence));
    order
}

/// Greedy matching in confidence order.
///
/// Each detection takes the still-unmatched ground truth of the same image
/// with the highest IoU (lowest index on ties); it is a TP when that IoU is
/// at least `iou_thresh`, otherwise an FP. Class ids are not consulted;
/// callers pass one class at a time.
pub fn match_detections(dets: &[Detection], gts: &[GroundTruth], iou_thresh: f64) -> Vec<MatchOutcome> {
    let mut taken = vec![false; gts.len()];
    rank(dets)
        .into_iter()
        .map(|d| {
            let det = &dets[d];
            let mut best: Option<(usize, f64)> = None;
            for (g, gt) in gts.iter().enumerate() {
                if taken[g] || gt.image_id != det.image_id {
                    continue;
                }
                let v = iou(&det.bbox, &gt.bbox);
                if best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((g, v));
                }
            }
            match best {
                Some((g, v)) if v >= iou_thresh => {
                    taken[g] = true;
                    MatchOutcome {
                        det: d,
                        confidence: det.confidence,
                        gt: Some(g),
                        iou: v,
                    }
                }
                other => MatchOutcome {
                    det: d,
                    confidence: det.confidence,
                    gt: None,
                    iou: other.map_or(0.0, |(_, v)| v),
                },
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::bbox::BBox;

    fn gt(img: &str, x: f64) -> GroundTruth {
        GroundTruth::new(img, 0, BBox::new(x, 0.0, x + 1.0, 1.0).unwrap())
    }

    fn det(img: &str, x: f64, conf: f64) -> Detection {
        Detection::new(img, 0, conf, BBox::new(x, 0.0, x + 1.0, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn exact_hit_is_tp() {
        let m = match_detections(&[det("a", 0.0, 0.9)], &[gt("a", 0.0)], 0.5);
        assert!(m[0].is_tp());
        assert_eq!(m[0].iou, 1.0);
    }

    #[test]
    fn duplicate_detection_is_fp() {
        let m = match_detections(&[det("a", 0.0, 0.6), det("a", 0.0, 0.9)], &[gt("a", 0.0)], 0.5);
        assert_eq!(m[0].det, 1);
        assert!(m[0].is_tp());
        assert!(!m[1].is_tp());
    }

    #[test]
    fn images_do_not_mix() {
        let m = match_detections(&[det("b", 0.0, 0.9)], &[gt("a", 0.0)], 0.5);
        assert!(!m[0].is_tp());
    }

    #[test]
    fn second_detection_falls_back_to_next_gt() {
        // gt0 at 0.0, gt1 at 0.3; det at 0.1 overlaps both
        let gts = [gt("a", 0.0), gt("a", 0.3)];
        let dets = [det("a", 0.0, 0.9), det("a", 0.1, 0.8)];
        let m = match_detections(&dets, &gts, 0.5);
        assert_eq!(m[0].gt, Some(0));
        assert_eq!(m[1].gt, Some(1));
    }
}
