use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::ap::{average_precision_ranked, f1_score, mean_ap};
use crate::eval::bbox::{Detection, GroundTruth};
use crate::eval::matching::match_detections;

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;
pub const DEFAULT_CONF_THRESHOLD: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    /// `None` for classes that only appear among detections.
    pub ap: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub n_gt: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub iou_threshold: f64,
    pub conf_threshold: f64,
    pub per_class: BTreeMap<u32, ClassStats>,
    /// Mean AP over classes with at least one ground-truth box.
    pub map_at_iou: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Mean IoU of true positives above the confidence threshold.
    pub avg_iou: f64,
}

/// Scores detections against ground truth.
///
/// AP uses every detection regardless of confidence. TP/FP/FN, precision,
/// recall, F1 and average IoU only count detections with confidence at or
/// above `conf_thresh`, pooled over all classes.
pub fn evaluate(
    dets: &[Detection],
    gts: &[GroundTruth],
    iou_thresh: f64,
    conf_thresh: f64,
) -> Result<EvalReport> {
    if gts.is_empty() {
        return Err(Error::EmptyGroundTruth);
    }
    if !(iou_thresh > 0.0 && iou_thresh <= 1.0) {
        return Err(Error::Config(format!("IoU threshold {iou_thresh} outside (0, 1]")));
    }
    let classes: BTreeSet<u32> = dets
        .iter()
        .map(|d| d.class_id)
        .chain(gts.iter().map(|g| g.class_id))
        .collect();

    let mut per_class = BTreeMap::new();
    let (mut tp_all, mut fp_all, mut gt_all) = (0usize, 0usize, 0usize);
    let mut iou_sum = 0.0;
    for class in classes {
        let d: Vec<Detection> = dets.iter().filter(|x| x.class_id == class).cloned().collect();
        let g: Vec<GroundTruth> = gts.iter().filter(|x| x.class_id == class).cloned().collect();
        let matches = match_detections(&d, &g, iou_thresh);
        let labels: Vec<(f64, bool)> = matches.iter().map(|m| (m.confidence, m.is_tp())).collect();
        let ap = average_precision_ranked(&labels, g.len());

        // greedy matching is prefix-consistent, so the assignment above also
        // holds for the detections that survive the confidence cut
        let kept = matches.iter().filter(|m| m.confidence >= conf_thresh);
        let (mut tp, mut fp) = (0, 0);
        for m in kept {
            if m.is_tp() {
                tp += 1;
                iou_sum += m.iou;
            } else {
                fp += 1;
            }
        }
        tp_all += tp;
        fp_all += fp;
        gt_all += g.len();
        per_class.insert(
            class,
            ClassStats {
                ap,
                tp,
                fp,
                fn_: g.len() - tp,
                n_gt: g.len(),
            },
        );
    }

    let map_at_iou = mean_ap(per_class.values().map(|s| s.ap)).expect("non-empty ground truth");
    let precision = if tp_all + fp_all == 0 {
        0.0
    } else {
        tp_all as f64 / (tp_all + fp_all) as f64
    };
    let recall = tp_all as f64 / gt_all as f64;
    let avg_iou = if tp_all == 0 { 0.0 } else { iou_sum / tp_all as f64 };
    Ok(EvalReport {
        iou_threshold: iou_thresh,
        conf_threshold: conf_thresh,
        per_class,
        map_at_iou,
        precision,
        recall,
        f1: f1_score(precision, recall),
        avg_iou,
    })
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{:.2}", 100.0 * v))
}

impl EvalReport {
    /// Class / AP / TP / FP / FN table followed by the summary rows.
    /// `names` maps class ids to labels when given.
    pub fn to_table(&self, names: Option<&dyn Fn(u32) -> String>) -> String {
        let label = |c: u32| names.map_or_else(|| c.to_string(), |f| f(c));
        let width = self
            .per_class
            .keys()
            .map(|&c| label(c).len())
            .max()
            .unwrap_or(5)
            .max(5);
        let mut s = String::new();
        let _ = writeln!(s, "{:<width$}  {:>7}  {:>5}  {:>5}  {:>5}", "Class", "AP(%)", "TP", "FP", "FN");
        for (&c, st) in &self.per_class {
            let _ = writeln!(
                s,
                "{:<width$}  {:>7}  {:>5}  {:>5}  {:>5}",
                label(c),
                pct(st.ap),
                st.tp,
                st.fp,
                st.fn_
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "mAP@{:.2}   {:.2}%", self.iou_threshold, 100.0 * self.map_at_iou);
        let _ = writeln!(
            s,
            "conf>={:.2}  precision {:.2}%  recall {:.2}%  F1 {:.2}%  avg IoU {:.2}%",
            self.conf_threshold,
            100.0 * self.precision,
            100.0 * self.recall,
            100.0 * self.f1,
            100.0 * self.avg_iou
        );
        s
    }

    /// One row per class plus a final `all` row carrying the pooled metrics.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("class,ap,tp,fp,fn,n_gt,precision,recall,f1,avg_iou\n");
        for (c, st) in &self.per_class {
            let ap = st.ap.map_or(String::new(), |v| format!("{v:.6}"));
            let _ = writeln!(s, "{c},{ap},{},{},{},{},,,,", st.tp, st.fp, st.fn_, st.n_gt);
        }
        let (tp, fp, fn_, n_gt) = self.per_class.values().fold((0, 0, 0, 0), |a, st| {
            (a.0 + st.tp, a.1 + st.fp, a.2 + st.fn_, a.3 + st.n_gt)
        });
        let _ = writeln!(
            s,
            "all,{:.6},{tp},{fp},{fn_},{n_gt},{:.6},{:.6},{:.6},{:.6}",
            self.map_at_iou, self.precision, self.recall, self.f1, self.avg_iou
        );
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::bbox::BBox;

    fn bx(x: f64) -> BBox {
        BBox::new(x, 0.0, x + 1.0, 1.0).unwrap()
    }

    #[test]
    fn perfect_detection() {
        let gts = vec![GroundTruth::new("a", 3, bx(0.0)), GroundTruth::new("b", 3, bx(2.0))];
        let dets: Vec<Detection> = gts
            .iter()
            .map(|g| Detection::new(g.image_id.clone(), g.class_id, 0.9, g.bbox).unwrap())
            .collect();
        let r = evaluate(&dets, &gts, 0.5, 0.25).unwrap();
        assert_eq!(r.map_at_iou, 1.0);
        assert_eq!(r.avg_iou, 1.0);
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn empty_ground_truth_is_an_error() {
        assert!(matches!(evaluate(&[], &[], 0.5, 0.25), Err(Error::EmptyGroundTruth)));
    }

    #[test]
    fn detection_only_class_is_excluded_from_map() {
        let gts = vec![GroundTruth::new("a", 0, bx(0.0))];
        let dets = vec![
            Detection::new("a", 0, 0.9, bx(0.0)).unwrap(),
            Detection::new("a", 7, 0.9, bx(4.0)).unwrap(),
        ];
        let r = evaluate(&dets, &gts, 0.5, 0.25).unwrap();
        assert_eq!(r.map_at_iou, 1.0);
        assert_eq!(r.per_class[&7].ap, None);
        assert_eq!(r.per_class[&7].fp, 1);
        assert_eq!(r.precision, 0.5);
    }

    #[test]
    fn confidence_threshold_affects_counts_not_ap() {
        let gts = vec![GroundTruth::new("a", 0, bx(0.0))];
        let dets = vec![Detection::new("a", 0, 0.1, bx(0.0)).unwrap()];
        let r = evaluate(&dets, &gts, 0.5, 0.25).unwrap();
        assert_eq!(r.per_class[&0].ap, Some(1.0));
        assert_eq!((r.per_class[&0].tp, r.per_class[&0].fn_), (0, 1));
        assert_eq!(r.f1, 0.0);
        let csv = r.to_csv();
        assert!(csv.starts_with("class,ap,"));
        assert!(csv.contains("\nall,1.000000,0,0,1,1,"));
        assert!(r.to_table(None).contains("mAP@0.50   100.00%"));
    }
}
