//! Detection scoring: IoU, greedy matching, all-points AP and reports.

mod ap;
mod bbox;
pub mod io;
mod matching;
mod report;

pub use ap::{average_precision, average_precision_ranked, f1_score, mean_ap};
pub use bbox::{iou, BBox, Detection, GroundTruth};
pub use matching::{match_detections, rank, MatchOutcome};
pub use report::{evaluate, ClassStats, EvalReport, DEFAULT_CONF_THRESHOLD, DEFAULT_IOU_THRESHOLD};
