//! Raw-versus-enhanced detection comparison: route images through the
//! enhancer, run one detector over both arms and diff the reports.

mod detector;
mod enhance;
mod run;

pub use detector::{run_external, DetectorMode, StubDetector};
pub use enhance::{enhance_batch, enhance_files, enhance_image, EnhancedImage};
pub use run::{compare, delta_ap_map, run_pipeline, ClassDelta, Comparison, ComparisonReport, PipelineConfig, Routing};
