//! Annotation converters, class grouping, image codecs and the low-quality
//! selector.

mod annotations;
mod classes;
mod images;
mod quality;

pub use annotations::{
    parse_gtsdb_gt, parse_gtsrb_csv, parse_yolo_line, to_yolo_line, write_yolo_dataset, Annotation, ParseOutcome,
    RowError, GTSDB_IMAGE_SIZE, GTSRB_HEADER,
};
pub use classes::{class_name, group_class, BroadCategory, LabelSpace, CLASS_NAMES, NUM_CLASSES};
pub use images::{
    decode_png, decode_ppm, encode_png, encode_ppm, list_images, load_image, save_image, ImageKind,
};
pub use quality::{
    laplacian_variance, mean_luminance, score_image, select_low_quality, QualityScore, QualityThresholds,
};
