//! Datasets, the mask-then-image curriculum, segmenter training with
//! pseudo-labels, logit ensembles, threshold fitting and metrics.

pub mod classes;
mod dataset;
mod ensemble;
mod inputs;
mod metrics;
mod train;

pub use classes::{ClassName, PerClass, CLASS_NAMES, NUM_CLASSES};
pub use dataset::{
    load_manifest, manifest_json, parse_manifest, save_manifest, split_dataset, SampleRecord,
};
pub use ensemble::{ensemble_logits, evaluate, predict_logits, predict_probs};
pub use inputs::{image_input, load_mask, mask_input, prepare, InputDims, InputKind, PreparedSet};
pub use metrics::{
    auroc, binarize, f1, fit_thresholds, metrics_report, per_class_f1, threshold_grid,
    MetricsReport,
};
pub use train::{
    pseudo_label, segment, train_classifier, train_segmenter, train_stage, EpochHook, EpochLog,
    PseudoLabelConfig, SegmentationSet,
};
