//! Direct-from-image ECG disease classification.
//!
//! The crate covers the full chain from a photographed ECG printout to a
//! five-class multi-label decision:
//!
//! 1. [`raster`] – image container, PGM/PPM I/O, grayscale/inversion, CLAHE,
//!    classical paper/background segmentation.
//! 2. [`geometry`] – convex hull, quadrilateral simplification, four-point
//!    homography and perspective warp; [`geometry::rectify`] chains them.
//! 3. [`maskops`] – sliding-window filtering and 8-connected labeling of
//!    predicted trace masks.
//! 4. [`nnkit`] – a small CPU neural toolkit: compact classifier and
//!    U-Net-style segmenter, Focal Tversky and BCE losses, SGD with cosine
//!    annealing, augmentations, weight files.
//! 5. [`pipeline`] – datasets, the mask-then-image curriculum, segmenter
//!    training with pseudo-labels, logit ensembles, thresholds and metrics.
//! 6. [`explain`] – XGrad-CAM heatmaps and overlays.
//! 7. [`syngen`] – a synthetic ECG photo generator with exact ground truth.
//!
//! Classes are always ordered `[MI, STTC, CD, HYP, AF]`.

pub mod error;
pub mod explain;
pub mod geometry;
pub mod maskops;
pub mod nnkit;
pub mod pipeline;
pub mod raster;
pub mod syngen;

pub use error::{Error, Result};
pub use pipeline::classes::{ClassName, PerClass, CLASS_NAMES, NUM_CLASSES};
pub use raster::{BinaryMask, Raster};
