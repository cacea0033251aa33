//! Geometry, target coding, assignment, losses, rotated BEV NMS and
//! distance-based evaluation for fully-convolutional monocular 3D detection.
//!
//! The crate covers everything around the network: turning 3D boxes into
//! dense per-location targets and back, deciding which feature locations
//! learn which object, evaluating the loss terms, suppressing duplicates in
//! the bird's-eye view, and scoring detections with mAP, the five
//! true-positive errors and NDS.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assign;
pub mod codec;
pub mod dataset;
pub mod geometry;
pub mod loss;
pub mod metrics;
pub mod nms;
pub mod synth;

pub use assign::{assign, compute_bpr, AssignConfig, AssignMode, AssignmentResult, BprReport, FpnLevelSpec};
pub use codec::{
    decode_prediction, decode_rotation, encode_rotation, encode_targets, flip_box, LevelScales,
    RegressionTarget, ScoreMaps,
};
pub use dataset::{load_dataset, save_dataset, Dataset, DatasetError, Scene};
pub use geometry::{
    Box3D, CameraExtrinsics, CameraIntrinsics, Frame, GeometryError, ProjectedCenter, Rect2D, Size3,
};
pub use loss::LossWeights;
pub use metrics::{evaluate, ClassMetrics, EvalReport, MatchConfig, TpErrors};
pub use nms::{bev_nms, multiview_merge, Detection};
pub use synth::{generate_synthetic, LayoutConfig, PerturbConfig};
