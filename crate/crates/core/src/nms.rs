//! Class-wise rotated bird's-eye-view NMS and cross-camera fusion.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{bev_rotated_iou, transform_to_ego, Box3D, CameraExtrinsics};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

/// A scored box. The score is the fused class score times center-ness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(flatten)]
    pub box3d: Box3D,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_camera: Option<usize>,
}

impl Detection {
    pub fn new(box3d: Box3D, score: f64) -> Self {
        Self {
            box3d,
            score,
            source_camera: None,
        }
    }

    pub fn class_id(&self) -> usize {
        self.box3d.class_id
    }
}

/// Descending score, then ascending index.
pub(crate) fn score_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Greedy suppression over detections already in score order.
fn suppress(dets: &[Detection], order: &[usize], iou_threshold: f64) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    for &i in order {
        let overlaps = kept
            .iter()
            .any(|&j| bev_rotated_iou(&dets[j].box3d, &dets[i].box3d) > iou_threshold);
        if !overlaps {
            kept.push(i);
        }
    }
    kept
}

/// Indices of the detections surviving class-wise NMS, in score order.
pub fn bev_nms_indices(dets: &[Detection], iou_threshold: f64) -> Vec<usize> {
    let scores: Vec<f64> = dets.iter().map(|d| d.score).collect();
    let order = score_order(&scores);

    let mut classes: Vec<usize> = dets.iter().map(Detection::class_id).collect();
    classes.sort_unstable();
    classes.dedup();

    let mut kept: Vec<usize> = classes
        .par_iter()
        .flat_map_iter(|&class| {
            let class_order: Vec<usize> = order
                .iter()
                .copied()
                .filter(|&i| dets[i].class_id() == class)
                .collect();
            suppress(dets, &class_order, iou_threshold)
        })
        .collect();

    let rank: Vec<usize> = {
        let mut r = vec![0; dets.len()];
        for (pos, &i) in order.iter().enumerate() {
            r[i] = pos;
        }
        r
    };
    kept.sort_by_key(|&i| rank[i]);
    kept
}

/// Class-wise greedy NMS on ground-plane footprints. The result is sorted by
/// descending score.
pub fn bev_nms(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    bev_nms_indices(dets, iou_threshold)
        .into_iter()
        .map(|i| dets[i].clone())
        .collect()
}

/// Moves every camera's detections into the ego frame, tags them with their
/// camera index and runs a single NMS over the union.
pub fn multiview_merge(
    per_camera: &[(Vec<Detection>, CameraExtrinsics)],
    iou_threshold: f64,
) -> Vec<Detection> {
    let all: Vec<Detection> = per_camera
        .iter()
        .enumerate()
        .flat_map(|(cam, (dets, extrinsics))| {
            dets.iter().map(move |d| Detection {
                box3d: transform_to_ego(&d.box3d, extrinsics),
                score: d.score,
                source_camera: Some(cam),
            })
        })
        .collect();
    bev_nms(&all, iou_threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Frame, Size3};

    fn det(x: f64, y: f64, score: f64) -> Detection {
        Detection::new(
            Box3D::new([x, y, 0.0], Size3::new(2.0, 4.0, 1.5), 0.0).with_frame(Frame::Ego),
            score,
        )
    }

    #[test]
    fn single_detection_survives() {
        let d = vec![det(0.0, 0.0, 0.3)];
        assert_eq!(bev_nms(&d, 0.5), d);
        assert!(bev_nms(&[], 0.5).is_empty());
    }

    #[test]
    fn duplicate_is_suppressed() {
        let d = vec![det(0.0, 0.0, 0.8), det(0.0, 0.0, 0.9)];
        assert_eq!(bev_nms_indices(&d, 0.5), vec![1]);
    }

    #[test]
    fn other_classes_are_not_suppressed() {
        let mut other = det(0.0, 0.0, 0.8);
        other.box3d.class_id = 1;
        let d = vec![det(0.0, 0.0, 0.9), other];
        assert_eq!(bev_nms_indices(&d, 0.5), vec![0, 1]);
    }

    #[test]
    fn equal_scores_keep_lower_index() {
        let d = vec![det(0.0, 0.0, 0.5), det(0.1, 0.0, 0.5)];
        assert_eq!(bev_nms_indices(&d, 0.5), vec![0]);
    }

    #[test]
    fn two_cameras_same_object_leave_one() {
        let front = CameraExtrinsics::level_camera(0.0, [0.0, 0.0, 1.5]);
        let left = CameraExtrinsics::level_camera(std::f64::consts::FRAC_PI_2, [0.0, 0.0, 1.5]);
        // object at ego (10, 10): diagonal, visible to both cameras
        let obj = Box3D::new([10.0, 10.0, 0.5], Size3::new(2.0, 4.0, 1.5), 0.3).with_frame(Frame::Ego);
        let in_front = crate::geometry::transform_to_camera(&obj, &front);
        let in_left = crate::geometry::transform_to_camera(&obj, &left);
        let merged = multiview_merge(
            &[
                (vec![Detection::new(in_front, 0.7)], front),
                (vec![Detection::new(in_left, 0.6)], left),
            ],
            0.5,
        );
        assert_eq!(merged.len(), 1);
        assert_eq!(merged[0].source_camera, Some(0));
        assert!((merged[0].box3d.center - obj.center).norm() < 1e-9);
    }
}
