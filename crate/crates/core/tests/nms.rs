mod common;

use std::f64::consts::PI;

use mono3d_core::geometry::{bev_rotated_iou, transform_to_camera, transform_to_ego};
use mono3d_core::nms::bev_nms_indices;
use mono3d_core::{bev_nms, multiview_merge, Box3D, CameraExtrinsics, Detection, Frame, Size3};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

use common::*;

fn ego(x: f64, y: f64, l: f64, w: f64) -> Box3D {
    Box3D::new([x, y, 0.0], Size3::new(w, l, 1.5), 0.0).with_frame(Frame::Ego)
}

#[test]
fn matches_brute_force_on_random_scenes() {
    let mut r = rng(51);
    for scene in 0..50 {
        let dets = random_detections(&mut r, 200);
        let boxes: Vec<Box3D> = dets.iter().map(|d| d.box3d.clone()).collect();
        let scores: Vec<f64> = dets.iter().map(|d| d.score).collect();
        for t in [0.1, 0.5] {
            let mut ours = bev_nms_indices(&dets, t);
            let mut oracle = brute_force_nms(&boxes, &scores, t, bev_rotated_iou);
            ours.sort_unstable();
            oracle.sort_unstable();
            assert_eq!(ours, oracle, "scene {scene} threshold {t}");
        }
    }
}

#[test]
fn examples() {
    let single = vec![Detection::new(ego(0.0, 0.0, 4.0, 2.0), 0.4)];
    assert_eq!(bev_nms(&single, 0.5), single);
    let pair = vec![
        Detection::new(ego(0.0, 0.0, 4.0, 2.0), 0.8),
        Detection::new(ego(0.0, 0.0, 4.0, 2.0), 0.9),
    ];
    let kept = bev_nms(&pair, 0.5);
    assert_eq!(kept.len(), 1);
    assert_eq!(kept[0].score, 0.9);
}

#[test]
fn output_is_sorted_and_pairwise_separated() {
    let mut r = rng(52);
    for _ in 0..20 {
        let dets = random_detections(&mut r, 120);
        let kept = bev_nms(&dets, 0.3);
        for w in kept.windows(2) {
            assert!(w[0].score >= w[1].score);
        }
        for (i, a) in kept.iter().enumerate() {
            for b in &kept[i + 1..] {
                if a.class_id() == b.class_id() {
                    assert!(bev_rotated_iou(&a.box3d, &b.box3d) <= 0.3);
                }
            }
        }
    }
}

#[test]
fn raising_the_threshold_can_shrink_the_kept_set() {
    // A clips B slightly; B covers C and D heavily; A misses C and D.
    let dets = vec![
        Detection::new(ego(0.0, 3.5, 4.0, 4.0), 0.9),
        Detection::new(ego(0.0, 0.0, 4.0, 4.0), 0.8),
        Detection::new(ego(-1.0, 0.0, 2.0, 3.0), 0.7),
        Detection::new(ego(1.0, 0.0, 2.0, 3.0), 0.6),
    ];
    assert_eq!(bev_nms_indices(&dets, 0.05), vec![0, 2, 3]);
    assert_eq!(bev_nms_indices(&dets, 0.3), vec![0, 1]);
}

#[test]
fn one_identity_camera_equals_plain_nms() {
    let mut r = rng(53);
    let dets = random_detections(&mut r, 100);
    let merged = multiview_merge(&[(dets.clone(), CameraExtrinsics::identity())], 0.5);
    let plain = bev_nms(&dets, 0.5);
    assert_eq!(merged.len(), plain.len());
    for (m, p) in merged.iter().zip(&plain) {
        assert_eq!(m.score, p.score);
        assert!((m.box3d.center - p.box3d.center).norm() < 1e-12);
        assert_eq!(m.source_camera, Some(0));
    }
}

#[test]
fn multiview_matches_manual_transform_and_brute_force() {
    let mut r = rng(54);
    let cams: Vec<CameraExtrinsics> = (0..6)
        .map(|i| CameraExtrinsics::level_camera(i as f64 * PI / 3.0, [0.5, 0.0, 1.6]))
        .collect();
    for _ in 0..10 {
        let world = random_detections(&mut r, 60);
        // every object is reported by one or two cameras, in that camera's frame
        let mut per_camera: Vec<(Vec<Detection>, CameraExtrinsics)> =
            cams.iter().map(|e| (Vec::new(), *e)).collect();
        for d in &world {
            let first = r.random_range(0..6);
            let views = if r.random_bool(0.5) { vec![first, (first + 1) % 6] } else { vec![first] };
            for c in views {
                let mut seen = d.clone();
                seen.box3d = transform_to_camera(&d.box3d, &cams[c]);
                seen.score = (d.score - 0.01 * c as f64).max(0.0);
                per_camera[c].0.push(seen);
            }
        }
        let merged = multiview_merge(&per_camera, 0.5);

        let mut boxes = Vec::new();
        let mut scores = Vec::new();
        for (dets, e) in &per_camera {
            for d in dets {
                let c = e.rotation() * d.box3d.center + e.translation();
                let mut b = transform_to_ego(&d.box3d, e);
                assert!((b.center - c).norm() < 1e-9);
                b.center = c;
                boxes.push(b);
                scores.push(d.score);
            }
        }
        let oracle = brute_force_nms(&boxes, &scores, 0.5, bev_rotated_iou);
        assert_eq!(merged.len(), oracle.len());
        for (m, &o) in merged.iter().zip(&oracle) {
            assert_eq!(m.score, scores[o]);
            assert!((m.box3d.center - boxes[o].center).norm() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kept_set_ignores_input_order(seed in any::<u64>()) {
        let mut r = rng(seed);
        let mut dets = random_detections(&mut r, 80);
        // distinct scores
        for (i, d) in dets.iter_mut().enumerate() {
            d.score = (d.score + i as f64 * 1e-6).min(1.0);
        }
        let key = |v: Vec<Detection>| {
            let mut s: Vec<u64> = v.iter().map(|d| d.score.to_bits()).collect();
            s.sort_unstable();
            s
        };
        let before = key(bev_nms(&dets, 0.5));
        dets.shuffle(&mut r);
        prop_assert_eq!(before, key(bev_nms(&dets, 0.5)));
    }
}
