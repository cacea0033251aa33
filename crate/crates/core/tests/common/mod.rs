//! Independent reference implementations used as test oracles.
//!
//! Nothing here calls into the algorithms under test; each oracle is the
//! most direct (and usually slowest) way of computing the same quantity.

#![allow(dead_code)]

use std::f64::consts::PI;

use mono3d_core::{Box3D, CameraIntrinsics, Frame, Size3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn test_intrinsics() -> CameraIntrinsics {
    CameraIntrinsics::new(1000.0, 1000.0, 800.0, 450.0, 1600, 900)
}

/// Plain pinhole projection written out by hand.
pub fn pinhole(fx: f64, fy: f64, cx: f64, cy: f64, p: [f64; 3]) -> (f64, f64) {
    (fx * p[0] / p[2] + cx, fy * p[1] / p[2] + cy)
}

/// Corners of a camera-frame box by explicit rotation about the y axis.
///
/// With yaw zero along +z and counterclockwise seen from above (from -y),
/// the heading is (-sin, 0, cos) and the width axis (cos, 0, sin).
pub fn camera_corners(b: &Box3D) -> Vec<[f64; 3]> {
    let (s, c) = b.yaw.sin_cos();
    let mut out = Vec::new();
    for &dl in &[-0.5, 0.5] {
        for &dw in &[-0.5, 0.5] {
            for &dh in &[-0.5, 0.5] {
                let (l, w, h) = (dl * b.size.l, dw * b.size.w, dh * b.size.h);
                out.push([
                    b.center.x + l * -s + w * c,
                    b.center.y + h,
                    b.center.z + l * c + w * s,
                ]);
            }
        }
    }
    out
}

/// Ground-plane rectangle as (center, half-length along heading,
/// half-width, heading angle) in right-handed BEV coordinates.
pub struct BevRect {
    pub c: [f64; 2],
    pub hl: f64,
    pub hw: f64,
    pub yaw: f64,
}

pub fn bev_rect(b: &Box3D) -> BevRect {
    let c = match b.frame {
        Frame::Camera => [b.center.z, -b.center.x],
        Frame::Ego => [b.center.x, b.center.y],
    };
    BevRect {
        c,
        hl: b.size.l / 2.0,
        hw: b.size.w / 2.0,
        yaw: b.yaw,
    }
}

impl BevRect {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let (s, c) = self.yaw.sin_cos();
        let d = [p[0] - self.c[0], p[1] - self.c[1]];
        let along = d[0] * c + d[1] * s;
        let across = -d[0] * s + d[1] * c;
        along.abs() <= self.hl && across.abs() <= self.hw
    }

    pub fn radius(&self) -> f64 {
        self.hl.hypot(self.hw)
    }
}

/// Boxes clustered near the image center so that candidate sets overlap,
/// plus a few that sit behind the camera or project outside the image.
pub fn random_assign_scene(r: &mut ChaCha8Rng, n: usize) -> Vec<Box3D> {
    let k = test_intrinsics();
    (0..n)
        .map(|i| match i % 10 {
            8 => Box3D::new([0.0, 0.0, -5.0], random_size(r), 0.0),
            9 => Box3D::new([40.0, 0.0, 10.0], random_size(r), 0.0),
            _ => {
                let z = r.random_range(6.0..70.0);
                let u = r.random_range(500.0..1100.0);
                let v = r.random_range(300.0..600.0);
                let c = k.back_project(u, v, z);
                Box3D::new([c.x, c.y, c.z], random_size(r), r.random_range(-3.0..3.0))
                    .with_class(r.random_range(0..4))
            }
        })
        .collect()
}

/// Crowded detections: clusters of jittered copies, so suppression chains
/// are long and ties in IoU against the threshold are rare but possible.
pub fn random_detections(r: &mut ChaCha8Rng, n: usize) -> Vec<mono3d_core::Detection> {
    let centers: Vec<[f64; 2]> = (0..n / 8)
        .map(|_| [r.random_range(-40.0..40.0), r.random_range(-40.0..40.0)])
        .collect();
    (0..n)
        .map(|_| {
            let c = centers[r.random_range(0..centers.len())];
            let b = Box3D::new(
                [c[0] + r.random_range(-1.5..1.5), c[1] + r.random_range(-1.5..1.5), 0.0],
                Size3::new(r.random_range(1.5..2.5), r.random_range(3.5..5.0), 1.6),
                r.random_range(-PI..PI),
            )
            .with_frame(Frame::Ego)
            .with_class(r.random_range(0..3));
            // coarse scores so that equal scores occur
            mono3d_core::Detection::new(b, (r.random_range(0..50) as f64) / 50.0)
        })
        .collect()
}

/// Monte-Carlo estimate of the BEV IoU with `n` uniform samples over a
/// square enclosing both footprints.
pub fn monte_carlo_bev_iou(a: &Box3D, b: &Box3D, n: usize, rng: &mut ChaCha8Rng) -> f64 {
    let (ra, rb) = (bev_rect(a), bev_rect(b));
    let x0 = (ra.c[0] - ra.radius()).min(rb.c[0] - rb.radius());
    let x1 = (ra.c[0] + ra.radius()).max(rb.c[0] + rb.radius());
    let y0 = (ra.c[1] - ra.radius()).min(rb.c[1] - rb.radius());
    let y1 = (ra.c[1] + ra.radius()).max(rb.c[1] + rb.radius());
    let (mut inter, mut union) = (0usize, 0usize);
    for _ in 0..n {
        let p = [rng.random_range(x0..x1), rng.random_range(y0..y1)];
        let (ia, ib) = (ra.contains(p), rb.contains(p));
        if ia && ib {
            inter += 1;
        }
        if ia || ib {
            union += 1;
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

pub fn random_size(rng: &mut ChaCha8Rng) -> Size3 {
    Size3::new(
        rng.random_range(0.3..3.0),
        rng.random_range(0.3..8.0),
        rng.random_range(0.5..3.5),
    )
}

/// A camera-frame box whose corners are all in front of the camera and
/// whose projected center lies inside the image of [`test_intrinsics`].
pub fn random_frustum_box(rng: &mut ChaCha8Rng) -> Box3D {
    let k = test_intrinsics();
    let z = rng.random_range(8.0..60.0);
    let u = rng.random_range(0.0..k.width as f64);
    let v = rng.random_range(0.0..k.height as f64);
    let x = (u - k.cx) * z / k.fx;
    let y = (v - k.cy) * z / k.fy;
    Box3D::new([x, y, z], random_size(rng), rng.random_range(-PI..PI))
        .with_velocity([rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)])
        .with_class(rng.random_range(0..10))
}

pub fn random_ego_box(rng: &mut ChaCha8Rng, extent: f64) -> Box3D {
    Box3D::new(
        [
            rng.random_range(-extent..extent),
            rng.random_range(-extent..extent),
            rng.random_range(0.0..2.0),
        ],
        random_size(rng),
        rng.random_range(-PI..PI),
    )
    .with_frame(Frame::Ego)
}

/// Literal numpy `interp(x, xp, fp, right=right)`: linear scan for the last
/// knot not exceeding `x`.
pub fn np_interp(x: f64, xp: &[f64], fp: &[f64], right: f64) -> f64 {
    let n = xp.len();
    if x < xp[0] {
        return fp[0];
    }
    if x > xp[n - 1] {
        return right;
    }
    if x == xp[n - 1] {
        return fp[n - 1];
    }
    let mut j = 0;
    while j + 1 < n && xp[j + 1] <= x {
        j += 1;
    }
    if xp[j] == x {
        return fp[j];
    }
    let slope = (fp[j + 1] - fp[j]) / (xp[j + 1] - xp[j]);
    fp[j] + slope * (x - xp[j])
}

/// Reference AP from a ranked hit sequence (true = TP).
pub fn reference_ap(hits: &[bool], num_gts: usize) -> f64 {
    if num_gts == 0 {
        return if hits.is_empty() { 1.0 } else { 0.0 };
    }
    if hits.is_empty() {
        return 0.0;
    }
    let mut tp = 0.0;
    let mut prec = Vec::new();
    let mut rec = Vec::new();
    for (i, &h) in hits.iter().enumerate() {
        if h {
            tp += 1.0;
        }
        prec.push(tp / (i as f64 + 1.0));
        rec.push(tp / num_gts as f64);
    }
    let mut acc = 0.0;
    for k in 11..=100 {
        let p = np_interp(k as f64 / 100.0, &rec, &prec, 0.0);
        acc += (p - 0.1).max(0.0);
    }
    acc / 90.0 / 0.9
}

/// Greedy per-location assignment written as one flat loop over every
/// location of every level, testing every ground truth.
pub mod assign_oracle {
    use mono3d_core::assign::{FpnLevelSpec, AssignMode};
    use mono3d_core::geometry::{exterior_rect, project_center};
    use mono3d_core::{Box3D, CameraIntrinsics};

    pub struct Level {
        pub assigned: Vec<Option<usize>>,
        pub centerness: Vec<f64>,
    }

    pub fn assign(
        gts: &[Box3D],
        k: &CameraIntrinsics,
        levels: &[FpnLevelSpec],
        radius: f64,
        mode: AssignMode,
        alpha: f64,
    ) -> Vec<Level> {
        let mut eligible = Vec::new();
        for (i, g) in gts.iter().enumerate() {
            let (Ok(c), Ok(r)) = (project_center(g, k), exterior_rect(g, k)) else {
                continue;
            };
            if c.u < 0.0 || c.v < 0.0 || c.u >= k.width as f64 || c.v >= k.height as f64 {
                continue;
            }
            eligible.push((i, c, r));
        }
        levels
            .iter()
            .map(|lv| {
                let s = lv.stride as usize;
                let cols = (k.width as usize).div_ceil(s);
                let rows = (k.height as usize).div_ceil(s);
                let mut assigned = Vec::new();
                let mut centerness = Vec::new();
                for y in 0..rows {
                    for x in 0..cols {
                        let px = (s * x + s / 2) as f64;
                        let py = (s * y + s / 2) as f64;
                        let mut best: Option<(f64, usize, [f64; 2])> = None;
                        for (i, c, r) in &eligible {
                            let (l, t, rr, b) = (px - r.x_min, py - r.y_min, r.x_max - px, r.y_max - py);
                            if !(l > 0.0 && t > 0.0 && rr > 0.0 && b > 0.0) {
                                continue;
                            }
                            let m = l.max(t).max(rr).max(b);
                            if !(m > lv.range_lo && m <= lv.range_hi) {
                                continue;
                            }
                            let d = ((px - c.u).powi(2) + (py - c.v).powi(2)).sqrt();
                            if d >= radius * lv.stride as f64 {
                                continue;
                            }
                            let key = match mode {
                                AssignMode::Distance => d,
                                AssignMode::Area => (r.x_max - r.x_min) * (r.y_max - r.y_min),
                            };
                            let better = match best {
                                None => true,
                                Some((bk, bi, _)) => key < bk || (key == bk && *i < bi),
                            };
                            if better {
                                best = Some((key, *i, [c.u, c.v]));
                            }
                        }
                        match best {
                            Some((_, i, c)) => {
                                let dx = (c[0] - px) / lv.stride as f64;
                                let dy = (c[1] - py) / lv.stride as f64;
                                assigned.push(Some(i));
                                centerness.push((-alpha * (dx * dx + dy * dy)).exp());
                            }
                            None => {
                                assigned.push(None);
                                centerness.push(0.0);
                            }
                        }
                    }
                }
                Level {
                    assigned,
                    centerness,
                }
            })
            .collect()
    }
}

/// Textbook O(n^2) greedy NMS: repeatedly take the best remaining box and
/// drop every same-class box overlapping it.
pub fn brute_force_nms(
    boxes: &[Box3D],
    scores: &[f64],
    threshold: f64,
    iou: impl Fn(&Box3D, &Box3D) -> f64,
) -> Vec<usize> {
    let mut alive: Vec<bool> = vec![true; boxes.len()];
    let mut kept = Vec::new();
    loop {
        let mut best: Option<usize> = None;
        for i in 0..boxes.len() {
            if !alive[i] {
                continue;
            }
            best = match best {
                Some(b) if scores[b] >= scores[i] => Some(b),
                _ => Some(i),
            };
        }
        let Some(b) = best else { break };
        alive[b] = false;
        kept.push(b);
        for j in 0..boxes.len() {
            if alive[j] && boxes[j].class_id == boxes[b].class_id && iou(&boxes[b], &boxes[j]) > threshold {
                alive[j] = false;
            }
        }
    }
    kept
}

/// Exhaustive greedy matcher: for each prediction in the given order, scan
/// every ground truth of the same class and sample.
pub fn brute_force_match(
    preds: &[(usize, usize, [f64; 2])],
    gts: &[(usize, usize, [f64; 2])],
    order: &[usize],
    class_id: usize,
    threshold: f64,
) -> Vec<(usize, Option<usize>)> {
    let mut used = vec![false; gts.len()];
    let mut out = Vec::new();
    for &p in order {
        let (ps, pc, pp) = preds[p];
        if pc != class_id {
            continue;
        }
        let mut best: Option<(f64, usize)> = None;
        for (g, &(gs, gc, gp)) in gts.iter().enumerate() {
            if used[g] || gs != ps || gc != class_id {
                continue;
            }
            let d = ((pp[0] - gp[0]).powi(2) + (pp[1] - gp[1]).powi(2)).sqrt();
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, g));
            }
        }
        let m = match best {
            Some((d, g)) if d <= threshold => {
                used[g] = true;
                Some(g)
            }
            _ => None,
        };
        out.push((p, m));
    }
    out
}
