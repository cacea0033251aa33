//! Camera projection, box corner geometry and the two IoU flavors used by the
//! toolkit: size-only aligned 3D IoU (scale error) and rotated bird's-eye-view
//! IoU (NMS).
//!
//! Frame conventions:
//!
//! * camera frame: x right, y down, z forward. The ground plane is (x, z).
//! * ego frame: x forward, y left, z up. The ground plane is (x, y).
//!
//! Yaw is a rotation about the frame's vertical axis, zero along the frame's
//! forward direction and counterclockwise positive when viewed from above.
//! Velocities hold the two ground-plane components in axis order, i.e.
//! `(vx, vz)` in the camera frame and `(vx, vy)` in the ego frame.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Vertices closer than this are merged during polygon clipping.
const MERGE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("point has non-positive depth {0} (behind the camera)")]
    NonPositiveDepth(f64),
    #[error("box is expressed in the {found:?} frame, expected {expected:?}")]
    FrameMismatch { expected: Frame, found: Frame },
    #[error("invalid extrinsics: {0}")]
    InvalidExtrinsics(String),
    #[error("invalid box: {0}")]
    InvalidBox(String),
}

/// Coordinate frame a [`Box3D`] is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    #[default]
    Camera,
    Ego,
}

impl Frame {
    /// Unit vector pointing along a box heading of `yaw`.
    pub fn heading(self, yaw: f64) -> Vector3<f64> {
        let (s, c) = yaw.sin_cos();
        match self {
            Frame::Camera => Vector3::new(-s, 0.0, c),
            Frame::Ego => Vector3::new(c, s, 0.0),
        }
    }

    /// Unit vector across the box (the width direction) for a heading of `yaw`.
    pub fn lateral(self, yaw: f64) -> Vector3<f64> {
        let (s, c) = yaw.sin_cos();
        match self {
            Frame::Camera => Vector3::new(c, 0.0, s),
            Frame::Ego => Vector3::new(-s, c, 0.0),
        }
    }

    pub fn vertical(self) -> Vector3<f64> {
        match self {
            Frame::Camera => Vector3::new(0.0, 1.0, 0.0),
            Frame::Ego => Vector3::new(0.0, 0.0, 1.0),
        }
    }

    /// Yaw of a direction vector; the vertical component is ignored.
    pub fn yaw_of(self, dir: &Vector3<f64>) -> f64 {
        match self {
            Frame::Camera => (-dir.x).atan2(dir.z),
            Frame::Ego => dir.y.atan2(dir.x),
        }
    }

    /// Bird's-eye-view coordinates of a point: a right-handed planar system in
    /// which yaw is the counterclockwise angle from the first axis.
    pub fn bev(self, p: &Vector3<f64>) -> [f64; 2] {
        match self {
            Frame::Camera => [p.z, -p.x],
            Frame::Ego => [p.x, p.y],
        }
    }

    /// Lifts the stored two-component ground-plane velocity to 3D.
    pub fn velocity_3d(self, v: [f64; 2]) -> Vector3<f64> {
        match self {
            Frame::Camera => Vector3::new(v[0], 0.0, v[1]),
            Frame::Ego => Vector3::new(v[0], v[1], 0.0),
        }
    }

    pub fn velocity_2d(self, v: &Vector3<f64>) -> [f64; 2] {
        match self {
            Frame::Camera => [v.x, v.z],
            Frame::Ego => [v.x, v.y],
        }
    }
}

/// Box dimensions in meters: width (across), length (along heading), height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Size3 {
    pub w: f64,
    pub l: f64,
    pub h: f64,
}

impl Size3 {
    pub const fn new(w: f64, l: f64, h: f64) -> Self {
        Self { w, l, h }
    }

    pub fn volume(&self) -> f64 {
        self.w * self.l * self.h
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.w, self.l, self.h]
    }

    pub fn is_positive(&self) -> bool {
        self.w > 0.0 && self.l > 0.0 && self.h > 0.0
    }
}

/// A 7-DoF box with velocity, category and optional attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Box3D {
    pub center: Vector3<f64>,
    pub size: Size3,
    pub yaw: f64,
    #[serde(default)]
    pub velocity: [f64; 2],
    pub class_id: usize,
    #[serde(default)]
    pub attribute_id: Option<usize>,
    #[serde(default)]
    pub frame: Frame,
}

impl Box3D {
    /// A camera-frame box with zero velocity, class 0 and no attribute.
    pub fn new(center: [f64; 3], size: Size3, yaw: f64) -> Self {
        Self {
            center: Vector3::from(center),
            size,
            yaw: normalize_angle(yaw),
            velocity: [0.0; 2],
            class_id: 0,
            attribute_id: None,
            frame: Frame::Camera,
        }
    }

    pub fn with_frame(mut self, frame: Frame) -> Self {
        self.frame = frame;
        self
    }

    pub fn with_velocity(mut self, velocity: [f64; 2]) -> Self {
        self.velocity = velocity;
        self
    }

    pub fn with_class(mut self, class_id: usize) -> Self {
        self.class_id = class_id;
        self
    }

    pub fn with_attribute(mut self, attribute_id: Option<usize>) -> Self {
        self.attribute_id = attribute_id;
        self
    }

    pub fn bev_center(&self) -> [f64; 2] {
        self.frame.bev(&self.center)
    }

    /// Euclidean ground-plane distance between two box centers.
    pub fn bev_distance(&self, other: &Box3D) -> f64 {
        let a = self.bev_center();
        let b = other.bev_center();
        (a[0] - b[0]).hypot(a[1] - b[1])
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let finite = self.center.iter().all(|v| v.is_finite())
            && self.size.as_array().iter().all(|v| v.is_finite())
            && self.yaw.is_finite()
            && self.velocity.iter().all(|v| v.is_finite());
        if !finite {
            return Err(GeometryError::InvalidBox("non-finite field".into()));
        }
        if !self.size.is_positive() {
            return Err(GeometryError::InvalidBox(format!(
                "size components must be positive, got {:?}",
                self.size
            )));
        }
        if !(self.yaw > -PI && self.yaw <= PI) {
            return Err(GeometryError::InvalidBox(format!(
                "yaw {} outside (-pi, pi]",
                self.yaw
            )));
        }
        Ok(())
    }

    fn require_frame(&self, expected: Frame) -> Result<(), GeometryError> {
        if self.frame == expected {
            Ok(())
        } else {
            Err(GeometryError::FrameMismatch {
                expected,
                found: self.frame,
            })
        }
    }
}

/// Pinhole intrinsics plus the image size they apply to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Self {
        Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.fx > 0.0 && self.fy > 0.0) || self.width == 0 || self.height == 0 {
            return Err(GeometryError::InvalidBox(format!(
                "intrinsics need positive focal lengths and image size, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Projects a camera-frame point to pixels.
    pub fn project(&self, p: &Vector3<f64>) -> Result<[f64; 2], GeometryError> {
        if p.z <= 0.0 {
            return Err(GeometryError::NonPositiveDepth(p.z));
        }
        Ok([self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy])
    }

    /// Inverse of [`project`](Self::project) for a known depth.
    pub fn back_project(&self, u: f64, v: f64, depth: f64) -> Vector3<f64> {
        Vector3::new(
            (u - self.cx) * depth / self.fx,
            (v - self.cy) * depth / self.fy,
            depth,
        )
    }

    /// Multiplies every pixel-valued parameter by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            fx: self.fx * factor,
            fy: self.fy * factor,
            cx: self.cx * factor,
            cy: self.cy * factor,
            width: (self.width as f64 * factor).round() as u32,
            height: (self.height as f64 * factor).round() as u32,
        }
    }
}

/// Rigid camera-to-ego transform: `p_ego = rotation * p_cam + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ExtrinsicsRepr", into = "ExtrinsicsRepr")]
pub struct CameraExtrinsics {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

/// Row-major on-disk layout of [`CameraExtrinsics`].
#[derive(Serialize, Deserialize)]
struct ExtrinsicsRepr {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl TryFrom<ExtrinsicsRepr> for CameraExtrinsics {
    type Error = GeometryError;

    fn try_from(r: ExtrinsicsRepr) -> Result<Self, Self::Error> {
        let rows = r.rotation;
        let rotation = Matrix3::from_fn(|i, j| rows[i][j]);
        CameraExtrinsics::new(rotation, Vector3::from(r.translation))
    }
}

impl From<CameraExtrinsics> for ExtrinsicsRepr {
    fn from(e: CameraExtrinsics) -> Self {
        let m = e.rotation;
        ExtrinsicsRepr {
            rotation: [
                [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
                [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
                [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
            ],
            translation: [e.translation.x, e.translation.y, e.translation.z],
        }
    }
}

impl Default for CameraExtrinsics {
    fn default() -> Self {
        Self::identity()
    }
}

impl CameraExtrinsics {
    pub const ORTHONORMAL_TOL: f64 = 1e-9;

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        let gram = rotation.transpose() * rotation - Matrix3::identity();
        if gram.abs().max() > Self::ORTHONORMAL_TOL {
            return Err(GeometryError::InvalidExtrinsics(
                "rotation is not orthonormal".into(),
            ));
        }
        if (rotation.determinant() - 1.0).abs() > Self::ORTHONORMAL_TOL {
            return Err(GeometryError::InvalidExtrinsics(
                "rotation determinant is not +1".into(),
            ));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::InvalidExtrinsics(
                "translation is not finite".into(),
            ));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(t: [f64; 3]) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::from(t),
        }
    }

    /// Mounting of a level camera (optical axis horizontal) on a vehicle,
    /// looking along ego heading `heading` and placed at `translation`.
    pub fn level_camera(heading: f64, translation: [f64; 3]) -> Self {
        // camera x -> -ego y, camera y -> -ego z, camera z -> ego x
        let mount = Matrix3::new(0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0);
        Self {
            rotation: rotation_about_z(heading) * mount,
            translation: Vector3::from(translation),
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }
}

/// Rotation about the z axis by `angle` radians.
pub fn rotation_about_z(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// 2.5D center: pixel location of the projected 3D center plus its depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectedCenter {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

/// Axis-aligned image rectangle in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect2D {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Rect2D {
    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    /// Distances (left, top, right, bottom) from a point to the four sides.
    pub fn side_distances(&self, x: f64, y: f64) -> [f64; 4] {
        [x - self.x_min, y - self.y_min, self.x_max - x, self.y_max - y]
    }
}

/// Wraps an angle into (-pi, pi].
pub fn normalize_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    if r <= -PI {
        r += 2.0 * PI;
    }
    r
}

pub fn project_center(b: &Box3D, k: &CameraIntrinsics) -> Result<ProjectedCenter, GeometryError> {
    b.require_frame(Frame::Camera)?;
    let [u, v] = k.project(&b.center)?;
    Ok(ProjectedCenter {
        u,
        v,
        depth: b.center.z,
    })
}

/// The eight corners: bit 0 selects +/- length, bit 1 width, bit 2 height.
pub fn corners_3d(b: &Box3D) -> [Vector3<f64>; 8] {
    let f = b.frame.heading(b.yaw) * (b.size.l / 2.0);
    let s = b.frame.lateral(b.yaw) * (b.size.w / 2.0);
    let up = b.frame.vertical() * (b.size.h / 2.0);
    std::array::from_fn(|i| {
        let sign = |bit: usize| if i & (1 << bit) == 0 { 1.0 } else { -1.0 };
        b.center + f * sign(0) + s * sign(1) + up * sign(2)
    })
}

/// Ground-plane footprint corners in BEV coordinates, counterclockwise.
pub fn footprint(b: &Box3D) -> [[f64; 2]; 4] {
    let [x, y] = b.bev_center();
    let (s, c) = b.yaw.sin_cos();
    let (hl, hw) = (b.size.l / 2.0, b.size.w / 2.0);
    let local = [[hl, -hw], [hl, hw], [-hl, hw], [-hl, -hw]];
    local.map(|[a, d]| [x + a * c - d * s, y + a * s + d * c])
}

/// Bounding rectangle of the projected box corners.
pub fn exterior_rect(b: &Box3D, k: &CameraIntrinsics) -> Result<Rect2D, GeometryError> {
    b.require_frame(Frame::Camera)?;
    let mut rect = Rect2D {
        x_min: f64::INFINITY,
        y_min: f64::INFINITY,
        x_max: f64::NEG_INFINITY,
        y_max: f64::NEG_INFINITY,
    };
    for c in corners_3d(b) {
        let [u, v] = k.project(&c)?;
        rect.x_min = rect.x_min.min(u);
        rect.y_min = rect.y_min.min(v);
        rect.x_max = rect.x_max.max(u);
        rect.y_max = rect.y_max.max(v);
    }
    Ok(rect)
}

/// IoU of the two boxes after aligning their centers and orientations.
pub fn aligned_iou_3d(a: &Size3, b: &Size3) -> f64 {
    let inter = a.w.min(b.w) * a.l.min(b.l) * a.h.min(b.h);
    let union = a.volume() + b.volume() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Rotated IoU of the two ground-plane footprints. Both boxes must be in the
/// same frame.
pub fn bev_rotated_iou(a: &Box3D, b: &Box3D) -> f64 {
    debug_assert_eq!(a.frame, b.frame, "bev_rotated_iou across frames");
    let area_a = a.size.w * a.size.l;
    let area_b = b.size.w * b.size.l;
    if area_a <= 0.0 || area_b <= 0.0 {
        return 0.0;
    }
    // circumradius rejection
    let ra = a.size.w.hypot(a.size.l) / 2.0;
    let rb = b.size.w.hypot(b.size.l) / 2.0;
    if a.bev_distance(b) > ra + rb {
        return 0.0;
    }
    let inter = convex_intersection_area(&footprint(a), &footprint(b));
    let union = area_a + area_b - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Area of the intersection of two counterclockwise convex polygons.
pub fn convex_intersection_area(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> f64 {
    let mut poly: Vec<[f64; 2]> = subject.to_vec();
    let n = clip.len();
    for i in 0..n {
        if poly.len() < 3 {
            return 0.0;
        }
        let a = clip[i];
        let b = clip[(i + 1) % n];
        poly = clip_half_plane(&poly, a, b);
    }
    if poly.len() < 3 {
        return 0.0;
    }
    shoelace_area(&poly).max(0.0)
}

/// Keeps the part of `poly` to the left of the directed edge a -> b.
fn clip_half_plane(poly: &[[f64; 2]], a: [f64; 2], b: [f64; 2]) -> Vec<[f64; 2]> {
    let side = |p: [f64; 2]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    let mut out: Vec<[f64; 2]> = Vec::with_capacity(poly.len() + 2);
    let push = |p: [f64; 2], out: &mut Vec<[f64; 2]>| {
        if let Some(last) = out.last() {
            if (last[0] - p[0]).abs() < MERGE_EPS && (last[1] - p[1]).abs() < MERGE_EPS {
                return;
            }
        }
        out.push(p);
    };
    for i in 0..poly.len() {
        let cur = poly[i];
        let next = poly[(i + 1) % poly.len()];
        let sc = side(cur);
        let sn = side(next);
        if sc >= 0.0 {
            push(cur, &mut out);
        }
        if (sc >= 0.0) != (sn >= 0.0) {
            let t = sc / (sc - sn);
            let p = [cur[0] + t * (next[0] - cur[0]), cur[1] + t * (next[1] - cur[1])];
            push(p, &mut out);
        }
    }
    if out.len() > 1 {
        let first = out[0];
        let last = out[out.len() - 1];
        if (last[0] - first[0]).abs() < MERGE_EPS && (last[1] - first[1]).abs() < MERGE_EPS {
            out.pop();
        }
    }
    out
}

/// Signed polygon area, positive for counterclockwise vertex order.
pub fn shoelace_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    let twice: f64 = (0..n)
        .map(|i| {
            let p = poly[i];
            let q = poly[(i + 1) % n];
            p[0] * q[1] - q[0] * p[1]
        })
        .sum();
    twice / 2.0
}

/// Rigidly maps a box by `e` and re-expresses it in frame `to`.
///
/// The heading is carried as a 3D direction and read back in the target
/// frame's ground plane, so a pitched or rolled mounting only perturbs yaw
/// through its action on the forward vector.
pub fn transform_box(b: &Box3D, e: &CameraExtrinsics, to: Frame) -> Box3D {
    let heading = e.rotation() * b.frame.heading(b.yaw);
    let velocity = e.rotation() * b.frame.velocity_3d(b.velocity);
    Box3D {
        center: e.apply(&b.center),
        size: b.size,
        yaw: normalize_angle(to.yaw_of(&heading)),
        velocity: to.velocity_2d(&velocity),
        class_id: b.class_id,
        attribute_id: b.attribute_id,
        frame: to,
    }
}

/// Maps a box through the camera-to-ego extrinsics into the ego frame.
pub fn transform_to_ego(b: &Box3D, e: &CameraExtrinsics) -> Box3D {
    transform_box(b, e, Frame::Ego)
}

/// Maps an ego-frame box into the camera described by `e`.
pub fn transform_to_camera(b: &Box3D, e: &CameraExtrinsics) -> Box3D {
    transform_box(b, &e.inverse(), Frame::Camera)
}
