//! Conversion between 7-DoF boxes and dense per-location regression targets.
//!
//! A box is encoded relative to a feature location `(px, py)` as the pixel
//! offset to its projected center, the log of its depth and sizes, a
//! period-pi angle with a two-way direction class, and its velocity.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use ndarray::Array3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    normalize_angle, project_center, Box3D, CameraIntrinsics, Frame, GeometryError, Size3,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CodecError {
    #[error("rotation bin {0} outside [0, pi)")]
    InvalidBin(f64),
    #[error("score map shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid score map: {0}")]
    InvalidScores(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Dense regression target for one foreground location.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionTarget {
    /// Pixel offset from the location to the projected center.
    pub delta: [f64; 2],
    pub depth_log: f64,
    /// `ln` of (w, l, h).
    pub size_log: [f64; 3],
    /// Yaw reduced modulo pi, in [0, pi).
    pub theta_bin: f64,
    pub dir_class: u8,
    pub velocity: [f64; 2],
    pub centerness: f64,
}

/// Per-level multipliers applied to the offset, depth and size heads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelScale {
    pub offset: f64,
    pub depth: f64,
    pub size: f64,
}

impl Default for LevelScale {
    fn default() -> Self {
        Self {
            offset: 1.0,
            depth: 1.0,
            size: 1.0,
        }
    }
}

/// Scale factors indexed by pyramid position (0 is the finest level).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelScales {
    levels: Vec<LevelScale>,
}

impl LevelScales {
    pub fn uniform(num_levels: usize) -> Self {
        Self {
            levels: vec![LevelScale::default(); num_levels],
        }
    }

    pub fn new(levels: Vec<LevelScale>) -> Result<Self, CodecError> {
        for s in &levels {
            if !(s.offset > 0.0 && s.depth > 0.0 && s.size > 0.0) {
                return Err(CodecError::InvalidScores(format!(
                    "level scales must be positive, got {s:?}"
                )));
            }
        }
        Ok(Self { levels })
    }

    /// Scale for `level`; levels beyond the configured ones use unit scales.
    pub fn get(&self, level: usize) -> LevelScale {
        self.levels.get(level).copied().unwrap_or_default()
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

impl Default for LevelScales {
    fn default() -> Self {
        Self::uniform(5)
    }
}

/// Splits a yaw into a period-pi angle and a direction class.
///
/// Normalized yaws in `[0, pi)` get class 0, the rest class 1.
pub fn encode_rotation(theta: f64) -> (f64, u8) {
    let n = normalize_angle(theta);
    if (0.0..PI).contains(&n) {
        return (n, 0);
    }
    if n == PI {
        return (0.0, 1);
    }
    let bin = n + PI;
    if bin >= PI {
        // n is a negative zero-ish value that rounded up to pi
        (0.0, 0)
    } else {
        (bin, 1)
    }
}

pub fn decode_rotation(theta_bin: f64, dir_class: u8) -> Result<f64, CodecError> {
    if !(0.0..PI).contains(&theta_bin) {
        return Err(CodecError::InvalidBin(theta_bin));
    }
    let theta = if dir_class == 0 {
        theta_bin
    } else {
        theta_bin + PI
    };
    Ok(normalize_angle(theta))
}

/// Encodes `b` as seen from the feature location `location`.
///
/// `centerness` is left at zero; the assignment step fills it in.
pub fn encode_targets(
    b: &Box3D,
    k: &CameraIntrinsics,
    location: [f64; 2],
) -> Result<RegressionTarget, CodecError> {
    let pc = project_center(b, k)?;
    let (theta_bin, dir_class) = encode_rotation(b.yaw);
    Ok(RegressionTarget {
        delta: [pc.u - location[0], pc.v - location[1]],
        depth_log: pc.depth.ln(),
        size_log: b.size.as_array().map(f64::ln),
        theta_bin,
        dir_class,
        velocity: b.velocity,
        centerness: 0.0,
    })
}

/// Decodes raw head outputs at `location` on pyramid position `level`.
///
/// The returned box carries class 0 and no attribute; callers attach the
/// classification results.
pub fn decode_prediction(
    raw: &RegressionTarget,
    location: [f64; 2],
    k: &CameraIntrinsics,
    scales: &LevelScales,
    level: usize,
) -> Box3D {
    let s = scales.get(level);
    let depth = (s.depth * raw.depth_log).exp();
    let [w, l, h] = raw.size_log.map(|v| (s.size * v).exp());
    let u = location[0] + s.offset * raw.delta[0];
    let v = location[1] + s.offset * raw.delta[1];
    let mut bin = raw.theta_bin.rem_euclid(PI);
    if bin >= PI {
        bin = 0.0;
    }
    let yaw = decode_rotation(bin, u8::from(raw.dir_class != 0)).unwrap_or(0.0);
    Box3D {
        center: k.back_project(u, v, depth),
        size: Size3::new(w, l, h),
        yaw,
        velocity: raw.velocity,
        class_id: 0,
        attribute_id: None,
        frame: Frame::Camera,
    }
}

/// Mirrors a camera-frame box for a horizontally flipped image.
///
/// The projected center moves to `image_width - 1 - u` at unchanged depth,
/// which reduces to `x -> -x` when the principal point sits at the image
/// center. Yaw and the lateral velocity component are negated.
pub fn flip_box(
    b: &Box3D,
    k: &CameraIntrinsics,
    image_width: u32,
) -> Result<Box3D, GeometryError> {
    if b.frame != Frame::Camera {
        return Err(GeometryError::FrameMismatch {
            expected: Frame::Camera,
            found: b.frame,
        });
    }
    let asymmetry = 2.0 * k.cx - (image_width as f64 - 1.0);
    let mut out = b.clone();
    out.center.x = -b.center.x - asymmetry * b.center.z / k.fx;
    out.yaw = normalize_angle(-b.yaw);
    out.velocity[0] = -b.velocity[0];
    Ok(out)
}

/// The only target channel that changes under a horizontal flip.
pub fn flip_offset(delta_x: f64) -> f64 {
    -delta_x
}

/// Output channels of the detection heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    ClassScore,
    AttributeScore,
    Offset,
    Depth,
    Size,
    Rotation,
    Direction,
    Velocity,
    Centerness,
}

impl Channel {
    pub const ALL: [Channel; 9] = [
        Channel::ClassScore,
        Channel::AttributeScore,
        Channel::Offset,
        Channel::Depth,
        Channel::Size,
        Channel::Rotation,
        Channel::Direction,
        Channel::Velocity,
        Channel::Centerness,
    ];

    /// Channels left out of test-time averaging.
    pub const ROTATION_AND_VELOCITY: [Channel; 3] =
        [Channel::Rotation, Channel::Direction, Channel::Velocity];

    fn is_probability(self) -> bool {
        matches!(self, Channel::ClassScore | Channel::AttributeScore)
    }
}

/// Head outputs of one pyramid level, each channel shaped (depth, height, width).
#[derive(Debug, Clone, PartialEq)]
pub struct LevelMaps {
    pub level: usize,
    pub height: usize,
    pub width: usize,
    channels: BTreeMap<Channel, Array3<f64>>,
}

impl LevelMaps {
    pub fn new(
        level: usize,
        height: usize,
        width: usize,
        channels: BTreeMap<Channel, Array3<f64>>,
    ) -> Result<Self, CodecError> {
        for (ch, arr) in &channels {
            let (_, h, w) = arr.dim();
            if (h, w) != (height, width) {
                return Err(CodecError::ShapeMismatch(format!(
                    "{ch:?} is {h}x{w}, level {level} is {height}x{width}"
                )));
            }
            if arr.iter().any(|v| !v.is_finite()) {
                return Err(CodecError::InvalidScores(format!("{ch:?} has non-finite values")));
            }
            if ch.is_probability() && arr.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(CodecError::InvalidScores(format!("{ch:?} outside [0, 1]")));
            }
        }
        Ok(Self {
            level,
            height,
            width,
            channels,
        })
    }

    pub fn channel(&self, ch: Channel) -> Option<&Array3<f64>> {
        self.channels.get(&ch)
    }

    pub fn channels(&self) -> impl Iterator<Item = (&Channel, &Array3<f64>)> {
        self.channels.iter()
    }
}

/// Dense head outputs for all levels of one image.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreMaps {
    pub levels: Vec<LevelMaps>,
}

/// Averages score maps elementwise, except for `exclude`d channels which are
/// copied from the first map.
pub fn tta_average(maps: &[ScoreMaps], exclude: &[Channel]) -> Result<ScoreMaps, CodecError> {
    let first = maps
        .first()
        .ok_or_else(|| CodecError::ShapeMismatch("no score maps to average".into()))?;
    for (i, m) in maps.iter().enumerate().skip(1) {
        if m.levels.len() != first.levels.len() {
            return Err(CodecError::ShapeMismatch(format!(
                "map {i} has {} levels, expected {}",
                m.levels.len(),
                first.levels.len()
            )));
        }
        for (a, b) in first.levels.iter().zip(&m.levels) {
            let same_keys = a.channels.keys().eq(b.channels.keys());
            let same_dims = a
                .channels
                .iter()
                .zip(&b.channels)
                .all(|((_, x), (_, y))| x.dim() == y.dim());
            if a.level != b.level || !same_keys || !same_dims {
                return Err(CodecError::ShapeMismatch(format!(
                    "map {i} level {} differs from the first map",
                    b.level
                )));
            }
        }
    }

    let n = maps.len() as f64;
    let levels = first
        .levels
        .iter()
        .enumerate()
        .map(|(li, base)| {
            let channels = base
                .channels
                .iter()
                .map(|(ch, arr)| {
                    if exclude.contains(ch) {
                        return (*ch, arr.clone());
                    }
                    let mut sum = arr.clone();
                    for m in &maps[1..] {
                        sum += &m.levels[li].channels[ch];
                    }
                    (*ch, sum / n)
                })
                .collect();
            LevelMaps {
                level: base.level,
                height: base.height,
                width: base.width,
                channels,
            }
        })
        .collect();
    Ok(ScoreMaps { levels })
}
