//! Distribution of ground-truth boxes to pyramid levels and feature locations.
//!
//! A location is a positive for a ground truth when it lies inside the
//! exterior rectangle of the projected box, the rectangle's extent seen from
//! the location falls in the level's regression range, and the location is
//! within `radius * stride` of the projected 3D center. Locations claimed by
//! several boxes are resolved by center distance or by rectangle area.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{exterior_rect, project_center, Box3D, CameraIntrinsics, ProjectedCenter, Rect2D};
use crate::loss::gaussian_centerness;

/// Upper regression-range bounds of P3..P7 in pixels (P2's bound is 0).
pub const REGRESSION_RANGES: [f64; 6] = [0.0, 48.0, 96.0, 192.0, 384.0, f64::INFINITY];
pub const STRIDES: [u32; 5] = [8, 16, 32, 64, 128];
pub const DEFAULT_RADIUS: f64 = 1.5;
pub const DEFAULT_GAUSSIAN_ALPHA: f64 = 2.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AssignError {
    #[error("invalid assignment config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FpnLevelSpec {
    pub level_index: u8,
    pub stride: u32,
    /// Exclusive lower bound of the regression range.
    pub range_lo: f64,
    /// Inclusive upper bound; may be infinite.
    pub range_hi: f64,
}

pub fn default_levels() -> Vec<FpnLevelSpec> {
    STRIDES
        .iter()
        .enumerate()
        .map(|(i, &stride)| FpnLevelSpec {
            level_index: 3 + i as u8,
            stride,
            range_lo: REGRESSION_RANGES[i],
            range_hi: REGRESSION_RANGES[i + 1],
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssignMode {
    /// Prefer the box whose projected center is closest.
    Distance,
    /// Prefer the box with the smallest exterior rectangle.
    Area,
}

impl std::str::FromStr for AssignMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "distance" => Ok(Self::Distance),
            "area" => Ok(Self::Area),
            other => Err(format!("unknown assignment mode `{other}`")),
        }
    }
}

impl std::fmt::Display for AssignMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Distance => "distance",
            Self::Area => "area",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignConfig {
    pub mode: AssignMode,
    /// Center-sampling radius in strides.
    pub radius: f64,
    pub levels: Vec<FpnLevelSpec>,
    pub gaussian_alpha: f64,
}

impl Default for AssignConfig {
    fn default() -> Self {
        Self {
            mode: AssignMode::Distance,
            radius: DEFAULT_RADIUS,
            levels: default_levels(),
            gaussian_alpha: DEFAULT_GAUSSIAN_ALPHA,
        }
    }
}

impl AssignConfig {
    pub fn with_mode(mut self, mode: AssignMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<(), AssignError> {
        if !(self.radius > 0.0) {
            return Err(AssignError::InvalidConfig(format!(
                "radius must be positive, got {}",
                self.radius
            )));
        }
        for pair in self.levels.windows(2) {
            if pair[1].stride <= pair[0].stride {
                return Err(AssignError::InvalidConfig("strides must increase".into()));
            }
            if pair[0].range_hi != pair[1].range_lo {
                return Err(AssignError::InvalidConfig(format!(
                    "ranges of P{} and P{} are not contiguous",
                    pair[0].level_index, pair[1].level_index
                )));
            }
        }
        Ok(())
    }
}

/// Grid shape `(rows, cols)` of a level over an image.
pub fn grid_shape(level: &FpnLevelSpec, image_w: u32, image_h: u32) -> (usize, usize) {
    let s = level.stride;
    (image_h.div_ceil(s) as usize, image_w.div_ceil(s) as usize)
}

/// Image-plane locations `(s*x + s/2, s*y + s/2)` of a level, row-major.
pub fn feature_locations(level: &FpnLevelSpec, image_w: u32, image_h: u32) -> Vec<[f64; 2]> {
    let (rows, cols) = grid_shape(level, image_w, image_h);
    let s = level.stride as usize;
    let half = s / 2;
    (0..rows)
        .flat_map(|y| (0..cols).map(move |x| [(s * x + half) as f64, (s * y + half) as f64]))
        .collect()
}

/// Whether the rectangle's extent seen from `location` is in the level's range.
pub fn level_filter(rect: &Rect2D, location: [f64; 2], level: &FpnLevelSpec) -> bool {
    let m = rect
        .side_distances(location[0], location[1])
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    m > level.range_lo && m <= level.range_hi
}

pub fn center_distance(location: [f64; 2], center: [f64; 2]) -> f64 {
    let dx = location[0] - center[0];
    let dy = location[1] - center[1];
    (dx * dx + dy * dy).sqrt()
}

pub fn center_sample(location: [f64; 2], center: [f64; 2], stride: u32, radius: f64) -> bool {
    center_distance(location, center) < radius * stride as f64
}

/// A ground truth competing for a location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub gt_index: usize,
    pub center: [f64; 2],
    pub area: f64,
}

fn ambiguity_key(c: &Candidate, location: [f64; 2], mode: AssignMode) -> f64 {
    match mode {
        AssignMode::Distance => center_distance(location, c.center),
        AssignMode::Area => c.area,
    }
}

/// Picks the winning ground truth; ties go to the lowest index.
pub fn resolve_ambiguity(candidates: &[Candidate], location: [f64; 2], mode: AssignMode) -> Option<usize> {
    candidates
        .iter()
        .min_by(|a, b| {
            ambiguity_key(a, location, mode)
                .total_cmp(&ambiguity_key(b, location, mode))
                .then(a.gt_index.cmp(&b.gt_index))
        })
        .map(|c| c.gt_index)
}

/// Assignment of one pyramid level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelAssignment {
    pub spec: FpnLevelSpec,
    pub rows: usize,
    pub cols: usize,
    /// Assigned ground-truth index per location, row-major.
    pub assigned: Vec<Option<usize>>,
    /// Gaussian center-ness target per location (0 for negatives).
    pub centerness: Vec<f64>,
}

impl LevelAssignment {
    pub fn location(&self, idx: usize) -> [f64; 2] {
        let s = self.spec.stride as usize;
        let (y, x) = (idx / self.cols, idx % self.cols);
        [(s * x + s / 2) as f64, (s * y + s / 2) as f64]
    }

    pub fn num_positive(&self) -> usize {
        self.assigned.iter().filter(|a| a.is_some()).count()
    }

    pub fn positive_mask(&self) -> Vec<bool> {
        self.assigned.iter().map(Option::is_some).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentResult {
    pub levels: Vec<LevelAssignment>,
    /// Number of ground truths given to [`assign`].
    pub num_gts: usize,
    /// Ground truths with a corner at or behind the image plane.
    pub skipped_behind_camera: usize,
    /// Ground truths whose projected center falls outside the image.
    pub outside_image: usize,
}

impl AssignmentResult {
    pub fn num_positive(&self) -> usize {
        self.levels.iter().map(LevelAssignment::num_positive).sum()
    }

    /// Whether ground truth `gt` owns at least one positive location.
    pub fn recalled(&self) -> Vec<bool> {
        let mut hit = vec![false; self.num_gts];
        for level in &self.levels {
            for gt in level.assigned.iter().flatten() {
                hit[*gt] = true;
            }
        }
        hit
    }
}

/// Projection data of a ground truth eligible for assignment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreparedGt {
    pub index: usize,
    pub center: ProjectedCenter,
    pub rect: Rect2D,
}

/// Projects ground truths and drops those that cannot be assigned.
///
/// Returns the eligible boxes and the counts of boxes behind the camera and
/// of boxes whose projected center leaves the image.
pub fn prepare_gts(gts: &[Box3D], k: &CameraIntrinsics) -> (Vec<PreparedGt>, usize, usize) {
    let (mut behind, mut outside) = (0, 0);
    let mut prepared = Vec::with_capacity(gts.len());
    for (index, gt) in gts.iter().enumerate() {
        let (center, rect) = match (project_center(gt, k), exterior_rect(gt, k)) {
            (Ok(c), Ok(r)) => (c, r),
            _ => {
                behind += 1;
                continue;
            }
        };
        let inside = center.u >= 0.0
            && center.u < k.width as f64
            && center.v >= 0.0
            && center.v < k.height as f64;
        if !inside {
            outside += 1;
            continue;
        }
        prepared.push(PreparedGt { index, center, rect });
    }
    (prepared, behind, outside)
}

/// Whether `location` is a positive candidate for `gt` on `level`.
pub fn is_candidate(gt: &PreparedGt, location: [f64; 2], level: &FpnLevelSpec, radius: f64) -> bool {
    let inside = gt
        .rect
        .side_distances(location[0], location[1])
        .iter()
        .all(|&d| d > 0.0);
    inside
        && level_filter(&gt.rect, location, level)
        && center_sample(location, [gt.center.u, gt.center.v], level.stride, radius)
}

fn assign_level(
    gts: &[PreparedGt],
    level: &FpnLevelSpec,
    k: &CameraIntrinsics,
    cfg: &AssignConfig,
) -> LevelAssignment {
    let (rows, cols) = grid_shape(level, k.width, k.height);
    let s = level.stride as f64;
    let half = (level.stride / 2) as f64;
    let reach = cfg.radius * s;
    let mut best: Vec<Option<(f64, usize)>> = vec![None; rows * cols];

    // Scan only the window of grid cells the sampling disc can reach.
    let cell_range = |c: f64, n: usize| {
        let lo = ((c - reach - half) / s).floor().max(0.0) as usize;
        let hi = (((c + reach - half) / s).ceil() as i64).clamp(-1, n as i64 - 1);
        (lo, hi)
    };
    for gt in gts {
        let center = [gt.center.u, gt.center.v];
        let (x0, x1) = cell_range(center[0], cols);
        let (y0, y1) = cell_range(center[1], rows);
        if x1 < 0 || y1 < 0 {
            continue;
        }
        for y in y0..=y1 as usize {
            for x in x0..=x1 as usize {
                let location = [x as f64 * s + half, y as f64 * s + half];
                if !is_candidate(gt, location, level, cfg.radius) {
                    continue;
                }
                let key = match cfg.mode {
                    AssignMode::Distance => center_distance(location, center),
                    AssignMode::Area => gt.rect.area(),
                };
                let slot = &mut best[y * cols + x];
                // gts arrive in index order, so strict improvement keeps the
                // lowest index on ties
                if slot.is_none_or(|(k0, _)| key < k0) {
                    *slot = Some((key, gt.index));
                }
            }
        }
    }

    let by_index: BTreeMap<usize, &PreparedGt> = gts.iter().map(|g| (g.index, g)).collect();
    let mut assigned = vec![None; rows * cols];
    let mut centerness = vec![0.0; rows * cols];
    for (i, slot) in best.iter().enumerate() {
        if let Some((_, gi)) = slot {
            let gt = by_index[gi];
            let loc = [(i % cols) as f64 * s + half, (i / cols) as f64 * s + half];
            assigned[i] = Some(*gi);
            centerness[i] = gaussian_centerness(
                (gt.center.u - loc[0]) / s,
                (gt.center.v - loc[1]) / s,
                cfg.gaussian_alpha,
            );
        }
    }
    LevelAssignment {
        spec: *level,
        rows,
        cols,
        assigned,
        centerness,
    }
}

/// Assigns camera-frame ground truths to the feature locations of every level.
pub fn assign(gts: &[Box3D], k: &CameraIntrinsics, cfg: &AssignConfig) -> AssignmentResult {
    let (prepared, skipped_behind_camera, outside_image) = prepare_gts(gts, k);
    let levels = cfg
        .levels
        .par_iter()
        .map(|level| assign_level(&prepared, level, k, cfg))
        .collect();
    AssignmentResult {
        levels,
        num_gts: gts.len(),
        skipped_behind_camera,
        outside_image,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RecallCount {
    pub total: usize,
    pub recalled: usize,
}

impl RecallCount {
    /// Recalled fraction; 1 for an empty set.
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            self.recalled as f64 / self.total as f64
        }
    }

    pub fn merge(&mut self, other: RecallCount) {
        self.total += other.total;
        self.recalled += other.recalled;
    }
}

/// Best possible recall, overall and per class id.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BprReport {
    pub overall: RecallCount,
    pub per_class: BTreeMap<usize, RecallCount>,
}

impl BprReport {
    pub fn merge(&mut self, other: &BprReport) {
        self.overall.merge(other.overall);
        for (class, count) in &other.per_class {
            self.per_class.entry(*class).or_default().merge(*count);
        }
    }
}

/// Fraction of ground truths owning at least one positive location. Boxes
/// excluded from assignment still count in the denominator.
pub fn compute_bpr(gts: &[Box3D], result: &AssignmentResult) -> BprReport {
    let recalled = result.recalled();
    let mut report = BprReport::default();
    for (gt, hit) in gts.iter().zip(recalled) {
        let count = RecallCount {
            total: 1,
            recalled: usize::from(hit),
        };
        report.overall.merge(count);
        report.per_class.entry(gt.class_id).or_default().merge(count);
    }
    report
}
