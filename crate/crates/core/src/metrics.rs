//! Distance-based detection metrics: center-distance matching, AP over
//! several distance thresholds, the five true-positive error metrics, mAP
//! and the composite detection score (NDS).
//!
//! Predictions and ground truths carry a sample id; matching never crosses
//! samples. Distances are measured between box centers on the ground plane
//! of the boxes' frame.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{aligned_iou_3d, Box3D};
use crate::nms::Detection;

pub const NUM_TP_METRICS: usize = 5;

/// The five true-positive error metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TpMetric {
    /// Ground-plane center distance (m).
    Ate,
    /// 1 - aligned 3D IoU.
    Ase,
    /// Smallest yaw difference (rad).
    Aoe,
    /// Velocity error norm (m/s).
    Ave,
    /// 1 - attribute accuracy.
    Aae,
}

impl TpMetric {
    pub const ALL: [TpMetric; NUM_TP_METRICS] =
        [TpMetric::Ate, TpMetric::Ase, TpMetric::Aoe, TpMetric::Ave, TpMetric::Aae];

    pub fn name(self) -> &'static str {
        match self {
            TpMetric::Ate => "ate",
            TpMetric::Ase => "ase",
            TpMetric::Aoe => "aoe",
            TpMetric::Ave => "ave",
            TpMetric::Aae => "aae",
        }
    }
}

/// Per-class evaluation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub name: String,
    /// Period of the orientation error: 2*pi, or pi for symmetric objects.
    pub orientation_period: f64,
    /// TP metrics not defined for this class.
    #[serde(default)]
    pub omitted: Vec<TpMetric>,
}

impl ClassSpec {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            orientation_period: 2.0 * PI,
            omitted: Vec::new(),
        }
    }

    /// Settings derived from a nuScenes-style class name: barriers get a pi
    /// orientation period; velocity and attribute errors are omitted for
    /// barriers and traffic cones.
    pub fn for_name(name: &str) -> Self {
        let mut spec = Self::new(name);
        if name == "barrier" {
            spec.orientation_period = PI;
        }
        if name == "barrier" || name == "traffic_cone" {
            spec.omitted = vec![TpMetric::Ave, TpMetric::Aae];
        }
        spec
    }

    pub fn defines(&self, metric: TpMetric) -> bool {
        !self.omitted.contains(&metric)
    }
}

/// The ten nuScenes detection classes, in class-id order.
pub const NUSCENES_CLASSES: [&str; 10] = [
    "car",
    "truck",
    "bus",
    "trailer",
    "construction_vehicle",
    "pedestrian",
    "motorcycle",
    "bicycle",
    "traffic_cone",
    "barrier",
];

pub fn nuscenes_classes() -> Vec<ClassSpec> {
    NUSCENES_CLASSES.iter().map(|n| ClassSpec::for_name(n)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    /// Center-distance thresholds (m) for AP.
    pub ap_thresholds: Vec<f64>,
    /// Center-distance threshold (m) defining true positives for TP metrics.
    pub tp_threshold: f64,
    pub min_recall: f64,
    pub min_precision: f64,
    /// Number of uniformly spaced recall samples in [0, 1].
    pub recall_samples: usize,
    /// Indexed by class id.
    pub classes: Vec<ClassSpec>,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            ap_thresholds: vec![0.5, 1.0, 2.0, 4.0],
            tp_threshold: 2.0,
            min_recall: 0.1,
            min_precision: 0.1,
            recall_samples: 101,
            classes: nuscenes_classes(),
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.ap_thresholds.is_empty() || self.ap_thresholds.iter().any(|t| !(*t > 0.0)) {
            return Err("AP thresholds must be positive".into());
        }
        if !(self.tp_threshold > 0.0) {
            return Err("TP threshold must be positive".into());
        }
        if !(0.0..1.0).contains(&self.min_recall) || !(0.0..1.0).contains(&self.min_precision) {
            return Err("min_recall and min_precision must lie in [0, 1)".into());
        }
        if self.recall_samples < 2 {
            return Err("need at least two recall samples".into());
        }
        Ok(())
    }

    fn recall_grid(&self) -> Vec<f64> {
        let n = self.recall_samples - 1;
        (0..=n).map(|k| k as f64 / n as f64).collect()
    }

    /// First recall-grid index strictly above `min_recall`.
    fn first_sample(&self) -> usize {
        ((self.recall_samples - 1) as f64 * self.min_recall).round() as usize + 1
    }
}

/// Key used for a distance threshold in reports, e.g. `"0.5"`, `"2.0"`.
pub fn threshold_key(t: f64) -> String {
    format!("{t:?}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalDetection {
    pub sample: usize,
    pub detection: Detection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalAnnotation {
    pub sample: usize,
    pub annotation: Box3D,
}

/// One prediction in ranking order with its matching outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedPrediction {
    /// Index into the prediction slice.
    pub pred: usize,
    pub score: f64,
    /// Matched ground truth (index into the annotation slice).
    pub gt: Option<usize>,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// Predictions of the class, best score first.
    pub ranked: Vec<RankedPrediction>,
    pub num_gts: usize,
    pub unmatched_gts: Vec<usize>,
}

impl MatchResult {
    pub fn num_tp(&self) -> usize {
        self.ranked.iter().filter(|r| r.gt.is_some()).count()
    }

    pub fn unmatched_preds(&self) -> impl Iterator<Item = usize> + '_ {
        self.ranked.iter().filter(|r| r.gt.is_none()).map(|r| r.pred)
    }
}

/// Canonical ranking: score descending, then sample and box geometry, so the
/// outcome does not depend on input order.
fn rank_predictions(preds: &[EvalDetection], selected: &mut [usize]) {
    selected.sort_by(|&a, &b| {
        let (pa, pb) = (&preds[a], &preds[b]);
        let (ba, bb) = (&pa.detection.box3d, &pb.detection.box3d);
        pb.detection
            .score
            .total_cmp(&pa.detection.score)
            .then(pa.sample.cmp(&pb.sample))
            .then_with(|| {
                ba.center
                    .iter()
                    .zip(bb.center.iter())
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| *o != Ordering::Equal)
                    .unwrap_or(Ordering::Equal)
            })
            .then(ba.yaw.total_cmp(&bb.yaw))
            .then(a.cmp(&b))
    });
}

/// Greedy matching in descending score: each prediction takes the nearest
/// unmatched ground truth of its class in its sample, if within `threshold`.
pub fn match_by_center_distance(
    preds: &[EvalDetection],
    gts: &[EvalAnnotation],
    class_id: usize,
    threshold: f64,
) -> MatchResult {
    let mut by_sample: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut num_gts = 0;
    for (i, g) in gts.iter().enumerate() {
        if g.annotation.class_id == class_id {
            by_sample.entry(g.sample).or_default().push(i);
            num_gts += 1;
        }
    }
    let mut order: Vec<usize> = (0..preds.len())
        .filter(|&i| preds[i].detection.class_id() == class_id)
        .collect();
    rank_predictions(preds, &mut order);

    let mut taken = vec![false; gts.len()];
    let ranked = order
        .into_iter()
        .map(|pi| {
            let p = &preds[pi];
            let mut best: Option<(f64, usize)> = None;
            for &gi in by_sample.get(&p.sample).map(Vec::as_slice).unwrap_or(&[]) {
                if taken[gi] {
                    continue;
                }
                let d = p.detection.box3d.bev_distance(&gts[gi].annotation);
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, gi));
                }
            }
            match best {
                Some((d, gi)) if d <= threshold => {
                    taken[gi] = true;
                    RankedPrediction {
                        pred: pi,
                        score: p.detection.score,
                        gt: Some(gi),
                        distance: d,
                    }
                }
                _ => RankedPrediction {
                    pred: pi,
                    score: p.detection.score,
                    gt: None,
                    distance: best.map_or(f64::INFINITY, |(d, _)| d),
                },
            }
        })
        .collect();
    let unmatched_gts = by_sample
        .values()
        .flatten()
        .copied()
        .filter(|&gi| !taken[gi])
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    MatchResult {
        ranked,
        num_gts,
        unmatched_gts,
    }
}

/// Piecewise-linear interpolation with flat extension on the left and
/// `right` beyond the last point. Within runs of equal `xs` the last point
/// anchors the next segment.
pub fn interp(x: f64, xs: &[f64], ys: &[f64], right: f64) -> f64 {
    let last = xs.len() - 1;
    if x < xs[0] {
        return ys[0];
    }
    if x > xs[last] {
        return right;
    }
    let j = xs.partition_point(|&v| v <= x) - 1;
    if j == last || xs[j] == x {
        return ys[j];
    }
    ys[j] + (ys[j + 1] - ys[j]) * (x - xs[j]) / (xs[j + 1] - xs[j])
}

/// Precision and recall after each ranked prediction.
pub fn precision_recall(m: &MatchResult) -> (Vec<f64>, Vec<f64>) {
    let mut tp = 0usize;
    let mut precision = Vec::with_capacity(m.ranked.len());
    let mut recall = Vec::with_capacity(m.ranked.len());
    for (i, r) in m.ranked.iter().enumerate() {
        if r.gt.is_some() {
            tp += 1;
        }
        precision.push(tp as f64 / (i + 1) as f64);
        recall.push(tp as f64 / m.num_gts as f64);
    }
    (precision, recall)
}

/// Normalized area under the precision-recall curve above the minimum
/// recall and precision.
///
/// Precision is interpolated at the recall grid (zero beyond the highest
/// achieved recall). Without ground truths the AP is 1 when there are also
/// no predictions, else 0.
pub fn ap_from_matches(m: &MatchResult, cfg: &MatchConfig) -> f64 {
    if m.num_gts == 0 {
        return if m.ranked.is_empty() { 1.0 } else { 0.0 };
    }
    if m.ranked.is_empty() {
        return 0.0;
    }
    let (precision, recall) = precision_recall(m);
    let grid = cfg.recall_grid();
    let first = cfg.first_sample();
    let samples = &grid[first.min(grid.len())..];
    if samples.is_empty() {
        return 0.0;
    }
    let total: f64 = samples
        .iter()
        .map(|&r| (interp(r, &recall, &precision, 0.0) - cfg.min_precision).max(0.0))
        .sum();
    (total / samples.len() as f64 / (1.0 - cfg.min_precision)).clamp(0.0, 1.0)
}

pub fn average_precision(
    preds: &[EvalDetection],
    gts: &[EvalAnnotation],
    class_id: usize,
    threshold: f64,
    cfg: &MatchConfig,
) -> f64 {
    ap_from_matches(&match_by_center_distance(preds, gts, class_id, threshold), cfg)
}

/// Mean over a complete classes-by-thresholds grid of APs.
pub fn mean_ap(grid: &[Vec<f64>]) -> f64 {
    let n: usize = grid.iter().map(Vec::len).sum();
    if n == 0 {
        return 0.0;
    }
    grid.iter().flatten().sum::<f64>() / n as f64
}

/// Values of the five TP metrics; `None` marks an omitted metric.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TpErrors {
    pub ate: Option<f64>,
    pub ase: Option<f64>,
    pub aoe: Option<f64>,
    pub ave: Option<f64>,
    pub aae: Option<f64>,
}

impl TpErrors {
    pub fn get(&self, m: TpMetric) -> Option<f64> {
        match m {
            TpMetric::Ate => self.ate,
            TpMetric::Ase => self.ase,
            TpMetric::Aoe => self.aoe,
            TpMetric::Ave => self.ave,
            TpMetric::Aae => self.aae,
        }
    }

    pub fn set(&mut self, m: TpMetric, v: Option<f64>) {
        match m {
            TpMetric::Ate => self.ate = v,
            TpMetric::Ase => self.ase = v,
            TpMetric::Aoe => self.aoe = v,
            TpMetric::Ave => self.ave = v,
            TpMetric::Aae => self.aae = v,
        }
    }

    /// Values in [`TpMetric::ALL`] order, undefined metrics as 1.
    pub fn values_or_worst(&self) -> [f64; NUM_TP_METRICS] {
        TpMetric::ALL.map(|m| self.get(m).unwrap_or(1.0))
    }
}

/// Smallest difference between two angles for the given period.
pub fn yaw_difference(a: f64, b: f64, period: f64) -> f64 {
    let d = (a - b).rem_euclid(period);
    d.min(period - d)
}

/// Raw error of one true positive; `NaN` marks an unscorable value (the
/// ground truth has no attribute).
pub fn tp_error(metric: TpMetric, pred: &Detection, gt: &Box3D, period: f64) -> f64 {
    let p = &pred.box3d;
    match metric {
        TpMetric::Ate => p.bev_distance(gt),
        TpMetric::Ase => 1.0 - aligned_iou_3d(&p.size, &gt.size),
        TpMetric::Aoe => yaw_difference(p.yaw, gt.yaw, period),
        TpMetric::Ave => (p.velocity[0] - gt.velocity[0]).hypot(p.velocity[1] - gt.velocity[1]),
        TpMetric::Aae => match gt.attribute_id {
            None => f64::NAN,
            Some(a) => {
                if p.attribute_id == Some(a) {
                    0.0
                } else {
                    1.0
                }
            }
        },
    }
}

/// Running mean skipping `NaN`s; all-`NaN` input gives all ones.
pub fn cumulative_mean(errors: &[f64]) -> Vec<f64> {
    if errors.iter().all(|e| e.is_nan()) {
        return vec![1.0; errors.len()];
    }
    let (mut sum, mut count) = (0.0, 0usize);
    errors
        .iter()
        .map(|&e| {
            if !e.is_nan() {
                sum += e;
                count += 1;
            }
            if count == 0 {
                0.0
            } else {
                sum / count as f64
            }
        })
        .collect()
}

/// TP errors from a matching at the TP threshold.
///
/// For each recall sample above the minimum recall that the ranking
/// reaches, the cumulative mean of the errors up to the first true positive
/// attaining that recall is taken; the metric is the mean over those
/// samples. A class whose ranking never passes the minimum recall reports
/// every defined metric as 1.
pub fn tp_errors(
    m: &MatchResult,
    preds: &[EvalDetection],
    gts: &[EvalAnnotation],
    class: &ClassSpec,
    cfg: &MatchConfig,
) -> TpErrors {
    let tps: Vec<(usize, usize)> = m
        .ranked
        .iter()
        .filter_map(|r| r.gt.map(|g| (r.pred, g)))
        .collect();
    let grid = cfg.recall_grid();
    let first = cfg.first_sample();
    let max_recall = if m.num_gts == 0 {
        0.0
    } else {
        tps.len() as f64 / m.num_gts as f64
    };
    // number of true positives needed to reach each sampled recall
    let needed: Vec<usize> = grid
        .iter()
        .skip(first)
        .filter(|&&r| r <= max_recall + 1e-12)
        .map(|&r| ((r * m.num_gts as f64 - 1e-9).ceil() as usize).clamp(1, tps.len().max(1)))
        .collect();

    let mut out = TpErrors::default();
    for metric in TpMetric::ALL {
        if !class.defines(metric) {
            continue;
        }
        if needed.is_empty() {
            out.set(metric, Some(1.0));
            continue;
        }
        let errors: Vec<f64> = tps
            .iter()
            .map(|&(p, g)| {
                tp_error(
                    metric,
                    &preds[p].detection,
                    &gts[g].annotation,
                    class.orientation_period,
                )
            })
            .collect();
        let cm = cumulative_mean(&errors);
        let mean = needed.iter().map(|&n| cm[n - 1]).sum::<f64>() / needed.len() as f64;
        out.set(metric, Some(mean));
    }
    out
}

/// Composite detection score `(5 mAP + sum(1 - min(1, mTP))) / 10`.
pub fn nds(map: f64, tp_means: [f64; NUM_TP_METRICS]) -> f64 {
    let tp_score: f64 = tp_means.iter().map(|v| 1.0 - v.min(1.0)).sum();
    (5.0 * map + tp_score) / 10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub num_gt: usize,
    pub num_pred: usize,
    /// AP keyed by distance threshold (see [`threshold_key`]).
    pub ap: BTreeMap<String, f64>,
    pub tp: TpErrors,
}

impl ClassMetrics {
    pub fn ap_values(&self) -> Vec<f64> {
        self.ap.values().copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ap_thresholds: Vec<f64>,
    pub tp_threshold: f64,
    /// Keyed by class name; only classes with ground truths contribute to the
    /// means.
    pub per_class: BTreeMap<String, ClassMetrics>,
    pub mean_ap: f64,
    pub mean_tp: TpErrors,
    pub nds: f64,
}

/// Means over classes that have ground truths. Each TP mean only averages
/// classes defining that metric; a metric no class defines is omitted.
pub fn aggregate_report(per_class: BTreeMap<String, ClassMetrics>, cfg: &MatchConfig) -> EvalReport {
    let evaluated: Vec<(&String, &ClassMetrics)> =
        per_class.iter().filter(|(_, m)| m.num_gt > 0).collect();
    let grid: Vec<Vec<f64>> = evaluated.iter().map(|(_, m)| m.ap_values()).collect();
    let map = mean_ap(&grid);

    let mut mean_tp = TpErrors::default();
    for metric in TpMetric::ALL {
        let vals: Vec<f64> = evaluated.iter().filter_map(|(_, m)| m.tp.get(metric)).collect();
        if !vals.is_empty() {
            mean_tp.set(metric, Some(vals.iter().sum::<f64>() / vals.len() as f64));
        }
    }
    let nds = nds(map, mean_tp.values_or_worst());
    EvalReport {
        ap_thresholds: cfg.ap_thresholds.clone(),
        tp_threshold: cfg.tp_threshold,
        per_class,
        mean_ap: map,
        mean_tp,
        nds,
    }
}

/// Evaluates every configured class: AP per threshold, TP errors at the TP
/// threshold, then the aggregate report.
pub fn evaluate(preds: &[EvalDetection], gts: &[EvalAnnotation], cfg: &MatchConfig) -> EvalReport {
    let jobs: Vec<(usize, Option<usize>)> = (0..cfg.classes.len())
        .flat_map(|c| {
            (0..cfg.ap_thresholds.len())
                .map(move |t| (c, Some(t)))
                .chain(std::iter::once((c, None)))
        })
        .collect();
    enum Outcome {
        Ap(f64),
        Tp(TpErrors),
    }
    let outcomes: Vec<Outcome> = jobs
        .par_iter()
        .map(|&(c, t)| match t {
            Some(t) => Outcome::Ap(average_precision(preds, gts, c, cfg.ap_thresholds[t], cfg)),
            None => {
                let m = match_by_center_distance(preds, gts, c, cfg.tp_threshold);
                Outcome::Tp(tp_errors(&m, preds, gts, &cfg.classes[c], cfg))
            }
        })
        .collect();

    let mut per_class = BTreeMap::new();
    let per = cfg.ap_thresholds.len() + 1;
    for (c, spec) in cfg.classes.iter().enumerate() {
        let mut ap = BTreeMap::new();
        let mut tp = TpErrors::default();
        for (j, outcome) in outcomes[c * per..(c + 1) * per].iter().enumerate() {
            match outcome {
                Outcome::Ap(v) => {
                    ap.insert(threshold_key(cfg.ap_thresholds[j]), *v);
                }
                Outcome::Tp(e) => tp = *e,
            }
        }
        let num_gt = gts.iter().filter(|g| g.annotation.class_id == c).count();
        let num_pred = preds.iter().filter(|p| p.detection.class_id() == c).count();
        per_class.insert(
            spec.name.clone(),
            ClassMetrics {
                num_gt,
                num_pred,
                ap,
                tp,
            },
        );
    }
    aggregate_report(per_class, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Frame, Size3};
    use approx::assert_abs_diff_eq;

    fn gt(x: f64, y: f64) -> EvalAnnotation {
        EvalAnnotation {
            sample: 0,
            annotation: Box3D::new([x, y, 0.0], Size3::new(2.0, 4.0, 1.5), 0.0)
                .with_frame(Frame::Ego)
                .with_attribute(Some(0)),
        }
    }

    fn pred(x: f64, y: f64, score: f64) -> EvalDetection {
        EvalDetection {
            sample: 0,
            detection: Detection::new(gt(x, y).annotation, score),
        }
    }

    #[test]
    fn exact_predictions_all_match() {
        let gts = vec![gt(0.0, 0.0), gt(10.0, 0.0), gt(20.0, 5.0)];
        let preds = vec![pred(0.0, 0.0, 0.9), pred(10.0, 0.0, 0.8), pred(20.0, 5.0, 0.7)];
        let m = match_by_center_distance(&preds, &gts, 0, 0.5);
        assert_eq!(m.num_tp(), 3);
        assert!(m.unmatched_gts.is_empty());
        assert_eq!(m.unmatched_preds().count(), 0);
        let cfg = MatchConfig::default();
        assert_eq!(ap_from_matches(&m, &cfg), 1.0);
    }

    #[test]
    fn far_prediction_is_unmatched() {
        let m = match_by_center_distance(&[pred(3.0, 0.0, 0.9)], &[gt(0.0, 0.0)], 0, 2.0);
        assert_eq!(m.num_tp(), 0);
        assert_eq!(m.unmatched_gts, vec![0]);
    }

    #[test]
    fn matching_stays_within_sample() {
        let mut p = pred(0.0, 0.0, 0.9);
        p.sample = 1;
        let m = match_by_center_distance(&[p], &[gt(0.0, 0.0)], 0, 2.0);
        assert_eq!(m.num_tp(), 0);
    }

    #[test]
    fn ap_edge_cases() {
        let cfg = MatchConfig::default();
        assert_eq!(average_precision(&[], &[gt(0.0, 0.0)], 0, 2.0, &cfg), 0.0);
        assert_eq!(average_precision(&[pred(0.0, 0.0, 0.5)], &[], 0, 2.0, &cfg), 0.0);
        assert_eq!(average_precision(&[], &[], 0, 2.0, &cfg), 1.0);
    }

    #[test]
    fn interp_matches_reference_semantics() {
        let xs = [0.2, 0.2, 0.4, 0.4, 0.6];
        let ys = [1.0, 0.5, 0.66, 0.5, 0.6];
        let got: Vec<f64> = [0.0, 0.2, 0.4, 0.5, 0.6, 1.0]
            .iter()
            .map(|&x| interp(x, &xs, &ys, 0.0))
            .collect();
        let want = [1.0, 0.5, 0.5, 0.55, 0.6, 0.0];
        for (g, w) in got.iter().zip(want) {
            assert_abs_diff_eq!(*g, w, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_translated_match() {
        let gts = vec![gt(0.0, 0.0)];
        let preds = vec![pred(0.3, 0.4, 0.9)];
        let cfg = MatchConfig::default();
        let m = match_by_center_distance(&preds, &gts, 0, 2.0);
        let e = tp_errors(&m, &preds, &gts, &cfg.classes[0], &cfg);
        assert_abs_diff_eq!(e.ate.unwrap(), 0.5, epsilon = 1e-12);
        assert_eq!(e.ase, Some(0.0));
        assert_eq!(e.aoe, Some(0.0));
        assert_eq!(e.ave, Some(0.0));
        assert_eq!(e.aae, Some(0.0));
    }

    #[test]
    fn no_true_positives_gives_worst_case() {
        let cfg = MatchConfig::default();
        let gts = vec![gt(0.0, 0.0)];
        let preds = vec![pred(5.0, 0.0, 0.9)];
        let m = match_by_center_distance(&preds, &gts, 0, 2.0);
        let e = tp_errors(&m, &preds, &gts, &cfg.classes[0], &cfg);
        assert_eq!(e.values_or_worst(), [1.0; 5]);
        let barrier = &cfg.classes[9];
        let e = tp_errors(&m, &preds, &gts, barrier, &cfg);
        assert_eq!(e.ave, None);
        assert_eq!(e.aae, None);
        assert_eq!(e.ate, Some(1.0));
    }

    #[test]
    fn yaw_difference_periods() {
        assert_abs_diff_eq!(yaw_difference(PI, 0.0, PI), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(yaw_difference(PI, 0.0, 2.0 * PI), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(yaw_difference(-3.0, 3.0, 2.0 * PI), 2.0 * PI - 6.0, epsilon = 1e-12);
    }

    #[test]
    fn cumulative_mean_skips_nan() {
        assert_eq!(cumulative_mean(&[1.0, f64::NAN, 3.0]), vec![1.0, 1.0, 2.0]);
        assert_eq!(cumulative_mean(&[f64::NAN, f64::NAN]), vec![1.0, 1.0]);
        assert_eq!(cumulative_mean(&[f64::NAN, 2.0]), vec![0.0, 2.0]);
    }

    #[test]
    fn nds_perfect_and_clipped() {
        assert_eq!(nds(1.0, [0.0; 5]), 1.0);
        assert_eq!(nds(0.0, [5.0; 5]), 0.0);
    }

    #[test]
    fn single_class_report_uses_its_values() {
        let mut per_class = BTreeMap::new();
        let tp = TpErrors {
            ate: Some(0.2),
            ase: Some(0.1),
            aoe: Some(0.3),
            ave: Some(0.4),
            aae: Some(0.5),
        };
        per_class.insert(
            "car".to_string(),
            ClassMetrics {
                num_gt: 3,
                num_pred: 3,
                ap: [("0.5", 0.5), ("1.0", 0.6)]
                    .iter()
                    .map(|(k, v)| (k.to_string(), *v))
                    .collect(),
                tp,
            },
        );
        per_class.insert(
            "bus".to_string(),
            ClassMetrics {
                num_gt: 0,
                num_pred: 2,
                ap: [("0.5", 0.0), ("1.0", 0.0)]
                    .iter()
                    .map(|(k, v)| (k.to_string(), *v))
                    .collect(),
                tp: TpErrors::default(),
            },
        );
        let r = aggregate_report(per_class, &MatchConfig::default());
        assert_eq!(r.mean_tp, tp);
        assert_abs_diff_eq!(r.mean_ap, 0.55, epsilon = 1e-15);
    }
}
