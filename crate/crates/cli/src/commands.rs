use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use mono3d_core::assign::{default_levels, prepare_gts, BprReport};
use mono3d_core::codec::{decode_prediction, encode_targets, LevelScales, RegressionTarget};
use mono3d_core::dataset::{Annotation, Scene};
use mono3d_core::geometry::{project_center, transform_to_camera};
use mono3d_core::metrics::yaw_difference;
use mono3d_core::synth::ScoreModel;
use mono3d_core::{
    assign as assign_boxes, bev_nms, compute_bpr, generate_synthetic, load_dataset, save_dataset,
    AssignConfig, AssignMode, Box3D, CameraIntrinsics, Dataset, Detection, EvalReport, Frame,
    LayoutConfig, PerturbConfig,
};
use serde::Serialize;

use crate::table;
use crate::{
    AssignArgs, CliError, EncodeArgs, EvaluateArgs, ModeArg, NmsArgs, SimulateArgs, REPORT_VERSION,
};

fn emit(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes()).map_err(|source| CliError::Write {
        path: "stdout".into(),
        source,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
    text.push('\n');
    std::fs::write(path, text).map_err(|source| CliError::Write {
        path: path.display().to_string(),
        source,
    })
}

/// Whether the box projects fully in front of the camera with its center
/// inside the image, i.e. whether assignment would consider it.
fn visible(b: &Box3D, k: &CameraIntrinsics) -> bool {
    prepare_gts(std::slice::from_ref(b), k).0.len() == 1
}

/// The annotation in the frame of a camera that sees it: its own camera for
/// camera-frame boxes, the first camera that sees it for ego-frame boxes.
fn camera_view(scene: &Scene, ann: &Annotation) -> Option<(usize, Box3D)> {
    match (ann.box3d.frame, ann.camera) {
        (Frame::Camera, Some(c)) => {
            visible(&ann.box3d, &scene.cameras[c].intrinsics).then(|| (c, ann.box3d.clone()))
        }
        (Frame::Camera, None) => None,
        (Frame::Ego, _) => scene.cameras.iter().enumerate().find_map(|(c, cam)| {
            let b = transform_to_camera(&ann.box3d, &cam.extrinsics);
            visible(&b, &cam.intrinsics).then_some((c, b))
        }),
    }
}

/// Annotations seen by camera `c`, in that camera's frame.
fn camera_gts(scene: &Scene, c: usize) -> Vec<Box3D> {
    let cam = &scene.cameras[c];
    scene
        .annotations
        .iter()
        .filter_map(|a| match (a.box3d.frame, a.camera) {
            (Frame::Camera, Some(owner)) if owner == c => Some(a.box3d.clone()),
            (Frame::Ego, _) => Some(transform_to_camera(&a.box3d, &cam.extrinsics)),
            _ => None,
        })
        .filter(|b| visible(b, &cam.intrinsics))
        .collect()
}

fn box_error(a: &Box3D, b: &Box3D) -> f64 {
    let mut e = (a.center - b.center).abs().max();
    for (x, y) in a.size.as_array().iter().zip(b.size.as_array()) {
        e = e.max((x - y).abs());
    }
    e = e.max(yaw_difference(a.yaw, b.yaw, 2.0 * PI));
    e.max((a.velocity[0] - b.velocity[0]).abs())
        .max((a.velocity[1] - b.velocity[1]).abs())
}

#[derive(Serialize)]
struct EncodedBox {
    scene: String,
    annotation: usize,
    camera: usize,
    location: [f64; 2],
    target: RegressionTarget,
    roundtrip_error: f64,
}

#[derive(Serialize)]
struct EncodeReport {
    version: u32,
    encoded: usize,
    skipped: usize,
    max_roundtrip_error: f64,
    boxes: Vec<EncodedBox>,
}

pub fn encode(a: &EncodeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let ds = load_dataset(&a.input)?;
    let stride = default_levels()[0].stride as f64;
    // snap to the nearest P3 location so the offsets stay small
    let snap = |x: f64| (x / stride).floor() * stride + stride / 2.0;
    let scales = LevelScales::default();
    let mut boxes = Vec::new();
    let mut skipped = 0;
    for scene in &ds.scenes {
        for (i, ann) in scene.annotations.iter().enumerate() {
            let Some((c, b)) = camera_view(scene, ann) else {
                skipped += 1;
                continue;
            };
            let k = &scene.cameras[c].intrinsics;
            let pc = project_center(&b, k).expect("visible boxes project");
            let location = [snap(pc.u), snap(pc.v)];
            let target = encode_targets(&b, k, location)
                .map_err(|e| CliError::Validation(format!("scene `{}` annotation {i}: {e}", scene.id)))?;
            let back = decode_prediction(&target, location, k, &scales, 0);
            boxes.push(EncodedBox {
                scene: scene.id.clone(),
                annotation: i,
                camera: c,
                location,
                target,
                roundtrip_error: box_error(&b, &back),
            });
        }
    }
    let max_err = boxes.iter().map(|b| b.roundtrip_error).fold(0.0, f64::max);
    emit(
        out,
        &format!(
            "encoded {} annotations, {} not visible in any camera\nmax roundtrip error: {:.3e}\n",
            boxes.len(),
            skipped,
            max_err
        ),
    )?;
    if let Some(path) = &a.out {
        let report = EncodeReport {
            version: REPORT_VERSION,
            encoded: boxes.len(),
            skipped,
            max_roundtrip_error: max_err,
            boxes,
        };
        write_json(path, &report)?;
    }
    if a.check && !(max_err < a.tolerance) {
        return Err(CliError::Validation(format!(
            "roundtrip error {max_err:e} is not below {:e}",
            a.tolerance
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct RecallRow {
    pub total: usize,
    pub recalled: usize,
    pub bpr: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModeBpr {
    pub overall: RecallRow,
    pub per_class: BTreeMap<String, RecallRow>,
}

#[derive(Serialize)]
struct AssignReport {
    version: u32,
    radius: f64,
    modes: BTreeMap<String, ModeBpr>,
}

fn named(report: &BprReport, classes: &[String]) -> ModeBpr {
    let row = |c: &mono3d_core::assign::RecallCount| RecallRow {
        total: c.total,
        recalled: c.recalled,
        bpr: c.fraction(),
    };
    ModeBpr {
        overall: row(&report.overall),
        per_class: report
            .per_class
            .iter()
            .map(|(id, count)| (classes[*id].clone(), row(count)))
            .collect(),
    }
}

pub fn assign(a: &AssignArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = AssignConfig {
        radius: a.radius,
        ..AssignConfig::default()
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let ds = load_dataset(&a.input)?;
    let modes = match a.mode {
        ModeArg::Distance => vec![AssignMode::Distance],
        ModeArg::Area => vec![AssignMode::Area],
        ModeArg::Both => vec![AssignMode::Distance, AssignMode::Area],
    };
    // gather the per-camera views once; both modes see the same boxes
    let views: Vec<(Vec<Box3D>, CameraIntrinsics)> = ds
        .scenes
        .iter()
        .flat_map(|s| (0..s.cameras.len()).map(move |c| (camera_gts(s, c), s.cameras[c].intrinsics)))
        .filter(|(gts, _)| !gts.is_empty())
        .collect();
    let mut results = Vec::new();
    for mode in modes {
        let cfg = cfg.clone().with_mode(mode);
        let mut total = BprReport::default();
        for (gts, k) in &views {
            total.merge(&compute_bpr(gts, &assign_boxes(gts, k, &cfg)));
        }
        results.push((mode, named(&total, &ds.label_map.classes)));
    }
    emit(out, &table::bpr(&results, a.radius))?;
    if let Some(path) = &a.out {
        let report = AssignReport {
            version: REPORT_VERSION,
            radius: a.radius,
            modes: results
                .into_iter()
                .map(|(m, r)| (mode_name(m).to_string(), r))
                .collect(),
        };
        write_json(path, &report)?;
    }
    Ok(())
}

pub fn mode_name(m: AssignMode) -> &'static str {
    match m {
        AssignMode::Distance => "distance",
        AssignMode::Area => "area",
    }
}

/// Replaces the detections of `gt` with those of the scene sharing its id in
/// `pred`, moved to the ego frame using the prediction file's cameras.
fn merge_predictions(gt: &mut Dataset, pred: &Dataset) -> Result<(), CliError> {
    if gt.label_map != pred.label_map {
        return Err(CliError::Validation("label maps of --gt and --pred differ".into()));
    }
    let mut by_id: HashMap<&str, &Scene> = HashMap::new();
    for s in &pred.scenes {
        if by_id.insert(&s.id, s).is_some() {
            return Err(CliError::Validation(format!("duplicate scene id `{}` in --pred", s.id)));
        }
    }
    for scene in &mut gt.scenes {
        scene.detections = match by_id.remove(scene.id.as_str()) {
            Some(p) => p
                .detections_ego()
                .into_iter()
                .map(|mut d| {
                    // the box is in the ego frame now; drop camera indices
                    // that refer to the prediction file
                    if p.cameras.len() != scene.cameras.len() {
                        d.source_camera = None;
                    }
                    d
                })
                .collect(),
            None => Vec::new(),
        };
    }
    if let Some(id) = by_id.keys().min() {
        return Err(CliError::Validation(format!("--pred scene `{id}` has no ground truth")));
    }
    gt.validate()?;
    Ok(())
}

#[derive(Serialize)]
struct VersionedReport<'a> {
    version: u32,
    #[serde(flatten)]
    report: &'a EvalReport,
}

pub fn evaluate(a: &EvaluateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut ds = load_dataset(&a.gt)?;
    if let Some(p) = &a.pred {
        let pred = load_dataset(p)?;
        merge_predictions(&mut ds, &pred)?;
    }
    let cfg = ds.match_config();
    let preds = ds.eval_detections();
    let gts = ds.eval_annotations();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} workers: {e}", a.jobs)))?;
    let report = pool.install(|| mono3d_core::evaluate(&preds, &gts, &cfg));
    emit(out, &table::evaluation(&report))?;
    if let Some(path) = &a.out {
        write_json(
            path,
            &VersionedReport {
                version: REPORT_VERSION,
                report: &report,
            },
        )?;
    }
    Ok(())
}

/// Suppression within each camera, in that camera's frame. Detections
/// without a camera form their own group.
fn per_camera_nms(scene: &Scene, iou: f64) -> Vec<Detection> {
    let mut groups: BTreeMap<(Option<usize>, bool), Vec<Detection>> = BTreeMap::new();
    for d in &scene.detections {
        let key = (d.source_camera, d.box3d.frame == Frame::Ego);
        groups.entry(key).or_default().push(d.clone());
    }
    let mut kept: Vec<Detection> = groups.values().flat_map(|g| bev_nms(g, iou)).collect();
    kept.sort_by(|a, b| b.score.total_cmp(&a.score));
    kept
}

pub fn nms(a: &NmsArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if !(0.0..=1.0).contains(&a.iou) {
        return Err(CliError::Usage(format!("--iou {} outside [0, 1]", a.iou)));
    }
    let mut ds = load_dataset(&a.input)?;
    let before: usize = ds.scenes.iter().map(|s| s.detections.len()).sum();
    for scene in &mut ds.scenes {
        scene.detections = if a.multiview {
            // every camera in the ego frame, one suppression over the union
            bev_nms(&scene.detections_ego(), a.iou)
        } else {
            per_camera_nms(scene, a.iou)
        };
    }
    let after: usize = ds.scenes.iter().map(|s| s.detections.len()).sum();
    save_dataset(&ds, &a.out)?;
    emit(
        out,
        &format!(
            "kept {after} of {before} detections ({} NMS, IoU {})\n",
            if a.multiview { "multi-view" } else { "per-camera" },
            a.iou
        ),
    )
}

pub fn simulate(a: &SimulateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let p = &a.perturb;
    let perturb = PerturbConfig {
        translation_offset: p.translation_offset,
        translation_sigma: p.translation_sigma,
        size_scale: p.size_scale,
        yaw_offset: p.yaw_offset,
        yaw_sigma: p.yaw_sigma,
        velocity_sigma: p.velocity_sigma,
        attribute_flip_prob: p.attribute_flip,
        drop_prob: p.drop,
        clutter_rate: p.clutter,
        score: match p.score {
            Some(value) => ScoreModel::Constant { value },
            None => ScoreModel::Uniform {
                lo: p.score_lo,
                hi: p.score_hi,
            },
        },
        seed: a.seed,
    };
    perturb.validate().map_err(CliError::Usage)?;
    if let ScoreModel::Constant { value } = perturb.score {
        if !(0.0..=1.0).contains(&value) {
            return Err(CliError::Usage(format!("--score {value} outside [0, 1]")));
        }
    }
    if a.min_objects > a.max_objects {
        return Err(CliError::Usage("--min-objects exceeds --max-objects".into()));
    }
    let n_classes = mono3d_core::metrics::NUSCENES_CLASSES.len();
    if let Some(c) = a.classes.iter().find(|&&c| c >= n_classes) {
        return Err(CliError::Usage(format!("class id {c} is not below {n_classes}")));
    }
    let layout = LayoutConfig {
        min_objects: a.min_objects,
        max_objects: a.max_objects,
        num_cameras: a.cameras,
        classes: a.classes.clone(),
        ..LayoutConfig::default()
    };
    let ds = generate_synthetic(a.scenes, &layout, &perturb);
    let n_gt: usize = ds.scenes.iter().map(|s| s.annotations.len()).sum();
    let n_det: usize = ds.scenes.iter().map(|s| s.detections.len()).sum();
    match &a.pred_out {
        Some(pred_path) => {
            let mut gt = ds.clone();
            let mut pred = ds;
            for s in &mut gt.scenes {
                s.detections.clear();
            }
            for s in &mut pred.scenes {
                s.annotations.clear();
            }
            save_dataset(&gt, &a.out)?;
            save_dataset(&pred, pred_path)?;
        }
        None => save_dataset(&ds, &a.out)?,
    }
    emit(
        out,
        &format!(
            "wrote {} scenes with {n_gt} annotations and {n_det} detections\n",
            a.scenes
        ),
    )
}
