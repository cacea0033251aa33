//! Versioned JSON dataset schema shared by annotations and detections.
//!
//! The layout is documented in `docs/dataset-schema.md`. Numbers are written
//! with shortest round-trip formatting, so saving and loading preserves every
//! `f64` bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{transform_to_ego, Box3D, CameraExtrinsics, CameraIntrinsics, Frame};
use crate::metrics::{ClassSpec, EvalAnnotation, EvalDetection, MatchConfig};
use crate::nms::Detection;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("schema error at line {line}, column {column}: {message}")]
    Schema {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported schema version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("validation failed: {0}")]
    Validation(String),
}

impl DatasetError {
    fn schema(e: serde_json::Error) -> Self {
        DatasetError::Schema {
            line: e.line(),
            column: e.column(),
            // serde_json appends the position, which is already in the fields
            message: e
                .to_string()
                .trim_end_matches(&format!(" at line {} column {}", e.line(), e.column()))
                .to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LabelMap {
    pub classes: Vec<String>,
    #[serde(default)]
    pub attributes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub intrinsics: CameraIntrinsics,
    #[serde(default)]
    pub extrinsics: CameraExtrinsics,
}

/// A ground-truth box; camera-frame boxes name the camera they belong to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    #[serde(flatten)]
    pub box3d: Box3D,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera: Option<usize>,
}

impl Annotation {
    pub fn new(box3d: Box3D) -> Self {
        Self { box3d, camera: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub id: String,
    #[serde(default)]
    pub cameras: Vec<Camera>,
    #[serde(default)]
    pub annotations: Vec<Annotation>,
    #[serde(default)]
    pub detections: Vec<Detection>,
}

impl Scene {
    fn to_ego(&self, b: &Box3D, camera: Option<usize>) -> Box3D {
        match (b.frame, camera) {
            (Frame::Camera, Some(c)) => transform_to_ego(b, &self.cameras[c].extrinsics),
            _ => b.clone(),
        }
    }

    /// Annotations moved into the ego frame where a camera is named.
    pub fn annotations_ego(&self) -> Vec<Box3D> {
        self.annotations
            .iter()
            .map(|a| self.to_ego(&a.box3d, a.camera))
            .collect()
    }

    pub fn detections_ego(&self) -> Vec<Detection> {
        self.detections
            .iter()
            .map(|d| Detection {
                box3d: self.to_ego(&d.box3d, d.source_camera),
                ..d.clone()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub version: u32,
    pub label_map: LabelMap,
    pub scenes: Vec<Scene>,
}

#[derive(Deserialize)]
struct VersionProbe {
    version: u32,
}

impl Dataset {
    pub fn new(label_map: LabelMap, scenes: Vec<Scene>) -> Self {
        Self {
            version: SCHEMA_VERSION,
            label_map,
            scenes,
        }
    }

    /// Parses and validates a dataset document.
    pub fn from_json(text: &str) -> Result<Self, DatasetError> {
        let probe: VersionProbe = serde_json::from_str(text).map_err(DatasetError::schema)?;
        if probe.version != SCHEMA_VERSION {
            return Err(DatasetError::VersionMismatch {
                found: probe.version,
                expected: SCHEMA_VERSION,
            });
        }
        let ds: Dataset = serde_json::from_str(text).map_err(DatasetError::schema)?;
        ds.validate()?;
        Ok(ds)
    }

    /// Canonical pretty-printed form with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("dataset serializes");
        s.push('\n');
        s
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let fail = |scene: &str, msg: String| Err(DatasetError::Validation(format!("scene `{scene}`: {msg}")));
        let n_classes = self.label_map.classes.len();
        let n_attrs = self.label_map.attributes.len();
        for scene in &self.scenes {
            for (i, cam) in scene.cameras.iter().enumerate() {
                if let Err(e) = cam.intrinsics.validate() {
                    return fail(&scene.id, format!("camera {i}: {e}"));
                }
            }
            let boxes = scene
                .annotations
                .iter()
                .map(|a| (&a.box3d, a.camera, "annotation"))
                .chain(scene.detections.iter().map(|d| (&d.box3d, d.source_camera, "detection")));
            for (i, (b, cam, what)) in boxes.enumerate() {
                if let Err(e) = b.validate() {
                    return fail(&scene.id, format!("{what} {i}: {e}"));
                }
                if b.class_id >= n_classes {
                    return fail(&scene.id, format!("{what} {i}: unknown class id {}", b.class_id));
                }
                if let Some(a) = b.attribute_id {
                    if a >= n_attrs {
                        return fail(&scene.id, format!("{what} {i}: unknown attribute id {a}"));
                    }
                }
                if let Some(c) = cam {
                    if c >= scene.cameras.len() {
                        return fail(&scene.id, format!("{what} {i}: unknown camera {c}"));
                    }
                }
            }
            for (i, d) in scene.detections.iter().enumerate() {
                if !(0.0..=1.0).contains(&d.score) {
                    return fail(&scene.id, format!("detection {i}: score {} outside [0, 1]", d.score));
                }
            }
        }
        Ok(())
    }

    /// Evaluation class settings for this label map.
    pub fn match_config(&self) -> MatchConfig {
        let classes = self
            .label_map
            .classes
            .iter()
            .map(|name| ClassSpec::for_name(name))
            .collect();
        MatchConfig {
            classes,
            ..MatchConfig::default()
        }
    }

    /// Ground truths in the ego frame, tagged with their scene index.
    pub fn eval_annotations(&self) -> Vec<EvalAnnotation> {
        self.scenes
            .iter()
            .enumerate()
            .flat_map(|(sample, s)| {
                s.annotations_ego()
                    .into_iter()
                    .map(move |annotation| EvalAnnotation { sample, annotation })
            })
            .collect()
    }

    /// Detections in the ego frame, tagged with their scene index.
    pub fn eval_detections(&self) -> Vec<EvalDetection> {
        self.scenes
            .iter()
            .enumerate()
            .flat_map(|(sample, s)| {
                s.detections_ego()
                    .into_iter()
                    .map(move |detection| EvalDetection { sample, detection })
            })
            .collect()
    }
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset, DatasetError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Dataset::from_json(&text)
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let path = path.as_ref();
    fs::write(path, ds.to_json()).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Size3;
    use crate::metrics::TpMetric;

    fn labels() -> LabelMap {
        LabelMap {
            classes: vec!["car".into(), "barrier".into()],
            attributes: vec!["vehicle.moving".into()],
        }
    }

    #[test]
    fn empty_scene_list_roundtrips() {
        let ds = Dataset::new(labels(), vec![]);
        let back = Dataset::from_json(&ds.to_json()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn version_is_checked() {
        let text = r#"{"version": 7, "label_map": {"classes": []}, "scenes": []}"#;
        assert!(matches!(
            Dataset::from_json(text),
            Err(DatasetError::VersionMismatch { found: 7, .. })
        ));
        let missing = r#"{"label_map": {"classes": []}, "scenes": []}"#;
        assert!(matches!(Dataset::from_json(missing), Err(DatasetError::Schema { .. })));
    }

    #[test]
    fn schema_errors_report_position() {
        let text = "{\"version\": 1,\n \"label_map\": {\"classes\": []},\n \"scenes\": [{\"id\": 3}]}";
        match Dataset::from_json(text) {
            Err(DatasetError::Schema { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("invalid type"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_class_fails_validation() {
        let scene = Scene {
            id: "s".into(),
            cameras: vec![],
            annotations: vec![Annotation::new(
                Box3D::new([0.0; 3], Size3::new(1.0, 1.0, 1.0), 0.0).with_class(5),
            )],
            detections: vec![],
        };
        let ds = Dataset::new(labels(), vec![scene]);
        assert!(matches!(
            Dataset::from_json(&ds.to_json()),
            Err(DatasetError::Validation(_))
        ));
    }

    #[test]
    fn match_config_follows_label_names() {
        let cfg = Dataset::new(labels(), vec![]).match_config();
        assert_eq!(cfg.classes[1].orientation_period, std::f64::consts::PI);
        assert!(!cfg.classes[1].defines(TpMetric::Ave));
        assert!(cfg.classes[0].defines(TpMetric::Ave));
    }
}
