//! Core domain types: poses, boxes, samples, scene maps, datasets, and
//! detection submissions.
//!
//! All types are immutable after construction and safe to share across
//! threads. Validation lives in the constructors and in [`Dataset::validate`]
//! / [`Submission::validate_against`], so downstream code can rely on the
//! documented invariants.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::{PI, TAU};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Wrap an angle into `(-pi, pi]`. Values already in range pass through
/// unchanged, so normalization is idempotent bit-for-bit.
pub fn normalize_yaw(yaw: f64) -> f64 {
    if yaw > -PI && yaw <= PI {
        return yaw;
    }
    let r = yaw.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// A timestamped 2D pose in map coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    /// Heading in radians, normalized to `(-pi, pi]`.
    pub yaw: f64,
    /// Seconds since scene start; non-negative.
    pub timestamp: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, yaw: f64, timestamp: f64) -> Self {
        Self {
            x,
            y,
            yaw: normalize_yaw(yaw),
            timestamp,
        }
    }

    pub fn position(&self) -> (f64, f64) {
        (self.x, self.y)
    }
}

/// Object class label. The vocabulary is open; [`default_vocabulary`] lists
/// the four classes the synthetic generator emits.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassName(String);

impl ClassName {
    pub fn new(name: impl Into<String>) -> Self {
        Self(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ClassName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ClassName {
    fn from(s: &str) -> Self {
        Self::new(s)
    }
}

/// The default 4-class vocabulary.
pub fn default_vocabulary() -> Vec<ClassName> {
    ["car", "pedestrian", "truck", "bicycle"]
        .into_iter()
        .map(ClassName::new)
        .collect()
}

/// A 2D-footprint actor. Ground-truth boxes carry no score; detections carry
/// a score in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectBox {
    pub center_x: f64,
    pub center_y: f64,
    /// Footprint extent perpendicular to the heading, meters.
    pub width: f64,
    /// Footprint extent along the heading, meters.
    pub length: f64,
    pub yaw: f64,
    pub class_name: ClassName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity: Option<(f64, f64)>,
}

impl ObjectBox {
    pub fn ground_truth(
        center_x: f64,
        center_y: f64,
        width: f64,
        length: f64,
        yaw: f64,
        class_name: ClassName,
    ) -> Self {
        Self {
            center_x,
            center_y,
            width,
            length,
            yaw: normalize_yaw(yaw),
            class_name,
            score: None,
            velocity: None,
        }
    }

    pub fn detection(
        center_x: f64,
        center_y: f64,
        width: f64,
        length: f64,
        yaw: f64,
        class_name: ClassName,
        score: f64,
    ) -> Self {
        Self {
            score: Some(score),
            ..Self::ground_truth(center_x, center_y, width, length, yaw, class_name)
        }
    }

    pub fn center(&self) -> (f64, f64) {
        (self.center_x, self.center_y)
    }

    /// Euclidean distance from `(x, y)` to the oriented footprint rectangle;
    /// zero inside the footprint.
    pub fn footprint_distance(&self, x: f64, y: f64) -> f64 {
        let (sin, cos) = self.yaw.sin_cos();
        let dx = x - self.center_x;
        let dy = y - self.center_y;
        // Box frame: u along the heading (length), v across it (width).
        let u = (dx * cos + dy * sin).abs() - self.length / 2.0;
        let v = (-dx * sin + dy * cos).abs() - self.width / 2.0;
        u.max(0.0).hypot(v.max(0.0))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0) || !(self.length > 0.0) {
            return Err(Error::Validation(format!(
                "box of class `{}` has non-positive extent {}x{}",
                self.class_name, self.width, self.length
            )));
        }
        if let Some(s) = self.score {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::Validation(format!(
                    "box of class `{}` has score {s} outside [0, 1]",
                    self.class_name
                )));
            }
        }
        for v in [self.center_x, self.center_y, self.yaw] {
            if !v.is_finite() {
                return Err(Error::Validation("box has non-finite pose".into()));
            }
        }
        Ok(())
    }
}

/// Scene condition tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tag {
    Rain,
    Night,
}

/// One annotated keyframe. The atomic unit the planner metric is computed on.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub sample_id: String,
    pub scene_id: String,
    pub ego_pose: Pose2D,
    /// Ground-truth boxes; none carries a score.
    pub gt_boxes: Vec<ObjectBox>,
    pub tags: BTreeSet<Tag>,
}

/// Rasterized drivable area and intersection mask over a metric grid.
///
/// `origin` is the world position of the grid's (0, 0) corner; a cell spans
/// `resolution` meters per side. The intersection mask is contained in the
/// drivable mask cell-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneMap {
    origin: (f64, f64),
    resolution: f64,
    drivable: Grid<bool>,
    intersection: Grid<bool>,
}

impl SceneMap {
    pub fn new(
        origin: (f64, f64),
        resolution: f64,
        drivable: Grid<bool>,
        intersection: Grid<bool>,
    ) -> Result<Self> {
        if !(resolution > 0.0) {
            return Err(Error::Validation(format!(
                "map resolution must be positive, got {resolution}"
            )));
        }
        if drivable.width() != intersection.width() || drivable.height() != intersection.height() {
            return Err(Error::Validation(format!(
                "drivable ({}x{}) and intersection ({}x{}) grids differ in shape",
                drivable.width(),
                drivable.height(),
                intersection.width(),
                intersection.height()
            )));
        }
        for (i, (&inter, &driv)) in intersection.cells().iter().zip(drivable.cells()).enumerate() {
            if inter && !driv {
                let (ix, iy) = intersection.coords_of(i);
                return Err(Error::Validation(format!(
                    "intersection cell ({ix}, {iy}) is not drivable"
                )));
            }
        }
        Ok(Self {
            origin,
            resolution,
            drivable,
            intersection,
        })
    }

    pub fn origin(&self) -> (f64, f64) {
        self.origin
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn width(&self) -> usize {
        self.drivable.width()
    }

    pub fn height(&self) -> usize {
        self.drivable.height()
    }

    pub fn drivable(&self) -> &Grid<bool> {
        &self.drivable
    }

    pub fn intersection(&self) -> &Grid<bool> {
        &self.intersection
    }

    /// Flat index of the cell containing the world point, if in bounds.
    pub fn cell_index(&self, x: f64, y: f64) -> Option<usize> {
        let fx = (x - self.origin.0) / self.resolution;
        let fy = (y - self.origin.1) / self.resolution;
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let (ix, iy) = (fx as usize, fy as usize);
        self.drivable.index_of(ix, iy)
    }

    /// Flat index of the nearest in-bounds cell to the world point.
    pub fn clamped_cell_index(&self, x: f64, y: f64) -> usize {
        let fx = ((x - self.origin.0) / self.resolution).floor();
        let fy = ((y - self.origin.1) / self.resolution).floor();
        let ix = (fx.max(0.0) as usize).min(self.width() - 1);
        let iy = (fy.max(0.0) as usize).min(self.height() - 1);
        iy * self.width() + ix
    }

    /// World coordinates of a cell's center.
    pub fn cell_center(&self, index: usize) -> (f64, f64) {
        let (ix, iy) = self.drivable.coords_of(index);
        (
            self.origin.0 + (ix as f64 + 0.5) * self.resolution,
            self.origin.1 + (iy as f64 + 0.5) * self.resolution,
        )
    }

    pub fn is_drivable_at(&self, x: f64, y: f64) -> Option<bool> {
        self.cell_index(x, y).map(|i| *self.drivable.at(i))
    }

    pub fn is_intersection_at(&self, x: f64, y: f64) -> Option<bool> {
        self.cell_index(x, y).map(|i| *self.intersection.at(i))
    }
}

/// True iff the map cell containing the sample's ego pose is flagged as an
/// intersection. Errors when the ego pose is outside the map.
pub fn is_on_intersection(sample: &Sample, map: &SceneMap) -> Result<bool> {
    map.is_intersection_at(sample.ego_pose.x, sample.ego_pose.y)
        .ok_or(Error::OutOfBounds {
            x: sample.ego_pose.x,
            y: sample.ego_pose.y,
        })
}

/// One scene: its map, the full-rate ego trajectory, and the keyframes.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub scene_id: String,
    pub map: SceneMap,
    /// Ordered ego poses, including non-keyframe poses, strictly increasing
    /// in timestamp.
    pub ego_trajectory: Vec<Pose2D>,
    pub samples: Vec<Sample>,
}

/// An ordered collection of scenes; the evaluation unit a submission is
/// scored against.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    scenes: Vec<Scene>,
}

impl Dataset {
    pub fn new(scenes: Vec<Scene>) -> Result<Self> {
        let ds = Self { scenes };
        ds.validate()?;
        Ok(ds)
    }

    pub fn scenes(&self) -> &[Scene] {
        &self.scenes
    }

    pub fn scene(&self, scene_id: &str) -> Option<&Scene> {
        self.scenes.iter().find(|s| s.scene_id == scene_id)
    }

    /// All samples in canonical order (scene order, then keyframe order).
    pub fn samples(&self) -> impl Iterator<Item = &Sample> + '_ {
        self.scenes.iter().flat_map(|s| s.samples.iter())
    }

    pub fn sample_count(&self) -> usize {
        self.scenes.iter().map(|s| s.samples.len()).sum()
    }

    /// Index of the sample's ego pose within its scene trajectory, matched by
    /// timestamp.
    pub fn trajectory_index(&self, sample: &Sample) -> Option<usize> {
        let scene = self.scene(&sample.scene_id)?;
        scene
            .ego_trajectory
            .iter()
            .position(|p| p.timestamp == sample.ego_pose.timestamp)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen_ids = BTreeSet::new();
        for scene in &self.scenes {
            if scene.ego_trajectory.is_empty() {
                return Err(Error::Validation(format!(
                    "scene `{}` has an empty ego trajectory",
                    scene.scene_id
                )));
            }
            for pair in scene.ego_trajectory.windows(2) {
                if !(pair[1].timestamp > pair[0].timestamp) {
                    return Err(Error::Validation(format!(
                        "scene `{}` trajectory timestamps are not strictly increasing at t={}",
                        scene.scene_id, pair[1].timestamp
                    )));
                }
            }
            if scene.ego_trajectory[0].timestamp < 0.0 {
                return Err(Error::Validation(format!(
                    "scene `{}` has a negative timestamp",
                    scene.scene_id
                )));
            }
            for sample in &scene.samples {
                if sample.scene_id != scene.scene_id {
                    return Err(Error::InvalidSample {
                        sample_id: sample.sample_id.clone(),
                        reason: format!(
                            "scene id `{}` does not match enclosing scene `{}`",
                            sample.scene_id, scene.scene_id
                        ),
                    });
                }
                if !seen_ids.insert(sample.sample_id.clone()) {
                    return Err(Error::InvalidSample {
                        sample_id: sample.sample_id.clone(),
                        reason: "duplicate sample id".into(),
                    });
                }
                let on_trajectory = scene.ego_trajectory.iter().any(|p| {
                    p.timestamp == sample.ego_pose.timestamp
                        && p.x == sample.ego_pose.x
                        && p.y == sample.ego_pose.y
                });
                if !on_trajectory {
                    return Err(Error::InvalidSample {
                        sample_id: sample.sample_id.clone(),
                        reason: "ego pose does not appear in the scene trajectory".into(),
                    });
                }
                for b in &sample.gt_boxes {
                    b.validate().map_err(|e| Error::InvalidSample {
                        sample_id: sample.sample_id.clone(),
                        reason: e.to_string(),
                    })?;
                    if b.score.is_some() {
                        return Err(Error::InvalidSample {
                            sample_id: sample.sample_id.clone(),
                            reason: format!(
                                "ground-truth box of class `{}` carries a score",
                                b.class_name
                            ),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Detector modality, for bookkeeping in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Camera,
    Lidar,
    Synthetic,
}

/// A detector's full output over a dataset: scored boxes per sample.
///
/// Samples without an entry are treated as having no detections.
#[derive(Debug, Clone, PartialEq)]
pub struct Submission {
    pub method_name: String,
    pub modality: Modality,
    boxes: BTreeMap<String, Vec<ObjectBox>>,
}

impl Submission {
    pub fn new(
        method_name: impl Into<String>,
        modality: Modality,
        boxes: BTreeMap<String, Vec<ObjectBox>>,
    ) -> Self {
        Self {
            method_name: method_name.into(),
            modality,
            boxes,
        }
    }

    /// The identity submission: every ground-truth box echoed back with
    /// score 1.0.
    pub fn identity(dataset: &Dataset, method_name: impl Into<String>) -> Self {
        let mut boxes = BTreeMap::new();
        for sample in dataset.samples() {
            let dets = sample
                .gt_boxes
                .iter()
                .map(|b| ObjectBox {
                    score: Some(1.0),
                    ..b.clone()
                })
                .collect();
            boxes.insert(sample.sample_id.clone(), dets);
        }
        Self::new(method_name, Modality::Synthetic, boxes)
    }

    pub fn boxes_for(&self, sample_id: &str) -> &[ObjectBox] {
        self.boxes.get(sample_id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn entries(&self) -> impl Iterator<Item = (&String, &Vec<ObjectBox>)> {
        self.boxes.iter()
    }

    /// Sorted distinct class names present in the submission.
    pub fn classes(&self) -> BTreeSet<ClassName> {
        self.boxes
            .values()
            .flatten()
            .map(|b| b.class_name.clone())
            .collect()
    }

    pub fn with_method_name(mut self, name: impl Into<String>) -> Self {
        self.method_name = name.into();
        self
    }

    /// Check submission invariants against the dataset it scores.
    pub fn validate_against(&self, dataset: &Dataset) -> Result<()> {
        let known: BTreeSet<&str> = dataset.samples().map(|s| s.sample_id.as_str()).collect();
        for (sample_id, dets) in &self.boxes {
            if !known.contains(sample_id.as_str()) {
                return Err(Error::UnknownSampleId(sample_id.clone()));
            }
            for b in dets {
                b.validate().map_err(|e| Error::InvalidSample {
                    sample_id: sample_id.clone(),
                    reason: e.to_string(),
                })?;
                if b.score.is_none() {
                    return Err(Error::InvalidSample {
                        sample_id: sample_id.clone(),
                        reason: format!("detection of class `{}` has no score", b.class_name),
                    });
                }
            }
        }
        Ok(())
    }
}
