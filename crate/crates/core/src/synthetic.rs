//! Seeded synthetic dataset generator and detector simulator.
//!
//! The generator rolls out a kinematic ego trajectory per scene (with a
//! parked dwell in most scenes, speeds up to ~12 m/s, and smoothly varying
//! curvature), rasterizes the drivable corridor around it, marks intersection
//! patches at a configurable fraction of keyframes, and scatters objects
//! around the road. Everything is a pure function of `(config, seed)`.
//!
//! The detector simulator perturbs ground truth with tunable drop-out, false
//! positives, and center noise split into a depth component (along the
//! ego-to-object ray) and a lateral component, which is what makes camera-like
//! and lidar-like error profiles distinguishable downstream.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::scene::{
    normalize_yaw, ClassName, Dataset, Modality, ObjectBox, Pose2D, Sample, Scene, SceneMap,
    Submission, Tag,
};

/// Trajectory poses per second.
const TRAJECTORY_HZ: f64 = 10.0;
/// Trajectory poses between consecutive keyframes (2 Hz keyframes).
const KEYFRAME_STRIDE: usize = 5;
/// Map raster resolution, meters per cell.
const MAP_RESOLUTION_M: f64 = 0.5;
/// Drivable corridor half-width around the ego trajectory, meters.
const ROAD_HALF_WIDTH_M: f64 = 4.0;
/// Radius of an intersection patch, meters.
const INTERSECTION_RADIUS_M: f64 = 3.0;
/// Distance kept clear around the ego when placing objects, meters.
const EGO_CLEARANCE_M: f64 = 2.5;
/// Error scale that maps detection displacement to box quality.
const QUALITY_ERR_SCALE_M: f64 = 2.0;

/// Parameters of the synthetic dataset generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n_scenes: usize,
    pub samples_per_scene: usize,
    /// Side length of the square map, meters.
    pub map_size_m: f64,
    /// Fraction of keyframes whose ego pose lies on an intersection cell.
    pub intersection_fraction: f64,
    /// Mean ground-truth object count per sample (Poisson).
    pub mean_objects: f64,
    pub rain_fraction: f64,
    pub night_fraction: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_scenes: 10,
            samples_per_scene: 50,
            map_size_m: 80.0,
            intersection_fraction: 0.3,
            mean_objects: 12.0,
            rain_fraction: 0.25,
            night_fraction: 0.2,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_scenes == 0 {
            return Err(Error::InvalidConfig {
                field: "n_scenes",
                reason: "must be positive".into(),
            });
        }
        if self.samples_per_scene == 0 {
            return Err(Error::InvalidConfig {
                field: "samples_per_scene",
                reason: "must be positive".into(),
            });
        }
        if !(self.map_size_m >= 40.0) {
            return Err(Error::InvalidConfig {
                field: "map_size_m",
                reason: format!("must be at least 40 m, got {}", self.map_size_m),
            });
        }
        if !(self.mean_objects > 0.0) {
            return Err(Error::InvalidConfig {
                field: "mean_objects",
                reason: "must be positive".into(),
            });
        }
        for (field, v) in [
            ("intersection_fraction", self.intersection_fraction),
            ("rain_fraction", self.rain_fraction),
            ("night_fraction", self.night_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig {
                    field,
                    reason: format!("must be in [0, 1], got {v}"),
                });
            }
        }
        Ok(())
    }
}

/// Detector error model. All-zero rates with calibration 1.0 is the identity
/// detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ErrorModel {
    /// Probability of dropping each ground-truth box.
    pub drop_rate: f64,
    /// Probability that a ground-truth box spawns a spurious detection
    /// elsewhere in the sample.
    pub fp_rate: f64,
    /// Center noise along the ego-to-object ray, meters (std dev).
    pub depth_noise_sigma_m: f64,
    /// Center noise perpendicular to that ray, meters (std dev).
    pub lateral_noise_sigma_m: f64,
    /// 1.0: scores fully reflect box quality; 0.0: scores are uniform noise.
    pub score_calibration: f64,
}

impl Default for ErrorModel {
    fn default() -> Self {
        Self {
            drop_rate: 0.0,
            fp_rate: 0.0,
            depth_noise_sigma_m: 0.0,
            lateral_noise_sigma_m: 0.0,
            score_calibration: 1.0,
        }
    }
}

impl ErrorModel {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [("drop_rate", self.drop_rate), ("fp_rate", self.fp_rate)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::InvalidConfig {
                    field,
                    reason: format!("must be in [0, 1), got {v}"),
                });
            }
        }
        for (field, v) in [
            ("depth_noise_sigma_m", self.depth_noise_sigma_m),
            ("lateral_noise_sigma_m", self.lateral_noise_sigma_m),
        ] {
            if !(v >= 0.0) {
                return Err(Error::InvalidConfig {
                    field,
                    reason: format!("must be non-negative, got {v}"),
                });
            }
        }
        if !(0.0..=1.0).contains(&self.score_calibration) {
            return Err(Error::InvalidConfig {
                field: "score_calibration",
                reason: format!("must be in [0, 1], got {}", self.score_calibration),
            });
        }
        Ok(())
    }
}

/// A named detector: error model plus report metadata. Used by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub method_name: String,
    pub modality: Modality,
    #[serde(default)]
    pub error_model: ErrorModel,
}

/// splitmix64, used to derive independent per-scene / per-sample RNG seeds.
fn substream_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn class_dims(class: &str) -> (f64, f64) {
    match class {
        "car" => (1.9, 4.6),
        "truck" => (2.5, 7.5),
        "pedestrian" => (0.7, 0.7),
        "bicycle" => (0.7, 1.9),
        _ => (1.0, 1.0),
    }
}

fn pick_class(rng: &mut ChaCha8Rng) -> ClassName {
    let u: f64 = rng.random();
    let name = if u < 0.50 {
        "car"
    } else if u < 0.70 {
        "pedestrian"
    } else if u < 0.85 {
        "truck"
    } else {
        "bicycle"
    };
    ClassName::new(name)
}

/// Generate a dataset deterministically from `(config, seed)`.
pub fn generate_synthetic_dataset(config: &GeneratorConfig, seed: u64) -> Result<Dataset> {
    config.validate()?;
    let mut scenes = Vec::with_capacity(config.n_scenes);
    for si in 0..config.n_scenes {
        let scene_seed = substream_seed(seed, si as u64);
        scenes.push(generate_scene(config, si, scene_seed)?);
    }
    Dataset::new(scenes)
}

fn generate_scene(config: &GeneratorConfig, scene_index: usize, seed: u64) -> Result<Scene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene_id = format!("scene{scene_index:03}");
    let size = config.map_size_m;
    let dt = 1.0 / TRAJECTORY_HZ;

    // Keyframes sit at every KEYFRAME_STRIDE-th pose; a few trailing poses
    // give the finite-difference analyses neighbors at the last keyframe.
    let n_poses = config.samples_per_scene * KEYFRAME_STRIDE + KEYFRAME_STRIDE;

    // Most scenes open with a parked dwell so the zero-speed / zero-curvature
    // bins are populated.
    let dwell_keyframes = if rng.random::<f64>() < 0.7 {
        1 + (rng.random::<f64>() * (config.samples_per_scene as f64 / 5.0)) as usize
    } else {
        0
    };
    let dwell_steps = dwell_keyframes * KEYFRAME_STRIDE;

    let mut x = size * rng.random_range(0.35..0.65);
    let mut y = size * rng.random_range(0.35..0.65);
    let mut yaw = rng.random_range(-PI..PI);
    let mut speed = rng.random_range(2.0..8.0);
    let mut kappa: f64 = rng.random_range(-0.04..0.04);

    let step_normal: Normal<f64> = Normal::new(0.0, 1.0).expect("unit normal");
    let border_margin = 14.0;

    let mut trajectory = Vec::with_capacity(n_poses);
    for k in 0..n_poses {
        trajectory.push(Pose2D::new(x, y, yaw, k as f64 * dt));
        if k + 1 == n_poses {
            break;
        }
        if k < dwell_steps {
            continue; // parked: position and heading frozen, time advances
        }
        speed = (speed + 0.35 * step_normal.sample(&mut rng)).clamp(0.3, 11.8);
        kappa = (kappa + 0.012 * step_normal.sample(&mut rng)).clamp(-0.125, 0.125);
        // Steer back toward the map center when close to a border.
        let near_border = x < border_margin
            || y < border_margin
            || x > size - border_margin
            || y > size - border_margin;
        if near_border {
            let bearing = (size / 2.0 - y).atan2(size / 2.0 - x);
            kappa = (0.4 * normalize_yaw(bearing - yaw)).clamp(-0.12, 0.12);
        }
        let ds = speed * dt;
        yaw = normalize_yaw(yaw + kappa * ds);
        x += ds * yaw.cos();
        y += ds * yaw.sin();
    }

    let keyframe_indices: Vec<usize> =
        (0..config.samples_per_scene).map(|i| i * KEYFRAME_STRIDE).collect();

    // Rasterize the drivable corridor around the full trajectory.
    let cells_per_side = (size / MAP_RESOLUTION_M).round() as usize;
    let mut drivable = Grid::filled(cells_per_side, cells_per_side, false)?;
    for pose in &trajectory {
        paint_disk(&mut drivable, pose.x, pose.y, ROAD_HALF_WIDTH_M, true, None);
    }

    // Intersection patches: one Bernoulli draw per distinct keyframe cell so
    // a parked dwell is decided as a unit, then erase the pose cells of
    // undecided groups so the per-sample fraction tracks the config.
    let mut intersection = Grid::filled(cells_per_side, cells_per_side, false)?;
    let cell_of = |px: f64, py: f64| -> usize {
        let ix = ((px / MAP_RESOLUTION_M) as usize).min(cells_per_side - 1);
        let iy = ((py / MAP_RESOLUTION_M) as usize).min(cells_per_side - 1);
        iy * cells_per_side + ix
    };
    let mut group_choice: BTreeMap<usize, bool> = BTreeMap::new();
    for &ki in &keyframe_indices {
        let pose = &trajectory[ki];
        let cell = cell_of(pose.x, pose.y);
        let chosen = *group_choice
            .entry(cell)
            .or_insert_with(|| rng.random::<f64>() < config.intersection_fraction);
        if chosen {
            paint_disk(
                &mut intersection,
                pose.x,
                pose.y,
                INTERSECTION_RADIUS_M,
                true,
                Some(&drivable),
            );
        }
    }
    for (&cell, &chosen) in &group_choice {
        if !chosen {
            *intersection.at_mut(cell) = false;
        }
    }

    let map = SceneMap::new((0.0, 0.0), MAP_RESOLUTION_M, drivable, intersection)?;

    let mut tags = std::collections::BTreeSet::new();
    if rng.random::<f64>() < config.rain_fraction {
        tags.insert(Tag::Rain);
    }
    if rng.random::<f64>() < config.night_fraction {
        tags.insert(Tag::Night);
    }

    let poisson = Poisson::new(config.mean_objects).map_err(|e| Error::InvalidConfig {
        field: "mean_objects",
        reason: e.to_string(),
    })?;

    let mut samples = Vec::with_capacity(config.samples_per_scene);
    for (kf, &ki) in keyframe_indices.iter().enumerate() {
        let ego = trajectory[ki];
        let n_objects = poisson.sample(&mut rng) as usize;
        let mut gt_boxes = Vec::with_capacity(n_objects);
        for _ in 0..n_objects {
            if let Some(b) = place_object(&mut rng, &trajectory, ki, &ego, size) {
                gt_boxes.push(b);
            }
        }
        samples.push(Sample {
            sample_id: format!("{scene_id}_kf{kf:03}"),
            scene_id: scene_id.clone(),
            ego_pose: ego,
            gt_boxes,
            tags: tags.clone(),
        });
    }

    Ok(Scene {
        scene_id,
        map,
        ego_trajectory: trajectory,
        samples,
    })
}

fn place_object(
    rng: &mut ChaCha8Rng,
    trajectory: &[Pose2D],
    keyframe_index: usize,
    ego: &Pose2D,
    map_size: f64,
) -> Option<ObjectBox> {
    let class = pick_class(rng);
    let (base_w, base_l) = class_dims(class.as_str());
    let width = base_w * (1.0 + rng.random_range(-0.1..0.1));
    let length = base_l * (1.0 + rng.random_range(-0.1..0.1));

    for _ in 0..8 {
        let on_road = rng.random::<f64>() < 0.7;
        let (mut px, mut py, obj_yaw) = if on_road {
            let offset = rng.random_range(-40..70i64);
            let j = (keyframe_index as i64 + offset).clamp(0, trajectory.len() as i64 - 1) as usize;
            let anchor = &trajectory[j];
            let lateral = rng.random_range(-3.2..3.2);
            let along = rng.random_range(-1.5..1.5);
            let (sin, cos) = anchor.yaw.sin_cos();
            let px = anchor.x + along * cos - lateral * sin;
            let py = anchor.y + along * sin + lateral * cos;
            let flip = if rng.random::<f64>() < 0.3 { PI } else { 0.0 };
            let yaw = anchor.yaw + 0.15 * rng.random_range(-1.0..1.0) + flip;
            (px, py, yaw)
        } else {
            let r = rng.random_range(4.0..28.0);
            let theta = rng.random_range(0.0..TAU);
            (
                ego.x + r * theta.cos(),
                ego.y + r * theta.sin(),
                rng.random_range(-PI..PI),
            )
        };
        px = px.clamp(1.0, map_size - 1.0);
        py = py.clamp(1.0, map_size - 1.0);
        if (px - ego.x).hypot(py - ego.y) < EGO_CLEARANCE_M {
            continue;
        }
        let mut b = ObjectBox::ground_truth(px, py, width, length, obj_yaw, class);
        let moving_class = b.class_name.as_str() != "pedestrian";
        let move_prob = if moving_class { 0.5 } else { 0.3 };
        if rng.random::<f64>() < move_prob {
            let v = rng.random_range(0.5..8.0);
            b.velocity = Some((v * b.yaw.cos(), v * b.yaw.sin()));
        }
        return Some(b);
    }
    None
}

fn paint_disk(grid: &mut Grid<bool>, cx: f64, cy: f64, radius: f64, value: bool, mask: Option<&Grid<bool>>) {
    let res = MAP_RESOLUTION_M;
    let min_ix = (((cx - radius) / res).floor().max(0.0)) as usize;
    let min_iy = (((cy - radius) / res).floor().max(0.0)) as usize;
    let max_ix = ((((cx + radius) / res).ceil()) as usize).min(grid.width().saturating_sub(1));
    let max_iy = ((((cy + radius) / res).ceil()) as usize).min(grid.height().saturating_sub(1));
    for iy in min_iy..=max_iy {
        for ix in min_ix..=max_ix {
            let (wx, wy) = ((ix as f64 + 0.5) * res, (iy as f64 + 0.5) * res);
            if (wx - cx).hypot(wy - cy) <= radius {
                let idx = iy * grid.width() + ix;
                if mask.map_or(true, |m| *m.at(idx)) {
                    *grid.at_mut(idx) = value;
                }
            }
        }
    }
    // The cell containing the center is always covered, even when the disk is
    // narrower than a cell.
    if radius >= 0.0 {
        let ix = ((cx / res) as usize).min(grid.width() - 1);
        let iy = ((cy / res) as usize).min(grid.height() - 1);
        let idx = iy * grid.width() + ix;
        if mask.map_or(true, |m| *m.at(idx)) {
            *grid.at_mut(idx) = value;
        }
    }
}

/// Run the synthetic detector over a dataset. Deterministic per seed.
///
/// Each ground-truth box is dropped with probability `drop_rate`, surviving
/// boxes are displaced along and across the ego-to-object ray, and each box
/// spawns a false positive with probability `fp_rate`. Scores blend box
/// quality (which decays with displacement) with uniform noise according to
/// `score_calibration`, so better boxes stochastically score higher.
pub fn simulate_detector(dataset: &Dataset, model: &ErrorModel, seed: u64) -> Result<Submission> {
    model.validate()?;
    let mut boxes = BTreeMap::new();
    let step_normal: Normal<f64> = Normal::new(0.0, 1.0).expect("unit normal");

    for (sample_index, sample) in dataset.samples().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(seed, sample_index as u64));
        let ego = sample.ego_pose;
        let mut dets: Vec<ObjectBox> = Vec::with_capacity(sample.gt_boxes.len());
        let mut fps: Vec<ObjectBox> = Vec::new();

        for gt in &sample.gt_boxes {
            // Draw the full per-box tuple unconditionally so the stream (and
            // therefore every downstream decision) is stable when only the
            // noise magnitudes change between runs.
            let u_drop: f64 = rng.random();
            let z_depth: f64 = step_normal.sample(&mut rng);
            let z_lat: f64 = step_normal.sample(&mut rng);
            let u_fp: f64 = rng.random();
            let u_score: f64 = rng.random();

            if u_fp < model.fp_rate {
                fps.push(make_false_positive(&mut rng, &ego, model, dataset, sample));
            }
            if u_drop < model.drop_rate {
                continue;
            }

            let dx = gt.center_x - ego.x;
            let dy = gt.center_y - ego.y;
            let norm = dx.hypot(dy);
            let (ux, uy) = if norm > 1e-9 { (dx / norm, dy / norm) } else { (1.0, 0.0) };
            let depth_err = model.depth_noise_sigma_m * z_depth;
            let lateral_err = model.lateral_noise_sigma_m * z_lat;
            let err = depth_err.hypot(lateral_err);
            let quality = (-err / QUALITY_ERR_SCALE_M).exp();
            let score = (model.score_calibration * quality
                + (1.0 - model.score_calibration) * u_score)
                .clamp(0.0, 1.0);

            dets.push(ObjectBox {
                center_x: gt.center_x + ux * depth_err - uy * lateral_err,
                center_y: gt.center_y + uy * depth_err + ux * lateral_err,
                score: Some(score),
                ..gt.clone()
            });
        }
        dets.extend(fps);
        boxes.insert(sample.sample_id.clone(), dets);
    }

    Ok(Submission::new(
        format!("synthetic-seed{seed}"),
        Modality::Synthetic,
        boxes,
    ))
}

fn make_false_positive(
    rng: &mut ChaCha8Rng,
    ego: &Pose2D,
    model: &ErrorModel,
    dataset: &Dataset,
    sample: &Sample,
) -> ObjectBox {
    let r = rng.random_range(5.0..30.0);
    let theta = rng.random_range(0.0..TAU);
    let class = pick_class(rng);
    let (w, l) = class_dims(class.as_str());
    let yaw = rng.random_range(-PI..PI);
    let quality = rng.random_range(0.0..0.35);
    let u_score: f64 = rng.random();
    let score =
        (model.score_calibration * quality + (1.0 - model.score_calibration) * u_score).clamp(0.0, 1.0);

    let mut px = ego.x + r * theta.cos();
    let mut py = ego.y + r * theta.sin();
    if let Some(scene) = dataset.scene(&sample.scene_id) {
        let size = scene.map.resolution() * scene.map.width() as f64;
        px = px.clamp(1.0, size - 1.0);
        py = py.clamp(1.0, size - 1.0);
    }
    ObjectBox::detection(px, py, w, l, yaw, class, score)
}
