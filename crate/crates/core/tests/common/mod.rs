//! Shared fixtures for the integration suites.
#![allow(dead_code)] // each test target uses its own subset

use std::collections::BTreeMap;

use planmetrics::grid::Grid;
use planmetrics::metrics::{apply_thresholds, f1_threshold_table, mean_ap, DEFAULT_MATCH_DISTANCES};
use planmetrics::planner::{aggregate, evaluate_pkl, AggregateMode, PlannerParams};
use planmetrics::synthetic::{generate_synthetic_dataset, simulate_detector, ErrorModel, GeneratorConfig};
use planmetrics::{ClassName, Dataset, Modality, ObjectBox, Pose2D, Sample, Scene, SceneMap, Submission};

/// The default synthetic dataset the acceptance criteria run on: 10 scenes x
/// 50 samples, seed 0.
pub fn default_dataset() -> Dataset {
    generate_synthetic_dataset(&GeneratorConfig::default(), 0).unwrap()
}

/// Run the standard pipeline (F1 thresholds -> apply -> PKL; mAP on the raw
/// submission) and return (median PKL, mAP).
pub fn pipeline_scores(dataset: &Dataset, model: &ErrorModel, seed: u64) -> (f64, f64) {
    let submission = simulate_detector(dataset, model, seed).unwrap();
    let params = PlannerParams::default();
    let table = f1_threshold_table(dataset, &submission, 2.0);
    let thresholded = apply_thresholds(&submission, &table).unwrap();
    let values = evaluate_pkl(dataset, &thresholded, &params).unwrap();
    let median = aggregate(&values, AggregateMode::Median).unwrap();
    let map = mean_ap(dataset, &submission, &DEFAULT_MATCH_DISTANCES);
    (median, map)
}

pub fn open_map(size_m: f64) -> SceneMap {
    let cells = (size_m / 0.5) as usize;
    SceneMap::new(
        (0.0, 0.0),
        0.5,
        Grid::filled(cells, cells, true).unwrap(),
        Grid::filled(cells, cells, false).unwrap(),
    )
    .unwrap()
}

pub fn gt_box(x: f64, y: f64, class: &str) -> ObjectBox {
    ObjectBox::ground_truth(x, y, 1.9, 4.6, 0.0, ClassName::new(class))
}

pub fn detection(x: f64, y: f64, class: &str, score: f64) -> ObjectBox {
    ObjectBox::detection(x, y, 1.9, 4.6, 0.0, ClassName::new(class), score)
}

/// Single-scene dataset over an open 40 m map, ego parked, one sample per
/// ground-truth list.
pub fn dataset_from_boxes(per_sample_gt: Vec<Vec<ObjectBox>>) -> Dataset {
    let map = open_map(40.0);
    let trajectory: Vec<Pose2D> = (0..per_sample_gt.len().max(2))
        .map(|i| Pose2D::new(4.0, 10.0, 0.0, i as f64 * 0.5))
        .collect();
    let samples = per_sample_gt
        .into_iter()
        .enumerate()
        .map(|(i, gt_boxes)| Sample {
            sample_id: format!("t_kf{i:03}"),
            scene_id: "t".into(),
            ego_pose: trajectory[i],
            gt_boxes,
            tags: Default::default(),
        })
        .collect();
    Dataset::new(vec![Scene {
        scene_id: "t".into(),
        map,
        ego_trajectory: trajectory,
        samples,
    }])
    .unwrap()
}

pub fn submission_from_boxes(dataset: &Dataset, per_sample: Vec<Vec<ObjectBox>>) -> Submission {
    let mut boxes = BTreeMap::new();
    for (sample, dets) in dataset.samples().zip(per_sample) {
        boxes.insert(sample.sample_id.clone(), dets);
    }
    Submission::new("test", Modality::Synthetic, boxes)
}
