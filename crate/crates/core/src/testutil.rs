//! Hand-built fixtures for unit tests: a single-scene dataset on an open map
//! with one sample per ground-truth box list.

use std::collections::BTreeMap;

use crate::grid::Grid;
use crate::scene::{
    ClassName, Dataset, Modality, ObjectBox, Pose2D, Sample, Scene, SceneMap, Submission,
};

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

pub fn gt_car(x: f64, y: f64) -> ObjectBox {
    ObjectBox::ground_truth(x, y, 1.9, 4.6, 0.0, ClassName::new("car"))
}

pub fn detection(x: f64, y: f64, class: &str, score: f64) -> ObjectBox {
    ObjectBox::detection(x, y, 1.9, 4.6, 0.0, ClassName::new(class), score)
}

/// One scene, one sample per entry of `per_sample_gt`, ego parked at (4, 10).
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

/// Pair detection lists with the dataset's samples in order.
pub fn submission_from_boxes(dataset: &Dataset, per_sample: Vec<Vec<ObjectBox>>) -> Submission {
    let mut boxes = BTreeMap::new();
    for (sample, dets) in dataset.samples().zip(per_sample) {
        boxes.insert(sample.sample_id.clone(), dets);
    }
    Submission::new("test", Modality::Synthetic, boxes)
}
