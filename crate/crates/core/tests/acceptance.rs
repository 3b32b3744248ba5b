//! Acceptance suite: one test per criterion, each printing a pass line.
//! Criterion 12 (byte-identical CLI reports) lives in the CLI crate's own
//! acceptance target, next to the binary it exercises.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

mod common;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{
    dataset_from_boxes, default_dataset, detection, gt_box, pipeline_scores, submission_from_boxes,
};
use planmetrics::analysis::{
    bin_samples, congestion_sweep, curvature_per_sample, sample_values, threshold_sweep, BinSpec,
    CongestionConfig, ValueFn, CURVATURE_OUTLIER_CUT,
};
use planmetrics::grid::Grid;
use planmetrics::metrics::{
    apply_thresholds, f1_optimal_threshold, f1_threshold_table, match_boxes, mean_ap,
    spearman_rank_correlation, DEFAULT_MATCH_DISTANCES,
};
use planmetrics::planner::{
    aggregate, evaluate_pkl, kl_divergence, plan_distribution, AggregateMode, CostMap, PklValue,
    PlannerParams, StepDistribution,
};
use planmetrics::synthetic::{simulate_detector, ErrorModel};
use planmetrics::{ClassName, Pose2D, Submission};

fn pass(criterion: u32, detail: &str) {
    println!("[PASS] criterion {criterion}: {detail}");
}

#[test]
fn acceptance_01_identity_zero() {
    let t0 = Instant::now();
    let dataset = default_dataset();
    assert!(dataset.sample_count() >= 500, "need at least 500 samples");

    let submission = Submission::identity(&dataset, "identity");
    let params = PlannerParams::default();
    let table = f1_threshold_table(&dataset, &submission, 2.0);
    let thresholded = apply_thresholds(&submission, &table).unwrap();
    let values = evaluate_pkl(&dataset, &thresholded, &params).unwrap();
    for v in &values {
        assert_eq!(v.pkl, 0.0, "sample {} has nonzero PKL", v.sample_id);
    }
    let map = mean_ap(&dataset, &submission, &DEFAULT_MATCH_DISTANCES);
    assert_eq!(map, 1.0, "identity submission must score mAP exactly 1.0");

    let elapsed = t0.elapsed();
    assert!(
        elapsed.as_secs() < 60,
        "identity evaluation took {elapsed:?}, budget 60 s"
    );
    pass(
        1,
        &format!(
            "identity submission: {} samples all PKL == 0, mAP == 1.0 in {elapsed:?}",
            values.len()
        ),
    );
}

fn random_distribution(rng: &mut ChaCha8Rng, n_cells: usize) -> StepDistribution {
    let support_size = rng.random_range(1..=12usize);
    let mut acc = std::collections::BTreeMap::new();
    for _ in 0..support_size {
        let cell = rng.random_range(0..n_cells);
        *acc.entry(cell).or_insert(0.0) += rng.random_range(0.05..1.0f64);
    }
    let total: f64 = acc.values().sum();
    StepDistribution::from_support(acc.into_iter().map(|(c, p)| (c, p / total)).collect())
}

#[test]
fn acceptance_02_kl_correctness() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let p = random_distribution(&mut rng, 400);
        let d = kl_divergence(&p, &p, 1e-12).unwrap();
        worst = worst.max(d);
        assert!(d <= 1e-9, "KL(p, p) = {d}");
    }

    let p = StepDistribution::from_support(vec![(0, 1.0)]);
    let q = StepDistribution::from_support(vec![(0, 0.5), (1, 0.5)]);
    let d1 = kl_divergence(&p, &q, 1e-12).unwrap();
    assert!((d1 - 0.6931).abs() < 1e-4, "got {d1}");
    let p = StepDistribution::from_support(vec![(0, 0.75), (1, 0.25)]);
    let d2 = kl_divergence(&p, &q, 1e-12).unwrap();
    assert!((d2 - 0.1308).abs() < 1e-4, "got {d2}");

    pass(
        2,
        &format!("1000 x KL(p,p) <= 1e-9 (worst {worst:.1e}); hand cases {d1:.4} / {d2:.4}"),
    );
}

#[test]
fn acceptance_03_normalization() {
    let params = PlannerParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let width = rng.random_range(40..80usize);
        let height = rng.random_range(40..80usize);
        let cells: Vec<f64> = (0..width * height).map(|_| rng.random_range(0.0..8.0)).collect();
        let cost = CostMap::new(
            (0.0, 0.0),
            0.5,
            Grid::from_cells(width, height, cells).unwrap(),
        );
        let ego = Pose2D::new(
            rng.random_range(2.0..width as f64 * 0.5 - 2.0),
            rng.random_range(2.0..height as f64 * 0.5 - 2.0),
            rng.random_range(-3.0..3.0),
            0.0,
        );
        let dist = plan_distribution(&cost, &ego, &params).unwrap();
        for step in &dist.steps {
            let sum: f64 = step.support().iter().map(|&(_, p)| p).sum();
            worst = worst.max((sum - 1.0).abs());
            assert!(
                (sum - 1.0).abs() <= 1e-6,
                "step distribution sums to {sum}"
            );
        }
    }
    pass(
        3,
        &format!("8000 step distributions over 1000 random cost maps normalized (worst |sum-1| = {worst:.1e})"),
    );
}

/// Brute-force oracle: independently rebuild the thresholded set for every
/// candidate and rematch from scratch.
fn f1_oracle(
    dataset: &planmetrics::Dataset,
    submission: &Submission,
    class: &ClassName,
    dist: f64,
) -> f64 {
    let mut candidates: Vec<f64> = dataset
        .samples()
        .flat_map(|s| submission.boxes_for(&s.sample_id))
        .filter(|b| &b.class_name == class)
        .filter_map(|b| b.score)
        .collect();
    candidates.push(0.0);
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    let mut best_f1 = f64::NEG_INFINITY;
    let mut best_t = 0.0;
    for &t in &candidates {
        let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
        for sample in dataset.samples() {
            let kept: Vec<_> = submission
                .boxes_for(&sample.sample_id)
                .iter()
                .filter(|b| b.score.unwrap_or(0.0) >= t)
                .cloned()
                .collect();
            let mr = match_boxes(&sample.gt_boxes, &kept, class, dist);
            tp += mr.pairs.len();
            fp += mr.unmatched_pred.len();
            fn_ += mr.unmatched_gt.len();
        }
        let denom = 2 * tp + fp + fn_;
        let f1 = if denom == 0 { 0.0 } else { 2.0 * tp as f64 / denom as f64 };
        // Ties break toward the larger threshold; candidates ascend, so >=.
        if f1 >= best_f1 {
            best_f1 = f1;
            best_t = t;
        }
    }
    if best_f1 == f64::NEG_INFINITY {
        0.0
    } else {
        best_t
    }
}

#[test]
fn acceptance_04_f1_threshold_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let classes = ["car", "pedestrian"];
    for case in 0..200 {
        let n_samples = rng.random_range(1..=3usize);
        let mut gt_lists = Vec::new();
        let mut det_lists = Vec::new();
        let mut total_boxes = 0usize;
        for _ in 0..n_samples {
            let n_gt = rng.random_range(0..=5usize);
            let n_det = rng.random_range(0..=5usize).min(30 - total_boxes.min(30));
            total_boxes += n_gt + n_det;
            let gts: Vec<_> = (0..n_gt)
                .map(|_| {
                    gt_box(
                        rng.random_range(5.0..35.0),
                        rng.random_range(5.0..35.0),
                        classes[rng.random_range(0..classes.len())],
                    )
                })
                .collect();
            let dets: Vec<_> = (0..n_det)
                .map(|_| {
                    // Half the detections hover near a ground-truth box.
                    let (x, y) = if !gts.is_empty() && rng.random_range(0.0..1.0f64) < 0.5 {
                        let g = &gts[rng.random_range(0..gts.len())];
                        (
                            g.center_x + rng.random_range(-2.5..2.5),
                            g.center_y + rng.random_range(-2.5..2.5),
                        )
                    } else {
                        (rng.random_range(5.0..35.0), rng.random_range(5.0..35.0))
                    };
                    // Quantized scores force ties.
                    let score = rng.random_range(0..=10u32) as f64 / 10.0;
                    detection(x, y, classes[rng.random_range(0..classes.len())], score)
                })
                .collect();
            gt_lists.push(gts);
            det_lists.push(dets);
        }
        let dataset = dataset_from_boxes(gt_lists);
        let submission = submission_from_boxes(&dataset, det_lists);
        for class in classes {
            let class = ClassName::new(class);
            let fast = f1_optimal_threshold(&dataset, &submission, &class, 2.0);
            let slow = f1_oracle(&dataset, &submission, &class, 2.0);
            assert_eq!(fast, slow, "case {case} class {class} diverged");
        }
    }
    pass(4, "f1_optimal_threshold == brute-force sweep on 200 random instances (exact)");
}

#[test]
fn acceptance_05_spearman() {
    let rho = spearman_rank_correlation(&[1.0, 2.0, 3.0, 4.0], &[2.0, 1.0, 4.0, 3.0]).unwrap();
    assert!((rho - 0.6).abs() < 1e-12, "got {rho}");

    // Tie-free inputs must match the rank-difference formula exactly.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let n = rng.random_range(3..40usize);
        let xs: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let mut ys = xs.clone();
        // Deterministic shuffle.
        for i in (1..n).rev() {
            ys.swap(i, rng.random_range(0..=i));
        }
        let rho = spearman_rank_correlation(&xs, &ys).unwrap();
        let d2: f64 = xs.iter().zip(&ys).map(|(a, b)| (a - b) * (a - b)).sum();
        let n = n as f64;
        let formula = 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
        assert!((rho - formula).abs() < 1e-12, "{rho} vs {formula}");
    }
    pass(5, "rank formula matched exactly on tie-free inputs; hand case 0.6 within 1e-12");
}

#[test]
fn acceptance_06_congestion_trend() {
    let t0 = Instant::now();
    let dataset = default_dataset();
    let params = PlannerParams::default();
    let report = congestion_sweep(&dataset, &CongestionConfig::default(), &params).unwrap();

    for row in &report.rows {
        for pair in row.median_pkl.windows(2) {
            assert!(
                pair[1] < pair[0],
                "n_cars {}: PKL not strictly decreasing in distance: {:?}",
                row.n_cars,
                row.median_pkl
            );
        }
        assert!(row.monotone_non_increasing);
    }
    let p30_d5 = report.rows.iter().find(|r| r.n_cars == 30).unwrap().median_pkl[0];
    let p5_d20 = *report
        .rows
        .iter()
        .find(|r| r.n_cars == 5)
        .unwrap()
        .median_pkl
        .last()
        .unwrap();
    assert!(
        p30_d5 > p5_d20,
        "PKL(n=30,d=5) = {p30_d5} must exceed PKL(n=5,d=20) = {p5_d20}"
    );

    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs() < 300, "grid took {elapsed:?}, budget 5 min");
    pass(
        6,
        &format!(
            "4x4 congestion grid strictly decreasing per row; {p30_d5:.1} > {p5_d20:.3}; {elapsed:?}"
        ),
    );
}

#[test]
fn acceptance_07_threshold_sweep_shape() {
    let dataset = default_dataset();
    let params = PlannerParams::default();
    let model = ErrorModel {
        drop_rate: 0.1,
        fp_rate: 0.25,
        depth_noise_sigma_m: 1.0,
        lateral_noise_sigma_m: 0.3,
        score_calibration: 0.9,
    };
    let submission = simulate_detector(&dataset, &model, 13).unwrap();
    let car = ClassName::new("car");
    let table = f1_threshold_table(&dataset, &submission, 2.0);

    let thresholded = apply_thresholds(&submission, &table).unwrap();
    let values = evaluate_pkl(&dataset, &thresholded, &params).unwrap();
    let f1_pkl = aggregate(&values, AggregateMode::Median).unwrap();

    let grid: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
    let rows = threshold_sweep(&dataset, &submission, &car, &grid, &table, &params).unwrap();
    assert_eq!(rows.len(), 10);
    let min_sweep = rows.iter().map(|&(_, v)| v).fold(f64::INFINITY, f64::min);
    assert!(min_sweep > 0.0);
    assert!(
        f1_pkl <= 1.1 * min_sweep,
        "median PKL at F1 threshold ({f1_pkl}) exceeds 1.1 x sweep minimum ({min_sweep})"
    );
    pass(
        7,
        &format!(
            "PKL at F1-optimal car threshold {:.3}: {f1_pkl:.4} <= 1.1 x sweep min {min_sweep:.4} (ratio {:.3})",
            table.get(&car).unwrap(),
            f1_pkl / min_sweep
        ),
    );
}

#[test]
fn acceptance_08_noise_monotonicity() {
    let dataset = default_dataset();
    let mut medians = Vec::new();
    let mut maps = Vec::new();
    for sigma in [0.0, 0.5, 1.0, 2.0] {
        let model = ErrorModel {
            drop_rate: 0.1,
            fp_rate: 0.1,
            depth_noise_sigma_m: sigma,
            lateral_noise_sigma_m: 0.2,
            score_calibration: 0.9,
        };
        let (median, map) = pipeline_scores(&dataset, &model, 11);
        medians.push(median);
        maps.push(map);
    }
    for pair in medians.windows(2) {
        assert!(
            pair[1] >= pair[0],
            "median PKL not non-decreasing over depth noise: {medians:?}"
        );
    }
    for pair in maps.windows(2) {
        assert!(pair[1] <= pair[0], "mAP not non-increasing: {maps:?}");
    }
    pass(
        8,
        &format!("depth noise 0->2 m: median PKL {medians:?} up, mAP {maps:?} down"),
    );
}

#[test]
fn acceptance_09_curvature_analytics() {
    // Straight path.
    let straight: Vec<Pose2D> = (0..200)
        .map(|i| Pose2D::new(i as f64 * 0.6, 5.0, 0.0, i as f64 * 0.1))
        .collect();
    let ks = curvature_per_sample(&straight, 2.0).unwrap();
    for &k in &ks {
        assert!(k <= 1e-9, "straight-path curvature {k}");
    }

    // Circle of radius 20 m.
    let circle: Vec<Pose2D> = (0..400)
        .map(|i| {
            let a = i as f64 * 0.025;
            Pose2D::new(20.0 * a.cos(), 20.0 * a.sin(), 0.0, i as f64 * 0.1)
        })
        .collect();
    let ks = curvature_per_sample(&circle, 2.0).unwrap();
    for &k in &ks[10..390] {
        assert!(
            (k - 0.05).abs() / 0.05 <= 0.05,
            "circle curvature {k} outside 0.05 +/- 5%"
        );
    }

    // The outlier cut excludes exactly the samples with curvature > 0.1 and
    // reports their count.
    let dataset = default_dataset();
    let sub = Submission::identity(&dataset, "identity");
    let pkl: Vec<PklValue> = dataset
        .samples()
        .map(|s| PklValue {
            sample_id: s.sample_id.clone(),
            pkl: 0.0,
        })
        .collect();
    let sigma = 2.0;
    let values = sample_values(&dataset, ValueFn::Curvature { gaussian_sigma: sigma }).unwrap();
    let expected_outliers = values.iter().filter(|&&v| v > CURVATURE_OUTLIER_CUT).count();
    let report = bin_samples(
        &dataset,
        &sub,
        &pkl,
        &BinSpec::curvature_default(),
        ValueFn::Curvature { gaussian_sigma: sigma },
        &[2.0],
    )
    .unwrap();
    assert_eq!(report.excluded_outliers, expected_outliers);
    let assigned: usize = report.rows.iter().map(|r| r.n_samples).sum();
    assert_eq!(
        assigned + report.excluded_outliers + report.excluded_out_of_range,
        dataset.sample_count()
    );
    assert!(expected_outliers > 0, "fixture should produce some outliers");
    pass(
        9,
        &format!(
            "straight <= 1e-9; circle 0.05 +/- 5%; outlier cut excluded exactly {expected_outliers}"
        ),
    );
}

#[test]
fn acceptance_10_binning_partition() {
    let dataset = default_dataset();
    let sub = Submission::identity(&dataset, "identity");
    let pkl: Vec<PklValue> = dataset
        .samples()
        .map(|s| PklValue {
            sample_id: s.sample_id.clone(),
            pkl: 0.0,
        })
        .collect();

    let cases: [(BinSpec, ValueFn); 3] = [
        (BinSpec::object_count_default(), ValueFn::ObjectCount),
        (BinSpec::speed_default(), ValueFn::EgoSpeed),
        (
            BinSpec::curvature_default(),
            ValueFn::Curvature {
                gaussian_sigma: 2.0,
            },
        ),
    ];
    for (spec, value_fn) in cases {
        let values = sample_values(&dataset, value_fn).unwrap();
        let report = bin_samples(&dataset, &sub, &pkl, &spec, value_fn, &[2.0]).unwrap();
        let assigned: usize = report.rows.iter().map(|r| r.n_samples).sum();
        assert_eq!(
            assigned + report.excluded_out_of_range + report.excluded_outliers,
            dataset.sample_count(),
            "partition violated for {:?}",
            spec.kind
        );
        if spec.include_zero_bin {
            let outlier_cut = matches!(value_fn, ValueFn::Curvature { .. });
            let exact_zeros = values
                .iter()
                .filter(|&&v| v == 0.0 && (!outlier_cut || v <= CURVATURE_OUTLIER_CUT))
                .count();
            assert_eq!(
                report.rows[0].n_samples, exact_zeros,
                "zero bin must capture exactly the exact-zero values for {:?}",
                spec.kind
            );
            assert!(exact_zeros > 0, "fixture should hold stationary samples");
        }
    }
    pass(10, "per-bin counts sum to assigned samples; zero bins capture exactly the zeros");
}

#[test]
fn acceptance_11_rank_agreement() {
    let dataset = default_dataset();
    let mut maps = Vec::new();
    let mut neg_pkls = Vec::new();
    for (i, sigma) in [0.0, 0.4, 0.9, 1.6, 2.6].iter().enumerate() {
        let model = ErrorModel {
            drop_rate: 0.05 * i as f64,
            fp_rate: 0.06 * i as f64,
            depth_noise_sigma_m: *sigma,
            lateral_noise_sigma_m: 0.1 * i as f64,
            score_calibration: 0.9,
        };
        let (median, map) = pipeline_scores(&dataset, &model, 17);
        maps.push(map);
        neg_pkls.push(-median);
    }
    let rho = spearman_rank_correlation(&maps, &neg_pkls).unwrap();
    assert_eq!(rho, 1.0, "maps {maps:?} vs neg pkls {neg_pkls:?}");
    pass(
        11,
        &format!("5 noise-ordered detectors: spearman(mAP, -median PKL) == 1.0 (mAPs {maps:?})"),
    );
}
