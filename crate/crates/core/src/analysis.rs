//! Conditioned analyses over per-sample PKL and mAP: binning by object
//! count, ego speed, and path curvature; intersection and weather filters;
//! the per-class confidence threshold sweep; and the simulated-congestion
//! upper bound.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{
    apply_thresholds, f1_threshold_table, mean_ap, mean_ap_over, ThresholdTable,
    DEFAULT_F1_MATCH_DISTANCE, DEFAULT_MATCH_DISTANCES,
};
use crate::planner::{aggregate, AggregateMode, PklEvaluator, PklValue, PlannerParams};
use crate::report::{
    BinKind, BinRow, BinnedReport, CongestionReport, CongestionRow, EvaluationReport, FilterReport,
    GlobalMetrics, Provenance, ThresholdSweepReport, ThresholdSweepRow,
};
use crate::scene::{
    is_on_intersection, ClassName, Dataset, ObjectBox, Pose2D, Sample, Submission, Tag,
};
use crate::stats;

/// Samples with a path curvature above this are dropped as outliers, 1/m.
pub const CURVATURE_OUTLIER_CUT: f64 = 0.1;
/// Default Gaussian smoothing width for curvature estimation, in pose steps.
pub const DEFAULT_CURVATURE_SIGMA: f64 = 2.0;
/// Bins with fewer samples than this get an mAP instability flag.
const MIN_STABLE_BIN: usize = 5;
/// Footprint of the hallucinated congestion cars, meters.
pub const CONGESTION_CAR_WIDTH_M: f64 = 1.9;
pub const CONGESTION_CAR_LENGTH_M: f64 = 4.6;

/// Bin layout for one analysis: half-open intervals `(edges[i], edges[i+1]]`,
/// optionally preceded by a dedicated bin for exactly-zero values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSpec {
    pub kind: BinKind,
    pub edges: Vec<f64>,
    pub include_zero_bin: bool,
}

impl BinSpec {
    /// Ego-speed layout: a zero bin plus (0,2], (2,4], ..., (10,12] m/s.
    pub fn speed_default() -> Self {
        Self {
            kind: BinKind::EgoSpeed,
            edges: (0..=6).map(|i| 2.0 * i as f64).collect(),
            include_zero_bin: true,
        }
    }

    /// Object-count layout: (0,10], (10,20], ..., (120,130].
    pub fn object_count_default() -> Self {
        Self {
            kind: BinKind::ObjectCount,
            edges: (0..=13).map(|i| 10.0 * i as f64).collect(),
            include_zero_bin: false,
        }
    }

    /// Curvature layout: a zero bin plus (0,0.02], ..., (0.08,0.1] 1/m.
    pub fn curvature_default() -> Self {
        Self {
            kind: BinKind::Curvature,
            edges: (0..=5).map(|i| 0.02 * i as f64).collect(),
            include_zero_bin: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.edges.len() < 2 {
            return Err(Error::InvalidConfig {
                field: "edges",
                reason: "need at least two edges (one bin)".into(),
            });
        }
        for pair in self.edges.windows(2) {
            if !(pair[1] > pair[0]) {
                return Err(Error::InvalidConfig {
                    field: "edges",
                    reason: format!("edges must be strictly increasing, got {pair:?}"),
                });
            }
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        (self.edges.len() - 1) + usize::from(self.include_zero_bin)
    }

    /// Bin index for a value, if it falls in any bin. The zero bin (index 0
    /// when present) captures exactly-zero values only.
    pub fn assign(&self, value: f64) -> Option<usize> {
        let offset = usize::from(self.include_zero_bin);
        if self.include_zero_bin && value == 0.0 {
            return Some(0);
        }
        for i in 0..self.edges.len() - 1 {
            if value > self.edges[i] && value <= self.edges[i + 1] {
                return Some(offset + i);
            }
        }
        None
    }

    pub fn label(&self, bin: usize) -> String {
        if self.include_zero_bin {
            if bin == 0 {
                return "0".to_string();
            }
            let i = bin - 1;
            return format!("({}, {}]", self.edges[i], self.edges[i + 1]);
        }
        format!("({}, {}]", self.edges[bin], self.edges[bin + 1])
    }
}

/// Ego speed at the sample's pose by central finite difference over the
/// neighboring trajectory poses (one-sided at the sequence ends), m/s.
pub fn ego_speed(sample: &Sample, trajectory: &[Pose2D]) -> Result<f64> {
    if trajectory.len() < 2 {
        return Err(Error::TooFewValues {
            what: "ego_speed trajectory",
            need: 2,
            got: trajectory.len(),
        });
    }
    let i = trajectory
        .iter()
        .position(|p| p.timestamp == sample.ego_pose.timestamp)
        .ok_or_else(|| Error::InvalidSample {
            sample_id: sample.sample_id.clone(),
            reason: "ego pose timestamp not found in trajectory".into(),
        })?;
    let prev = i.saturating_sub(1);
    let next = (i + 1).min(trajectory.len() - 1);
    let (a, b) = (&trajectory[prev], &trajectory[next]);
    let dt = b.timestamp - a.timestamp;
    Ok((b.x - a.x).hypot(b.y - a.y) / dt)
}

/// Path curvature at every trajectory pose: positions smoothed with a
/// discrete Gaussian (sigma in pose steps, truncated at three sigma and
/// renormalized at the boundaries), then the standard curvature quotient via
/// central differences. Stationary stretches get curvature 0.
pub fn curvature_per_sample(trajectory: &[Pose2D], gaussian_sigma: f64) -> Result<Vec<f64>> {
    if trajectory.len() < 5 {
        return Err(Error::TooFewValues {
            what: "curvature trajectory",
            need: 5,
            got: trajectory.len(),
        });
    }
    if !(gaussian_sigma > 0.0) {
        return Err(Error::InvalidConfig {
            field: "gaussian_sigma",
            reason: format!("must be positive, got {gaussian_sigma}"),
        });
    }
    let points: Vec<(f64, f64)> = trajectory.iter().map(|p| (p.x, p.y)).collect();
    let smoothed = stats::smooth_positions(&points, gaussian_sigma);
    Ok(stats::curvature_profile(&smoothed))
}

/// Which per-sample value an analysis bins on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ValueFn {
    /// Count of all ground-truth boxes in the sample.
    ObjectCount,
    EgoSpeed,
    Curvature { gaussian_sigma: f64 },
}

/// The binning value for every sample, in canonical dataset order.
pub fn sample_values(dataset: &Dataset, value_fn: ValueFn) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(dataset.sample_count());
    for scene in dataset.scenes() {
        let curvatures = match value_fn {
            ValueFn::Curvature { gaussian_sigma } => {
                Some(curvature_per_sample(&scene.ego_trajectory, gaussian_sigma)?)
            }
            _ => None,
        };
        for sample in &scene.samples {
            let v = match value_fn {
                ValueFn::ObjectCount => sample.gt_boxes.len() as f64,
                ValueFn::EgoSpeed => ego_speed(sample, &scene.ego_trajectory)?,
                ValueFn::Curvature { .. } => {
                    let idx = dataset.trajectory_index(sample).ok_or_else(|| {
                        Error::InvalidSample {
                            sample_id: sample.sample_id.clone(),
                            reason: "pose not found in trajectory".into(),
                        }
                    })?;
                    curvatures.as_ref().expect("curvature mode")[idx]
                }
            };
            out.push(v);
        }
    }
    Ok(out)
}

fn check_alignment(dataset: &Dataset, pkl_values: &[PklValue]) -> Result<()> {
    if pkl_values.len() != dataset.sample_count() {
        return Err(Error::LengthMismatch {
            left: pkl_values.len(),
            right: dataset.sample_count(),
        });
    }
    for (sample, value) in dataset.samples().zip(pkl_values) {
        if sample.sample_id != value.sample_id {
            return Err(Error::Validation(format!(
                "pkl values misaligned with dataset at sample `{}` (got `{}`)",
                sample.sample_id, value.sample_id
            )));
        }
    }
    Ok(())
}

fn metrics_row(
    label: impl Into<String>,
    members: &[usize],
    samples: &[&Sample],
    pkl_values: &[PklValue],
    submission: &Submission,
    match_distances: &[f64],
) -> BinRow {
    let n = members.len();
    if n == 0 {
        return BinRow {
            label: label.into(),
            n_samples: 0,
            median_pkl: None,
            map: None,
            map_unstable: false,
        };
    }
    let pkls: Vec<f64> = members.iter().map(|&i| pkl_values[i].pkl).collect();
    let member_samples: Vec<&Sample> = members.iter().map(|&i| samples[i]).collect();
    BinRow {
        label: label.into(),
        n_samples: n,
        median_pkl: stats::median(&pkls),
        map: Some(mean_ap_over(&member_samples, submission, match_distances)),
        map_unstable: n < MIN_STABLE_BIN,
    }
}

/// Bin samples by a per-sample value and report median PKL and mAP per bin.
///
/// Every sample lands in at most one bin; values outside all edges are
/// excluded and counted. For curvature, values above
/// [`CURVATURE_OUTLIER_CUT`] are dropped first and counted as outliers.
pub fn bin_samples(
    dataset: &Dataset,
    submission: &Submission,
    pkl_values: &[PklValue],
    spec: &BinSpec,
    value_fn: ValueFn,
    match_distances: &[f64],
) -> Result<BinnedReport> {
    spec.validate()?;
    check_alignment(dataset, pkl_values)?;
    let values = sample_values(dataset, value_fn)?;
    let samples: Vec<&Sample> = dataset.samples().collect();

    let mut bins: Vec<Vec<usize>> = vec![Vec::new(); spec.n_bins()];
    let mut excluded_outliers = 0usize;
    let mut excluded_out_of_range = 0usize;
    for (i, &v) in values.iter().enumerate() {
        if matches!(value_fn, ValueFn::Curvature { .. }) && v > CURVATURE_OUTLIER_CUT {
            excluded_outliers += 1;
            continue;
        }
        match spec.assign(v) {
            Some(b) => bins[b].push(i),
            None => excluded_out_of_range += 1,
        }
    }

    let all: Vec<usize> = (0..samples.len()).collect();
    let all_scenes = metrics_row(
        "All scenes",
        &all,
        &samples,
        pkl_values,
        submission,
        match_distances,
    );
    let rows = bins
        .iter()
        .enumerate()
        .map(|(b, members)| {
            metrics_row(
                spec.label(b),
                members,
                &samples,
                pkl_values,
                submission,
                match_distances,
            )
        })
        .collect();

    Ok(BinnedReport {
        kind: spec.kind,
        all_scenes,
        rows,
        excluded_out_of_range,
        excluded_outliers,
    })
}

/// Subset predicates for [`filter_analysis`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterPredicate {
    Intersection,
    Rain,
    Night,
}

impl FilterPredicate {
    pub fn name(&self) -> &'static str {
        match self {
            FilterPredicate::Intersection => "intersection",
            FilterPredicate::Rain => "rain",
            FilterPredicate::Night => "night",
        }
    }
}

/// Median PKL and mAP over the predicate-true subset, paired with the full
/// set and the median-PKL delta. An empty subset reports n = 0 and no
/// metrics.
pub fn filter_analysis(
    dataset: &Dataset,
    submission: &Submission,
    pkl_values: &[PklValue],
    predicate: FilterPredicate,
    match_distances: &[f64],
) -> Result<FilterReport> {
    check_alignment(dataset, pkl_values)?;
    let samples: Vec<&Sample> = dataset.samples().collect();
    let mut members = Vec::new();
    let mut idx = 0usize;
    for scene in dataset.scenes() {
        for sample in &scene.samples {
            let keep = match predicate {
                FilterPredicate::Intersection => is_on_intersection(sample, &scene.map)?,
                FilterPredicate::Rain => sample.tags.contains(&Tag::Rain),
                FilterPredicate::Night => sample.tags.contains(&Tag::Night),
            };
            if keep {
                members.push(idx);
            }
            idx += 1;
        }
    }
    let all: Vec<usize> = (0..samples.len()).collect();
    let all_scenes = metrics_row(
        "All scenes",
        &all,
        &samples,
        pkl_values,
        submission,
        match_distances,
    );
    let filtered = metrics_row(
        predicate.name(),
        &members,
        &samples,
        pkl_values,
        submission,
        match_distances,
    );
    let delta_median_pkl = match (filtered.median_pkl, all_scenes.median_pkl) {
        (Some(f), Some(a)) => Some(f - a),
        _ => None,
    };
    Ok(FilterReport {
        name: predicate.name().to_string(),
        all_scenes,
        filtered,
        delta_median_pkl,
    })
}

/// Median PKL when the swept class's threshold is overridden by each
/// candidate, other classes staying at `base_table`. Returns `(threshold,
/// median PKL)` rows in sweep order.
pub fn threshold_sweep(
    dataset: &Dataset,
    submission: &Submission,
    class: &ClassName,
    thresholds: &[f64],
    base_table: &ThresholdTable,
    params: &PlannerParams,
) -> Result<Vec<(f64, f64)>> {
    for &t in thresholds {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidConfig {
                field: "thresholds",
                reason: format!("threshold {t} outside [0, 1]"),
            });
        }
    }
    let evaluator = PklEvaluator::new(dataset, params)?;
    let mut rows = Vec::with_capacity(thresholds.len());
    for &t in thresholds {
        let table = base_table.with_override(class, t)?;
        let thresholded = apply_thresholds(submission, &table)?;
        let values = evaluator.score_submission(&thresholded)?;
        rows.push((t, aggregate(&values, AggregateMode::Median)?));
    }
    Ok(rows)
}

/// The default sweep grid: 0.0, 0.1, ..., 0.9.
pub fn default_sweep_thresholds() -> Vec<f64> {
    (0..10).map(|i| i as f64 / 10.0).collect()
}

/// Hallucinated car detections placed uniformly on a circle of `radius_m`
/// around the ego, each yawed tangentially.
pub fn congestion_ring(ego: &Pose2D, n_cars: usize, radius_m: f64) -> Vec<ObjectBox> {
    (0..n_cars)
        .map(|k| {
            let theta = TAU * k as f64 / n_cars as f64;
            ObjectBox::ground_truth(
                ego.x + radius_m * theta.cos(),
                ego.y + radius_m * theta.sin(),
                CONGESTION_CAR_WIDTH_M,
                CONGESTION_CAR_LENGTH_M,
                theta + PI / 2.0,
                ClassName::new("car"),
            )
        })
        .collect()
}

fn validate_congestion(n_cars: usize, radius_m: f64) -> Result<()> {
    if n_cars == 0 {
        return Err(Error::InvalidConfig {
            field: "n_cars",
            reason: "must be at least 1".into(),
        });
    }
    if !(radius_m > CONGESTION_CAR_LENGTH_M / 2.0) {
        return Err(Error::InvalidConfig {
            field: "radius_m",
            reason: format!(
                "radius {radius_m} m cannot fit cars clear of the ego (need > {})",
                CONGESTION_CAR_LENGTH_M / 2.0
            ),
        });
    }
    Ok(())
}

fn congestion_median(
    evaluator: &PklEvaluator<'_>,
    n_cars: usize,
    radius_m: f64,
    keep_gt_boxes: bool,
) -> Result<f64> {
    let mut values = Vec::with_capacity(evaluator.sample_count());
    for (i, sample) in evaluator.dataset().samples().enumerate() {
        let mut det = if keep_gt_boxes {
            sample.gt_boxes.clone()
        } else {
            Vec::new()
        };
        det.extend(congestion_ring(&sample.ego_pose, n_cars, radius_m));
        values.push(evaluator.score_boxes(i, &det)?);
    }
    aggregate(&values, AggregateMode::Median)
}

/// Median PKL when every sample's detection set is its ground truth plus a
/// circle of hallucinated cars around the ego.
pub fn simulate_congestion(
    dataset: &Dataset,
    n_cars: usize,
    radius_m: f64,
    params: &PlannerParams,
) -> Result<f64> {
    validate_congestion(n_cars, radius_m)?;
    let evaluator = PklEvaluator::new(dataset, params)?;
    congestion_median(&evaluator, n_cars, radius_m, true)
}

/// Congestion sweep configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CongestionConfig {
    pub n_cars: Vec<usize>,
    pub radii_m: Vec<f64>,
    /// Keep the ground-truth boxes in the detection set (pure false-positive
    /// injection) or evaluate the circle alone.
    pub keep_gt_boxes: bool,
}

impl Default for CongestionConfig {
    fn default() -> Self {
        Self {
            n_cars: vec![5, 10, 20, 30],
            radii_m: vec![5.0, 10.0, 15.0, 20.0],
            keep_gt_boxes: true,
        }
    }
}

/// Run the full congestion grid, sharing one set of ground-truth plans.
pub fn congestion_sweep(
    dataset: &Dataset,
    config: &CongestionConfig,
    params: &PlannerParams,
) -> Result<CongestionReport> {
    if config.n_cars.is_empty() || config.radii_m.is_empty() {
        return Err(Error::InvalidConfig {
            field: "congestion",
            reason: "need at least one n_cars and one radius".into(),
        });
    }
    for &n in &config.n_cars {
        for &r in &config.radii_m {
            validate_congestion(n, r)?;
        }
    }
    let evaluator = PklEvaluator::new(dataset, params)?;
    let mut rows = Vec::with_capacity(config.n_cars.len());
    for &n in &config.n_cars {
        let mut medians = Vec::with_capacity(config.radii_m.len());
        for &r in &config.radii_m {
            medians.push(congestion_median(&evaluator, n, r, config.keep_gt_boxes)?);
        }
        let monotone = medians.windows(2).all(|w| w[1] <= w[0]);
        rows.push(CongestionRow {
            n_cars: n,
            median_pkl: medians,
            monotone_non_increasing: monotone,
        });
    }
    Ok(CongestionReport {
        radii_m: config.radii_m.clone(),
        rows,
    })
}

/// Threshold-sweep configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub class_name: ClassName,
    pub thresholds: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            class_name: ClassName::new("car"),
            thresholds: default_sweep_thresholds(),
        }
    }
}

/// Which analyses to run and with what layouts. The defaults reproduce the
/// standard table set; the sweeps are off unless configured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    pub object_count: bool,
    pub speed: bool,
    pub curvature: bool,
    pub intersection: bool,
    pub rain: bool,
    pub night: bool,
    pub object_count_bins: BinSpec,
    pub speed_bins: BinSpec,
    pub curvature_bins: BinSpec,
    pub curvature_sigma: f64,
    pub f1_match_distance: f64,
    pub match_distances: Vec<f64>,
    pub threshold_sweep: Option<SweepConfig>,
    pub congestion: Option<CongestionConfig>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            object_count: true,
            speed: true,
            curvature: true,
            intersection: true,
            rain: true,
            night: true,
            object_count_bins: BinSpec::object_count_default(),
            speed_bins: BinSpec::speed_default(),
            curvature_bins: BinSpec::curvature_default(),
            curvature_sigma: DEFAULT_CURVATURE_SIGMA,
            f1_match_distance: DEFAULT_F1_MATCH_DISTANCE,
            match_distances: DEFAULT_MATCH_DISTANCES.to_vec(),
            threshold_sweep: None,
            congestion: None,
        }
    }
}

/// The core evaluation pipeline: per-class F1-optimal thresholds, threshold
/// application, per-sample PKL on the thresholded boxes, and mAP on the raw
/// (unthresholded) submission. Returns the report skeleton plus the
/// per-sample values.
pub fn evaluate_submission(
    dataset: &Dataset,
    submission: &Submission,
    params: &PlannerParams,
    config: &AnalysisConfig,
    provenance: Provenance,
) -> Result<(EvaluationReport, Vec<PklValue>)> {
    submission.validate_against(dataset)?;
    let thresholds = f1_threshold_table(dataset, submission, config.f1_match_distance);
    let thresholded = apply_thresholds(submission, &thresholds)?;
    let pkl_values = crate::planner::evaluate_pkl(dataset, &thresholded, params)?;
    let global = GlobalMetrics {
        median_pkl: aggregate(&pkl_values, AggregateMode::Median)?,
        mean_pkl: aggregate(&pkl_values, AggregateMode::Mean)?,
        map: mean_ap(dataset, submission, &config.match_distances),
    };
    let report = EvaluationReport {
        method_name: submission.method_name.clone(),
        global,
        thresholds,
        binned: Vec::new(),
        filters: Vec::new(),
        threshold_sweep: None,
        congestion: None,
        provenance,
    };
    Ok((report, pkl_values))
}

/// [`evaluate_submission`] plus every analysis enabled in the config.
pub fn run_full_analysis(
    dataset: &Dataset,
    submission: &Submission,
    params: &PlannerParams,
    config: &AnalysisConfig,
    provenance: Provenance,
) -> Result<(EvaluationReport, Vec<PklValue>)> {
    let (mut report, pkl_values) =
        evaluate_submission(dataset, submission, params, config, provenance)?;

    let dists = &config.match_distances;
    if config.object_count {
        report.binned.push(bin_samples(
            dataset,
            submission,
            &pkl_values,
            &config.object_count_bins,
            ValueFn::ObjectCount,
            dists,
        )?);
    }
    if config.speed {
        report.binned.push(bin_samples(
            dataset,
            submission,
            &pkl_values,
            &config.speed_bins,
            ValueFn::EgoSpeed,
            dists,
        )?);
    }
    if config.curvature {
        report.binned.push(bin_samples(
            dataset,
            submission,
            &pkl_values,
            &config.curvature_bins,
            ValueFn::Curvature {
                gaussian_sigma: config.curvature_sigma,
            },
            dists,
        )?);
    }
    for (enabled, predicate) in [
        (config.intersection, FilterPredicate::Intersection),
        (config.rain, FilterPredicate::Rain),
        (config.night, FilterPredicate::Night),
    ] {
        if enabled {
            report.filters.push(filter_analysis(
                dataset,
                submission,
                &pkl_values,
                predicate,
                dists,
            )?);
        }
    }
    if let Some(sweep) = &config.threshold_sweep {
        let rows = threshold_sweep(
            dataset,
            submission,
            &sweep.class_name,
            &sweep.thresholds,
            &report.thresholds,
            params,
        )?;
        let f1_threshold = report.thresholds.get(&sweep.class_name).unwrap_or(0.0);
        let thresholded = apply_thresholds(submission, &report.thresholds)?;
        let f1_values = crate::planner::evaluate_pkl(dataset, &thresholded, params)?;
        report.threshold_sweep = Some(ThresholdSweepReport {
            class_name: sweep.class_name.clone(),
            f1_threshold,
            f1_median_pkl: aggregate(&f1_values, AggregateMode::Median)?,
            rows: rows
                .into_iter()
                .map(|(threshold, median_pkl)| ThresholdSweepRow {
                    threshold,
                    median_pkl,
                })
                .collect(),
        });
    }
    if let Some(cfg) = &config.congestion {
        report.congestion = Some(congestion_sweep(dataset, cfg, params)?);
    }
    Ok((report, pkl_values))
}
