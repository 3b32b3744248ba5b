//! Planner-aware object detection evaluation at desk scale.
//!
//! The pipeline: generate (or load) a bird's-eye-view dataset, run or load a
//! detection submission, pick per-class F1-optimal score thresholds, plan
//! with a deterministic cost-map planner conditioned on ground truth and on
//! the thresholded detections, and report PKL — the per-sample KL divergence
//! between the two trajectory distributions — next to mAP, globally and
//! across the conditioned analyses (traffic density, ego speed, curvature,
//! intersections, weather, threshold sweeps, simulated congestion).
//!
//! Modules:
//! - [`scene`]: domain types (poses, boxes, samples, maps, datasets,
//!   submissions).
//! - [`synthetic`]: seeded dataset generator and detector simulator.
//! - [`metrics`]: matching, average precision, F1-optimal thresholds.
//! - [`planner`]: the surrogate planner and the PKL metric.
//! - [`analysis`]: binned/filtered analyses, sweeps, congestion.
//! - [`io`] / [`report`]: file formats and report emission.
//! - [`stats`]: scalar-generic numeric kernels (f32/f64 via [`scalar::Float`]).

pub mod analysis;
pub mod error;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod planner;
pub mod report;
pub mod scalar;
pub mod scene;
pub mod stats;
pub mod synthetic;

#[cfg(test)]
pub(crate) mod testutil;

/// The pipeline's concrete scalar type. The kernels in [`stats`] are generic
/// over [`scalar::Float`]; everything serialized runs at f64.
pub type Scalar = f64;

pub use error::{Error, Result};
pub use metrics::{
    apply_thresholds, average_precision, f1_optimal_threshold, f1_threshold_table, match_boxes,
    mean_ap, spearman_rank_correlation, MatchResult, ThresholdTable,
};
pub use planner::{
    aggregate, build_cost_map, evaluate_pkl, kl_divergence, pkl_sample, plan_distribution,
    AggregateMode, KlDirection, PklEvaluator, PklValue, PlannerParams, TrajectoryDistribution,
};
pub use scene::{
    is_on_intersection, ClassName, Dataset, Modality, ObjectBox, Pose2D, Sample, Scene, SceneMap,
    Submission, Tag,
};
pub use synthetic::{
    generate_synthetic_dataset, simulate_detector, DetectorConfig, ErrorModel, GeneratorConfig,
};
