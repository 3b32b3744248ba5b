//! Report data model: the serializable output of an evaluation run.

use serde::{Deserialize, Serialize};

use crate::metrics::ThresholdTable;
use crate::scene::ClassName;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalMetrics {
    pub median_pkl: f64,
    pub mean_pkl: f64,
    pub map: f64,
}

/// Where the report came from; everything needed to reproduce the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Provenance {
    pub dataset_hash: String,
    pub config_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub tool_version: String,
}

/// One row of a binned or filtered table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinRow {
    pub label: String,
    pub n_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub median_pkl: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<f64>,
    /// Set when the bin is so small its mAP is statistically noisy.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub map_unstable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinKind {
    ObjectCount,
    EgoSpeed,
    Curvature,
}

impl BinKind {
    pub fn name(&self) -> &'static str {
        match self {
            BinKind::ObjectCount => "object_count",
            BinKind::EgoSpeed => "ego_speed",
            BinKind::Curvature => "curvature",
        }
    }
}

/// A binned analysis table: the unfiltered "All scenes" row first, then one
/// row per bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedReport {
    pub kind: BinKind,
    pub all_scenes: BinRow,
    pub rows: Vec<BinRow>,
    /// Samples whose value fell outside every bin.
    pub excluded_out_of_range: usize,
    /// Curvature outliers dropped by the hard cut, counted separately.
    pub excluded_outliers: usize,
}

/// A predicate analysis (intersection / rain / night): the filtered subset
/// next to the full set, plus the median-PKL delta.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub name: String,
    pub all_scenes: BinRow,
    pub filtered: BinRow,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_median_pkl: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSweepRow {
    pub threshold: f64,
    pub median_pkl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSweepReport {
    pub class_name: ClassName,
    /// The F1-optimal threshold for the swept class and the median PKL when
    /// evaluating at it; the sweep rows keep other classes at their
    /// F1-optimal thresholds.
    pub f1_threshold: f64,
    pub f1_median_pkl: f64,
    pub rows: Vec<ThresholdSweepRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CongestionRow {
    pub n_cars: usize,
    /// Median PKL per radius, aligned with `CongestionReport::radii_m`.
    pub median_pkl: Vec<f64>,
    /// Whether PKL is non-increasing left to right along this row.
    pub monotone_non_increasing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CongestionReport {
    pub radii_m: Vec<f64>,
    pub rows: Vec<CongestionRow>,
}

/// Full evaluation output for one submission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub method_name: String,
    pub global: GlobalMetrics,
    /// Per-class thresholds the PKL evaluation ran with.
    pub thresholds: ThresholdTable,
    pub binned: Vec<BinnedReport>,
    pub filters: Vec<FilterReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold_sweep: Option<ThresholdSweepReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub congestion: Option<CongestionReport>,
    pub provenance: Provenance,
}
