//! On-disk formats and report emission.
//!
//! JSON is the canonical format. A dataset file is
//! `{scenes: [{scene_id, map, ego_trajectory, samples}]}` with grids encoded
//! as row-major 0/1 arrays plus explicit width/height; a submission file is
//! `{method_name, modality, results: {sample_id: [scored boxes]}}`. Reports
//! additionally render to markdown and RFC 4180 CSV with PKL and mAP at two
//! decimals.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::planner::PklValue;
use crate::report::{BinRow, EvaluationReport};
use crate::scene::{
    ClassName, Dataset, Modality, ObjectBox, Pose2D, Sample, Scene, SceneMap, Submission, Tag,
};

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    scenes: Vec<SceneFile>,
}

#[derive(Serialize, Deserialize)]
struct SceneFile {
    scene_id: String,
    map: MapFile,
    ego_trajectory: Vec<PoseFile>,
    samples: Vec<SampleFile>,
}

#[derive(Serialize, Deserialize)]
struct MapFile {
    origin: [f64; 2],
    resolution: f64,
    width: usize,
    height: usize,
    drivable: Vec<u8>,
    intersection: Vec<u8>,
}

#[derive(Serialize, Deserialize)]
struct PoseFile {
    x: f64,
    y: f64,
    yaw: f64,
    timestamp: f64,
}

#[derive(Serialize, Deserialize)]
struct SampleFile {
    sample_id: String,
    timestamp: f64,
    ego_pose: PoseFile,
    #[serde(default)]
    tags: Vec<Tag>,
    gt_boxes: Vec<BoxFile>,
}

#[derive(Serialize, Deserialize)]
struct BoxFile {
    center_x: f64,
    center_y: f64,
    width: f64,
    length: f64,
    yaw: f64,
    class_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    velocity: Option<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
struct SubmissionFile {
    method_name: String,
    modality: Modality,
    results: BTreeMap<String, Vec<BoxFile>>,
}

impl From<&Pose2D> for PoseFile {
    fn from(p: &Pose2D) -> Self {
        Self {
            x: p.x,
            y: p.y,
            yaw: p.yaw,
            timestamp: p.timestamp,
        }
    }
}

impl From<&PoseFile> for Pose2D {
    fn from(p: &PoseFile) -> Self {
        Pose2D::new(p.x, p.y, p.yaw, p.timestamp)
    }
}

impl From<&ObjectBox> for BoxFile {
    fn from(b: &ObjectBox) -> Self {
        Self {
            center_x: b.center_x,
            center_y: b.center_y,
            width: b.width,
            length: b.length,
            yaw: b.yaw,
            class_name: b.class_name.to_string(),
            score: b.score,
            velocity: b.velocity.map(|(vx, vy)| [vx, vy]),
        }
    }
}

impl From<&BoxFile> for ObjectBox {
    fn from(b: &BoxFile) -> Self {
        ObjectBox {
            center_x: b.center_x,
            center_y: b.center_y,
            width: b.width,
            length: b.length,
            yaw: b.yaw,
            class_name: ClassName::new(&b.class_name),
            score: b.score,
            velocity: b.velocity.map(|[vx, vy]| (vx, vy)),
        }
    }
}

fn grid_to_bits(g: &Grid<bool>) -> Vec<u8> {
    g.cells().iter().map(|&b| u8::from(b)).collect()
}

fn bits_to_grid(width: usize, height: usize, bits: &[u8], what: &str) -> Result<Grid<bool>> {
    for &b in bits {
        if b > 1 {
            return Err(Error::Validation(format!(
                "{what} grid holds value {b}; expected 0 or 1"
            )));
        }
    }
    Grid::from_cells(width, height, bits.iter().map(|&b| b == 1).collect())
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    f.write_all(bytes).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse_error(path: &Path, e: serde_json::Error) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Load and validate a dataset file. Sample order in the file is preserved.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let text = read_to_string(path)?;
    let file: DatasetFile = serde_json::from_str(&text).map_err(|e| parse_error(path, e))?;
    let mut scenes = Vec::with_capacity(file.scenes.len());
    for sf in &file.scenes {
        let drivable = bits_to_grid(sf.map.width, sf.map.height, &sf.map.drivable, "drivable")?;
        let intersection = bits_to_grid(
            sf.map.width,
            sf.map.height,
            &sf.map.intersection,
            "intersection",
        )?;
        let map = SceneMap::new(
            (sf.map.origin[0], sf.map.origin[1]),
            sf.map.resolution,
            drivable,
            intersection,
        )?;
        let ego_trajectory: Vec<Pose2D> = sf.ego_trajectory.iter().map(Pose2D::from).collect();
        let mut samples = Vec::with_capacity(sf.samples.len());
        for s in &sf.samples {
            if s.timestamp != s.ego_pose.timestamp {
                return Err(Error::InvalidSample {
                    sample_id: s.sample_id.clone(),
                    reason: format!(
                        "sample timestamp {} disagrees with its ego pose timestamp {}",
                        s.timestamp, s.ego_pose.timestamp
                    ),
                });
            }
            samples.push(Sample {
                sample_id: s.sample_id.clone(),
                scene_id: sf.scene_id.clone(),
                ego_pose: Pose2D::from(&s.ego_pose),
                gt_boxes: s.gt_boxes.iter().map(ObjectBox::from).collect(),
                tags: s.tags.iter().copied().collect(),
            });
        }
        scenes.push(Scene {
            scene_id: sf.scene_id.clone(),
            map,
            ego_trajectory,
            samples,
        });
    }
    Dataset::new(scenes)
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    let file = DatasetFile {
        scenes: dataset
            .scenes()
            .iter()
            .map(|scene| SceneFile {
                scene_id: scene.scene_id.clone(),
                map: MapFile {
                    origin: [scene.map.origin().0, scene.map.origin().1],
                    resolution: scene.map.resolution(),
                    width: scene.map.width(),
                    height: scene.map.height(),
                    drivable: grid_to_bits(scene.map.drivable()),
                    intersection: grid_to_bits(scene.map.intersection()),
                },
                ego_trajectory: scene.ego_trajectory.iter().map(PoseFile::from).collect(),
                samples: scene
                    .samples
                    .iter()
                    .map(|s| SampleFile {
                        sample_id: s.sample_id.clone(),
                        timestamp: s.ego_pose.timestamp,
                        ego_pose: PoseFile::from(&s.ego_pose),
                        tags: s.tags.iter().copied().collect(),
                        gt_boxes: s.gt_boxes.iter().map(BoxFile::from).collect(),
                    })
                    .collect(),
            })
            .collect(),
    };
    let mut bytes = serde_json::to_vec(&file).expect("dataset serializes");
    bytes.push(b'\n');
    write_bytes(path, &bytes)
}

/// Load a submission and validate it against the dataset it scores. Samples
/// without an entry are treated as empty detection lists.
pub fn load_submission(path: &Path, dataset: &Dataset) -> Result<Submission> {
    let text = read_to_string(path)?;
    let file: SubmissionFile = serde_json::from_str(&text).map_err(|e| parse_error(path, e))?;
    let known: BTreeSet<&str> = dataset.samples().map(|s| s.sample_id.as_str()).collect();
    let mut boxes = BTreeMap::new();
    for (sample_id, dets) in &file.results {
        if !known.contains(sample_id.as_str()) {
            return Err(Error::UnknownSampleId(sample_id.clone()));
        }
        let parsed: Vec<ObjectBox> = dets.iter().map(ObjectBox::from).collect();
        for b in &parsed {
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
        boxes.insert(sample_id.clone(), parsed);
    }
    let submission = Submission::new(file.method_name, file.modality, boxes);
    submission.validate_against(dataset)?;
    Ok(submission)
}

pub fn save_submission(submission: &Submission, path: &Path) -> Result<()> {
    let file = SubmissionFile {
        method_name: submission.method_name.clone(),
        modality: submission.modality,
        results: submission
            .entries()
            .map(|(id, dets)| (id.clone(), dets.iter().map(BoxFile::from).collect()))
            .collect(),
    };
    let mut bytes = serde_json::to_vec(&file).expect("submission serializes");
    bytes.push(b'\n');
    write_bytes(path, &bytes)
}

/// Persist per-sample PKL values as CSV (`sample_id,pkl`), so analyses can be
/// re-run without re-planning.
pub fn save_pkl_values(values: &[PklValue], path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(Vec::new());
    w.write_record(["sample_id", "pkl"]).expect("csv header");
    for v in values {
        w.write_record([v.sample_id.as_str(), &format!("{:.17e}", v.pkl)])
            .expect("csv row");
    }
    let bytes = w.into_inner().expect("csv buffer");
    write_bytes(path, &bytes)
}

pub fn load_pkl_values(path: &Path) -> Result<Vec<PklValue>> {
    let text = read_to_string(path)?;
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for record in r.records() {
        let record = record.map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let pkl: f64 = record
            .get(1)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse {
                path: path.display().to_string(),
                message: format!("bad pkl row: {record:?}"),
            })?;
        out.push(PklValue {
            sample_id: record.get(0).unwrap_or_default().to_string(),
            pkl,
        });
    }
    Ok(out)
}

/// Output format for [`emit_report`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Markdown,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "markdown" | "md" => Ok(Self::Markdown),
            "json" => Ok(Self::Json),
            other => Err(Error::InvalidConfig {
                field: "format",
                reason: format!("unknown format `{other}` (expected csv, markdown, or json)"),
            }),
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.2}"),
        None => "-".to_string(),
    }
}

fn fmt_signed(v: f64) -> String {
    format!("{v:+.2}")
}

fn fmt_num(v: f64) -> String {
    // Trim trailing zeros for labels like 0.02 or 5.
    let s = format!("{v}");
    s
}

fn markdown_bin_table(out: &mut String, title: &str, all: &BinRow, rows: &[BinRow]) {
    out.push_str(&format!("## {title}\n\n"));
    out.push_str("| Range | Samples | PKL | mAP |\n");
    out.push_str("|---|---|---|---|\n");
    for row in std::iter::once(all).chain(rows) {
        let star = if row.map_unstable { "*" } else { "" };
        out.push_str(&format!(
            "| {} | {} | {} | {}{} |\n",
            row.label,
            row.n_samples,
            fmt_opt(row.median_pkl),
            fmt_opt(row.map),
            star,
        ));
    }
    out.push('\n');
}

/// Render a report as markdown. Layout mirrors the standard tables: an
/// "All scenes" row first, then one row per bin, PKL and mAP at two decimals.
pub fn report_to_markdown(report: &EvaluationReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("# Evaluation report: {}\n\n", report.method_name));
    out.push_str("| Metric | Value |\n|---|---|\n");
    out.push_str(&format!("| median PKL | {:.2} |\n", report.global.median_pkl));
    out.push_str(&format!("| mean PKL | {:.2} |\n", report.global.mean_pkl));
    out.push_str(&format!("| mAP | {:.2} |\n\n", report.global.map));

    if report.thresholds.entries().count() > 0 {
        out.push_str("## F1-optimal thresholds\n\n| Class | Threshold |\n|---|---|\n");
        for (class, t) in report.thresholds.entries() {
            out.push_str(&format!("| {class} | {t:.2} |\n"));
        }
        out.push('\n');
    }

    for binned in &report.binned {
        markdown_bin_table(
            &mut out,
            &format!("Binned by {}", binned.kind.name()),
            &binned.all_scenes,
            &binned.rows,
        );
        if binned.excluded_out_of_range > 0 {
            out.push_str(&format!(
                "Excluded (out of range): {}\n\n",
                binned.excluded_out_of_range
            ));
        }
        if binned.excluded_outliers > 0 {
            out.push_str(&format!(
                "Excluded (curvature outliers > {CURVE_CUT}): {}\n\n",
                binned.excluded_outliers,
                CURVE_CUT = crate::analysis::CURVATURE_OUTLIER_CUT
            ));
        }
    }

    if !report.filters.is_empty() {
        out.push_str("## Filters\n\n| Scenes | Samples | PKL | dPKL vs all | mAP |\n|---|---|---|---|---|\n");
        if let Some(first) = report.filters.first() {
            let all = &first.all_scenes;
            out.push_str(&format!(
                "| All scenes | {} | {} | | {} |\n",
                all.n_samples,
                fmt_opt(all.median_pkl),
                fmt_opt(all.map),
            ));
        }
        for f in &report.filters {
            out.push_str(&format!(
                "| {} | {} | {} | {} | {} |\n",
                f.name,
                f.filtered.n_samples,
                fmt_opt(f.filtered.median_pkl),
                f.delta_median_pkl.map(fmt_signed).unwrap_or_else(|| "-".into()),
                fmt_opt(f.filtered.map),
            ));
        }
        out.push('\n');
    }

    if let Some(sweep) = &report.threshold_sweep {
        out.push_str(&format!(
            "## Confidence threshold sweep ({})\n\n| Threshold | Median PKL |\n|---|---|\n",
            sweep.class_name
        ));
        out.push_str(&format!(
            "| F1-optimal ({:.2}) | {:.2} |\n",
            sweep.f1_threshold, sweep.f1_median_pkl
        ));
        for row in &sweep.rows {
            out.push_str(&format!(
                "| {} | {:.2} |\n",
                fmt_num(row.threshold),
                row.median_pkl
            ));
        }
        out.push('\n');
    }

    if let Some(congestion) = &report.congestion {
        out.push_str("## Simulated congestion (median PKL)\n\n");
        out.push_str("| Cars \\ Distance (m) |");
        for r in &congestion.radii_m {
            out.push_str(&format!(" {} |", fmt_num(*r)));
        }
        out.push('\n');
        out.push_str(&"|---".repeat(congestion.radii_m.len() + 1));
        out.push_str("|\n");
        for row in &congestion.rows {
            out.push_str(&format!("| {} |", row.n_cars));
            for v in &row.median_pkl {
                out.push_str(&format!(" {v:.2} |"));
            }
            out.push('\n');
        }
        out.push('\n');
        for row in &congestion.rows {
            if !row.monotone_non_increasing {
                out.push_str(&format!(
                    "Warning: PKL is not non-increasing in distance for n_cars = {}\n",
                    row.n_cars
                ));
            }
        }
        out.push('\n');
    }

    out.push_str("---\n");
    out.push_str(&format!(
        "dataset {} | config {} | seed {} | version {}\n",
        short_hash(&report.provenance.dataset_hash),
        short_hash(&report.provenance.config_hash),
        report
            .provenance
            .seed
            .map(|s| s.to_string())
            .unwrap_or_else(|| "-".into()),
        report.provenance.tool_version
    ));
    out
}

fn short_hash(h: &str) -> &str {
    if h.is_empty() {
        "-"
    } else {
        &h[..h.len().min(12)]
    }
}

/// Render a report as flat CSV: one row per table line across all sections.
pub fn report_to_csv(report: &EvaluationReport) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(Vec::new());
    w.write_record(["section", "label", "n_samples", "median_pkl", "map"])
        .expect("csv header");
    let mut row = |section: &str, label: &str, n: Option<usize>, pkl: Option<f64>, map: Option<f64>| {
        w.write_record([
            section,
            label,
            &n.map(|v| v.to_string()).unwrap_or_default(),
            &pkl.map(|v| format!("{v:.2}")).unwrap_or_default(),
            &map.map(|v| format!("{v:.2}")).unwrap_or_default(),
        ])
        .expect("csv row");
    };
    row(
        "global",
        &report.method_name,
        None,
        Some(report.global.median_pkl),
        Some(report.global.map),
    );
    for binned in &report.binned {
        let section = format!("binned:{}", binned.kind.name());
        let all = &binned.all_scenes;
        row(&section, &all.label, Some(all.n_samples), all.median_pkl, all.map);
        for r in &binned.rows {
            row(&section, &r.label, Some(r.n_samples), r.median_pkl, r.map);
        }
    }
    for f in &report.filters {
        let section = format!("filter:{}", f.name);
        row(
            &section,
            "All scenes",
            Some(f.all_scenes.n_samples),
            f.all_scenes.median_pkl,
            f.all_scenes.map,
        );
        row(
            &section,
            &f.name,
            Some(f.filtered.n_samples),
            f.filtered.median_pkl,
            f.filtered.map,
        );
    }
    if let Some(sweep) = &report.threshold_sweep {
        let section = format!("threshold_sweep:{}", sweep.class_name);
        row(
            &section,
            &format!("f1_optimal:{:.2}", sweep.f1_threshold),
            None,
            Some(sweep.f1_median_pkl),
            None,
        );
        for r in &sweep.rows {
            row(&section, &fmt_num(r.threshold), None, Some(r.median_pkl), None);
        }
    }
    if let Some(congestion) = &report.congestion {
        for r in &congestion.rows {
            for (radius, v) in congestion.radii_m.iter().zip(&r.median_pkl) {
                row(
                    "congestion",
                    &format!("n={},d={}", r.n_cars, fmt_num(*radius)),
                    None,
                    Some(*v),
                    None,
                );
            }
        }
    }
    String::from_utf8(w.into_inner().expect("csv buffer")).expect("csv is utf8")
}

/// Write a report in the requested format.
pub fn emit_report(report: &EvaluationReport, format: ReportFormat, path: &Path) -> Result<()> {
    let bytes = match format {
        ReportFormat::Json => {
            let mut b = serde_json::to_vec_pretty(report).expect("report serializes");
            b.push(b'\n');
            b
        }
        ReportFormat::Markdown => report_to_markdown(report).into_bytes(),
        ReportFormat::Csv => report_to_csv(report).into_bytes(),
    };
    write_bytes(path, &bytes)
}

/// Parse a report back from its canonical JSON form.
pub fn load_report(path: &Path) -> Result<EvaluationReport> {
    let text = read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| parse_error(path, e))
}
