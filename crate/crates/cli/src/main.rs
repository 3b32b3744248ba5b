//! planmetrics: reproducible planner-aware detection evaluation runs.
//!
//! Subcommands: generate, detect, eval, analyze, congestion,
//! sweep-threshold. All outputs are deterministic functions of the inputs
//! and the seed; reports embed input hashes so runs can be recognized later.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use planmetrics::analysis::{
    congestion_sweep, run_full_analysis, threshold_sweep, AnalysisConfig, CongestionConfig,
    SweepConfig,
};
use planmetrics::io::{
    emit_report, load_dataset, load_submission, save_dataset, save_pkl_values, save_submission,
    ReportFormat,
};
use planmetrics::metrics::{apply_thresholds, f1_threshold_table};
use planmetrics::planner::{aggregate, AggregateMode, PklEvaluator, PlannerParams};
use planmetrics::report::{
    CongestionReport, EvaluationReport, Provenance, ThresholdSweepReport, ThresholdSweepRow,
};
use planmetrics::synthetic::{
    generate_synthetic_dataset, simulate_detector, DetectorConfig, ErrorModel, GeneratorConfig,
};
use planmetrics::{ClassName, Modality};

/// Environment variable holding the default output directory.
const OUT_DIR_ENV: &str = "PLANMETRICS_OUT";
/// mAP cutoff separating "competitive" submissions in the correlation
/// summary.
const COMPETITIVE_MAP_CUTOFF: f64 = 0.45;

#[derive(Parser)]
#[command(name = "planmetrics", version, about = "Planner-aware object detection evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Markdown,
    Json,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Markdown => ReportFormat::Markdown,
            FormatArg::Json => ReportFormat::Json,
        }
    }
}

impl FormatArg {
    fn extension(self) -> &'static str {
        match self {
            FormatArg::Csv => "csv",
            FormatArg::Markdown => "md",
            FormatArg::Json => "json",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModalityArg {
    Camera,
    Lidar,
    Synthetic,
}

impl From<ModalityArg> for Modality {
    fn from(m: ModalityArg) -> Self {
        match m {
            ModalityArg::Camera => Modality::Camera,
            ModalityArg::Lidar => Modality::Lidar,
            ModalityArg::Synthetic => Modality::Synthetic,
        }
    }
}

#[derive(Args)]
struct OutDirArg {
    /// Output directory (defaults to $PLANMETRICS_OUT, then ".").
    #[arg(long)]
    out: Option<PathBuf>,
}

impl OutDirArg {
    fn resolve(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset file.
    Generate {
        /// Generator config (JSON or TOML); flags below override its fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output dataset path (defaults to <out dir>/dataset.json).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        scenes: Option<usize>,
        #[arg(long)]
        samples_per_scene: Option<usize>,
        #[arg(long)]
        map_size_m: Option<f64>,
        #[arg(long)]
        intersection_fraction: Option<f64>,
        #[arg(long)]
        mean_objects: Option<f64>,
        #[arg(long)]
        rain_fraction: Option<f64>,
        #[arg(long)]
        night_fraction: Option<f64>,
    },
    /// Run the synthetic detector over a dataset and write a submission file.
    Detect {
        #[arg(long)]
        dataset: PathBuf,
        /// Detector config (JSON or TOML): method_name, modality, error_model.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output submission path (defaults to <out dir>/<method>.json).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        method_name: Option<String>,
        #[arg(long)]
        modality: Option<ModalityArg>,
        #[arg(long)]
        drop_rate: Option<f64>,
        #[arg(long)]
        fp_rate: Option<f64>,
        #[arg(long)]
        depth_noise_sigma_m: Option<f64>,
        #[arg(long)]
        lateral_noise_sigma_m: Option<f64>,
        #[arg(long)]
        score_calibration: Option<f64>,
    },
    /// Threshold, plan, and score one submission; write the report and the
    /// per-sample PKL values.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        submission: PathBuf,
        #[arg(long)]
        planner_params: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "markdown")]
        format: FormatArg,
        #[command(flatten)]
        out: OutDirArg,
    },
    /// Run the full analysis table set for one or more submissions, plus a
    /// cross-submission correlation summary.
    Analyze {
        #[arg(long)]
        dataset: PathBuf,
        /// Submission file; repeat for several methods.
        #[arg(long, required = true)]
        submission: Vec<PathBuf>,
        /// Analysis config (JSON or TOML); defaults reproduce the standard
        /// table layouts.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        planner_params: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "markdown")]
        format: FormatArg,
        #[command(flatten)]
        out: OutDirArg,
    },
    /// Median PKL for hallucinated car circles over an (n_cars x radius) grid.
    Congestion {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "5,10,20,30")]
        n_cars: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "5,10,15,20")]
        radii: Vec<f64>,
        /// Score the circle alone instead of adding it to the ground truth.
        #[arg(long)]
        circle_only: bool,
        #[arg(long)]
        planner_params: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "markdown")]
        format: FormatArg,
        #[command(flatten)]
        out: OutDirArg,
    },
    /// Median PKL as one class's confidence threshold sweeps a grid, other
    /// classes staying at their F1-optimal thresholds.
    SweepThreshold {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        submission: PathBuf,
        #[arg(long, default_value = "car")]
        class: String,
        #[arg(long, value_delimiter = ',')]
        thresholds: Option<Vec<f64>>,
        #[arg(long)]
        planner_params: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "markdown")]
        format: FormatArg,
        #[command(flatten)]
        out: OutDirArg,
    },
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Generate {
            config,
            seed,
            out,
            scenes,
            samples_per_scene,
            map_size_m,
            intersection_fraction,
            mean_objects,
            rain_fraction,
            night_fraction,
        } => {
            let mut cfg: GeneratorConfig = match &config {
                Some(path) => load_config_file(path)?,
                None => GeneratorConfig::default(),
            };
            if let Some(v) = scenes {
                cfg.n_scenes = v;
            }
            if let Some(v) = samples_per_scene {
                cfg.samples_per_scene = v;
            }
            if let Some(v) = map_size_m {
                cfg.map_size_m = v;
            }
            if let Some(v) = intersection_fraction {
                cfg.intersection_fraction = v;
            }
            if let Some(v) = mean_objects {
                cfg.mean_objects = v;
            }
            if let Some(v) = rain_fraction {
                cfg.rain_fraction = v;
            }
            if let Some(v) = night_fraction {
                cfg.night_fraction = v;
            }
            let seed = seed.unwrap_or(0);
            let dataset = generate_synthetic_dataset(&cfg, seed)?;
            let path = out.unwrap_or_else(|| default_out_dir().join("dataset.json"));
            if let Some(parent) = path.parent() {
                ensure_dir(parent)?;
            }
            save_dataset(&dataset, &path)?;
            let n_samples = dataset.sample_count();
            let n_objects: usize = dataset.samples().map(|s| s.gt_boxes.len()).sum();
            println!(
                "wrote {}: {} scenes, {} samples, {:.1} objects/sample (seed {seed})",
                path.display(),
                dataset.scenes().len(),
                n_samples,
                n_objects as f64 / n_samples as f64
            );
            Ok(())
        }

        Command::Detect {
            dataset,
            config,
            seed,
            out,
            method_name,
            modality,
            drop_rate,
            fp_rate,
            depth_noise_sigma_m,
            lateral_noise_sigma_m,
            score_calibration,
        } => {
            let ds = load_dataset(&dataset)?;
            let mut det: DetectorConfig = match &config {
                Some(path) => load_config_file(path)?,
                None => DetectorConfig {
                    method_name: "synthetic".into(),
                    modality: Modality::Synthetic,
                    error_model: ErrorModel::default(),
                },
            };
            if let Some(v) = method_name {
                det.method_name = v;
            }
            if let Some(v) = modality {
                det.modality = v.into();
            }
            if let Some(v) = drop_rate {
                det.error_model.drop_rate = v;
            }
            if let Some(v) = fp_rate {
                det.error_model.fp_rate = v;
            }
            if let Some(v) = depth_noise_sigma_m {
                det.error_model.depth_noise_sigma_m = v;
            }
            if let Some(v) = lateral_noise_sigma_m {
                det.error_model.lateral_noise_sigma_m = v;
            }
            if let Some(v) = score_calibration {
                det.error_model.score_calibration = v;
            }
            let seed = seed.unwrap_or(0);
            let submission = simulate_detector(&ds, &det.error_model, seed)?
                .with_method_name(det.method_name.clone());
            let mut submission = submission;
            submission.modality = det.modality;
            let path = out
                .unwrap_or_else(|| default_out_dir().join(format!("{}.json", sanitize(&det.method_name))));
            if let Some(parent) = path.parent() {
                ensure_dir(parent)?;
            }
            save_submission(&submission, &path)?;
            let n_boxes: usize = submission.entries().map(|(_, b)| b.len()).sum();
            println!(
                "wrote {}: method {}, {} boxes over {} samples (seed {seed})",
                path.display(),
                det.method_name,
                n_boxes,
                ds.sample_count()
            );
            Ok(())
        }

        Command::Eval {
            dataset,
            submission,
            planner_params,
            format,
            out,
        } => {
            let ds = load_dataset(&dataset)?;
            let sub = load_submission(&submission, &ds)?;
            let params = load_planner_params(&planner_params)?;
            let config = AnalysisConfig::default();
            let provenance = provenance_for(&dataset, &[submission.clone()], &params, &config)?;
            let empty_sections = AnalysisConfig {
                object_count: false,
                speed: false,
                curvature: false,
                intersection: false,
                rain: false,
                night: false,
                ..config
            };
            let (report, pkl_values) = planmetrics::analysis::evaluate_submission(
                &ds,
                &sub,
                &params,
                &empty_sections,
                provenance,
            )?;
            let dir = out.resolve();
            ensure_dir(&dir)?;
            write_report_bundle(&report, &pkl_values, &dir, &sub.method_name, format)?;
            println!(
                "{}: median PKL {:.2} | mean PKL {:.2} | mAP {:.2}",
                sub.method_name, report.global.median_pkl, report.global.mean_pkl, report.global.map
            );
            Ok(())
        }

        Command::Analyze {
            dataset,
            submission,
            config,
            planner_params,
            format,
            out,
        } => {
            let ds = load_dataset(&dataset)?;
            let params = load_planner_params(&planner_params)?;
            let analysis_config: AnalysisConfig = match &config {
                Some(path) => load_config_file(path)?,
                None => AnalysisConfig::default(),
            };
            let dir = out.resolve();
            ensure_dir(&dir)?;
            let provenance = provenance_for(&dataset, &submission, &params, &analysis_config)?;

            let mut rows: Vec<(String, f64, f64)> = Vec::new();
            for path in &submission {
                let sub = load_submission(path, &ds)?;
                let (report, pkl_values) =
                    run_full_analysis(&ds, &sub, &params, &analysis_config, provenance.clone())?;
                write_report_bundle(&report, &pkl_values, &dir, &sub.method_name, format)?;
                println!(
                    "{}: median PKL {:.2} | mAP {:.2}",
                    sub.method_name, report.global.median_pkl, report.global.map
                );
                rows.push((sub.method_name.clone(), report.global.map, report.global.median_pkl));
            }

            if rows.len() >= 2 {
                write_correlation_summary(&rows, &dir)?;
            } else {
                println!("correlation summary skipped (needs at least 2 submissions)");
            }
            Ok(())
        }

        Command::Congestion {
            dataset,
            n_cars,
            radii,
            circle_only,
            planner_params,
            format,
            out,
        } => {
            let ds = load_dataset(&dataset)?;
            let params = load_planner_params(&planner_params)?;
            let cfg = CongestionConfig {
                n_cars,
                radii_m: radii,
                keep_gt_boxes: !circle_only,
            };
            let report = congestion_sweep(&ds, &cfg, &params)?;
            let dir = out.resolve();
            ensure_dir(&dir)?;
            write_json(&report, &dir.join("congestion.json"))?;
            let rendered = render_congestion(&report, format);
            std::fs::write(dir.join(format!("congestion.{}", format.extension())), &rendered)
                .context("writing congestion table")?;
            print!("{}", render_congestion(&report, FormatArg::Markdown));
            for row in &report.rows {
                println!(
                    "n_cars {:>3}: monotone non-increasing in distance: {}",
                    row.n_cars, row.monotone_non_increasing
                );
            }
            Ok(())
        }

        Command::SweepThreshold {
            dataset,
            submission,
            class,
            thresholds,
            planner_params,
            format,
            out,
        } => {
            let ds = load_dataset(&dataset)?;
            let sub = load_submission(&submission, &ds)?;
            let params = load_planner_params(&planner_params)?;
            let class = ClassName::new(class);
            let sweep = SweepConfig {
                class_name: class.clone(),
                thresholds: thresholds
                    .unwrap_or_else(planmetrics::analysis::default_sweep_thresholds),
            };
            let base_table = f1_threshold_table(&ds, &sub, AnalysisConfig::default().f1_match_distance);
            let rows =
                threshold_sweep(&ds, &sub, &class, &sweep.thresholds, &base_table, &params)?;
            let f1_threshold = base_table.get(&class).unwrap_or(0.0);
            let thresholded = apply_thresholds(&sub, &base_table)?;
            let evaluator = PklEvaluator::new(&ds, &params)?;
            let f1_values = evaluator.score_submission(&thresholded)?;
            let report = ThresholdSweepReport {
                class_name: class,
                f1_threshold,
                f1_median_pkl: aggregate(&f1_values, AggregateMode::Median)?,
                rows: rows
                    .into_iter()
                    .map(|(threshold, median_pkl)| ThresholdSweepRow {
                        threshold,
                        median_pkl,
                    })
                    .collect(),
            };
            let dir = out.resolve();
            ensure_dir(&dir)?;
            write_json(&report, &dir.join("threshold_sweep.json"))?;
            let rendered = render_sweep(&report, format);
            std::fs::write(
                dir.join(format!("threshold_sweep.{}", format.extension())),
                &rendered,
            )
            .context("writing sweep table")?;
            print!("{}", render_sweep(&report, FormatArg::Markdown));
            Ok(())
        }
    }
}

fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn load_config_file<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let is_toml = path.extension().and_then(|e| e.to_str()) == Some("toml");
    if is_toml {
        toml::from_str(&text).with_context(|| format!("parsing TOML config {}", path.display()))
    } else {
        serde_json::from_str(&text)
            .with_context(|| format!("parsing JSON config {}", path.display()))
    }
}

fn load_planner_params(path: &Option<PathBuf>) -> Result<PlannerParams> {
    let params: PlannerParams = match path {
        Some(p) => load_config_file(p)?,
        None => PlannerParams::default(),
    };
    params.validate()?;
    Ok(params)
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes =
        std::fs::read(path).with_context(|| format!("hashing input {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn provenance_for(
    dataset: &Path,
    submissions: &[PathBuf],
    params: &PlannerParams,
    config: &AnalysisConfig,
) -> Result<Provenance> {
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(params).expect("params serialize"));
    hasher.update(serde_json::to_vec(config).expect("config serializes"));
    for path in submissions {
        hasher.update(sha256_file(path)?.as_bytes());
    }
    Ok(Provenance {
        dataset_hash: sha256_file(dataset)?,
        config_hash: hex::encode(hasher.finalize()),
        seed: None,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
    })
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable");
    bytes.push(b'\n');
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn write_report_bundle(
    report: &EvaluationReport,
    pkl_values: &[planmetrics::PklValue],
    dir: &Path,
    method_name: &str,
    format: FormatArg,
) -> Result<()> {
    let stem = sanitize(method_name);
    emit_report(report, ReportFormat::Json, &dir.join(format!("{stem}.report.json")))?;
    if !matches!(format, FormatArg::Json) {
        emit_report(
            report,
            format.into(),
            &dir.join(format!("{stem}.report.{}", format.extension())),
        )?;
    }
    save_pkl_values(pkl_values, &dir.join(format!("{stem}.pkl_values.csv")))?;
    Ok(())
}

#[derive(Serialize)]
struct CorrelationSummary {
    n_submissions: usize,
    spearman_map_vs_neg_pkl: Option<f64>,
    competitive_map_cutoff: f64,
    n_competitive: usize,
    spearman_competitive: Option<f64>,
}

/// Cross-submission (mAP, median PKL) pairs and rank correlations, overall
/// and over the competitive subset. PKL is also emitted as a negated natural
/// log column for plotting.
fn write_correlation_summary(rows: &[(String, f64, f64)], dir: &Path) -> Result<()> {
    let mut csv = String::from("method,map,median_pkl,neg_ln_median_pkl\r\n");
    for (name, map, pkl) in rows {
        let neg_ln = if *pkl > 0.0 {
            format!("{}", -pkl.ln())
        } else {
            String::new()
        };
        csv.push_str(&format!("{name},{map},{pkl},{neg_ln}\r\n"));
    }
    std::fs::write(dir.join("correlation.csv"), csv).context("writing correlation.csv")?;

    let maps: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let neg_pkls: Vec<f64> = rows.iter().map(|r| -r.2).collect();
    let overall = planmetrics::spearman_rank_correlation(&maps, &neg_pkls).ok();
    let competitive: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.1 > COMPETITIVE_MAP_CUTOFF)
        .map(|r| (r.1, -r.2))
        .collect();
    let spearman_competitive = if competitive.len() >= 2 {
        let (m, p): (Vec<f64>, Vec<f64>) = competitive.iter().copied().unzip();
        planmetrics::spearman_rank_correlation(&m, &p).ok()
    } else {
        None
    };
    let summary = CorrelationSummary {
        n_submissions: rows.len(),
        spearman_map_vs_neg_pkl: overall,
        competitive_map_cutoff: COMPETITIVE_MAP_CUTOFF,
        n_competitive: competitive.len(),
        spearman_competitive,
    };
    write_json(&summary, &dir.join("correlation.json"))?;
    match overall {
        Some(rho) => println!("spearman(mAP, -median PKL) over {} submissions: {rho:.3}", rows.len()),
        None => println!("spearman undefined (constant input)"),
    }
    Ok(())
}

fn render_congestion(report: &CongestionReport, format: FormatArg) -> String {
    match format {
        FormatArg::Csv => {
            let mut out = String::from("n_cars");
            for r in &report.radii_m {
                out.push_str(&format!(",d_{r}"));
            }
            out.push_str("\r\n");
            for row in &report.rows {
                out.push_str(&row.n_cars.to_string());
                for v in &row.median_pkl {
                    out.push_str(&format!(",{v:.2}"));
                }
                out.push_str("\r\n");
            }
            out
        }
        _ => {
            let mut out = String::from("| Cars \\ Distance (m) |");
            for r in &report.radii_m {
                out.push_str(&format!(" {r} |"));
            }
            out.push('\n');
            out.push_str(&"|---".repeat(report.radii_m.len() + 1));
            out.push_str("|\n");
            for row in &report.rows {
                out.push_str(&format!("| {} |", row.n_cars));
                for v in &row.median_pkl {
                    out.push_str(&format!(" {v:.2} |"));
                }
                out.push('\n');
            }
            out
        }
    }
}

fn render_sweep(report: &ThresholdSweepReport, format: FormatArg) -> String {
    match format {
        FormatArg::Csv => {
            let mut out = String::from("threshold,median_pkl\r\n");
            out.push_str(&format!(
                "f1_optimal_{:.2},{:.2}\r\n",
                report.f1_threshold, report.f1_median_pkl
            ));
            for r in &report.rows {
                out.push_str(&format!("{},{:.2}\r\n", r.threshold, r.median_pkl));
            }
            out
        }
        _ => {
            let mut out = format!(
                "## Confidence threshold sweep ({})\n\n| Threshold | Median PKL |\n|---|---|\n",
                report.class_name
            );
            out.push_str(&format!(
                "| F1-optimal ({:.2}) | {:.2} |\n",
                report.f1_threshold, report.f1_median_pkl
            ));
            for r in &report.rows {
                out.push_str(&format!("| {} | {:.2} |\n", r.threshold, r.median_pkl));
            }
            out
        }
    }
}
