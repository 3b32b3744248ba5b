//! Minimal end-to-end run: synthesize a dataset, score two detectors, and
//! print their global metrics.
//!
//! ```bash
//! cargo run --example quickstart
//! ```

use planmetrics::analysis::{evaluate_submission, AnalysisConfig};
use planmetrics::planner::PlannerParams;
use planmetrics::report::Provenance;
use planmetrics::synthetic::{generate_synthetic_dataset, simulate_detector, ErrorModel, GeneratorConfig};

fn main() {
    let config = GeneratorConfig {
        n_scenes: 4,
        samples_per_scene: 25,
        ..GeneratorConfig::default()
    };
    let dataset = generate_synthetic_dataset(&config, 42).expect("valid config");
    println!(
        "dataset: {} scenes, {} samples",
        dataset.scenes().len(),
        dataset.sample_count()
    );

    let detectors = [
        ("lidar-like", ErrorModel {
            drop_rate: 0.05,
            fp_rate: 0.05,
            depth_noise_sigma_m: 0.2,
            lateral_noise_sigma_m: 0.2,
            score_calibration: 0.9,
        }),
        ("camera-like", ErrorModel {
            drop_rate: 0.1,
            fp_rate: 0.15,
            depth_noise_sigma_m: 1.5,
            lateral_noise_sigma_m: 0.3,
            score_calibration: 0.9,
        }),
    ];

    let params = PlannerParams::default();
    let analysis = AnalysisConfig::default();
    for (name, model) in detectors {
        let submission = simulate_detector(&dataset, &model, 7)
            .expect("valid error model")
            .with_method_name(name);
        let (report, _values) =
            evaluate_submission(&dataset, &submission, &params, &analysis, Provenance::default())
                .expect("evaluation succeeds");
        println!(
            "{name:>12}: median PKL {:.2} | mean PKL {:.2} | mAP {:.2}",
            report.global.median_pkl, report.global.mean_pkl, report.global.map
        );
    }
}
