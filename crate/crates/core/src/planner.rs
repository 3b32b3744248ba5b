//! Deterministic surrogate planner and the PKL metric.
//!
//! The planner scores a fixed fan of trajectory templates against a cost map
//! built from detected boxes and the drivable-area mask, turns the path costs
//! into a softmax distribution over templates, and projects that onto the map
//! grid per horizon step. PKL for a sample is the KL divergence between the
//! step distributions conditioned on ground truth and those conditioned on
//! the detections, summed over the horizon. Identical box sets therefore give
//! PKL exactly zero.
//!
//! The template fan spans a stationary option plus constant-curvature arcs at
//! three speed levels. The speed levels matter: with a single speed, a
//! uniform obstacle ring around the ego adds near-equal cost to every
//! template and the softmax — which is shift-invariant — barely moves. Slow
//! and stationary templates keep their cost when the fast ones are blocked,
//! which is what makes close congestion expensive and distant congestion
//! cheap.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::scene::{Dataset, ObjectBox, Pose2D, Sample, SceneMap, Submission};
use crate::stats;

/// Top template speed, m/s.
pub const TEMPLATE_MAX_SPEED_MPS: f64 = 5.0;
/// Half-span of the constant-curvature fan, 1/m.
pub const TEMPLATE_MAX_CURVATURE: f64 = 0.2;
/// Number of moving speed levels in the fan.
pub const TEMPLATE_SPEED_LEVELS: usize = 3;
/// Obstacle kernel contributions beyond this many sigmas are dropped.
const OBSTACLE_CUTOFF_SIGMAS: f64 = 6.0;
/// Tolerance on step-distribution normalization.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;

/// Direction of the divergence in [`pkl_sample`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KlDirection {
    /// KL(ground-truth-conditioned || detection-conditioned). The default.
    #[default]
    GtToDet,
    DetToGt,
}

/// Planner parameters. The defaults are the ones the acceptance suite and the
/// CLI run with; they are chosen so the congestion, noise, and threshold
/// trends hold on the default synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerParams {
    pub horizon_steps: usize,
    pub step_dt: f64,
    pub n_templates: usize,
    pub obstacle_cost_weight: f64,
    pub offroad_cost_weight: f64,
    pub obstacle_sigma_m: f64,
    pub temperature: f64,
    /// Smoothing constant added to both arguments of the KL log ratio.
    pub epsilon: f64,
    pub kl_direction: KlDirection,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            horizon_steps: 8,
            step_dt: 0.5,
            n_templates: 25,
            obstacle_cost_weight: 1.0,
            offroad_cost_weight: 0.5,
            obstacle_sigma_m: 1.0,
            temperature: 0.35,
            epsilon: 1e-12,
            kl_direction: KlDirection::GtToDet,
        }
    }
}

impl PlannerParams {
    pub fn validate(&self) -> Result<()> {
        if self.horizon_steps == 0 {
            return Err(Error::InvalidConfig {
                field: "horizon_steps",
                reason: "must be positive".into(),
            });
        }
        if self.n_templates == 0 {
            return Err(Error::InvalidConfig {
                field: "n_templates",
                reason: "must be positive".into(),
            });
        }
        for (field, v, strict) in [
            ("step_dt", self.step_dt, true),
            ("obstacle_cost_weight", self.obstacle_cost_weight, false),
            ("offroad_cost_weight", self.offroad_cost_weight, false),
            ("obstacle_sigma_m", self.obstacle_sigma_m, true),
            ("temperature", self.temperature, true),
            ("epsilon", self.epsilon, true),
        ] {
            let ok = if strict { v > 0.0 } else { v >= 0.0 };
            if !ok {
                return Err(Error::InvalidConfig {
                    field,
                    reason: format!(
                        "must be {} , got {v}",
                        if strict { "positive" } else { "non-negative" }
                    ),
                });
            }
        }
        Ok(())
    }
}

/// Ego-frame waypoints of one template, x forward and y left, one per
/// horizon step.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryTemplate {
    pub waypoints: Vec<(f64, f64)>,
}

fn arc_waypoints(speed: f64, curvature: f64, params: &PlannerParams) -> Vec<(f64, f64)> {
    let ds = speed * params.step_dt;
    (1..=params.horizon_steps)
        .map(|t| {
            let s = t as f64 * ds;
            if curvature.abs() < 1e-12 {
                (s, 0.0)
            } else {
                ((curvature * s).sin() / curvature, (1.0 - (curvature * s).cos()) / curvature)
            }
        })
        .collect()
}

fn curvature_fan(count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![0.0];
    }
    (0..count)
        .map(|i| {
            -TEMPLATE_MAX_CURVATURE
                + 2.0 * TEMPLATE_MAX_CURVATURE * i as f64 / (count - 1) as f64
        })
        .collect()
}

/// The deterministic template fan: one stationary template plus
/// constant-curvature arcs spread over up to [`TEMPLATE_SPEED_LEVELS`] speed
/// levels, curvature symmetric about straight-ahead at each level.
pub fn trajectory_templates(params: &PlannerParams) -> Vec<TrajectoryTemplate> {
    let mut templates = Vec::with_capacity(params.n_templates);
    templates.push(TrajectoryTemplate {
        waypoints: vec![(0.0, 0.0); params.horizon_steps],
    });
    let moving = params.n_templates - 1;
    if moving == 0 {
        return templates;
    }
    let levels = TEMPLATE_SPEED_LEVELS.min(moving);
    let base = moving / levels;
    let extra = moving % levels;
    for level in 0..levels {
        // Leftover templates go to the faster levels.
        let count = base + usize::from(level >= levels - extra);
        let speed = TEMPLATE_MAX_SPEED_MPS * (level + 1) as f64 / levels as f64;
        for curvature in curvature_fan(count) {
            templates.push(TrajectoryTemplate {
                waypoints: arc_waypoints(speed, curvature, params),
            });
        }
    }
    templates
}

/// A geo-referenced cost field over the scene map grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMap {
    origin: (f64, f64),
    resolution: f64,
    grid: Grid<f64>,
}

impl CostMap {
    pub fn new(origin: (f64, f64), resolution: f64, grid: Grid<f64>) -> Self {
        Self {
            origin,
            resolution,
            grid,
        }
    }

    pub fn grid(&self) -> &Grid<f64> {
        &self.grid
    }

    pub fn cell_index(&self, x: f64, y: f64) -> Option<usize> {
        let fx = (x - self.origin.0) / self.resolution;
        let fy = (y - self.origin.1) / self.resolution;
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let (ix, iy) = (fx as usize, fy as usize);
        (ix < self.grid.width() && iy < self.grid.height()).then(|| iy * self.grid.width() + ix)
    }

    pub fn clamped_cell_index(&self, x: f64, y: f64) -> usize {
        let fx = ((x - self.origin.0) / self.resolution).floor();
        let fy = ((y - self.origin.1) / self.resolution).floor();
        let ix = (fx.max(0.0) as usize).min(self.grid.width() - 1);
        let iy = (fy.max(0.0) as usize).min(self.grid.height() - 1);
        iy * self.grid.width() + ix
    }
}

/// Build the planner cost map for a set of boxes on a scene map:
/// `cost(cell) = offroad_weight * [not drivable]
///             + obstacle_weight * sum_boxes exp(-d(cell, footprint)^2 / (2 sigma^2))`.
///
/// The obstacle term is additive over boxes; contributions beyond six sigmas
/// from a footprint are dropped. Boxes entirely outside the map contribute
/// nothing.
pub fn build_cost_map(boxes: &[ObjectBox], map: &SceneMap, params: &PlannerParams) -> CostMap {
    let width = map.width();
    let height = map.height();
    let res = map.resolution();
    let mut grid = Grid::filled(width, height, 0.0f64).expect("map grids are non-empty");

    if params.offroad_cost_weight > 0.0 {
        for (cell, &driv) in grid.cells_mut().iter_mut().zip(map.drivable().cells()) {
            if !driv {
                *cell = params.offroad_cost_weight;
            }
        }
    }

    if params.obstacle_cost_weight > 0.0 {
        let cutoff = OBSTACLE_CUTOFF_SIGMAS * params.obstacle_sigma_m;
        let inv_two_sigma_sq = 1.0 / (2.0 * params.obstacle_sigma_m * params.obstacle_sigma_m);
        let (ox, oy) = map.origin();
        for b in boxes {
            let reach = b.width.hypot(b.length) / 2.0 + cutoff;
            let min_ix = ((b.center_x - reach - ox) / res).floor().max(0.0) as usize;
            let min_iy = ((b.center_y - reach - oy) / res).floor().max(0.0) as usize;
            if min_ix >= width || min_iy >= height {
                continue;
            }
            let max_ix = (((b.center_x + reach - ox) / res).ceil().max(0.0) as usize).min(width - 1);
            let max_iy = (((b.center_y + reach - oy) / res).ceil().max(0.0) as usize).min(height - 1);
            for iy in min_iy..=max_iy {
                for ix in min_ix..=max_ix {
                    let cx = ox + (ix as f64 + 0.5) * res;
                    let cy = oy + (iy as f64 + 0.5) * res;
                    let d = b.footprint_distance(cx, cy);
                    if d > cutoff {
                        continue;
                    }
                    *grid.at_mut(iy * width + ix) +=
                        params.obstacle_cost_weight * (-d * d * inv_two_sigma_sq).exp();
                }
            }
        }
    }

    CostMap::new(map.origin(), res, grid)
}

/// Sparse probability distribution over map cells for one horizon step.
/// Support is sorted by cell index; probabilities sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDistribution {
    support: Vec<(usize, f64)>,
}

impl StepDistribution {
    /// Build from `(cell, probability)` pairs; entries are sorted by cell and
    /// same-cell probabilities pooled.
    pub fn from_support(support: Vec<(usize, f64)>) -> Self {
        let mut acc: std::collections::BTreeMap<usize, f64> = std::collections::BTreeMap::new();
        for (cell, p) in support {
            *acc.entry(cell).or_insert(0.0) += p;
        }
        Self {
            support: acc.into_iter().collect(),
        }
    }

    pub fn support(&self) -> &[(usize, f64)] {
        &self.support
    }

    pub fn total_probability(&self) -> f64 {
        self.support.iter().map(|(_, p)| p).sum()
    }
}

/// Per-step cell distributions over the planning horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDistribution {
    pub steps: Vec<StepDistribution>,
}

/// Score the template fan against a cost map and project the softmax weights
/// onto the grid per step.
///
/// Waypoints that leave the map are charged the off-road weight and attached
/// to the nearest boundary cell. Errors when the ego pose itself is outside
/// the map.
pub fn plan_distribution(
    cost: &CostMap,
    ego: &Pose2D,
    params: &PlannerParams,
) -> Result<TrajectoryDistribution> {
    params.validate()?;
    if cost.cell_index(ego.x, ego.y).is_none() {
        return Err(Error::OutOfBounds { x: ego.x, y: ego.y });
    }

    let templates = trajectory_templates(params);
    let (sin, cos) = ego.yaw.sin_cos();

    // World-frame cell per (template, step), plus the path cost per template.
    let mut template_cells: Vec<Vec<usize>> = Vec::with_capacity(templates.len());
    let mut costs: Vec<f64> = Vec::with_capacity(templates.len());
    for t in &templates {
        let mut cells = Vec::with_capacity(params.horizon_steps);
        let mut path_cost = 0.0;
        for &(wx, wy) in &t.waypoints {
            let x = ego.x + wx * cos - wy * sin;
            let y = ego.y + wx * sin + wy * cos;
            match cost.cell_index(x, y) {
                Some(i) => {
                    path_cost += *cost.grid.at(i);
                    cells.push(i);
                }
                None => {
                    path_cost += params.offroad_cost_weight;
                    cells.push(cost.clamped_cell_index(x, y));
                }
            }
        }
        template_cells.push(cells);
        costs.push(path_cost);
    }

    let weights = stats::softmax_neg_costs(&costs, params.temperature);

    let mut steps = Vec::with_capacity(params.horizon_steps);
    for step in 0..params.horizon_steps {
        let mut acc: std::collections::BTreeMap<usize, f64> = std::collections::BTreeMap::new();
        for (k, cells) in template_cells.iter().enumerate() {
            *acc.entry(cells[step]).or_insert(0.0) += weights[k];
        }
        let total: f64 = acc.values().sum();
        let support = acc.into_iter().map(|(c, p)| (c, p / total)).collect();
        steps.push(StepDistribution { support });
    }
    Ok(TrajectoryDistribution { steps })
}

/// Smoothed KL divergence between two step distributions over the same grid:
/// `sum_cells p(c) ln((p(c) + eps) / (q(c) + eps))` over the union support,
/// clamped at zero from below.
///
/// Errors when either input is not normalized within
/// [`NORMALIZATION_TOLERANCE`].
pub fn kl_divergence(p: &StepDistribution, q: &StepDistribution, epsilon: f64) -> Result<f64> {
    for dist in [p, q] {
        let sum = dist.total_probability();
        if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::Unnormalized { sum });
        }
    }
    // Merge the sorted supports into aligned value vectors.
    let mut pv = Vec::with_capacity(p.support.len() + q.support.len());
    let mut qv = Vec::with_capacity(pv.capacity());
    let (mut i, mut j) = (0, 0);
    while i < p.support.len() || j < q.support.len() {
        let pc = p.support.get(i).map(|&(c, _)| c);
        let qc = q.support.get(j).map(|&(c, _)| c);
        match (pc, qc) {
            (Some(a), Some(b)) if a == b => {
                pv.push(p.support[i].1);
                qv.push(q.support[j].1);
                i += 1;
                j += 1;
            }
            (Some(a), Some(b)) if a < b => {
                pv.push(p.support[i].1);
                qv.push(0.0);
                i += 1;
            }
            (Some(_), Some(_)) | (None, Some(_)) => {
                pv.push(0.0);
                qv.push(q.support[j].1);
                j += 1;
            }
            (Some(_), None) => {
                pv.push(p.support[i].1);
                qv.push(0.0);
                i += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    Ok(stats::kl_divergence_smoothed(&pv, &qv, epsilon))
}

/// Per-sample PKL value, nats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PklValue {
    pub sample_id: String,
    pub pkl: f64,
}

/// PKL of one sample: the step-wise divergence between the plan conditioned
/// on ground truth and the plan conditioned on `det_boxes`, summed over the
/// horizon. The divergence direction defaults to KL(ground truth ||
/// detections) and follows `params.kl_direction`.
pub fn pkl_sample(
    sample: &Sample,
    det_boxes: &[ObjectBox],
    map: &SceneMap,
    params: &PlannerParams,
) -> Result<PklValue> {
    let gt_cost = build_cost_map(&sample.gt_boxes, map, params);
    let gt_dist = plan_distribution(&gt_cost, &sample.ego_pose, params)?;
    pkl_against_reference(sample, &gt_dist, det_boxes, map, params)
}

fn pkl_against_reference(
    sample: &Sample,
    gt_dist: &TrajectoryDistribution,
    det_boxes: &[ObjectBox],
    map: &SceneMap,
    params: &PlannerParams,
) -> Result<PklValue> {
    let det_cost = build_cost_map(det_boxes, map, params);
    let det_dist = plan_distribution(&det_cost, &sample.ego_pose, params)?;
    let mut pkl = 0.0;
    for (p, q) in gt_dist.steps.iter().zip(&det_dist.steps) {
        pkl += match params.kl_direction {
            KlDirection::GtToDet => kl_divergence(p, q, params.epsilon)?,
            KlDirection::DetToGt => kl_divergence(q, p, params.epsilon)?,
        };
    }
    Ok(PklValue {
        sample_id: sample.sample_id.clone(),
        pkl,
    })
}

/// Precomputed ground-truth plans for a dataset, so multiple detection sets
/// (submissions, sweeps, congestion grids) can be scored without replanning
/// the reference side.
pub struct PklEvaluator<'a> {
    dataset: &'a Dataset,
    params: PlannerParams,
    per_sample: Vec<(&'a Sample, &'a SceneMap, TrajectoryDistribution)>,
}

impl<'a> PklEvaluator<'a> {
    pub fn new(dataset: &'a Dataset, params: &PlannerParams) -> Result<Self> {
        params.validate()?;
        let mut per_sample = Vec::with_capacity(dataset.sample_count());
        for scene in dataset.scenes() {
            for sample in &scene.samples {
                let gt_cost = build_cost_map(&sample.gt_boxes, &scene.map, params);
                let gt_dist = plan_distribution(&gt_cost, &sample.ego_pose, params)?;
                per_sample.push((sample, &scene.map, gt_dist));
            }
        }
        Ok(Self {
            dataset,
            params: params.clone(),
            per_sample,
        })
    }

    pub fn dataset(&self) -> &'a Dataset {
        self.dataset
    }

    pub fn params(&self) -> &PlannerParams {
        &self.params
    }

    /// Score one sample (by canonical index) against an arbitrary box set.
    pub fn score_boxes(&self, sample_index: usize, det_boxes: &[ObjectBox]) -> Result<PklValue> {
        let (sample, map, gt_dist) = &self.per_sample[sample_index];
        pkl_against_reference(sample, gt_dist, det_boxes, map, &self.params)
    }

    /// Score a full submission; one value per sample in dataset order.
    pub fn score_submission(&self, submission: &Submission) -> Result<Vec<PklValue>> {
        self.per_sample
            .iter()
            .enumerate()
            .map(|(i, (sample, _, _))| self.score_boxes(i, submission.boxes_for(&sample.sample_id)))
            .collect()
    }

    pub fn sample_count(&self) -> usize {
        self.per_sample.len()
    }
}

/// Evaluate PKL for every sample. The submission is expected to be score
/// thresholded already (see `metrics::apply_thresholds`); this function uses
/// the box sets as given.
pub fn evaluate_pkl(
    dataset: &Dataset,
    submission: &Submission,
    params: &PlannerParams,
) -> Result<Vec<PklValue>> {
    PklEvaluator::new(dataset, params)?.score_submission(submission)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregateMode {
    Median,
    Mean,
}

/// Aggregate per-sample PKL values. Errors on an empty list.
pub fn aggregate(values: &[PklValue], mode: AggregateMode) -> Result<f64> {
    let xs: Vec<f64> = values.iter().map(|v| v.pkl).collect();
    let out = match mode {
        AggregateMode::Median => stats::median(&xs),
        AggregateMode::Mean => stats::mean(&xs),
    };
    out.ok_or(Error::Empty("aggregate over no PKL values"))
}
