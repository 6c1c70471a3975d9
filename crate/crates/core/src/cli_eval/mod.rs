//! Evaluation harness: localization methods, precision/recall sweeps, prior
//! files, manifests and the bundled benchmark.

mod bench;
mod manifest;
mod prior;

pub use bench::{build_benchmark, fixture_maps, run_benchmark, BenchPair, Benchmark, BenchmarkConfig, BenchEnvironment};
pub use manifest::{Manifest, ManifestPair};
pub use prior::{train_prior, PriorModel};

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::localization_filter::{run_localization, run_localization_with_views, FilterConfig, OutsideModel};
use crate::partial_map::{is_inside, Cell, OccupancyGrid, Pose, ViewTable};
use crate::sim_world::Trajectory;
use crate::structure_hmm::{init_structure, StructureMode};

/// How outside particles are weighted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    HierarchicalAdaptive,
    PriorOnly,
    FrequencyOnly,
    /// Online counts scaled by `r`; `None` derives `r` from the map size.
    ScaledCounts(Option<f64>),
    Fixed(f64),
}

impl Method {
    /// Fixed-likelihood baselines swept by default.
    pub const DEFAULT_FIXED: [f64; 5] = [1e-4, 1e-3, 1e-2, 1e-1, 0.3];

    pub fn default_set() -> Vec<Method> {
        let mut out = vec![
            Method::HierarchicalAdaptive,
            Method::PriorOnly,
            Method::FrequencyOnly,
            Method::ScaledCounts(None),
        ];
        out.extend(Self::DEFAULT_FIXED.iter().map(|&l| Method::Fixed(l)));
        out
    }

    pub fn is_fixed(&self) -> bool {
        matches!(self, Method::Fixed(_))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::HierarchicalAdaptive => f.write_str("hierarchical_adaptive"),
            Method::PriorOnly => f.write_str("prior_only"),
            Method::FrequencyOnly => f.write_str("frequency_only"),
            Method::ScaledCounts(None) => f.write_str("scaled_counts"),
            Method::ScaledCounts(Some(r)) => write!(f, "scaled_counts:{r}"),
            Method::Fixed(l) => write!(f, "fixed:{l}"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let value = |a: &str| {
            a.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && *v >= 0.0)
                .ok_or_else(|| Error::InvalidInput(format!("bad method parameter in {s:?}")))
        };
        match (name, arg) {
            ("hierarchical_adaptive", None) => Ok(Method::HierarchicalAdaptive),
            ("prior_only", None) => Ok(Method::PriorOnly),
            ("frequency_only", None) => Ok(Method::FrequencyOnly),
            ("scaled_counts", None) => Ok(Method::ScaledCounts(None)),
            ("scaled_counts", Some(a)) => Ok(Method::ScaledCounts(Some(value(a)?))),
            ("fixed", Some(a)) => {
                let l = value(a)?;
                if l > 0.0 {
                    Ok(Method::Fixed(l))
                } else {
                    Err(Error::InvalidInput("fixed likelihood must be positive".into()))
                }
            }
            _ => Err(Error::InvalidInput(format!("unknown method {s:?}"))),
        }
    }
}

impl TryFrom<String> for Method {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> Self {
        m.to_string()
    }
}

/// Builds the outside-likelihood model a method uses for one run.
pub fn outside_model(method: Method, prior: &PriorModel, count_scale: f64) -> Result<OutsideModel> {
    let mode = match method {
        Method::Fixed(l) => return Ok(OutsideModel::Fixed(l)),
        Method::HierarchicalAdaptive => StructureMode::Adaptive,
        Method::PriorOnly => StructureMode::PriorOnly,
        Method::FrequencyOnly => StructureMode::FrequencyOnly,
        Method::ScaledCounts(r) => StructureMode::ScaledCounts(r.unwrap_or(count_scale)),
    };
    let state = init_structure(prior.alpha.clone(), prior.observation.clone(), mode)?.with_marginals(prior.marginals.clone())?;
    Ok(OutsideModel::Structure(Box::new(state)))
}

/// Known free area of a partial map divided by an environment area estimate.
pub fn count_scale(partial: &OccupancyGrid, environment_area: Option<f64>) -> f64 {
    let cell = partial.resolution() * partial.resolution();
    let known = partial.count(Cell::Free) as f64 * cell;
    let area = environment_area.unwrap_or_else(|| {
        // Without an estimate, assume the environment fills the grid.
        partial.width() as f64 * partial.height() as f64 * cell
    });
    if area > 0.0 {
        (known / area).min(1.0)
    } else {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub thresholds: Vec<f64>,
    pub tolerance_distance: f64,
    pub tolerance_angle: f64,
    pub methods: Vec<Method>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        let mut thresholds: Vec<f64> = (1..=19).map(|k| k as f64 * 0.05).collect();
        thresholds.push(0.99);
        Self {
            thresholds,
            tolerance_distance: 2.0,
            tolerance_angle: 30f64.to_radians(),
            methods: Method::default_set(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thresholds.is_empty()
            || self.thresholds.iter().any(|t| !(*t > 0.0 && *t < 1.0))
            || self.thresholds.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::InvalidInput("thresholds must be strictly increasing within (0, 1)".into()));
        }
        if !(self.tolerance_distance > 0.0 && self.tolerance_angle > 0.0) {
            return Err(Error::InvalidInput("tolerances must be positive".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidInput("at least one method is required".into()));
        }
        Ok(())
    }
}

/// Outcome of one measurement update against ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    /// Probability of the best hypothesis, if there was one.
    pub probability: Option<f64>,
    pub correct: bool,
    pub in_map: bool,
}

/// Maps a pose from the trajectory frame into the partial-map frame.
pub fn apply_offset(offset: &Pose, p: &Pose) -> Pose {
    let (s, c) = offset.theta.sin_cos();
    Pose::new(offset.x + c * p.x - s * p.y, offset.y + s * p.x + c * p.y, offset.theta + p.theta)
}

/// One partial map and one trajectory, with the ground-truth relation between them.
#[derive(Debug, Clone, Copy)]
pub struct PairInputs<'a> {
    pub partial: &'a OccupancyGrid,
    pub trajectory: &'a Trajectory,
    /// Pose of the trajectory frame in the partial-map frame.
    pub offset: Pose,
    /// Free area of the whole environment, if known.
    pub environment_area: Option<f64>,
    /// Precomputed expected views of `partial`, shared between runs.
    pub views: Option<&'a ViewTable>,
}

/// Localizes one trajectory against one partial map and scores every step.
pub fn evaluate_pair(
    inputs: &PairInputs<'_>,
    method: Method,
    prior: &PriorModel,
    eval: &EvalConfig,
    filter: &FilterConfig,
) -> Result<Vec<StepOutcome>> {
    let partial = inputs.partial;
    let view_model = prior.view_model()?;
    let outside = outside_model(method, prior, count_scale(partial, inputs.environment_area))?;
    let records = inputs.trajectory.filter_inputs();
    let log = match (filter.weighting.view_calibrated, inputs.views) {
        (true, Some(table)) => run_localization_with_views(partial, Some(table), outside, &view_model, records, filter)?,
        _ => run_localization(partial, outside, &view_model, records, filter)?,
    };
    Ok(log
        .iter()
        .map(|r| {
            let truth = apply_offset(&inputs.offset, &inputs.trajectory.records[r.step].pose);
            let correct = r.hypothesis.is_some_and(|h| {
                h.pose.distance(&truth) <= eval.tolerance_distance && h.pose.angle_to(&truth) <= eval.tolerance_angle
            });
            StepOutcome {
                probability: r.hypothesis.map(|h| h.probability),
                correct,
                in_map: is_inside(partial, &truth),
            }
        })
        .collect())
}

/// Per-step outcomes of one (map, trajectory, method) run.
#[derive(Debug, Clone, PartialEq)]
pub struct PairResult {
    pub environment: String,
    pub method: Method,
    pub steps: Vec<StepOutcome>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub method: Method,
    pub theta: f64,
    /// Empty when no hypothesis passed the threshold.
    pub precision: Option<f64>,
    /// Empty when the robot never was inside the map.
    pub recall: Option<f64>,
    pub n_valid: usize,
    pub n_correct: usize,
    pub time_in_map: usize,
    pub time_correct: usize,
}

#[derive(Default, Clone, Copy)]
struct Tally {
    n_valid: usize,
    n_correct: usize,
    time_in_map: usize,
    time_correct: usize,
}

impl Tally {
    fn add(&mut self, s: &StepOutcome, theta: f64) {
        let valid = s.probability.is_some_and(|p| p >= theta);
        if valid {
            self.n_valid += 1;
            self.n_correct += usize::from(s.correct);
        }
        if s.in_map {
            self.time_in_map += 1;
            self.time_correct += usize::from(valid && s.correct);
        }
    }

    fn precision(&self) -> Option<f64> {
        (self.n_valid > 0).then(|| self.n_correct as f64 / self.n_valid as f64)
    }

    fn recall(&self) -> Option<f64> {
        (self.time_in_map > 0).then(|| self.time_correct as f64 / self.time_in_map as f64)
    }
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Precision and recall per method and threshold: pooled over the pairs of
/// each environment, then averaged across environments.
pub fn precision_recall(results: &[PairResult], eval: &EvalConfig) -> Vec<PrPoint> {
    let mut methods: Vec<Method> = Vec::new();
    for r in results {
        if !methods.contains(&r.method) {
            methods.push(r.method);
        }
    }
    let mut out = Vec::new();
    for method in methods {
        for &theta in &eval.thresholds {
            let mut per_env: BTreeMap<&str, Tally> = BTreeMap::new();
            for r in results.iter().filter(|r| r.method == method) {
                let t = per_env.entry(r.environment.as_str()).or_default();
                for s in &r.steps {
                    t.add(s, theta);
                }
            }
            let total = per_env.values().fold(Tally::default(), |a, t| Tally {
                n_valid: a.n_valid + t.n_valid,
                n_correct: a.n_correct + t.n_correct,
                time_in_map: a.time_in_map + t.time_in_map,
                time_correct: a.time_correct + t.time_correct,
            });
            out.push(PrPoint {
                method,
                theta,
                precision: mean(per_env.values().map(Tally::precision)),
                recall: mean(per_env.values().map(Tally::recall)),
                n_valid: total.n_valid,
                n_correct: total.n_correct,
                time_in_map: total.time_in_map,
                time_correct: total.time_correct,
            });
        }
    }
    out
}

/// Area under one method's precision-recall curve.
///
/// Points with both values defined are ordered by recall and integrated with
/// the trapezoid rule; the curve is extended flat to recall 0.
pub fn auc_pr(points: &[PrPoint], method: Method) -> f64 {
    let mut pr: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.method == method)
        .filter_map(|p| Some((p.recall?, p.precision?)))
        .collect();
    if pr.is_empty() {
        return 0.0;
    }
    pr.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    let mut area = pr[0].0 * pr[0].1;
    for w in pr.windows(2) {
        area += (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0;
    }
    area
}

/// Best precision a method reaches at recall `r` or higher.
pub fn precision_at_recall(points: &[PrPoint], method: Method, r: f64) -> Option<f64> {
    points
        .iter()
        .filter(|p| p.method == method)
        .filter_map(|p| match (p.recall, p.precision) {
            (Some(rec), Some(prec)) if rec >= r => Some(prec),
            _ => None,
        })
        .reduce(f64::max)
}

pub const PR_HEADER: &str = "method,theta,precision,recall,n_valid,n_correct,time_in_map,time_correct";

/// The PR table as delimited text.
pub fn pr_table_text(points: &[PrPoint]) -> String {
    let mut out = String::from(PR_HEADER);
    out.push('\n');
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            p.method,
            p.theta,
            opt(p.precision),
            opt(p.recall),
            p.n_valid,
            p.n_correct,
            p.time_in_map,
            p.time_correct
        );
    }
    out
}
