//! Particle filter localizing a robot relative to a partial map.
//!
//! Particles on FREE cells of the map are weighted by the raw scan; every
//! other particle is weighted by the same outside likelihood, produced once
//! per update by the structural model. With view calibration, the inside
//! particles as a group are weighed against the outside ones by the view
//! likelihood `p(z | v_x)`, while the raw scan still decides how that mass
//! is spread among them.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partial_map::{is_inside, normalize_angle, Cell, OccupancyGrid, Pose, ScanGeometry, ScanLikelihoodParams, ViewTable};
use crate::structure_hmm::StructureState;
use crate::view_model::{ObservationModel, RangeScan, ViewId, ViewModel};

/// Odometry noise mixing coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionNoise {
    pub a_trans_per_trans: f64,
    pub a_trans_per_rot: f64,
    pub a_rot_per_rot: f64,
    pub a_rot_per_trans: f64,
    pub floor_trans: f64,
    pub floor_rot: f64,
}

impl Default for MotionNoise {
    fn default() -> Self {
        Self {
            a_trans_per_trans: 0.1,
            a_trans_per_rot: 0.01,
            a_rot_per_rot: 0.1,
            a_rot_per_trans: 0.01,
            floor_trans: 0.01,
            floor_rot: 0.002,
        }
    }
}

impl MotionNoise {
    pub const ZERO: MotionNoise = MotionNoise {
        a_trans_per_trans: 0.0,
        a_trans_per_rot: 0.0,
        a_rot_per_rot: 0.0,
        a_rot_per_trans: 0.0,
        floor_trans: 0.0,
        floor_rot: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.a_trans_per_trans,
            self.a_trans_per_rot,
            self.a_rot_per_rot,
            self.a_rot_per_trans,
            self.floor_trans,
            self.floor_rot,
        ];
        if all.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::InvalidInput("motion noise coefficients must be non-negative".into()));
        }
        Ok(())
    }

    /// Standard deviations `(translation, rotation)` for one odometry step.
    pub fn std_devs(&self, u: &OdometryDelta) -> (f64, f64) {
        let trans = u.d_trans.abs();
        let rot = u.d_rot1.abs() + u.d_rot2.abs();
        (
            self.a_trans_per_trans * trans + self.a_trans_per_rot * rot + self.floor_trans,
            self.a_rot_per_rot * rot + self.a_rot_per_trans * trans + self.floor_rot,
        )
    }

    /// Draws a noisy version of `u`.
    pub fn sample<R: Rng + ?Sized>(&self, u: &OdometryDelta, rng: &mut R) -> OdometryDelta {
        let (st, sr) = self.std_devs(u);
        let mut draw = |std: f64| {
            if std > 0.0 {
                std * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            }
        };
        let d_rot1 = u.d_rot1 + draw(sr);
        let d_trans = u.d_trans + draw(st);
        let d_rot2 = u.d_rot2 + draw(sr);
        OdometryDelta { d_trans, d_rot1, d_rot2 }
    }
}

/// Relative motion as rotate–translate–rotate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OdometryDelta {
    pub d_trans: f64,
    pub d_rot1: f64,
    pub d_rot2: f64,
}

impl OdometryDelta {
    /// Decomposes the motion from `a` to `b`.
    pub fn between(a: &Pose, b: &Pose) -> Self {
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        let d_trans = dx.hypot(dy);
        let d_rot1 = if d_trans < 1e-12 {
            0.0
        } else {
            normalize_angle(dy.atan2(dx) - a.theta)
        };
        let d_rot2 = normalize_angle(b.theta - a.theta - d_rot1);
        Self { d_trans, d_rot1, d_rot2 }
    }

    pub fn apply(&self, p: &Pose) -> Pose {
        let heading = p.theta + self.d_rot1;
        Pose::new(
            p.x + self.d_trans * heading.cos(),
            p.y + self.d_trans * heading.sin(),
            heading + self.d_rot2,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub pose: Pose,
    pub weight: f64,
    pub inside: bool,
}

/// Weighted particles plus the random stream that drives them.
#[derive(Debug, Clone)]
pub struct ParticleSet {
    particles: Vec<Particle>,
    rng: ChaCha8Rng,
    distance_since_update: f64,
}

impl ParticleSet {
    /// Equal-weight set from explicit poses; `inside` is left to the caller.
    pub fn from_particles(particles: Vec<Particle>, seed: u64) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::InvalidInput("a particle set needs at least one particle".into()));
        }
        Ok(Self {
            particles,
            rng: ChaCha8Rng::seed_from_u64(seed),
            distance_since_update: 0.0,
        })
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn distance_since_update(&self) -> f64 {
        self.distance_since_update
    }

    pub fn weights(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.weight).collect()
    }

    pub fn effective_sample_size(&self) -> f64 {
        1.0 / self.particles.iter().map(|p| p.weight * p.weight).sum::<f64>()
    }

    pub fn inside_mass(&self) -> f64 {
        self.particles.iter().filter(|p| p.inside).map(|p| p.weight).sum()
    }

    /// Moves every particle with a caller-supplied sampler, then refreshes `inside`.
    pub fn propagate<F>(&mut self, map: &OccupancyGrid, mut sampler: F)
    where
        F: FnMut(&Pose, &mut ChaCha8Rng) -> Pose,
    {
        for p in &mut self.particles {
            p.pose = sampler(&p.pose, &mut self.rng);
            p.inside = is_inside(map, &p.pose);
        }
    }

    /// Multiplies weights by `exp(log_factors)` and renormalizes in log space.
    pub fn reweight(&mut self, log_factors: &[f64]) -> Result<()> {
        if log_factors.len() != self.particles.len() {
            return Err(Error::DimensionMismatch {
                expected: self.particles.len(),
                actual: log_factors.len(),
            });
        }
        let logs: Vec<f64> = self
            .particles
            .iter()
            .zip(log_factors)
            .map(|(p, f)| p.weight.ln() + f)
            .collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::FilterDivergence);
        }
        let mut total = 0.0;
        for (p, l) in self.particles.iter_mut().zip(&logs) {
            p.weight = (l - max).exp();
            total += p.weight;
        }
        for p in &mut self.particles {
            p.weight /= total;
        }
        Ok(())
    }

    /// Systematic resampling to equal weights, unconditionally.
    pub fn resample(&mut self) {
        let n = self.particles.len();
        let step = 1.0 / n as f64;
        let mut u = self.rng.random::<f64>() * step;
        let mut cumulative = self.particles[0].weight;
        let mut i = 0;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            while u > cumulative && i + 1 < n {
                i += 1;
                cumulative += self.particles[i].weight;
            }
            out.push(Particle {
                weight: step,
                ..self.particles[i]
            });
            u += step;
        }
        self.particles = out;
    }
}

/// Pose uniform over the listed cells, heading uniform.
fn uniform_pose<R: Rng + ?Sized>(map: &OccupancyGrid, free: &[(usize, usize)], rng: &mut R) -> Pose {
    let res = map.resolution();
    let (ox, oy) = map.origin();
    let (i, j) = free[rng.random_range(0..free.len())];
    let x = ox + (i as f64 + rng.random::<f64>()) * res;
    let y = oy + (j as f64 + rng.random::<f64>()) * res;
    let theta = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    Pose::new(x, y, theta)
}

/// Uniform particles over the FREE cells of `map`, headings uniform.
pub fn init_filter(map: &OccupancyGrid, n: usize, seed: u64) -> Result<ParticleSet> {
    if n == 0 {
        return Err(Error::InvalidInput("particle count must be positive".into()));
    }
    let free = map.cells_of(Cell::Free);
    if free.is_empty() {
        return Err(Error::InvalidInput("map has no FREE cell".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weight = 1.0 / n as f64;
    let particles = (0..n)
        .map(|_| {
            let pose = uniform_pose(map, &free, &mut rng);
            Particle {
                pose,
                weight,
                // Rounding at the far cell edge can land on the neighbour.
                inside: is_inside(map, &pose),
            }
        })
        .collect();
    Ok(ParticleSet {
        particles,
        rng,
        distance_since_update: 0.0,
    })
}

/// Moves each outside particle, with probability `fraction`, to a uniform pose
/// on a FREE cell, keeping its weight. Outside particles all carry the same
/// likelihood, so this lets part of the outside mass take up in-map positions
/// the robot may walk into.
pub fn reenter(ps: &mut ParticleSet, map: &OccupancyGrid, free: &[(usize, usize)], fraction: f64) {
    if fraction <= 0.0 || free.is_empty() {
        return;
    }
    for p in &mut ps.particles {
        if !p.inside && ps.rng.random::<f64>() < fraction {
            p.pose = uniform_pose(map, free, &mut ps.rng);
            p.inside = is_inside(map, &p.pose);
        }
    }
}

/// Samples every particle through the odometry motion model.
pub fn motion_update(ps: &mut ParticleSet, map: &OccupancyGrid, u: &OdometryDelta, noise: &MotionNoise) {
    ps.propagate(map, |pose, rng| noise.sample(u, rng).apply(pose));
    ps.distance_since_update += u.d_trans.abs();
}

/// Where outside particles get their likelihood from.
#[derive(Debug, Clone)]
pub enum OutsideModel {
    Structure(Box<StructureState>),
    /// Constant `p(z | outside)` for every observation.
    Fixed(f64),
}

impl OutsideModel {
    /// Log outside likelihood of `z`; the structural model advances one step.
    pub fn step(&mut self, z: ViewId) -> Result<f64> {
        match self {
            OutsideModel::Structure(s) => Ok(s.step(z)?.ln()),
            OutsideModel::Fixed(l) => Ok(l.ln()),
        }
    }
}

/// Weighting parameters shared by every measurement update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightingParams {
    pub scan: ScanLikelihoodParams,
    /// Outside particles farther than this box (multiples of the known-map
    /// extent, centered on it) get `far_weight` instead of the outside likelihood.
    pub outside_box_scale: Option<f64>,
    pub far_weight: f64,
    /// Weigh inside against outside particles by views rather than raw scans.
    pub view_calibrated: bool,
    /// Heading resolution of the expected-view table.
    pub heading_bins: usize,
    /// Poses whose beams cross unexplored space more often than this have no
    /// expected view and are scored with the outside likelihood.
    pub max_unknown_fraction: f64,
    /// Sensor layout used to predict views from the map.
    pub geometry: ScanGeometry,
}

impl Default for WeightingParams {
    fn default() -> Self {
        Self {
            scan: ScanLikelihoodParams::default(),
            outside_box_scale: Some(3.0),
            far_weight: 1e-12,
            view_calibrated: true,
            heading_bins: 36,
            max_unknown_fraction: 0.1,
            geometry: ScanGeometry::default(),
        }
    }
}

impl WeightingParams {
    pub fn validate(&self) -> Result<()> {
        self.scan.validate()?;
        self.geometry.validate()?;
        if self.outside_box_scale.is_some_and(|s| !(s > 0.0)) {
            return Err(Error::InvalidInput("outside box scale must be positive".into()));
        }
        if !(self.far_weight > 0.0 && self.far_weight.is_finite()) {
            return Err(Error::InvalidInput("far weight must be positive".into()));
        }
        if self.heading_bins == 0 {
            return Err(Error::InvalidInput("heading bins must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.max_unknown_fraction) {
            return Err(Error::InvalidInput("unknown fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Expected views of the map and the observation model that scores them.
#[derive(Debug, Clone, Copy)]
pub struct InsideViews<'a> {
    pub table: &'a ViewTable,
    pub observation: &'a ObservationModel,
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Box around the known part of the map, scaled about its center.
fn outside_box(map: &OccupancyGrid, scale: f64) -> (f64, f64, f64, f64) {
    let (mut lo_i, mut lo_j, mut hi_i, mut hi_j) = (usize::MAX, usize::MAX, 0, 0);
    for j in 0..map.height() {
        for i in 0..map.width() {
            if map.get(i, j) != Cell::Unknown {
                lo_i = lo_i.min(i);
                lo_j = lo_j.min(j);
                hi_i = hi_i.max(i);
                hi_j = hi_j.max(j);
            }
        }
    }
    if lo_i == usize::MAX {
        return map.bounds();
    }
    let (x0, y0) = map.cell_center(lo_i, lo_j);
    let (x1, y1) = map.cell_center(hi_i, hi_j);
    let (cx, cy) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
    let hw = (x1 - x0 + map.resolution()) * scale / 2.0;
    let hh = (y1 - y0 + map.resolution()) * scale / 2.0;
    (cx - hw, cy - hh, cx + hw, cy + hh)
}

/// Diagnostics of one measurement update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateInfo {
    pub log_outside: f64,
    pub inside_mass: f64,
}

/// Reweights all particles with one scan and its view.
///
/// Without `views`, inside particles are weighted by the scan likelihood
/// alone. With `views`, inside particle `i` gets `p(z | v_i) · s_i / s̄`,
/// where `s̄` is the `w · p(z | v)`-weighted mean scan likelihood of the
/// inside particles, so the inside mass changes by the view likelihood only.
/// Where the map does not determine `v_i`, the outside likelihood stands in
/// for `p(z | v_i)`.
pub fn measurement_update(
    ps: &mut ParticleSet,
    scan: &RangeScan,
    z_view: ViewId,
    outside: &mut OutsideModel,
    map: &OccupancyGrid,
    params: &WeightingParams,
    views: Option<InsideViews<'_>>,
) -> Result<UpdateInfo> {
    let log_outside = outside.step(z_view)?;
    let prepared = params.scan.prepare(scan);
    let bbox = params.outside_box_scale.map(|s| outside_box(map, s));
    let log_far = params.far_weight.ln();
    let mut factors: Vec<f64> = ps
        .particles
        .par_iter()
        .map(|p| {
            if p.inside {
                prepared.log_likelihood(map, &p.pose)
            } else {
                match bbox {
                    Some((x0, y0, x1, y1)) if p.pose.x < x0 || p.pose.x > x1 || p.pose.y < y0 || p.pose.y > y1 => log_far,
                    _ => log_outside,
                }
            }
        })
        .collect();
    if let Some(v) = views {
        let log_view: Vec<f64> = ps
            .particles
            .par_iter()
            .map(|p| {
                if !p.inside {
                    return Ok(0.0);
                }
                Ok(match v.table.view(map, &p.pose)? {
                    Some(expected) => v.observation.prob(z_view.index(), expected.index()).ln(),
                    None => log_outside,
                })
            })
            .collect::<Result<_>>()?;
        let inside: Vec<usize> = (0..ps.len()).filter(|&k| ps.particles[k].inside).collect();
        let a = inside.iter().map(|&k| ps.particles[k].weight.ln() + log_view[k]);
        let b = inside.iter().map(|&k| ps.particles[k].weight.ln() + log_view[k] + factors[k]);
        let (la, lb) = (log_sum_exp(a), log_sum_exp(b));
        let log_mean = if la.is_finite() && lb.is_finite() { lb - la } else { 0.0 };
        for &k in &inside {
            factors[k] += log_view[k] - log_mean;
        }
    }
    ps.reweight(&factors)?;
    ps.distance_since_update = 0.0;
    Ok(UpdateInfo {
        log_outside,
        inside_mass: ps.inside_mass(),
    })
}

/// Refines the inside particles with a scan while keeping their total mass:
/// inside particle `i` is scaled by `s_i / s̄`, with `s̄` the weighted mean scan
/// likelihood over inside particles. Outside particles are untouched.
pub fn scan_refinement(ps: &mut ParticleSet, scan: &RangeScan, map: &OccupancyGrid, params: &WeightingParams) -> Result<()> {
    let prepared = params.scan.prepare(scan);
    let mut factors: Vec<f64> = ps
        .particles
        .par_iter()
        .map(|p| if p.inside { prepared.log_likelihood(map, &p.pose) } else { 0.0 })
        .collect();
    let inside: Vec<usize> = (0..ps.len()).filter(|&k| ps.particles[k].inside).collect();
    let la = log_sum_exp(inside.iter().map(|&k| ps.particles[k].weight.ln()));
    let lb = log_sum_exp(inside.iter().map(|&k| ps.particles[k].weight.ln() + factors[k]));
    if !(la.is_finite() && lb.is_finite()) {
        return Ok(());
    }
    for &k in &inside {
        factors[k] -= lb - la;
    }
    ps.reweight(&factors)
}

/// Systematic resampling when the effective sample size drops below `threshold · N`.
/// Returns whether resampling happened.
pub fn resample_if_needed(ps: &mut ParticleSet, threshold: f64) -> bool {
    if ps.effective_sample_size() < threshold * ps.len() as f64 {
        ps.resample();
        true
    } else {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub pose: Pose,
    pub probability: f64,
}

/// Most likely in-map pose and the weight mass around it.
pub fn best_hypothesis(ps: &ParticleSet, radius: f64, max_angle: f64) -> Option<Hypothesis> {
    let anchor = ps
        .particles
        .iter()
        .filter(|p| p.inside)
        .fold(None::<&Particle>, |best, p| match best {
            Some(b) if b.weight >= p.weight => Some(b),
            _ => Some(p),
        })?;
    let probability = ps
        .particles
        .iter()
        .filter(|p| p.pose.distance(&anchor.pose) <= radius && p.pose.angle_to(&anchor.pose) <= max_angle)
        .map(|p| p.weight)
        .sum::<f64>()
        .min(1.0);
    Some(Hypothesis {
        pose: anchor.pose,
        probability,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub particles: usize,
    pub seed: u64,
    pub view_update_distance: f64,
    /// Travel between mass-preserving scan refinements of the inside
    /// particles; `None` weights scans only at view updates.
    pub scan_update_distance: Option<f64>,
    pub resample_threshold: f64,
    /// Chance per view update that an outside particle re-enters the map.
    pub reentry_fraction: f64,
    pub hypothesis_radius: f64,
    pub hypothesis_angle: f64,
    pub motion_noise: MotionNoise,
    pub weighting: WeightingParams,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            particles: 10_000,
            seed: 0,
            view_update_distance: 2.0,
            scan_update_distance: Some(0.5),
            resample_threshold: 0.5,
            reentry_fraction: 0.05,
            hypothesis_radius: 2.0,
            hypothesis_angle: 30f64.to_radians(),
            motion_noise: MotionNoise::default(),
            weighting: WeightingParams::default(),
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 {
            return Err(Error::InvalidInput("particle count must be positive".into()));
        }
        if !(self.view_update_distance > 0.0) {
            return Err(Error::InvalidInput("view update distance must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.reentry_fraction) {
            return Err(Error::InvalidInput("re-entry fraction must lie in [0, 1]".into()));
        }
        if self.scan_update_distance.is_some_and(|d| !(d > 0.0)) {
            return Err(Error::InvalidInput("scan update distance must be positive".into()));
        }
        if !(self.hypothesis_radius > 0.0 && self.hypothesis_angle > 0.0) {
            return Err(Error::InvalidInput("hypothesis neighbourhood must be positive".into()));
        }
        self.motion_noise.validate()?;
        self.weighting.validate()
    }
}

/// One measurement update of a localization run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    /// Index of the trajectory record that triggered the update.
    pub step: usize,
    /// Odometry distance traveled up to this record.
    pub distance: f64,
    pub hypothesis: Option<Hypothesis>,
    pub inside_mass: f64,
    pub log_outside: f64,
}

pub const STEP_LOG_HEADER: &str = "step,distance,x,y,theta,probability,inside_mass,log_l_out";

/// Renders a step log as delimited text.
pub fn step_log_text(log: &[StepRecord]) -> String {
    let mut out = String::from(STEP_LOG_HEADER);
    out.push('\n');
    for r in log {
        let _ = write!(out, "{},{},", r.step, r.distance);
        match r.hypothesis {
            Some(h) => {
                let _ = write!(out, "{},{},{},{}", h.pose.x, h.pose.y, h.pose.theta, h.probability);
            }
            None => out.push_str("NONE,NONE,NONE,0"),
        }
        let _ = writeln!(out, ",{},{}", r.inside_mass, r.log_outside);
    }
    out
}

/// Runs the filter over `(odometry, scan)` records.
///
/// The first record and every record after `view_update_distance` of travel
/// trigger a measurement update, a resampling check and a logged hypothesis.
/// In between, inside particles are refined every `scan_update_distance`.
pub fn run_localization<'a, I>(
    map: &OccupancyGrid,
    outside: OutsideModel,
    view_model: &ViewModel,
    records: I,
    config: &FilterConfig,
) -> Result<Vec<StepRecord>>
where
    I: IntoIterator<Item = (OdometryDelta, &'a RangeScan)>,
{
    config.validate()?;
    let table = if config.weighting.view_calibrated {
        Some(view_table(map, view_model, &config.weighting)?)
    } else {
        None
    };
    run_localization_with_views(map, table.as_ref(), outside, view_model, records, config)
}

/// Expected-view table for `map` under `view_model` and the weighting settings.
pub fn view_table(map: &OccupancyGrid, view_model: &ViewModel, params: &WeightingParams) -> Result<ViewTable> {
    ViewTable::new(
        map,
        view_model.alphabet.clone(),
        view_model.extraction,
        params.geometry,
        params.heading_bins,
        params.max_unknown_fraction,
    )
}

/// [`run_localization`] with a caller-supplied view table, which several runs
/// on the same map may share. `None` disables view calibration.
pub fn run_localization_with_views<'a, I>(
    map: &OccupancyGrid,
    table: Option<&ViewTable>,
    mut outside: OutsideModel,
    view_model: &ViewModel,
    records: I,
    config: &FilterConfig,
) -> Result<Vec<StepRecord>>
where
    I: IntoIterator<Item = (OdometryDelta, &'a RangeScan)>,
{
    config.validate()?;
    if let Some(t) = table {
        if t.alphabet() != &view_model.alphabet {
            return Err(Error::AlphabetMismatch {
                expected: view_model.alphabet.hash(),
                actual: t.alphabet().hash(),
            });
        }
    }
    let views = table.map(|t| InsideViews {
        table: t,
        observation: &view_model.observation,
    });
    if let OutsideModel::Structure(s) = &outside {
        if s.nu() != view_model.nu() {
            return Err(Error::DimensionMismatch {
                expected: view_model.nu(),
                actual: s.nu(),
            });
        }
    }
    let mut ps = init_filter(map, config.particles, config.seed)?;
    let free = map.cells_of(Cell::Free);
    let mut log = Vec::new();
    let mut distance = 0.0;
    let mut since_scan = 0.0;
    for (step, (u, scan)) in records.into_iter().enumerate() {
        motion_update(&mut ps, map, &u, &config.motion_noise);
        distance += u.d_trans.abs();
        since_scan += u.d_trans.abs();
        if step > 0 && ps.distance_since_update < config.view_update_distance {
            if config.scan_update_distance.is_some_and(|d| since_scan >= d) {
                scan_refinement(&mut ps, scan, map, &config.weighting)?;
                resample_if_needed(&mut ps, config.resample_threshold);
                since_scan = 0.0;
            }
            continue;
        }
        since_scan = 0.0;
        if step > 0 {
            reenter(&mut ps, map, &free, config.reentry_fraction);
        }
        let z = view_model.view_of_scan(scan)?;
        let info = measurement_update(&mut ps, scan, z, &mut outside, map, &config.weighting, views)?;
        let hypothesis = best_hypothesis(&ps, config.hypothesis_radius, config.hypothesis_angle);
        resample_if_needed(&mut ps, config.resample_threshold);
        log.push(StepRecord {
            step,
            distance,
            hypothesis,
            inside_mass: info.inside_mass,
            log_outside: info.log_outside,
        });
    }
    Ok(log)
}
