//! Synthetic worlds: scan simulation, trajectories, partial-map carving and
//! training data.

mod carve;
mod planner;
mod training;

pub use carve::carve_partial_map;
pub use training::{derive_seed, make_training_data, random_start, subsample_by_distance, TrainingConfig, TrainingData};

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::localization_filter::{MotionNoise, OdometryDelta};
use crate::partial_map::{is_inside, raycast, Cell, OccupancyGrid, Pose, ScanGeometry};
use crate::view_model::{uniform_bearings, RangeScan};
use planner::Passability;

/// Parses a map file.
pub fn load_map(text: &str) -> Result<OccupancyGrid> {
    OccupancyGrid::load(text)
}

/// Simulated sensor and odometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub beam_count: usize,
    pub fov: f64,
    pub max_range: f64,
    pub range_noise_sigma: f64,
    pub dropout_prob: f64,
    pub odom_noise: MotionNoise,
    pub seed: u64,
    /// Longest distance between consecutive recorded poses.
    pub step_length: f64,
    /// Minimum distance kept between the robot and obstacles when planning.
    pub clearance: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            beam_count: 181,
            fov: std::f64::consts::PI,
            max_range: 8.0,
            range_noise_sigma: 0.02,
            dropout_prob: 0.01,
            odom_noise: MotionNoise::default(),
            seed: 0,
            step_length: 0.25,
            clearance: 0.35,
        }
    }
}

impl WorldConfig {
    pub fn geometry(&self) -> ScanGeometry {
        ScanGeometry {
            beam_count: self.beam_count,
            fov: self.fov,
            max_range: self.max_range,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry().validate()?;
        if !(self.range_noise_sigma.is_finite() && self.range_noise_sigma >= 0.0) {
            return Err(Error::InvalidInput("range noise sigma must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.dropout_prob) {
            return Err(Error::InvalidInput("dropout probability must lie in [0, 1]".into()));
        }
        if !(self.step_length > 0.0 && self.step_length <= 0.25) {
            return Err(Error::InvalidInput("step length must lie in (0, 0.25] m".into()));
        }
        if !(self.clearance >= 0.0) {
            return Err(Error::InvalidInput("clearance must be non-negative".into()));
        }
        self.odom_noise.validate()
    }
}

/// Noisy scan at `pose`: true ranges plus Gaussian noise, with random dropouts
/// reading max range. Beams without a return stay at max range.
pub fn simulate_scan<R: Rng + ?Sized>(map: &OccupancyGrid, pose: &Pose, cfg: &WorldConfig, rng: &mut R) -> Result<RangeScan> {
    if !is_inside(map, pose) {
        return Err(Error::InvalidPose {
            x: pose.x,
            y: pose.y,
            reason: "scans are simulated from FREE cells only",
        });
    }
    let geometry = cfg.geometry();
    let truth = raycast(map, pose, &geometry.bearings(), geometry.max_range)?;
    if cfg.range_noise_sigma == 0.0 && cfg.dropout_prob == 0.0 {
        return Ok(truth);
    }
    let floor = 1e-3f64.min(cfg.max_range);
    let ranges = truth
        .ranges()
        .iter()
        .map(|&r| {
            let dropped = rng.random::<f64>() < cfg.dropout_prob;
            let noise: f64 = rng.sample(StandardNormal);
            if dropped || r >= cfg.max_range {
                cfg.max_range
            } else {
                (r + cfg.range_noise_sigma * noise).clamp(floor, cfg.max_range)
            }
        })
        .collect();
    truth.with_ranges(ranges)
}

/// One recorded time step.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub pose: Pose,
    /// Odometry reading since the previous record (zero for the first).
    pub odom: OdometryDelta,
    pub scan: RangeScan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub records: Vec<TrajectoryRecord>,
    /// The policy got stuck before covering the requested length.
    pub truncated: bool,
}

impl Trajectory {
    pub fn poses(&self) -> impl Iterator<Item = &Pose> {
        self.records.iter().map(|r| &r.pose)
    }

    /// True path length.
    pub fn length(&self) -> f64 {
        self.records.windows(2).map(|w| w[0].pose.distance(&w[1].pose)).sum()
    }

    /// `(odometry, scan)` pairs as consumed by the localization filter.
    pub fn filter_inputs(&self) -> impl Iterator<Item = (OdometryDelta, &RangeScan)> {
        self.records.iter().map(|r| (r.odom, &r.scan))
    }

    /// Delimited text; `from_text(to_text(t)) == t` bit for bit.
    ///
    /// Header: `beams <count> <fov> <max_range>` and `truncated <0|1>`, then
    /// one line per record: step, x, y, θ, d_trans, d_rot1, d_rot2, ranges…
    pub fn to_text(&self, geometry: &ScanGeometry) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "beams {} {} {}", geometry.beam_count, geometry.fov, geometry.max_range);
        let _ = writeln!(out, "truncated {}", u8::from(self.truncated));
        for (k, r) in self.records.iter().enumerate() {
            let _ = write!(
                out,
                "{},{},{},{},{},{},{}",
                k, r.pose.x, r.pose.y, r.pose.theta, r.odom.d_trans, r.odom.d_rot1, r.odom.d_rot2
            );
            for range in r.scan.ranges() {
                let _ = write!(out, ",{range}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<(Trajectory, ScanGeometry)> {
        let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l));
        let geometry = match lines.next() {
            Some((n, l)) => {
                let parts: Vec<&str> = l.split_whitespace().collect();
                if parts.len() != 4 || parts[0] != "beams" {
                    return Err(Error::parse(n, "expected `beams <count> <fov> <max_range>`"));
                }
                let g = ScanGeometry {
                    beam_count: parts[1].parse().map_err(|_| Error::parse(n, "bad beam count"))?,
                    fov: number(n, parts[2])?,
                    max_range: number(n, parts[3])?,
                };
                g.validate().map_err(|e| Error::parse(n, e.to_string()))?;
                g
            }
            None => return Err(Error::parse(1, "empty trajectory file")),
        };
        let truncated = match lines.next() {
            Some((_, "truncated 0")) => false,
            Some((_, "truncated 1")) => true,
            Some((n, _)) => return Err(Error::parse(n, "expected `truncated 0|1`")),
            None => return Err(Error::parse(2, "missing truncated flag")),
        };
        let bearings = uniform_bearings(geometry.beam_count, geometry.fov);
        let mut records = Vec::new();
        for (n, line) in lines {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 7 + geometry.beam_count {
                return Err(Error::parse(n, format!("expected {} fields, found {}", 7 + geometry.beam_count, fields.len())));
            }
            let step: usize = fields[0].parse().map_err(|_| Error::parse(n, "bad step index"))?;
            if step != records.len() {
                return Err(Error::parse(n, format!("step {step} out of sequence")));
            }
            let v = fields[1..]
                .iter()
                .map(|f| number(n, f))
                .collect::<Result<Vec<f64>>>()?;
            let scan = RangeScan::new(bearings.clone(), v[6..].to_vec(), geometry.max_range).map_err(|e| Error::parse(n, e.to_string()))?;
            records.push(TrajectoryRecord {
                pose: Pose {
                    x: v[0],
                    y: v[1],
                    theta: v[2],
                },
                odom: OdometryDelta {
                    d_trans: v[3],
                    d_rot1: v[4],
                    d_rot2: v[5],
                },
                scan,
            });
        }
        Ok((Trajectory { records, truncated }, geometry))
    }
}

fn number(line: usize, s: &str) -> Result<f64> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::parse(line, format!("bad number {s:?}")))
}

/// How the simulated robot chooses where to go.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// Visit the given world points in order along shortest paths.
    Waypoints(Vec<(f64, f64)>),
    /// Keep an obstacle on the right-hand side.
    WallFollow,
    /// Travel between random reachable goals.
    RandomExplore,
}

/// Simulates a robot driving `length` meters from `start`.
///
/// Poses are at most `cfg.step_length` apart and keep `cfg.clearance` from
/// obstacles wherever the map allows it. Odometry is the true motion corrupted
/// by `cfg.odom_noise`; every pose records a scan. Randomness comes from
/// `cfg.seed` alone.
pub fn generate_trajectory(map: &OccupancyGrid, start: Pose, policy: &Policy, length: f64, cfg: &WorldConfig) -> Result<Trajectory> {
    cfg.validate()?;
    if !(length > 0.0) {
        return Err(Error::InvalidInput("trajectory length must be positive".into()));
    }
    if !start.is_finite() || !is_inside(map, &start) {
        return Err(Error::InvalidPose {
            x: start.x,
            y: start.y,
            reason: "trajectories start on a FREE cell",
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pass = Passability::new(map, cfg.clearance);
    let start_cell = map.cell_of(start.x, start.y).expect("inside implies on grid");
    let to_world = |c: (usize, usize)| map.cell_center(c.0, c.1);

    let mut walker = Walker::new(start, cfg.step_length, length);
    let mut stuck = false;
    match policy {
        Policy::Waypoints(points) => {
            let mut from = start_cell;
            for &(x, y) in points {
                let Some(goal) = map.cell_of(x, y) else {
                    stuck = true;
                    break;
                };
                let Some(path) = pass.astar(from, goal) else {
                    stuck = true;
                    break;
                };
                let mut pts: Vec<(f64, f64)> = pass.smooth(&path).into_iter().skip(1).map(to_world).collect();
                if let Some(last) = pts.last_mut() {
                    *last = (x, y);
                }
                if walker.follow(&pts) {
                    break;
                }
                from = goal;
            }
        }
        Policy::RandomExplore => {
            let entry = pass.astar(start_cell, nearest_open(&pass, start_cell, map).unwrap_or(start_cell));
            let reachable = match &entry {
                Some(p) => pass.reachable(*p.last().unwrap()),
                None => Vec::new(),
            };
            if reachable.len() < 2 {
                stuck = true;
            } else {
                let mut from = start_cell;
                let min_cells = 3.0 / map.resolution();
                let mut failures = 0;
                while !walker.done() {
                    let goal = Passability::random_goal(&reachable, from, min_cells, &mut rng);
                    match pass.astar(from, goal) {
                        Some(path) if path.len() > 1 => {
                            let pts: Vec<(f64, f64)> = pass.smooth(&path).into_iter().skip(1).map(to_world).collect();
                            walker.follow(&pts);
                            from = goal;
                            failures = 0;
                        }
                        _ => {
                            failures += 1;
                            if failures > 20 {
                                stuck = true;
                                break;
                            }
                        }
                    }
                }
            }
        }
        Policy::WallFollow => {
            let entry = nearest_open(&pass, start_cell, map);
            match entry.and_then(|e| pass.astar(start_cell, e)) {
                None => stuck = true,
                Some(path) => {
                    let lead: Vec<(f64, f64)> = path.iter().skip(1).copied().map(to_world).collect();
                    walker.follow(&lead);
                    let from = *path.last().unwrap();
                    let heading = ((start.theta + std::f64::consts::FRAC_PI_4).rem_euclid(2.0 * std::f64::consts::PI)
                        / std::f64::consts::FRAC_PI_2) as usize;
                    let cells_needed = (length / map.resolution()).ceil() as usize + 1;
                    let cells = pass.wall_follow(from, heading, cells_needed);
                    let pts: Vec<(f64, f64)> = simplify(&cells).into_iter().skip(1).map(to_world).collect();
                    walker.follow(&pts);
                }
            }
        }
    }
    if !walker.done() {
        stuck = true;
    }

    let mut records = Vec::with_capacity(walker.poses.len());
    let mut prev: Option<Pose> = None;
    for pose in walker.poses {
        let odom = match prev {
            None => OdometryDelta::default(),
            Some(p) => cfg.odom_noise.sample(&OdometryDelta::between(&p, &pose), &mut rng),
        };
        let scan = simulate_scan(map, &pose, cfg, &mut rng)?;
        records.push(TrajectoryRecord { pose, odom, scan });
        prev = Some(pose);
    }
    Ok(Trajectory {
        records,
        truncated: stuck,
    })
}

/// Closest open cell to `from` (breadth-first over FREE cells).
fn nearest_open(pass: &Passability, from: (usize, usize), map: &OccupancyGrid) -> Option<(usize, usize)> {
    let mut seen = vec![false; map.width() * map.height()];
    let mut queue = std::collections::VecDeque::from([from]);
    seen[from.1 * map.width() + from.0] = true;
    while let Some((i, j)) = queue.pop_front() {
        if pass.is_open(i as i64, j as i64) {
            return Some((i, j));
        }
        for (di, dj) in [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)] {
            let (ni, nj) = (i as i64 + di, j as i64 + dj);
            if ni < 0 || nj < 0 || ni as usize >= map.width() || nj as usize >= map.height() {
                continue;
            }
            let (ni, nj) = (ni as usize, nj as usize);
            if !seen[nj * map.width() + ni] && map.get(ni, nj) == Cell::Free {
                seen[nj * map.width() + ni] = true;
                queue.push_back((ni, nj));
            }
        }
    }
    None
}

/// Keeps only the cells where a cell path changes direction.
fn simplify(cells: &[(usize, usize)]) -> Vec<(usize, usize)> {
    if cells.len() <= 2 {
        return cells.to_vec();
    }
    let dir = |a: (usize, usize), b: (usize, usize)| (b.0 as i64 - a.0 as i64, b.1 as i64 - a.1 as i64);
    let mut out = vec![cells[0]];
    for w in cells.windows(3) {
        if dir(w[0], w[1]) != dir(w[1], w[2]) {
            out.push(w[1]);
        }
    }
    out.push(*cells.last().unwrap());
    out
}

/// Samples poses along polylines at a fixed spacing.
struct Walker {
    poses: Vec<Pose>,
    step: f64,
    remaining: f64,
}

impl Walker {
    fn new(start: Pose, step: f64, length: f64) -> Self {
        Self {
            poses: vec![start],
            step,
            remaining: length,
        }
    }

    fn done(&self) -> bool {
        self.remaining <= 1e-9
    }

    /// Drives through `points`; returns true once the length budget is spent.
    fn follow(&mut self, points: &[(f64, f64)]) -> bool {
        for &(tx, ty) in points {
            if self.done() {
                return true;
            }
            let last = *self.poses.last().unwrap();
            let (mut x, mut y) = (last.x, last.y);
            let seg = (tx - x).hypot(ty - y);
            if seg < 1e-9 {
                continue;
            }
            let heading = (ty - y).atan2(tx - x);
            let (ux, uy) = ((tx - x) / seg, (ty - y) / seg);
            let mut left = seg;
            while left > 1e-9 && !self.done() {
                let d = self.step.min(left).min(self.remaining);
                x += ux * d;
                y += uy * d;
                left -= d;
                self.remaining -= d;
                let snapped = if left <= 1e-9 { (tx, ty) } else { (x, y) };
                self.poses.push(Pose::new(snapped.0, snapped.1, heading));
            }
        }
        self.done()
    }
}
