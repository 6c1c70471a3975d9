use serde::{Deserialize, Serialize};

use super::grid::{Cell, OccupancyGrid, Pose};
use crate::error::{Error, Result};
use crate::view_model::{uniform_bearings, RangeScan};

/// Beam layout of a planar range finder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanGeometry {
    pub beam_count: usize,
    pub fov: f64,
    pub max_range: f64,
}

impl Default for ScanGeometry {
    fn default() -> Self {
        Self {
            beam_count: 181,
            fov: std::f64::consts::PI,
            max_range: 8.0,
        }
    }
}

impl ScanGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.beam_count < 3 {
            return Err(Error::InvalidInput("beam_count must be at least 3".into()));
        }
        if !(self.fov > 0.0 && self.fov <= 2.0 * std::f64::consts::PI) {
            return Err(Error::InvalidInput(format!("fov must lie in (0, 2π], got {}", self.fov)));
        }
        if !(self.max_range.is_finite() && self.max_range > 0.0) {
            return Err(Error::InvalidInput("max_range must be positive".into()));
        }
        Ok(())
    }

    pub fn bearings(&self) -> Vec<f64> {
        uniform_bearings(self.beam_count, self.fov)
    }
}

/// Outcome of tracing one ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub range: f64,
    /// The ray crossed an UNKNOWN cell or left the grid before `range`.
    pub through_unknown: bool,
}

/// Walks the cells pierced by a ray (Amanatides–Woo traversal).
///
/// `visit(i, j, t)` receives each cell with the distance `t` at which the ray
/// enters it (0 for the start cell) and returns `false` to stop. Returns the
/// distance at which the ray left the grid, or `None` if it stopped or ran past
/// `max_range` first.
pub fn trace_ray<F>(map: &OccupancyGrid, x: f64, y: f64, angle: f64, max_range: f64, mut visit: F) -> Option<f64>
where
    F: FnMut(usize, usize, f64) -> bool,
{
    let res = map.resolution();
    let (ox, oy) = map.origin();
    let (mut i, mut j) = map.cell_of(x, y)?;
    let (dx, dy) = (angle.cos(), angle.sin());
    let (step_i, t_delta_x, mut t_max_x) = axis(x - ox, dx, i, res);
    let (step_j, t_delta_y, mut t_max_y) = axis(y - oy, dy, j, res);
    let mut t = 0.0;
    loop {
        if t > max_range || !visit(i, j, t) {
            return None;
        }
        if t_max_x < t_max_y {
            t = t_max_x;
            t_max_x += t_delta_x;
            if step_i < 0 {
                if i == 0 {
                    return exit(t, max_range);
                }
                i -= 1;
            } else {
                i += 1;
                if i == map.width() {
                    return exit(t, max_range);
                }
            }
        } else {
            t = t_max_y;
            t_max_y += t_delta_y;
            if step_j < 0 {
                if j == 0 {
                    return exit(t, max_range);
                }
                j -= 1;
            } else {
                j += 1;
                if j == map.height() {
                    return exit(t, max_range);
                }
            }
        }
    }
}

fn exit(t: f64, max_range: f64) -> Option<f64> {
    (t <= max_range).then_some(t)
}

/// Step direction, distance between boundary crossings, and distance to the first crossing.
fn axis(offset: f64, d: f64, cell: usize, res: f64) -> (i64, f64, f64) {
    if d > 0.0 {
        let boundary = (cell + 1) as f64 * res;
        (1, res / d, (boundary - offset) / d)
    } else if d < 0.0 {
        let boundary = cell as f64 * res;
        (-1, -res / d, (boundary - offset) / d)
    } else {
        (0, f64::INFINITY, f64::INFINITY)
    }
}

/// Traces one ray to the first OCCUPIED cell.
///
/// A pose already inside an obstacle reads the smallest positive range.
pub fn cast_ray(map: &OccupancyGrid, x: f64, y: f64, angle: f64, max_range: f64) -> RayHit {
    let mut hit = None;
    let mut through_unknown = false;
    let exit = trace_ray(map, x, y, angle, max_range, |i, j, t| match map.get(i, j) {
        Cell::Occupied => {
            hit = Some(t.max(f64::MIN_POSITIVE));
            false
        }
        Cell::Unknown => {
            through_unknown = true;
            true
        }
        Cell::Free => true,
    });
    match hit {
        Some(r) if r <= max_range => RayHit {
            range: r,
            through_unknown,
        },
        _ => RayHit {
            range: max_range,
            through_unknown: through_unknown || exit.is_some(),
        },
    }
}

fn check_on_grid(map: &OccupancyGrid, pose: &Pose) -> Result<()> {
    if !pose.is_finite() || map.cell_of(pose.x, pose.y).is_none() {
        return Err(Error::InvalidPose {
            x: pose.x,
            y: pose.y,
            reason: "off the grid",
        });
    }
    Ok(())
}

/// Casts every bearing from `pose`, reporting which beams crossed unknown space.
pub fn raycast_flagged(map: &OccupancyGrid, pose: &Pose, bearings: &[f64], max_range: f64) -> Result<Vec<RayHit>> {
    check_on_grid(map, pose)?;
    Ok(bearings
        .iter()
        .map(|b| cast_ray(map, pose.x, pose.y, pose.theta + b, max_range))
        .collect())
}

/// Synthetic noise-free scan: per bearing, the distance to the first OCCUPIED cell.
pub fn raycast(map: &OccupancyGrid, pose: &Pose, bearings: &[f64], max_range: f64) -> Result<RangeScan> {
    let ranges = raycast_flagged(map, pose, bearings, max_range)?
        .into_iter()
        .map(|h| h.range)
        .collect();
    RangeScan::new(bearings.to_vec(), ranges, max_range)
}
