use super::{Trajectory, WorldConfig};
use crate::partial_map::{trace_ray, Cell, OccupancyGrid};
use crate::view_model::uniform_bearings;

/// Beams cast per simulated beam when carving, so distant cells are not missed.
const SUPERSAMPLING: usize = 4;

/// The part of `map` seen along `trajectory`: every cell crossed by a
/// noise-free ray becomes FREE, every cell that stops a ray OCCUPIED, and the
/// rest stays UNKNOWN.
pub fn carve_partial_map(map: &OccupancyGrid, trajectory: &Trajectory, cfg: &WorldConfig) -> OccupancyGrid {
    let mut carved = OccupancyGrid::filled(map.resolution(), map.origin(), map.width(), map.height(), Cell::Unknown)
        .expect("dimensions copied from a valid grid");
    let bearings = uniform_bearings(cfg.beam_count * SUPERSAMPLING, cfg.fov);
    let mut marks = vec![Cell::Unknown; map.width() * map.height()];
    for pose in trajectory.poses() {
        for b in &bearings {
            trace_ray(map, pose.x, pose.y, pose.theta + b, cfg.max_range, |i, j, _| {
                let cell = map.get(i, j);
                let k = j * map.width() + i;
                if cell == Cell::Occupied {
                    marks[k] = Cell::Occupied;
                    return false;
                }
                if cell == Cell::Free {
                    marks[k] = Cell::Free;
                }
                true
            });
        }
    }
    for (k, m) in marks.into_iter().enumerate() {
        if m != Cell::Unknown {
            carved.set(k % map.width(), k / map.width(), m);
        }
    }
    carved
}
