//! Occupancy-grid partial maps: membership, ray casting, expected views and
//! scan likelihoods for poses inside the map.

mod grid;
mod likelihood;
mod raycast;
mod views;

pub use grid::{is_inside, normalize_angle, Cell, OccupancyGrid, Pose};
pub use likelihood::{log_scan_likelihood, scan_likelihood, PreparedScan, ScanLikelihoodParams};
pub use raycast::{cast_ray, raycast, raycast_flagged, trace_ray, RayHit, ScanGeometry};
pub use views::{quantize_pose, ViewTable};

use crate::error::{Error, Result};
use crate::view_model::{extract_scan_string, ExtractionParams, RangeScan, ScanString, ViewAlphabet, ViewId};

/// The view the map predicts at `pose`: beams that crossed unexplored space
/// read as max range.
pub fn expected_view(
    map: &OccupancyGrid,
    pose: &Pose,
    alphabet: &ViewAlphabet,
    params: &ExtractionParams,
    geometry: &ScanGeometry,
) -> Result<ViewId> {
    Ok(expected_view_if_known(map, pose, alphabet, params, geometry, 1.0)?.expect("every view is known at fraction 1"))
}

/// Like [`expected_view`], but `None` when more than `max_unknown_fraction`
/// of the beams crossed unexplored space, so the map does not determine the view.
pub fn expected_view_if_known(
    map: &OccupancyGrid,
    pose: &Pose,
    alphabet: &ViewAlphabet,
    params: &ExtractionParams,
    geometry: &ScanGeometry,
    max_unknown_fraction: f64,
) -> Result<Option<ViewId>> {
    Ok(expected_string(map, pose, params, geometry, max_unknown_fraction)?.map(|s| alphabet.view_of(&s)))
}

/// The canonical scan string behind [`expected_view_if_known`].
pub fn expected_string(
    map: &OccupancyGrid,
    pose: &Pose,
    params: &ExtractionParams,
    geometry: &ScanGeometry,
    max_unknown_fraction: f64,
) -> Result<Option<ScanString>> {
    if !is_inside(map, pose) {
        return Err(Error::InvalidPose {
            x: pose.x,
            y: pose.y,
            reason: "expected view needs a pose inside the map",
        });
    }
    let bearings = geometry.bearings();
    let hits = raycast_flagged(map, pose, &bearings, geometry.max_range)?;
    let unknown = hits.iter().filter(|h| h.through_unknown).count();
    if unknown as f64 > max_unknown_fraction * hits.len() as f64 {
        return Ok(None);
    }
    let ranges = hits
        .into_iter()
        .map(|h| if h.through_unknown { geometry.max_range } else { h.range })
        .collect();
    let scan = RangeScan::new(bearings, ranges, geometry.max_range)?;
    Ok(Some(extract_scan_string(&scan, params)?))
}
