#![allow(dead_code)]

use revisit::partial_map::{raycast, OccupancyGrid, Pose};
use revisit::sim_world::WorldConfig;
use revisit::view_model::{alphabet_build, extract_scan_string, uniform_bearings, ExtractionParams, ObservationModel, ScanString, ViewModel};

/// View model whose alphabet holds the views seen from `poses` and whose
/// observation model reports the true view with probability `hit`.
pub fn view_model_from_poses(map: &OccupancyGrid, poses: &[Pose], hit: f64) -> ViewModel {
    let geometry = WorldConfig::default().geometry();
    let bearings = uniform_bearings(geometry.beam_count, geometry.fov);
    let extraction = ExtractionParams::default();
    let strings: Vec<ScanString> = poses
        .iter()
        .map(|p| extract_scan_string(&raycast(map, p, &bearings, geometry.max_range).unwrap(), &extraction).unwrap())
        .collect();
    let alphabet = alphabet_build(&strings, 12).unwrap();
    let nu = alphabet.len();
    let off = (1.0 - hit) / (nu - 1) as f64;
    let matrix = (0..nu * nu).map(|k| if k / nu == k % nu { hit } else { off }).collect();
    ViewModel::new(alphabet, ObservationModel::from_row_major(nu, matrix).unwrap(), extraction).unwrap()
}

pub fn fixture(name: &str) -> OccupancyGrid {
    revisit::cli_eval::fixture_maps()
        .into_iter()
        .find(|(n, _)| n == name)
        .map(|(_, m)| m)
        .expect("bundled map")
}
