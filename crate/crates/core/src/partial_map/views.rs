use std::f64::consts::TAU;
use std::sync::atomic::{AtomicU16, Ordering};

use super::{expected_view_if_known, is_inside, Cell, OccupancyGrid, Pose, ScanGeometry};
use crate::error::{Error, Result};
use crate::view_model::{ExtractionParams, ViewAlphabet, ViewId};

const EMPTY: u16 = u16::MAX;
const UNDETERMINED: u16 = u16::MAX - 1;

fn heading_bin(theta: f64, bins: usize) -> usize {
    ((theta.rem_euclid(TAU) / TAU) * bins as f64) as usize % bins
}

fn bin_center(map: &OccupancyGrid, i: usize, j: usize, bin: usize, bins: usize) -> Pose {
    let (x, y) = map.cell_center(i, j);
    Pose::new(x, y, (bin as f64 + 0.5) * TAU / bins as f64)
}

/// The pose a view table reads for `pose`: its cell center and heading-bin
/// center. `None` off the grid.
pub fn quantize_pose(map: &OccupancyGrid, pose: &Pose, heading_bins: usize) -> Option<Pose> {
    let (i, j) = map.cell_of(pose.x, pose.y)?;
    Some(bin_center(map, i, j, heading_bin(pose.theta, heading_bins), heading_bins.max(1)))
}

/// Expected views of one map, computed on demand at cell centers and
/// heading-bin centers and kept for later lookups. Safe to share between
/// threads.
#[derive(Debug)]
pub struct ViewTable {
    alphabet: ViewAlphabet,
    extraction: ExtractionParams,
    geometry: ScanGeometry,
    heading_bins: usize,
    max_unknown_fraction: f64,
    width: usize,
    height: usize,
    /// Index of each FREE cell among the FREE cells, or `u32::MAX`.
    slot: Vec<u32>,
    views: Vec<AtomicU16>,
}

impl ViewTable {
    pub fn new(
        map: &OccupancyGrid,
        alphabet: ViewAlphabet,
        extraction: ExtractionParams,
        geometry: ScanGeometry,
        heading_bins: usize,
        max_unknown_fraction: f64,
    ) -> Result<Self> {
        if heading_bins == 0 {
            return Err(Error::InvalidInput("heading bins must be positive".into()));
        }
        if !(0.0..=1.0).contains(&max_unknown_fraction) {
            return Err(Error::InvalidInput("unknown fraction must lie in [0, 1]".into()));
        }
        if alphabet.len() >= UNDETERMINED as usize {
            return Err(Error::InvalidInput("alphabet too large for a view table".into()));
        }
        geometry.validate()?;
        extraction.validate()?;
        let mut next = 0u32;
        let slot: Vec<u32> = map
            .cells()
            .iter()
            .map(|&c| {
                if c == Cell::Free {
                    next += 1;
                    next - 1
                } else {
                    u32::MAX
                }
            })
            .collect();
        let views = (0..next as usize * heading_bins).map(|_| AtomicU16::new(EMPTY)).collect();
        Ok(Self {
            alphabet,
            extraction,
            geometry,
            heading_bins,
            max_unknown_fraction,
            width: map.width(),
            height: map.height(),
            slot,
            views,
        })
    }

    pub fn alphabet(&self) -> &ViewAlphabet {
        &self.alphabet
    }

    pub fn heading_bins(&self) -> usize {
        self.heading_bins
    }

    /// Expected view at `pose`, read at the center of its cell and heading
    /// bin; `None` when unexplored space hides too much of it. `map` must be
    /// the map the table was built for.
    pub fn view(&self, map: &OccupancyGrid, pose: &Pose) -> Result<Option<ViewId>> {
        debug_assert_eq!((map.width(), map.height()), (self.width, self.height));
        let cell = map.cell_of(pose.x, pose.y).filter(|_| is_inside(map, pose));
        let Some((i, j)) = cell else {
            return Err(Error::InvalidPose {
                x: pose.x,
                y: pose.y,
                reason: "expected view needs a pose inside the map",
            });
        };
        let bin = heading_bin(pose.theta, self.heading_bins);
        let k = self.slot[j * self.width + i] as usize * self.heading_bins + bin;
        let decode = |c: u16| (c != UNDETERMINED).then(|| ViewId::new(c as usize));
        let cached = self.views[k].load(Ordering::Relaxed);
        if cached != EMPTY {
            return Ok(decode(cached));
        }
        let center = bin_center(map, i, j, bin, self.heading_bins);
        let v = expected_view_if_known(map, &center, &self.alphabet, &self.extraction, &self.geometry, self.max_unknown_fraction)?;
        let code = v.map_or(UNDETERMINED, |v| v.index() as u16);
        self.views[k].store(code, Ordering::Relaxed);
        Ok(v)
    }
}
