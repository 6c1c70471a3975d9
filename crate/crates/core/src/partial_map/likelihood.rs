use serde::{Deserialize, Serialize};

use super::grid::{Cell, OccupancyGrid, Pose};
use crate::error::{Error, Result};
use crate::view_model::RangeScan;

/// Likelihood-field parameters for weighting poses inside the map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanLikelihoodParams {
    pub sigma_hit: f64,
    pub z_hit: f64,
    pub z_rand: f64,
    pub beam_stride: usize,
    pub likelihood_exponent: f64,
    /// Beam score floor for endpoints in UNKNOWN cells or off the grid.
    pub unknown_hit: f64,
}

impl Default for ScanLikelihoodParams {
    fn default() -> Self {
        Self {
            sigma_hit: 0.2,
            z_hit: 0.9,
            z_rand: 0.1,
            beam_stride: 10,
            likelihood_exponent: 0.3,
            unknown_hit: 0.5,
        }
    }
}

impl ScanLikelihoodParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_hit.is_finite() && self.sigma_hit > 0.0) {
            return Err(Error::InvalidInput("sigma_hit must be positive".into()));
        }
        if !(self.z_hit >= 0.0 && self.z_rand > 0.0 && (self.z_hit + self.z_rand - 1.0).abs() < 1e-12) {
            return Err(Error::InvalidInput("z_hit + z_rand must equal 1 with z_rand > 0".into()));
        }
        if self.beam_stride == 0 {
            return Err(Error::InvalidInput("beam_stride must be at least 1".into()));
        }
        if !(self.likelihood_exponent > 0.0 && self.likelihood_exponent <= 1.0) {
            return Err(Error::InvalidInput("likelihood_exponent must lie in (0, 1]".into()));
        }
        if !(self.unknown_hit > 0.0 && self.unknown_hit <= 1.0) {
            return Err(Error::InvalidInput("unknown_hit must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// Selects and pre-rotates the beams used for weighting.
    pub fn prepare(&self, scan: &RangeScan) -> PreparedScan {
        let endpoints = scan
            .angles()
            .iter()
            .zip(scan.ranges())
            .step_by(self.beam_stride.max(1))
            .filter(|(_, r)| **r < scan.max_range())
            .map(|(a, r)| (r * a.cos(), r * a.sin()))
            .collect();
        PreparedScan {
            endpoints,
            params: *self,
        }
    }
}

/// Beam endpoints in the robot frame, ready to be scored at many poses.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedScan {
    endpoints: Vec<(f64, f64)>,
    params: ScanLikelihoodParams,
}

impl PreparedScan {
    pub fn beams(&self) -> usize {
        self.endpoints.len()
    }

    /// Log of the tempered likelihood-field score at `pose`.
    pub fn log_likelihood(&self, map: &OccupancyGrid, pose: &Pose) -> f64 {
        let field = map.distance_field();
        let (s, c) = pose.theta.sin_cos();
        let inv = -0.5 / (self.params.sigma_hit * self.params.sigma_hit);
        let mut total = 0.0;
        for &(lx, ly) in &self.endpoints {
            let ex = pose.x + c * lx - s * ly;
            let ey = pose.y + s * lx + c * ly;
            let d = field.distance(ex, ey);
            let mut p = self.params.z_hit * (d * d * inv).exp() + self.params.z_rand;
            if map.cell_of(ex, ey).is_none_or(|(i, j)| map.get(i, j) == Cell::Unknown) {
                p = p.max(self.params.unknown_hit);
            }
            total += p.ln();
        }
        self.params.likelihood_exponent * total
    }
}

/// Likelihood-field score of `scan` taken at `pose`:
/// `(Π_k z_hit·exp(−d_k²/2σ²) + z_rand)^exponent` over every `beam_stride`-th
/// beam that returned, where `d_k` is the endpoint's distance to the nearest
/// OCCUPIED cell. Endpoints in unexplored space score at least `unknown_hit`.
pub fn scan_likelihood(map: &OccupancyGrid, pose: &Pose, scan: &RangeScan, params: &ScanLikelihoodParams) -> f64 {
    log_scan_likelihood(map, pose, scan, params).exp()
}

pub fn log_scan_likelihood(map: &OccupancyGrid, pose: &Pose, scan: &RangeScan, params: &ScanLikelihoodParams) -> f64 {
    params.prepare(scan).log_likelihood(map, pose)
}

/// Euclidean distance (meters) from every cell center to the nearest OCCUPIED cell center.
#[derive(Debug, Clone)]
pub(crate) struct DistanceField {
    resolution: f64,
    origin: (f64, f64),
    width: usize,
    height: usize,
    dist: Vec<f32>,
}

const FAR: f64 = 1e20;

impl DistanceField {
    pub(crate) fn new(map: &OccupancyGrid) -> Self {
        let (w, h) = (map.width(), map.height());
        let mut sq: Vec<f64> = map
            .cells()
            .iter()
            .map(|c| if *c == Cell::Occupied { 0.0 } else { FAR })
            .collect();
        let n = w.max(h);
        let mut f = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut v = vec![0usize; n];
        let mut z = vec![0.0; n + 1];
        for j in 0..h {
            f[..w].copy_from_slice(&sq[j * w..(j + 1) * w]);
            transform_1d(&f[..w], &mut d[..w], &mut v, &mut z);
            sq[j * w..(j + 1) * w].copy_from_slice(&d[..w]);
        }
        for i in 0..w {
            for j in 0..h {
                f[j] = sq[j * w + i];
            }
            transform_1d(&f[..h], &mut d[..h], &mut v, &mut z);
            for j in 0..h {
                sq[j * w + i] = d[j];
            }
        }
        let res = map.resolution();
        let dist = sq
            .into_iter()
            .map(|s| if s >= FAR / 2.0 { f32::INFINITY } else { (s.sqrt() * res) as f32 })
            .collect();
        Self {
            resolution: res,
            origin: map.origin(),
            width: w,
            height: h,
            dist,
        }
    }

    /// Distance from a world point to the nearest obstacle; points off the grid
    /// add their distance to the grid boundary.
    #[inline]
    pub(crate) fn distance(&self, x: f64, y: f64) -> f64 {
        let fx = (x - self.origin.0) / self.resolution;
        let fy = (y - self.origin.1) / self.resolution;
        let (w, h) = (self.width as f64, self.height as f64);
        let i = fx.floor().clamp(0.0, w - 1.0) as usize;
        let j = fy.floor().clamp(0.0, h - 1.0) as usize;
        let inner = self.dist[j * self.width + i] as f64;
        let ox = (-fx).max(fx - w).max(0.0);
        let oy = (-fy).max(fy - h).max(0.0);
        if ox == 0.0 && oy == 0.0 {
            inner
        } else {
            inner + ox.hypot(oy) * self.resolution
        }
    }
}

/// One-dimensional squared distance transform of a sampled function.
fn transform_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let qf = q as f64;
        let mut s;
        loop {
            let p = v[k] as f64;
            s = ((f[q] + qf * qf) - (f[v[k]] + p * p)) / (2.0 * (qf - p));
            // z[0] is −∞, so this never pops below the first parabola.
            if s <= z[k] {
                k -= 1;
            } else {
                break;
            }
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, out) in d.iter_mut().enumerate().take(n) {
        let qf = q as f64;
        while z[k + 1] < qf {
            k += 1;
        }
        let p = v[k] as f64;
        *out = (qf - p) * (qf - p) + f[v[k]];
    }
}
