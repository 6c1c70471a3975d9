//! Beam grouping that turns a range scan into a scan string.
//!
//! Beams are processed counterclockwise. Max-range readings form `m` groups;
//! the remaining returns are split wherever neighboring ranges jump by more
//! than the gap threshold (`g`). Each return group is fitted with line
//! segments and a `c` is emitted wherever consecutive segments meet in a
//! recessed corner sharper than the corner threshold; the segments
//! themselves read as `w`. Protruding edges (door frames seen at an angle)
//! do not produce a letter.
//!
//! Groups with fewer than `min_group_beams` beams are dropped before the
//! final grouping, so isolated dropouts and slivers do not produce letters.
//! A return group that lies entirely behind both of its neighbors (what is
//! seen through a doorway) is folded into the single gap it sits in.

use serde::{Deserialize, Serialize};

use super::scan::{RangeScan, ScanString, Symbol};
use crate::error::{Error, Result};

/// Thresholds of the view extractor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractionParams {
    /// Range jump between neighboring returns that counts as a gap (m).
    pub gap_threshold: f64,
    /// Readings within this distance of the sensor maximum count as no return (m).
    pub max_range_margin: f64,
    /// Bend between fitted segments that counts as a corner (rad).
    pub corner_angle_threshold: f64,
    /// Maximum point-to-segment deviation before a segment is split (m).
    pub line_fit_tolerance: f64,
    /// Groups with fewer beams are merged into their neighbors.
    pub min_group_beams: usize,
    /// Smallest wall incidence angle still treated as continuous surface (rad).
    /// Widens the gap test for walls seen at grazing angles.
    pub grazing_angle: f64,
}

impl Default for ExtractionParams {
    fn default() -> Self {
        Self {
            gap_threshold: 1.0,
            max_range_margin: 0.2,
            corner_angle_threshold: 0.6,
            line_fit_tolerance: 0.1,
            min_group_beams: 4,
            grazing_angle: 0.1,
        }
    }
}

impl ExtractionParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.gap_threshold,
            self.max_range_margin,
            self.corner_angle_threshold,
            self.line_fit_tolerance,
            self.grazing_angle,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) || self.min_group_beams == 0 {
            return Err(Error::InvalidInput("extraction parameters must be strictly positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RunKind {
    Max,
    Return,
}

#[derive(Debug, Clone)]
struct Run {
    kind: RunKind,
    beams: Vec<usize>,
}

/// Converts a scan into its scan string.
pub fn extract_scan_string(scan: &RangeScan, params: &ExtractionParams) -> Result<ScanString> {
    params.validate()?;
    if scan.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "scan needs at least 3 beams, got {}",
            scan.len()
        )));
    }
    let ranges = scan.ranges();
    let angles = scan.angles();
    let is_max: Vec<bool> = ranges
        .iter()
        .map(|r| *r >= scan.max_range() - params.max_range_margin)
        .collect();

    let mut active = vec![true; scan.len()];
    let runs = loop {
        let runs = segment(angles, ranges, &is_max, &active, params);
        let tiny: Vec<&Run> = runs
            .iter()
            .filter(|r| r.beams.len() < params.min_group_beams)
            .collect();
        if tiny.is_empty() || tiny.len() == runs.len() {
            break runs;
        }
        for run in tiny {
            for &b in &run.beams {
                active[b] = false;
            }
        }
    };

    let recess = mark_recesses(&runs, ranges);
    let mut symbols = Vec::new();
    let mut prev_return = false;
    for (run, hidden) in runs.iter().zip(&recess) {
        if *hidden {
            continue;
        }
        match run.kind {
            RunKind::Max => {
                symbols.push(Symbol::M);
                prev_return = false;
            }
            RunKind::Return => {
                if prev_return {
                    symbols.push(Symbol::G);
                }
                symbols.extend(wall_symbols(&run.beams, angles, ranges, params));
                prev_return = true;
            }
        }
    }
    symbols.dedup();
    ScanString::new(symbols)
}

/// Whether two returns are separated by a gap.
fn is_break(angles: &[f64], ranges: &[f64], a: usize, b: usize, params: &ExtractionParams) -> bool {
    let jump = (ranges[a] - ranges[b]).abs();
    let dphi = (angles[b] - angles[a]).abs();
    let mut threshold = params.gap_threshold;
    if dphi < params.grazing_angle {
        // Largest jump a wall at the grazing angle could produce.
        let grazing = ranges[a].min(ranges[b]) * dphi.sin() / (params.grazing_angle - dphi).sin();
        threshold = threshold.max(grazing);
    }
    jump >= threshold
}

fn segment(
    angles: &[f64],
    ranges: &[f64],
    is_max: &[bool],
    active: &[bool],
    params: &ExtractionParams,
) -> Vec<Run> {
    let mut runs: Vec<Run> = Vec::new();
    let mut last: Option<usize> = None;
    for k in (0..ranges.len()).filter(|&k| active[k]) {
        let kind = if is_max[k] { RunKind::Max } else { RunKind::Return };
        let continues = match (last, runs.last()) {
            (Some(prev), Some(run)) if run.kind == kind => {
                kind == RunKind::Max || !is_break(angles, ranges, prev, k, params)
            }
            _ => false,
        };
        if continues {
            runs.last_mut().expect("checked").beams.push(k);
        } else {
            runs.push(Run {
                kind,
                beams: vec![k],
            });
        }
        last = Some(k);
    }
    runs
}

/// Return groups lying behind both gap-separated return neighbors.
fn mark_recesses(runs: &[Run], ranges: &[f64]) -> Vec<bool> {
    let mut hidden = vec![false; runs.len()];
    for i in 1..runs.len().saturating_sub(1) {
        let (a, b, c) = (&runs[i - 1], &runs[i], &runs[i + 1]);
        if a.kind != RunKind::Return || b.kind != RunKind::Return || c.kind != RunKind::Return {
            continue;
        }
        let nearest = b
            .beams
            .iter()
            .map(|&k| ranges[k])
            .fold(f64::INFINITY, f64::min);
        let left_edge = ranges[*a.beams.last().expect("runs are non-empty")];
        let right_edge = ranges[c.beams[0]];
        if nearest > left_edge && nearest > right_edge {
            hidden[i] = true;
        }
    }
    hidden
}

/// `w` segments of one return group with `c` at every sharp bend.
fn wall_symbols(beams: &[usize], angles: &[f64], ranges: &[f64], params: &ExtractionParams) -> Vec<Symbol> {
    let points: Vec<(f64, f64)> = beams
        .iter()
        .map(|&k| (ranges[k] * angles[k].cos(), ranges[k] * angles[k].sin()))
        .collect();
    let mut breaks = Vec::new();
    split(&points, 0, points.len() - 1, params, &mut breaks);
    breaks.sort_unstable();

    let mut bounds = vec![0];
    bounds.extend(&breaks);
    bounds.push(points.len() - 1);
    let directions: Vec<(f64, f64)> = bounds
        .windows(2)
        .map(|w| fit_direction(&points[w[0]..=w[1]]))
        .collect();

    let mut out = vec![Symbol::W];
    for (k, pair) in directions.windows(2).enumerate() {
        let cos = (pair[0].0 * pair[1].0 + pair[0].1 * pair[1].1).abs().min(1.0);
        let corner = points[bounds[k + 1]];
        if cos.acos() > params.corner_angle_threshold
            && is_concave(points[bounds[k]], corner, points[bounds[k + 2]])
        {
            out.push(Symbol::C);
            out.push(Symbol::W);
        }
    }
    out
}

/// Whether `corner` lies behind the chord `a`–`b` as seen from the sensor,
/// i.e. the bend is a recessed corner rather than a protruding edge.
fn is_concave(a: (f64, f64), corner: (f64, f64), b: (f64, f64)) -> bool {
    let cross = |p: (f64, f64), q: (f64, f64)| p.0 * q.1 - p.1 * q.0;
    let dist = corner.0.hypot(corner.1);
    if dist == 0.0 {
        return false;
    }
    let u = (corner.0 / dist, corner.1 / dist);
    let d = (b.0 - a.0, b.1 - a.1);
    let den = cross(d, u);
    if den.abs() < 1e-12 {
        return false;
    }
    let t = cross(d, a) / den;
    t > 0.0 && dist > t
}

/// Recursive split of `points[lo..=hi]` at the point farthest from the chord.
/// Both halves keep at least `min_group_beams` points.
fn split(points: &[(f64, f64)], lo: usize, hi: usize, params: &ExtractionParams, breaks: &mut Vec<usize>) {
    let min = params.min_group_beams.max(2);
    if hi - lo + 1 < 2 * min - 1 {
        return;
    }
    let (x0, y0) = points[lo];
    let (x1, y1) = points[hi];
    let (dx, dy) = (x1 - x0, y1 - y0);
    let len = dx.hypot(dy);
    let mid = (lo + hi) as f64 / 2.0;
    let mut best: Option<(usize, f64)> = None;
    for k in (lo + min - 1)..=(hi + 1 - min) {
        let (px, py) = points[k];
        let d = if len > 0.0 {
            ((px - x0) * dy - (py - y0) * dx).abs() / len
        } else {
            (px - x0).hypot(py - y0)
        };
        let better = match best {
            None => true,
            Some((bk, bd)) => d > bd || (d == bd && (k as f64 - mid).abs() < (bk as f64 - mid).abs()),
        };
        if better {
            best = Some((k, d));
        }
    }
    if let Some((k, d)) = best {
        if d > params.line_fit_tolerance {
            split(points, lo, k, params, breaks);
            breaks.push(k);
            split(points, k, hi, params, breaks);
        }
    }
}

/// Unit direction of the total-least-squares line through `points`.
fn fit_direction(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let (mx, my) = points
        .iter()
        .fold((0.0, 0.0), |(sx, sy), (x, y)| (sx + x / n, sy + y / n));
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (x, y) in points {
        let (u, v) = (x - mx, y - my);
        sxx += u * u;
        syy += v * v;
        sxy += u * v;
    }
    let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    (theta.cos(), theta.sin())
}
