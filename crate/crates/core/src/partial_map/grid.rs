use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::likelihood::DistanceField;
use crate::error::{Error, Result};

/// Wraps an angle into (−π, π].
pub fn normalize_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Planar pose in the world frame.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    /// Pose with `theta` wrapped into (−π, π].
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }

    pub fn distance(&self, other: &Pose) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Absolute heading difference in [0, π].
    pub fn angle_to(&self, other: &Pose) -> f64 {
        normalize_angle(self.theta - other.theta).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cell {
    Free,
    Occupied,
    Unknown,
}

impl Cell {
    pub fn as_char(self) -> char {
        match self {
            Cell::Free => '.',
            Cell::Occupied => '#',
            Cell::Unknown => '?',
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            '.' => Some(Cell::Free),
            '#' => Some(Cell::Occupied),
            '?' => Some(Cell::Unknown),
            _ => None,
        }
    }
}

/// Rectangular occupancy grid.
///
/// Cell `(i, j)` covers `[ox + i·res, ox + (i+1)·res) × [oy + j·res, oy + (j+1)·res)`,
/// so `origin` is the lower-left corner of cell `(0, 0)`. Text rows are written
/// top (largest `j`) first.
#[derive(Debug, Clone)]
pub struct OccupancyGrid {
    resolution: f64,
    origin: (f64, f64),
    width: usize,
    height: usize,
    cells: Vec<Cell>,
    field: OnceLock<DistanceField>,
}

impl PartialEq for OccupancyGrid {
    fn eq(&self, other: &Self) -> bool {
        self.resolution == other.resolution
            && self.origin == other.origin
            && self.width == other.width
            && self.height == other.height
            && self.cells == other.cells
    }
}

impl OccupancyGrid {
    /// `cells` is indexed `j * width + i`.
    pub fn new(resolution: f64, origin: (f64, f64), width: usize, height: usize, cells: Vec<Cell>) -> Result<Self> {
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(Error::InvalidInput(format!("resolution must be positive, got {resolution}")));
        }
        if !(origin.0.is_finite() && origin.1.is_finite()) {
            return Err(Error::InvalidInput("origin must be finite".into()));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput("grid must have at least one cell".into()));
        }
        if cells.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                actual: cells.len(),
            });
        }
        Ok(Self {
            resolution,
            origin,
            width,
            height,
            cells,
            field: OnceLock::new(),
        })
    }

    pub fn filled(resolution: f64, origin: (f64, f64), width: usize, height: usize, cell: Cell) -> Result<Self> {
        Self::new(resolution, origin, width, height, vec![cell; width * height])
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> (f64, f64) {
        self.origin
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    /// World-frame bounds `(min_x, min_y, max_x, max_y)`.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        (
            self.origin.0,
            self.origin.1,
            self.origin.0 + self.width as f64 * self.resolution,
            self.origin.1 + self.height as f64 * self.resolution,
        )
    }

    pub fn get(&self, i: usize, j: usize) -> Cell {
        self.cells[j * self.width + i]
    }

    pub fn set(&mut self, i: usize, j: usize, cell: Cell) {
        self.cells[j * self.width + i] = cell;
        self.field = OnceLock::new();
    }

    /// Cell containing a world point, if it lies on the grid.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fx = ((x - self.origin.0) / self.resolution).floor();
        let fy = ((y - self.origin.1) / self.resolution).floor();
        if fx >= 0.0 && fy >= 0.0 && fx < self.width as f64 && fy < self.height as f64 {
            Some((fx as usize, fy as usize))
        } else {
            None
        }
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.origin.0 + (i as f64 + 0.5) * self.resolution,
            self.origin.1 + (j as f64 + 0.5) * self.resolution,
        )
    }

    pub fn count(&self, cell: Cell) -> usize {
        self.cells.iter().filter(|c| **c == cell).count()
    }

    /// Indices `(i, j)` of every cell of the given kind, in row-major order.
    pub fn cells_of(&self, cell: Cell) -> Vec<(usize, usize)> {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, c)| **c == cell)
            .map(|(k, _)| (k % self.width, k / self.width))
            .collect()
    }

    pub(crate) fn distance_field(&self) -> &DistanceField {
        self.field.get_or_init(|| DistanceField::new(self))
    }

    /// Parses the text map format.
    pub fn load(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l));
        let resolution = match lines.next() {
            Some((n, l)) => header(n, l, "resolution", 1)?[0],
            None => return Err(Error::parse(1, "missing resolution header")),
        };
        let origin = match lines.next() {
            Some((n, l)) => {
                let v = header(n, l, "origin", 2)?;
                (v[0], v[1])
            }
            None => return Err(Error::parse(2, "missing origin header")),
        };
        let mut rows: Vec<Vec<Cell>> = Vec::new();
        let mut width = None;
        for (n, line) in lines {
            if line.is_empty() {
                continue;
            }
            let row = line
                .chars()
                .map(|c| Cell::from_char(c).ok_or_else(|| Error::parse(n, format!("unknown map character {c:?}"))))
                .collect::<Result<Vec<_>>>()?;
            match width {
                None => width = Some(row.len()),
                Some(w) if w != row.len() => {
                    return Err(Error::parse(n, format!("row has {} cells, expected {w}", row.len())));
                }
                _ => {}
            }
            rows.push(row);
        }
        let width = width.ok_or_else(|| Error::parse(3, "map has no rows"))?;
        let height = rows.len();
        let cells = rows.into_iter().rev().flatten().collect();
        Self::new(resolution, origin, width, height, cells).map_err(|e| Error::parse(1, e.to_string()))
    }

    /// Serializes to the text map format; `load(save(g)) == g`.
    pub fn save(&self) -> String {
        let mut out = format!(
            "resolution {}\norigin {} {}\n",
            self.resolution, self.origin.0, self.origin.1
        );
        out.reserve((self.width + 1) * self.height);
        for j in (0..self.height).rev() {
            out.extend(self.cells[j * self.width..(j + 1) * self.width].iter().map(|c| c.as_char()));
            out.push('\n');
        }
        out
    }
}

fn header(line: usize, text: &str, key: &str, arity: usize) -> Result<Vec<f64>> {
    let mut parts = text.split_whitespace();
    if parts.next() != Some(key) {
        return Err(Error::parse(line, format!("expected `{key}` header")));
    }
    let values = parts
        .map(|p| {
            f64::from_str(p)
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(line, format!("bad number {p:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if values.len() != arity {
        return Err(Error::parse(line, format!("`{key}` takes {arity} value(s)")));
    }
    Ok(values)
}

impl fmt::Display for OccupancyGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.save())
    }
}

impl FromStr for OccupancyGrid {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::load(s)
    }
}

/// True iff the pose lies on a FREE cell of the map.
pub fn is_inside(map: &OccupancyGrid, pose: &Pose) -> bool {
    matches!(map.cell_of(pose.x, pose.y), Some((i, j)) if map.get(i, j) == Cell::Free)
}
