use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One planar laser scan in the robot frame.
///
/// Bearings are strictly increasing (counterclockwise). A reading equal to
/// `max_range` means the beam returned nothing.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeScan {
    angles: Vec<f64>,
    ranges: Vec<f64>,
    max_range: f64,
}

impl RangeScan {
    pub fn new(angles: Vec<f64>, ranges: Vec<f64>, max_range: f64) -> Result<Self> {
        if !(max_range.is_finite() && max_range > 0.0) {
            return Err(Error::InvalidInput(format!("max_range must be positive, got {max_range}")));
        }
        if angles.len() != ranges.len() {
            return Err(Error::DimensionMismatch {
                expected: angles.len(),
                actual: ranges.len(),
            });
        }
        if angles.iter().any(|a| !a.is_finite()) || angles.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("bearings must be finite and strictly increasing".into()));
        }
        if let Some(r) = ranges.iter().find(|r| !(r.is_finite() && **r > 0.0 && **r <= max_range)) {
            return Err(Error::InvalidInput(format!("range {r} outside (0, {max_range}]")));
        }
        Ok(Self {
            angles,
            ranges,
            max_range,
        })
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn ranges(&self) -> &[f64] {
        &self.ranges
    }

    pub fn max_range(&self) -> f64 {
        self.max_range
    }

    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    /// The same scan seen in a mirror: bearings negated, beam order reversed.
    pub fn mirrored(&self) -> RangeScan {
        RangeScan {
            angles: self.angles.iter().rev().map(|a| -a).collect(),
            ranges: self.ranges.iter().rev().copied().collect(),
            max_range: self.max_range,
        }
    }

    /// Replaces the ranges, keeping bearings and `max_range`.
    pub fn with_ranges(&self, ranges: Vec<f64>) -> Result<RangeScan> {
        RangeScan::new(self.angles.clone(), ranges, self.max_range)
    }
}

/// `count` bearings evenly covering `fov` radians, centered on the heading.
pub fn uniform_bearings(count: usize, fov: f64) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => {
            let full_circle = fov >= std::f64::consts::TAU - 1e-12;
            let step = if full_circle {
                fov / count as f64
            } else {
                fov / (count - 1) as f64
            };
            let start = -fov / 2.0;
            (0..count).map(|k| start + k as f64 * step).collect()
        }
    }
}

/// Scan-string letters. Ordering follows the letters' alphabetical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Symbol {
    /// Corner between two fitted line segments.
    C,
    /// Large jump between neighboring beams.
    G,
    /// Run of max-range readings.
    M,
    /// Wall: beams with smoothly varying ranges.
    W,
}

impl Symbol {
    pub fn as_char(self) -> char {
        match self {
            Symbol::C => 'c',
            Symbol::G => 'g',
            Symbol::M => 'm',
            Symbol::W => 'w',
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            'c' => Some(Symbol::C),
            'g' => Some(Symbol::G),
            'm' => Some(Symbol::M),
            'w' => Some(Symbol::W),
            _ => None,
        }
    }
}

/// Non-empty sequence of [`Symbol`]s describing one scan.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ScanString(Vec<Symbol>);

impl ScanString {
    pub fn new(symbols: Vec<Symbol>) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::InvalidInput("scan string must be non-empty".into()));
        }
        Ok(Self(symbols))
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.0
    }

    pub fn reversed(&self) -> ScanString {
        ScanString(self.0.iter().rev().copied().collect())
    }

    /// The lexicographically smaller of the string and its reversal.
    pub fn canonical(&self) -> ScanString {
        let rev = self.reversed();
        if rev < *self {
            rev
        } else {
            self.clone()
        }
    }

    pub fn is_canonical(&self) -> bool {
        self.reversed() >= *self
    }
}

/// Free-function form of [`ScanString::canonical`].
pub fn canonicalize(s: &ScanString) -> ScanString {
    s.canonical()
}

impl fmt::Display for ScanString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.0 {
            write!(f, "{}", s.as_char())?;
        }
        Ok(())
    }
}

impl FromStr for ScanString {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let symbols = s
            .chars()
            .map(|c| Symbol::from_char(c).ok_or_else(|| Error::InvalidInput(format!("unknown scan symbol '{c}'"))))
            .collect::<Result<Vec<_>>>()?;
        ScanString::new(symbols)
    }
}

impl TryFrom<String> for ScanString {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ScanString> for String {
    fn from(s: ScanString) -> Self {
        s.to_string()
    }
}
