use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partial_map::Pose;

/// One map-trajectory pair to evaluate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestPair {
    pub partial_map: PathBuf,
    pub trajectory: PathBuf,
    pub environment: String,
    /// Prior trained without this pair's environment.
    pub prior: PathBuf,
    /// Pose of the trajectory frame in the partial-map frame: `[x, y, theta]`.
    #[serde(default)]
    pub offset: [f64; 3],
    /// Full free area of the environment in square meters, if known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub environment_area: Option<f64>,
}

impl ManifestPair {
    pub fn offset_pose(&self) -> Pose {
        Pose::new(self.offset[0], self.offset[1], self.offset[2])
    }
}

/// A list of pairs, stored as TOML `[[pair]]` tables. Relative paths are
/// resolved against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(rename = "pair", default)]
    pub pairs: Vec<ManifestPair>,
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self> {
        let m: Manifest = toml::from_str(text).map_err(|e| Error::InvalidInput(format!("manifest: {e}")))?;
        if m.pairs.is_empty() {
            return Err(Error::InvalidInput("manifest lists no pairs".into()));
        }
        for p in &m.pairs {
            if !p.offset.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidInput(format!("non-finite offset for {}", p.partial_map.display())));
            }
            if p.environment.is_empty() {
                return Err(Error::InvalidInput("empty environment name".into()));
            }
        }
        Ok(m)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidInput(format!("manifest: {e}")))
    }

    /// Reads a manifest and makes its paths absolute.
    pub fn load(path: &Path) -> Result<Self> {
        let mut m = Self::parse(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in &mut m.pairs {
            for f in [&mut p.partial_map, &mut p.trajectory, &mut p.prior] {
                if f.is_relative() {
                    *f = base.join(&*f);
                }
            }
        }
        Ok(m)
    }
}
