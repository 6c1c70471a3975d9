use serde::{Deserialize, Serialize};

use super::alphabet::ViewId;
use crate::dirichlet::{self, CountMatrix, HyperMatrix, MapOptions, TrainingDataset};
use crate::error::{Error, Result};

/// Column-stochastic confusion matrix: entry `(z, v)` is `p(z | v)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawObservation", into = "RawObservation")]
pub struct ObservationModel {
    nu: usize,
    matrix: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawObservation {
    nu: usize,
    matrix: Vec<f64>,
}

impl TryFrom<RawObservation> for ObservationModel {
    type Error = Error;
    fn try_from(raw: RawObservation) -> Result<Self> {
        ObservationModel::from_row_major(raw.nu, raw.matrix)
    }
}

impl From<ObservationModel> for RawObservation {
    fn from(m: ObservationModel) -> Self {
        RawObservation {
            nu: m.nu,
            matrix: m.matrix,
        }
    }
}

impl ObservationModel {
    /// Noise-free sensor: every view is observed as itself.
    pub fn identity(nu: usize) -> Self {
        let mut matrix = vec![0.0; nu * nu];
        for v in 0..nu {
            matrix[v * nu + v] = 1.0;
        }
        Self { nu, matrix }
    }

    /// Row-major `matrix[z * nu + v]`; every column must sum to one.
    pub fn from_row_major(nu: usize, matrix: Vec<f64>) -> Result<Self> {
        if nu == 0 || matrix.len() != nu * nu {
            return Err(Error::DimensionMismatch {
                expected: nu * nu,
                actual: matrix.len(),
            });
        }
        if matrix.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidInput("observation probabilities must be finite and non-negative".into()));
        }
        for v in 0..nu {
            let sum: f64 = (0..nu).map(|z| matrix[z * nu + v]).sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!("observation column {v} sums to {sum}")));
            }
        }
        Ok(Self { nu, matrix })
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    pub fn row_major(&self) -> &[f64] {
        &self.matrix
    }

    /// `p(z | v)` without bounds checking beyond the slice index.
    #[inline]
    pub fn prob(&self, z: usize, v: usize) -> f64 {
        self.matrix[z * self.nu + v]
    }

    /// The view most likely to have produced `z` (ties go to the lowest index).
    pub fn most_likely_view(&self, z: ViewId) -> ViewId {
        let row = &self.matrix[z.index() * self.nu..(z.index() + 1) * self.nu];
        let mut best = 0;
        for (v, p) in row.iter().enumerate() {
            if *p > row[best] {
                best = v;
            }
        }
        ViewId::new(best)
    }
}

/// `p(z | v)` with index validation.
pub fn observation_likelihood(model: &ObservationModel, z: ViewId, v: ViewId) -> Result<f64> {
    for id in [z, v] {
        if id.index() >= model.nu {
            return Err(Error::IndexOutOfRange {
                index: id.index(),
                size: model.nu,
            });
        }
    }
    Ok(model.prob(z.index(), v.index()))
}

/// Smoothed confusion model: column `v` is the Dirichlet predictive of the
/// observed views given true view `v`, under the prior column `prior[·][v]`.
///
/// `confusion` records transitions `true view → observed view`.
pub fn observation_model_from_counts(prior: &HyperMatrix, confusion: &CountMatrix) -> Result<ObservationModel> {
    let nu = prior.nu();
    if confusion.nu() != nu {
        return Err(Error::DimensionMismatch {
            expected: nu,
            actual: confusion.nu(),
        });
    }
    let mut matrix = vec![0.0; nu * nu];
    for v in 0..nu {
        let col = dirichlet::predictive_column(prior, confusion, 1.0, v);
        let sum: f64 = col.iter().sum();
        for (z, p) in col.into_iter().enumerate() {
            matrix[z * nu + v] = p / sum;
        }
    }
    ObservationModel::from_row_major(nu, matrix)
}

/// Per-environment confusion counts from `(true, observed)` view pairs.
pub fn confusion_counts(nu: usize, labeled: &[(ViewId, ViewId)]) -> Result<CountMatrix> {
    let mut counts = CountMatrix::zeros(nu);
    for &(truth, seen) in labeled {
        for id in [truth, seen] {
            if id.index() >= nu {
                return Err(Error::IndexOutOfRange {
                    index: id.index(),
                    size: nu,
                });
            }
        }
        counts.increment(truth, seen);
    }
    Ok(counts)
}

/// Learns the observation model the same way transition priors are learned:
/// a MAP Dirichlet prior is fitted to the per-environment confusion counts
/// and then smooths the pooled counts.
pub fn learn_observation_model(
    nu: usize,
    labeled: &[Vec<(ViewId, ViewId)>],
    opts: MapOptions,
) -> Result<(ObservationModel, HyperMatrix)> {
    if labeled.is_empty() || labeled.iter().any(|env| env.is_empty()) {
        return Err(Error::InvalidInput("every environment needs labeled views".into()));
    }
    let envs = labeled
        .iter()
        .map(|env| confusion_counts(nu, env))
        .collect::<Result<Vec<_>>>()?;
    let data = TrainingDataset::new(envs)?;
    let prior = dirichlet::map_estimate(&data, &HyperMatrix::uniform(nu, 1.0)?, opts)?;
    let model = observation_model_from_counts(&prior, &data.pooled())?;
    Ok((model, prior))
}
