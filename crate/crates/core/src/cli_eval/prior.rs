use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dirichlet::{map_estimate, CountMatrix, HyperMatrix, MapOptions};
use crate::error::{Error, Result};
use crate::partial_map::{OccupancyGrid, ScanGeometry};
use crate::sim_world::{make_training_data, TrainingConfig};
use crate::view_model::{ExtractionParams, ObservationModel, ViewAlphabet, ViewModel};

/// Everything the filter needs to know about environment structure, learned
/// from a set of training environments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorModel {
    pub alphabet: ViewAlphabet,
    pub alphabet_hash: String,
    pub alpha: HyperMatrix,
    pub observation: ObservationModel,
    /// Relative frequency of each view in the training data.
    pub marginals: Vec<f64>,
    pub extraction: ExtractionParams,
    pub geometry: ScanGeometry,
    /// Names of the environments the prior was trained on.
    pub environments: Vec<String>,
    /// Per-environment transition counts, for inspecting posteriors.
    pub counts: Vec<CountMatrix>,
}

impl PriorModel {
    pub fn nu(&self) -> usize {
        self.alphabet.len()
    }

    pub fn view_model(&self) -> Result<ViewModel> {
        ViewModel::new(self.alphabet.clone(), self.observation.clone(), self.extraction)
    }

    /// Checks internal consistency, including the alphabet digest.
    pub fn validate(&self) -> Result<()> {
        let hash = self.alphabet.hash();
        if hash != self.alphabet_hash {
            return Err(Error::AlphabetMismatch {
                expected: hash,
                actual: self.alphabet_hash.clone(),
            });
        }
        let nu = self.nu();
        for dim in [self.alpha.nu(), self.observation.nu(), self.marginals.len()] {
            if dim != nu {
                return Err(Error::DimensionMismatch { expected: nu, actual: dim });
            }
        }
        if let Some(c) = self.counts.iter().find(|c| c.nu() != nu) {
            return Err(Error::DimensionMismatch {
                expected: nu,
                actual: c.nu(),
            });
        }
        Ok(())
    }

    /// Posterior transition matrix of training environment `env`:
    /// column `j` is the predictive `p(· | j)` under the shared prior.
    pub fn posterior(&self, env: usize) -> Vec<f64> {
        let nu = self.nu();
        let mut out = vec![0.0; nu * nu];
        for j in 0..nu {
            for (i, p) in crate::dirichlet::predictive_column(&self.alpha, &self.counts[env], 1.0, j)
                .into_iter()
                .enumerate()
            {
                out[i * nu + j] = p;
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: PriorModel = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Simulates training runs through `maps`, fits the transition prior by MAP and
/// learns the observation model.
pub fn train_prior(maps: &[(String, OccupancyGrid)], cfg: &TrainingConfig, opts: MapOptions) -> Result<PriorModel> {
    let grids: Vec<OccupancyGrid> = maps.iter().map(|(_, g)| g.clone()).collect();
    let data = make_training_data(&grids, cfg)?;
    let nu = data.alphabet.len();
    let alpha = map_estimate(&data.dataset, &HyperMatrix::uniform(nu, 1.0)?, opts)?;
    let observation = data.observation_model(opts)?;
    Ok(PriorModel {
        alphabet_hash: data.alphabet.hash(),
        alphabet: data.alphabet,
        alpha,
        observation,
        marginals: data.marginals,
        extraction: cfg.extraction,
        geometry: cfg.world.geometry(),
        environments: maps.iter().map(|(n, _)| n.clone()).collect(),
        counts: data.dataset.environments().to_vec(),
    })
}
