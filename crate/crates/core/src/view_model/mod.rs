//! Discrete views extracted from range scans and the learned observation model.

mod alphabet;
mod extract;
mod observation;
mod scan;

pub use alphabet::{alphabet_build, ViewAlphabet, ViewId, OTHER_LABEL};
pub use extract::{extract_scan_string, ExtractionParams};
pub use observation::{
    confusion_counts, learn_observation_model, observation_likelihood, observation_model_from_counts,
    ObservationModel,
};
pub use scan::{canonicalize, uniform_bearings, RangeScan, ScanString, Symbol};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Alphabet, observation model and extractor settings that belong together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewModel {
    pub alphabet: ViewAlphabet,
    pub observation: ObservationModel,
    pub extraction: ExtractionParams,
}

impl ViewModel {
    pub fn new(alphabet: ViewAlphabet, observation: ObservationModel, extraction: ExtractionParams) -> Result<Self> {
        if alphabet.len() != observation.nu() {
            return Err(Error::DimensionMismatch {
                expected: alphabet.len(),
                actual: observation.nu(),
            });
        }
        Ok(Self {
            alphabet,
            observation,
            extraction,
        })
    }

    pub fn nu(&self) -> usize {
        self.alphabet.len()
    }

    /// Scan → scan string → view.
    pub fn view_of_scan(&self, scan: &RangeScan) -> Result<ViewId> {
        let s = extract_scan_string(scan, &self.extraction)?;
        Ok(self.alphabet.view_of(&s))
    }
}
