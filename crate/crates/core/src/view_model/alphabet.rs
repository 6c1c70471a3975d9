use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::scan::ScanString;
use crate::error::{Error, Result};

/// Index of a discrete view in its [`ViewAlphabet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ViewId(usize);

impl ViewId {
    pub const fn new(index: usize) -> Self {
        Self(index)
    }

    pub const fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for ViewId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Label written for the catch-all view in files and tables.
pub const OTHER_LABEL: &str = "OTHER";

/// Ordered canonical scan strings plus a trailing catch-all view.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct ViewAlphabet {
    entries: Vec<ScanString>,
    lookup: HashMap<ScanString, usize>,
}

impl ViewAlphabet {
    /// Alphabet from already-ranked canonical strings (OTHER is appended).
    pub fn from_entries(entries: Vec<ScanString>) -> Result<Self> {
        let mut lookup = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if !e.is_canonical() {
                return Err(Error::InvalidInput(format!("alphabet entry {e} is not canonical")));
            }
            if lookup.insert(e.clone(), i).is_some() {
                return Err(Error::InvalidInput(format!("duplicate alphabet entry {e}")));
            }
        }
        if entries.is_empty() {
            return Err(Error::InvalidInput("alphabet needs at least one view besides OTHER".into()));
        }
        Ok(Self { entries, lookup })
    }

    /// Number of views ν, including OTHER.
    pub fn len(&self) -> usize {
        self.entries.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn other(&self) -> ViewId {
        ViewId(self.entries.len())
    }

    pub fn entries(&self) -> &[ScanString] {
        &self.entries
    }

    /// Canonical string of a view, `None` for OTHER.
    pub fn string_of(&self, id: ViewId) -> Option<&ScanString> {
        self.entries.get(id.index())
    }

    pub fn label(&self, id: ViewId) -> String {
        match self.string_of(id) {
            Some(s) => s.to_string(),
            None => OTHER_LABEL.to_string(),
        }
    }

    /// View of a (not necessarily canonical) scan string; unseen strings map to OTHER.
    pub fn view_of(&self, s: &ScanString) -> ViewId {
        match self.lookup.get(&s.canonical()) {
            Some(&i) => ViewId(i),
            None => self.other(),
        }
    }

    /// Short digest identifying this alphabet, used to pair models with priors.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for e in &self.entries {
            h.update(e.to_string().as_bytes());
            h.update(b"\n");
        }
        h.update(OTHER_LABEL.as_bytes());
        let digest = h.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl TryFrom<Vec<String>> for ViewAlphabet {
    type Error = Error;
    fn try_from(labels: Vec<String>) -> Result<Self> {
        let (last, rest) = labels
            .split_last()
            .ok_or_else(|| Error::InvalidInput("empty alphabet".into()))?;
        if last != OTHER_LABEL {
            return Err(Error::InvalidInput("alphabet must end with OTHER".into()));
        }
        let entries = rest.iter().map(|s| s.parse()).collect::<Result<Vec<ScanString>>>()?;
        ViewAlphabet::from_entries(entries)
    }
}

impl From<ViewAlphabet> for Vec<String> {
    fn from(a: ViewAlphabet) -> Self {
        a.entries
            .iter()
            .map(|e| e.to_string())
            .chain(std::iter::once(OTHER_LABEL.to_string()))
            .collect()
    }
}

/// Builds an alphabet from observed strings: canonical forms ranked by
/// frequency (ties lexicographic), keeping at most `max_views - 1` plus OTHER.
pub fn alphabet_build<'a, I>(strings: I, max_views: usize) -> Result<ViewAlphabet>
where
    I: IntoIterator<Item = &'a ScanString>,
{
    if max_views < 2 {
        return Err(Error::InvalidInput("max_views must be at least 2".into()));
    }
    let mut counts: BTreeMap<ScanString, usize> = BTreeMap::new();
    for s in strings {
        *counts.entry(s.canonical()).or_default() += 1;
    }
    if counts.is_empty() {
        return Err(Error::InvalidInput("cannot build an alphabet from no strings".into()));
    }
    let mut ranked: Vec<(ScanString, usize)> = counts.into_iter().collect();
    // BTreeMap order is lexicographic; a stable sort keeps it among equal counts.
    ranked.sort_by(|a, b| b.1.cmp(&a.1));
    let entries = ranked
        .into_iter()
        .take(max_views - 1)
        .map(|(s, _)| s)
        .collect();
    ViewAlphabet::from_entries(entries)
}
