use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub input_sentences: usize,
    pub output_sentences: usize,
    pub modified: usize,
    pub discarded: usize,
}

/// Record of one corpus-transforming operation.
///
/// Corpora carry the list of these as their provenance, and the list is
/// written next to the corpus file as `<stem>.manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionManifest {
    pub operation: String,
    #[serde(default)]
    pub parameters: serde_json::Value,
    #[serde(default)]
    pub counts: Counts,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Derived ratios such as growth or removal percentage.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metrics: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub chunks: Vec<ChunkOutcome>,
}

impl InterventionManifest {
    pub fn new(operation: impl Into<String>, parameters: serde_json::Value) -> Self {
        Self {
            operation: operation.into(),
            parameters,
            counts: Counts::default(),
            seed: None,
            metrics: BTreeMap::new(),
            chunks: Vec::new(),
        }
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }
}

/// Per-chunk result of perturbation augmentation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkOutcome {
    pub doc_id: u64,
    pub start: usize,
    pub attempts: usize,
    /// `(category, subcategory)` of the request that changed the chunk.
    pub changed: Option<(String, String)>,
}
