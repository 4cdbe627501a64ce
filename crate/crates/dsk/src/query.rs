//! A loaded (model, index) pair and the JSON response shape shared by the
//! service and `dsk query --json`.

use std::path::{Path, PathBuf};

use dsk_core::features::HashedTextFeaturizer;
use dsk_core::joint::JointEmbeddingModel;
use dsk_core::retrieval::{query_text, IndexMode, QueryOutcome, VectorIndex};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats::{load_index, load_model};

/// Default n-gram order of the query featurizer.
pub const DEFAULT_NGRAM_MAX: usize = 2;

/// An immutable model and index that queries run against.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub index: VectorIndex,
    pub model: JointEmbeddingModel,
    pub featurizer: HashedTextFeaturizer,
}

impl Snapshot {
    /// Without a model, text is projected by the identity, which only makes
    /// sense when the hashed feature dimension is the index dimension.
    pub fn new(index: VectorIndex, model: Option<JointEmbeddingModel>, ngram_max: usize) -> Result<Self> {
        let model = model.unwrap_or_else(|| JointEmbeddingModel::identity(index.d()));
        if model.d() != index.d() {
            return Err(Error::Data(format!(
                "model projects to d={} but the index has d={}",
                model.d(),
                index.d()
            )));
        }
        let featurizer = HashedTextFeaturizer::new(model.text_dim(), ngram_max)?;
        Ok(Self {
            index,
            model,
            featurizer,
        })
    }

    pub fn load(index: &Path, model: Option<&Path>, ngram_max: usize) -> Result<Self> {
        let index = load_index(index)?;
        let model = model.map(load_model).transpose()?;
        Self::new(index, model, ngram_max)
    }

    pub fn query(&self, text: &str, k: usize) -> Result<QueryOutcome> {
        Ok(query_text(&self.index, &self.model, &self.featurizer, text, k)?)
    }

    pub fn response(&self, text: &str, outcome: &QueryOutcome, took_ms: f64) -> SearchResponse {
        SearchResponse {
            query: text.to_string(),
            mode: self.index.mode().as_str().to_string(),
            results: outcome
                .result
                .ranked
                .iter()
                .map(|hit| SearchHit {
                    image_id: hit.image_id.clone(),
                    distance: hit.distance,
                    best_caption: hit.best_caption.clone(),
                    uri: self.index.get(&hit.image_id).and_then(|r| r.uri.clone()),
                })
                .collect(),
            took_ms,
        }
    }
}

/// Paths a snapshot is (re)loaded from. With no index path the snapshot
/// holds an empty index.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSource {
    pub index: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub ngram_max: usize,
}

impl SnapshotSource {
    pub fn load(&self) -> Result<Snapshot> {
        match &self.index {
            Some(index) => Snapshot::load(index, self.model.as_deref(), self.ngram_max),
            None => {
                let model = self.model.as_deref().map(load_model).transpose()?;
                let d = model.as_ref().map_or(1, JointEmbeddingModel::d);
                Snapshot::new(VectorIndex::empty(IndexMode::EmbeddingSpace, d), model, self.ngram_max)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub image_id: String,
    /// Squared L2 distance.
    pub distance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_caption: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uri: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub query: String,
    pub mode: String,
    pub results: Vec<SearchHit>,
    pub took_ms: f64,
}
