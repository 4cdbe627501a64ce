//! Joins between feature files and caption datasets.

use std::collections::HashMap;

use dsk_core::features::{FeatureVector, HashedTextFeaturizer};
use dsk_core::joint::PairDataset;
use dsk_core::retrieval::IndexInput;

use crate::error::{Error, Result};
use crate::formats::{caption_feature_id, CaptionEntry, FeatureSet};

/// Where caption features come from.
pub enum CaptionFeatures<'a> {
    /// Featurize caption text with the hashed featurizer.
    Hashed(&'a HashedTextFeaturizer),
    /// Precomputed vectors keyed `<image id>#<k>`.
    External(&'a FeatureSet),
}

impl CaptionFeatures<'_> {
    pub fn dim(&self) -> usize {
        match self {
            CaptionFeatures::Hashed(f) => f.dim(),
            CaptionFeatures::External(set) => set.dim,
        }
    }
}

const SHOWN_IDS: usize = 20;

fn list_ids(what: &str, ids: &[String]) -> Error {
    let shown: Vec<&str> = ids.iter().take(SHOWN_IDS).map(String::as_str).collect();
    let more = if ids.len() > SHOWN_IDS {
        format!(" and {} more", ids.len() - SHOWN_IDS)
    } else {
        String::new()
    };
    Error::Data(format!("{} {what}: {}{more}", ids.len(), shown.join(", ")))
}

/// Feature vectors for every caption of every entry, in entry order.
pub fn caption_vectors(entries: &[CaptionEntry], source: &CaptionFeatures<'_>) -> Result<Vec<Vec<FeatureVector>>> {
    match source {
        CaptionFeatures::Hashed(f) => Ok(entries
            .iter()
            .map(|e| e.captions.iter().map(|c| f.featurize(c)).collect())
            .collect()),
        CaptionFeatures::External(set) => {
            let by_id = set.to_map();
            let mut missing = Vec::new();
            let mut out = Vec::with_capacity(entries.len());
            for e in entries {
                let mut vectors = Vec::with_capacity(e.captions.len());
                for k in 0..e.captions.len() {
                    let key = caption_feature_id(&e.id, k);
                    match by_id.get(key.as_str()) {
                        Some(v) => vectors.push((*v).clone()),
                        None => missing.push(key),
                    }
                }
                out.push(vectors);
            }
            if !missing.is_empty() {
                return Err(list_ids("captions without a caption feature", &missing));
            }
            Ok(out)
        }
    }
}

/// One (image feature, caption feature) pair per caption.
pub fn training_pairs(
    images: &FeatureSet,
    entries: &[CaptionEntry],
    caption_vectors: &[Vec<FeatureVector>],
) -> Result<PairDataset> {
    let by_id = images.to_map();
    let missing: Vec<String> = entries
        .iter()
        .filter(|e| !e.captions.is_empty() && !by_id.contains_key(e.id.as_str()))
        .map(|e| e.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(list_ids("caption ids without an image feature", &missing));
    }
    let mut image_features = Vec::new();
    let mut text_features = Vec::new();
    for (e, vectors) in entries.iter().zip(caption_vectors) {
        for u in vectors {
            image_features.push(by_id[e.id.as_str()].clone());
            text_features.push(u.clone());
        }
    }
    if image_features.is_empty() {
        return Err(Error::Data("no training pairs".into()));
    }
    Ok(PairDataset::new(image_features, text_features)?)
}

/// Caption-based index inputs: one image per caption entry.
pub fn caption_index_inputs(entries: &[CaptionEntry], caption_vectors: Vec<Vec<FeatureVector>>) -> Vec<IndexInput> {
    entries
        .iter()
        .zip(caption_vectors)
        .map(|(e, vectors)| IndexInput {
            image_id: e.id.clone(),
            image_feature: None,
            captions: e.captions.iter().cloned().zip(vectors).collect(),
            uri: e.uri.clone(),
        })
        .collect()
}

/// Embedding-space index inputs: one image per image feature, with
/// captions and uri attached when the dataset has them.
pub fn embedding_index_inputs(images: &FeatureSet, entries: &[CaptionEntry]) -> Result<Vec<IndexInput>> {
    let by_id = images.to_map();
    let unknown: Vec<String> = entries
        .iter()
        .filter(|e| !by_id.contains_key(e.id.as_str()))
        .map(|e| e.id.clone())
        .collect();
    if !unknown.is_empty() {
        return Err(list_ids("caption ids without an image feature", &unknown));
    }
    let meta: HashMap<&str, &CaptionEntry> = entries.iter().map(|e| (e.id.as_str(), e)).collect();
    Ok(images
        .records
        .iter()
        .map(|(id, v)| {
            let entry = meta.get(id.as_str());
            IndexInput {
                image_id: id.clone(),
                image_feature: Some(v.clone()),
                // Caption vectors are unused in this mode.
                captions: entry
                    .map(|e| {
                        e.captions
                            .iter()
                            .map(|c| (c.clone(), FeatureVector::zeros(0)))
                            .collect()
                    })
                    .unwrap_or_default(),
                uri: entry.and_then(|e| e.uri.clone()),
            }
        })
        .collect())
}
