//! Exact top-k search over image embeddings or caption embeddings.
//!
//! Scores are squared L2 distances. The ranking is the same as for plain L2
//! and the numbers reported are the squared values. Ties are broken by
//! image id, ascending.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};
use crate::features::{tokenize, FeatureVector, HashedTextFeaturizer};
use crate::joint::JointEmbeddingModel;
use crate::numerics::{squared_distance, Vector};

/// Which vectors an index matches queries against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IndexMode {
    /// One projected vector per caption; an image scores by its best caption.
    CaptionBased,
    /// One projected image vector per image.
    EmbeddingSpace,
}

impl IndexMode {
    pub fn as_str(self) -> &'static str {
        match self {
            IndexMode::CaptionBased => "caption_based",
            IndexMode::EmbeddingSpace => "embedding_space",
        }
    }
}

impl core::str::FromStr for IndexMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "caption_based" | "caption" => Ok(IndexMode::CaptionBased),
            "embedding_space" | "embedding" => Ok(IndexMode::EmbeddingSpace),
            other => Err(Error::invalid(alloc::format!("unknown index mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexRecord {
    pub image_id: String,
    /// The projected image feature, or in caption mode the centroid of the
    /// caption vectors.
    pub embedding: Vector,
    pub captions: Vec<String>,
    pub uri: Option<String>,
}

/// Raw material for one image before projection.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexInput {
    pub image_id: String,
    /// Required in embedding-space mode, ignored in caption mode.
    pub image_feature: Option<FeatureVector>,
    /// Caption text with its text feature.
    pub captions: Vec<(String, FeatureVector)>,
    pub uri: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    d: usize,
    mode: IndexMode,
    records: Vec<IndexRecord>,
    /// Parallel to `records`; empty per record in embedding mode.
    caption_vectors: Vec<Vec<Vector>>,
    by_id: BTreeMap<String, usize>,
}

impl VectorIndex {
    pub fn empty(mode: IndexMode, d: usize) -> Self {
        Self {
            d,
            mode,
            records: Vec::new(),
            caption_vectors: Vec::new(),
            by_id: BTreeMap::new(),
        }
    }

    /// Assembles an index from stored parts, checking every invariant.
    /// `caption_vectors[i]` belongs to `records[i]`.
    pub fn from_parts(
        mode: IndexMode,
        d: usize,
        records: Vec<IndexRecord>,
        caption_vectors: Vec<Vec<Vector>>,
    ) -> Result<Self> {
        if records.len() != caption_vectors.len() {
            return Err(Error::shape(
                "VectorIndex caption groups",
                records.len(),
                caption_vectors.len(),
            ));
        }
        let mut by_id = BTreeMap::new();
        for (i, (record, vectors)) in records.iter().zip(&caption_vectors).enumerate() {
            if by_id.insert(record.image_id.clone(), i).is_some() {
                return Err(Error::DuplicateId(record.image_id.clone()));
            }
            check_vector(&record.embedding, d, &record.image_id)?;
            match mode {
                IndexMode::CaptionBased => {
                    if vectors.len() != record.captions.len() {
                        return Err(Error::shape("caption vectors", record.captions.len(), vectors.len()));
                    }
                    if vectors.is_empty() {
                        return Err(Error::invalid(alloc::format!(
                            "image {:?} has no captions in caption-based index",
                            record.image_id
                        )));
                    }
                    for v in vectors {
                        check_vector(v, d, &record.image_id)?;
                    }
                }
                IndexMode::EmbeddingSpace => {
                    if !vectors.is_empty() {
                        return Err(Error::invalid("embedding-space index stores no caption vectors"));
                    }
                }
            }
        }
        Ok(Self {
            d,
            mode,
            records,
            caption_vectors,
            by_id,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn mode(&self) -> IndexMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[IndexRecord] {
        &self.records
    }

    /// Caption vectors of the `i`-th record, in caption order.
    pub fn caption_vectors(&self, i: usize) -> &[Vector] {
        &self.caption_vectors[i]
    }

    /// Total number of stored caption vectors.
    pub fn caption_vector_count(&self) -> usize {
        self.caption_vectors.iter().map(Vec::len).sum()
    }

    pub fn get(&self, image_id: &str) -> Option<&IndexRecord> {
        self.by_id.get(image_id).map(|&i| &self.records[i])
    }
}

fn check_vector(v: &Vector, d: usize, owner: &str) -> Result<()> {
    if v.dim() != d {
        return Err(Error::shape("index vector", d, v.dim()));
    }
    if !v.is_finite() {
        return Err(Error::NonFinite(alloc::format!("vector of {owner:?}")));
    }
    Ok(())
}

/// Projects every input with `model` and stores the result. Embedding mode
/// keeps `E_v(v)` per image; caption mode keeps `E_u(u)` per caption.
pub fn build_index(mode: IndexMode, model: &JointEmbeddingModel, inputs: &[IndexInput]) -> Result<VectorIndex> {
    let mut records = Vec::with_capacity(inputs.len());
    let mut caption_vectors = Vec::with_capacity(inputs.len());
    for input in inputs {
        let captions: Vec<String> = input.captions.iter().map(|(c, _)| c.clone()).collect();
        let (embedding, vectors) = match mode {
            IndexMode::EmbeddingSpace => {
                let feature = input
                    .image_feature
                    .as_ref()
                    .ok_or_else(|| Error::invalid(alloc::format!("image {:?} has no image feature", input.image_id)))?;
                (model.embed_image(feature)?, Vec::new())
            }
            IndexMode::CaptionBased => {
                let vectors = input
                    .captions
                    .iter()
                    .map(|(_, u)| model.embed_text(u))
                    .collect::<Result<Vec<_>>>()?;
                (centroid(&vectors, model.d()), vectors)
            }
        };
        records.push(IndexRecord {
            image_id: input.image_id.clone(),
            embedding,
            captions,
            uri: input.uri.clone(),
        });
        caption_vectors.push(vectors);
    }
    VectorIndex::from_parts(mode, model.d(), records, caption_vectors)
}

fn centroid(vectors: &[Vector], d: usize) -> Vector {
    let mut c = Vector::zeros(d);
    if vectors.is_empty() {
        return c;
    }
    for v in vectors {
        for (a, x) in c.as_mut_slice().iter_mut().zip(v.iter()) {
            *a += x;
        }
    }
    let n = vectors.len() as f64;
    for a in c.as_mut_slice() {
        *a /= n;
    }
    c
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hit {
    pub image_id: String,
    /// Squared L2 distance.
    pub distance: f64,
    /// The closest caption, caption mode only.
    pub best_caption: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SearchResult {
    pub ranked: Vec<Hit>,
}

/// Exact scan. Returns `min(k, len)` hits in non-decreasing distance.
pub fn search(index: &VectorIndex, query: &Vector, k: usize) -> Result<SearchResult> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if query.dim() != index.d {
        return Err(Error::shape("search query", index.d, query.dim()));
    }
    if !query.is_finite() {
        return Err(Error::NonFinite("query vector".into()));
    }
    let q = query.as_slice();
    let mut scored: Vec<(f64, usize, Option<usize>)> = match index.mode {
        IndexMode::EmbeddingSpace => index
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| (squared_distance(q, r.embedding.as_slice()), i, None))
            .collect(),
        IndexMode::CaptionBased => index
            .caption_vectors
            .iter()
            .enumerate()
            .map(|(i, vectors)| {
                let mut best = (f64::INFINITY, 0);
                for (j, v) in vectors.iter().enumerate() {
                    let dist = squared_distance(q, v.as_slice());
                    if dist < best.0 {
                        best = (dist, j);
                    }
                }
                (best.0, i, Some(best.1))
            })
            .collect(),
    };
    let by_rank = |a: &(f64, usize, Option<usize>), b: &(f64, usize, Option<usize>)| -> Ordering {
        a.0.total_cmp(&b.0)
            .then_with(|| index.records[a.1].image_id.cmp(&index.records[b.1].image_id))
    };
    let k = k.min(scored.len());
    if k < scored.len() {
        scored.select_nth_unstable_by(k, by_rank);
        scored.truncate(k);
    }
    scored.sort_unstable_by(by_rank);
    let ranked = scored
        .into_iter()
        .map(|(distance, i, caption)| {
            let record = &index.records[i];
            Hit {
                image_id: record.image_id.clone(),
                distance,
                best_caption: caption.map(|j| record.captions[j].clone()),
            }
        })
        .collect();
    Ok(SearchResult { ranked })
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryOutcome {
    pub result: SearchResult,
    /// The query text had no tokens, so the zero feature was searched.
    pub empty_query: bool,
}

/// Projects a text feature with `E_u` and searches.
pub fn query_feature(
    index: &VectorIndex,
    model: &JointEmbeddingModel,
    feature: &FeatureVector,
    k: usize,
) -> Result<SearchResult> {
    search(index, &model.embed_text(feature)?, k)
}

/// Featurizes, projects and searches. Empty text searches with `b_u`.
pub fn query_text(
    index: &VectorIndex,
    model: &JointEmbeddingModel,
    featurizer: &HashedTextFeaturizer,
    text: &str,
    k: usize,
) -> Result<QueryOutcome> {
    let empty_query = tokenize(text).is_empty();
    let result = query_feature(index, model, &featurizer.featurize(text), k)?;
    Ok(QueryOutcome { result, empty_query })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::joint::ProjectionLayer;
    use crate::numerics::Matrix;
    use alloc::string::ToString;
    use alloc::vec;

    fn input(id: &str, v: &[f64], captions: &[(&str, &[f64])]) -> IndexInput {
        IndexInput {
            image_id: id.to_string(),
            image_feature: Some(v.to_vec().into()),
            captions: captions
                .iter()
                .map(|(c, u)| (c.to_string(), u.to_vec().into()))
                .collect(),
            uri: None,
        }
    }

    fn ids(r: &SearchResult) -> Vec<&str> {
        r.ranked.iter().map(|h| h.image_id.as_str()).collect()
    }

    #[test]
    fn empty_input_empty_index() {
        let idx = build_index(IndexMode::EmbeddingSpace, &JointEmbeddingModel::identity(2), &[]).unwrap();
        assert!(idx.is_empty());
        assert!(search(&idx, &vec![0.0, 0.0].into(), 3).unwrap().ranked.is_empty());
    }

    #[test]
    fn exact_match_first_with_zero_distance() {
        let m = JointEmbeddingModel::identity(2);
        let idx = build_index(
            IndexMode::EmbeddingSpace,
            &m,
            &[input("a", &[1.0, 0.0], &[]), input("b", &[0.0, 1.0], &[])],
        )
        .unwrap();
        let r = search(&idx, &vec![0.0, 1.0].into(), 5).unwrap();
        assert_eq!(ids(&r), ["b", "a"]);
        assert_eq!(r.ranked[0].distance, 0.0);
        assert_eq!(r.ranked[1].distance, 2.0);
        assert_eq!(r.ranked[0].best_caption, None);
    }

    #[test]
    fn ties_go_to_smaller_id() {
        let m = JointEmbeddingModel::identity(1);
        let idx = build_index(
            IndexMode::EmbeddingSpace,
            &m,
            &[
                input("zeta", &[1.0], &[]),
                input("alpha", &[-1.0], &[]),
                input("mid", &[1.0], &[]),
            ],
        )
        .unwrap();
        assert_eq!(
            ids(&search(&idx, &vec![0.0].into(), 3).unwrap()),
            ["alpha", "mid", "zeta"]
        );
        assert_eq!(ids(&search(&idx, &vec![0.0].into(), 2).unwrap()), ["alpha", "mid"]);
    }

    #[test]
    fn caption_mode_counts_and_best_caption() {
        let m = JointEmbeddingModel::identity(2);
        let caps: Vec<(String, FeatureVector)> = (0..5)
            .map(|k| (alloc::format!("c{k}"), vec![k as f64, 0.0].into()))
            .collect();
        let inputs: Vec<IndexInput> = ["x", "y", "z"]
            .iter()
            .enumerate()
            .map(|(i, id)| IndexInput {
                image_id: id.to_string(),
                image_feature: None,
                captions: caps
                    .iter()
                    .map(|(c, u)| (c.clone(), vec![u[0], i as f64 * 10.0].into()))
                    .collect(),
                uri: None,
            })
            .collect();
        let idx = build_index(IndexMode::CaptionBased, &m, &inputs).unwrap();
        assert_eq!(idx.len(), 3);
        assert_eq!(idx.caption_vector_count(), 15);
        let r = search(&idx, &vec![3.2, 10.0].into(), 1).unwrap();
        assert_eq!(r.ranked[0].image_id, "y");
        assert_eq!(r.ranked[0].best_caption.as_deref(), Some("c3"));
        assert!((r.ranked[0].distance - 0.04).abs() < 1e-12);
        assert_eq!(idx.get("y").unwrap().embedding, Vector::from(vec![2.0, 10.0]));
    }

    #[test]
    fn build_rejects_bad_inputs() {
        let m = JointEmbeddingModel::identity(2);
        let dup = [input("a", &[1.0, 0.0], &[]), input("a", &[0.0, 1.0], &[])];
        assert!(matches!(
            build_index(IndexMode::EmbeddingSpace, &m, &dup),
            Err(Error::DuplicateId(_))
        ));
        assert!(build_index(IndexMode::EmbeddingSpace, &m, &[input("a", &[1.0], &[])]).is_err());
        let mut no_feature = input("a", &[1.0, 0.0], &[]);
        no_feature.image_feature = None;
        assert!(build_index(IndexMode::EmbeddingSpace, &m, &[no_feature]).is_err());
        assert!(build_index(IndexMode::CaptionBased, &m, &[input("a", &[1.0, 0.0], &[])]).is_err());
    }

    #[test]
    fn search_rejects_bad_queries() {
        let m = JointEmbeddingModel::identity(2);
        let idx = build_index(IndexMode::EmbeddingSpace, &m, &[input("a", &[1.0, 0.0], &[])]).unwrap();
        assert!(search(&idx, &vec![0.0, 0.0].into(), 0).is_err());
        assert!(search(&idx, &vec![0.0].into(), 1).is_err());
        assert!(search(&idx, &vec![f64::NAN, 0.0].into(), 1).is_err());
    }

    #[test]
    fn text_query_hits_its_own_caption() {
        let f = HashedTextFeaturizer::with_dim(64).unwrap();
        let m = JointEmbeddingModel::identity(64);
        let caption = |id: &str, text: &str| IndexInput {
            image_id: id.to_string(),
            image_feature: None,
            captions: vec![(text.to_string(), f.featurize(text))],
            uri: Some(alloc::format!("/img/{id}.jpg")),
        };
        let idx = build_index(
            IndexMode::CaptionBased,
            &m,
            &[caption("1", "a dog in the park"), caption("2", "two cats on a sofa")],
        )
        .unwrap();
        let out = query_text(&idx, &m, &f, "Two cats on a sofa.", 2).unwrap();
        assert!(!out.empty_query);
        assert_eq!(out.result.ranked[0].image_id, "2");
        assert_eq!(out.result.ranked[0].distance, 0.0);
        assert_eq!(out, query_text(&idx, &m, &f, "Two cats on a sofa.", 2).unwrap());
        let direct = search(&idx, &m.embed_text(&f.featurize("Two cats on a sofa.")).unwrap(), 2).unwrap();
        assert_eq!(out.result, direct);
    }

    #[test]
    fn empty_text_searches_with_text_bias() {
        let text = ProjectionLayer::new(Matrix::identity(2), vec![1.0, 1.0].into()).unwrap();
        let m = JointEmbeddingModel::new(ProjectionLayer::identity(2), text).unwrap();
        let f = HashedTextFeaturizer::with_dim(2).unwrap();
        let idx = build_index(
            IndexMode::EmbeddingSpace,
            &m,
            &[input("far", &[5.0, 5.0], &[]), input("bias", &[1.0, 1.0], &[])],
        )
        .unwrap();
        let out = query_text(&idx, &m, &f, "  ?! ", 1).unwrap();
        assert!(out.empty_query);
        assert_eq!(out.result.ranked[0].image_id, "bias");
        assert_eq!(out.result.ranked[0].distance, 0.0);
    }

    #[test]
    fn mode_names_round_trip() {
        for mode in [IndexMode::CaptionBased, IndexMode::EmbeddingSpace] {
            assert_eq!(mode.as_str().parse::<IndexMode>().unwrap(), mode);
        }
        assert!("other".parse::<IndexMode>().is_err());
    }
}
