//! Ranked-retrieval metrics over binary relevance judgments.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Relevant image ids per query id.
pub type RelevanceJudgments = BTreeMap<String, BTreeSet<String>>;

/// Ranked image ids per query id, best first.
pub type RunFile = BTreeMap<String, Vec<String>>;

fn check_ranked<S: AsRef<str>>(ranked: &[S]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for id in ranked {
        if !seen.insert(id.as_ref()) {
            return Err(Error::DuplicateId(id.as_ref().to_string()));
        }
    }
    Ok(())
}

/// AP over the whole ranked list.
pub fn average_precision<S: AsRef<str>>(ranked: &[S], relevant: &BTreeSet<String>) -> Result<f64> {
    average_precision_at(ranked, relevant, ranked.len())
}

/// AP over the first `n` ranks. The denominator is the number of relevant
/// items in the judgments, whether or not they were retrieved.
pub fn average_precision_at<S: AsRef<str>>(ranked: &[S], relevant: &BTreeSet<String>, n: usize) -> Result<f64> {
    if relevant.is_empty() {
        return Err(Error::Empty("relevant set"));
    }
    check_ranked(ranked)?;
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, id) in ranked.iter().take(n).enumerate() {
        if relevant.contains(id.as_ref()) {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    Ok(sum / relevant.len() as f64)
}

/// Precision and recall of the top `k`. Precision divides by `k` even when
/// fewer than `k` items were retrieved.
pub fn precision_recall_at_k<S: AsRef<str>>(ranked: &[S], relevant: &BTreeSet<String>, k: usize) -> Result<(f64, f64)> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if relevant.is_empty() {
        return Err(Error::Empty("relevant set"));
    }
    check_ranked(ranked)?;
    let hits = ranked
        .iter()
        .take(k)
        .filter(|id| relevant.contains(id.as_ref()))
        .count();
    Ok((hits as f64 / k as f64, hits as f64 / relevant.len() as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapReport {
    pub mean_average_precision: f64,
    /// AP of every judged query, by query id.
    pub per_query: BTreeMap<String, f64>,
    /// Run queries with no (or empty) judgments, left out of the mean.
    pub unjudged: Vec<String>,
}

/// Unweighted mean of per-query AP over the run's judged queries. Judged
/// queries absent from the run are not scored.
pub fn mean_average_precision(run: &RunFile, qrels: &RelevanceJudgments) -> Result<MapReport> {
    let mut per_query = BTreeMap::new();
    let mut unjudged = Vec::new();
    for (query, ranked) in run {
        match qrels.get(query) {
            Some(relevant) if !relevant.is_empty() => {
                per_query.insert(query.clone(), average_precision(ranked, relevant)?);
            }
            _ => unjudged.push(query.clone()),
        }
    }
    if !unjudged.is_empty() {
        log::warn!("{} run queries have no judgments and are excluded", unjudged.len());
    }
    if per_query.is_empty() {
        return Err(Error::Empty("judged queries"));
    }
    let mean_average_precision = per_query.values().sum::<f64>() / per_query.len() as f64;
    Ok(MapReport {
        mean_average_precision,
        per_query,
        unjudged,
    })
}
