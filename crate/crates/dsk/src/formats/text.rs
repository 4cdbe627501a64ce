//! Line-oriented text formats: caption datasets, qrels and run files.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use dsk_core::evaluation::{RelevanceJudgments, RunFile};
use dsk_core::retrieval::SearchResult;
use serde::{Deserialize, Serialize};

use crate::error::{read_file, Error, Result, WithPath};

/// One line of a caption dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionEntry {
    pub id: String,
    pub captions: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uri: Option<String>,
}

/// Id of the `k`-th caption (0-based) of image `id` in caption feature files.
pub fn caption_feature_id(id: &str, k: usize) -> String {
    format!("{id}#{k}")
}

pub fn parse_captions(text: &str) -> Result<Vec<CaptionEntry>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: CaptionEntry = serde_json::from_str(line).map_err(|e| Error::parse(n + 1, e))?;
        if !seen.insert(entry.id.clone()) {
            return Err(Error::parse(n + 1, format!("duplicate id {:?}", entry.id)));
        }
        out.push(entry);
    }
    Ok(out)
}

pub fn captions_to_jsonl(entries: &[CaptionEntry]) -> String {
    entries
        .iter()
        .map(|e| serde_json::to_string(e).expect("serializing plain data") + "\n")
        .collect()
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    String::from_utf8(read_file(path)?)
        .map_err(|_| Error::Data("file is not UTF-8".into()))
        .in_file(path)
}

pub fn load_captions(path: &Path) -> Result<Vec<CaptionEntry>> {
    parse_captions(&read_text(path)?).in_file(path)
}

fn fields(line: &str) -> Vec<&str> {
    line.split('\t').map(str::trim).collect()
}

/// `query_id<TAB>image_id` per line.
pub fn parse_qrels(text: &str) -> Result<RelevanceJudgments> {
    let mut qrels: RelevanceJudgments = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match fields(line)[..] {
            [q, id] if !q.is_empty() && !id.is_empty() => {
                qrels.entry(q.to_string()).or_default().insert(id.to_string());
            }
            _ => return Err(Error::parse(n + 1, "expected query_id<TAB>image_id")),
        }
    }
    Ok(qrels)
}

/// `query_id<TAB>rank<TAB>image_id<TAB>distance` per line. Lines may come
/// in any order; each query's list is ordered by rank.
pub fn parse_run(text: &str) -> Result<RunFile> {
    let mut ranked: BTreeMap<String, BTreeMap<u64, String>> = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let [q, rank, id, distance] = fields(line)[..] else {
            return Err(Error::parse(
                n + 1,
                "expected query_id<TAB>rank<TAB>image_id<TAB>distance",
            ));
        };
        let rank: u64 = rank
            .parse()
            .map_err(|_| Error::parse(n + 1, format!("bad rank {rank:?}")))?;
        distance
            .parse::<f64>()
            .map_err(|_| Error::parse(n + 1, format!("bad distance {distance:?}")))?;
        if ranked
            .entry(q.to_string())
            .or_default()
            .insert(rank, id.to_string())
            .is_some()
        {
            return Err(Error::parse(n + 1, format!("rank {rank} repeated for query {q:?}")));
        }
    }
    Ok(ranked
        .into_iter()
        .map(|(q, by_rank)| (q, by_rank.into_values().collect()))
        .collect())
}

/// Run lines for one query, ranks starting at 1.
pub fn format_run_lines(query_id: &str, result: &SearchResult) -> String {
    let mut out = String::new();
    for (i, hit) in result.ranked.iter().enumerate() {
        writeln!(out, "{query_id}\t{}\t{}\t{}", i + 1, hit.image_id, hit.distance).unwrap();
    }
    out
}

pub fn load_qrels(path: &Path) -> Result<RelevanceJudgments> {
    parse_qrels(&read_text(path)?).in_file(path)
}

pub fn load_run(path: &Path) -> Result<RunFile> {
    parse_run(&read_text(path)?).in_file(path)
}

/// Evaluation report as written by `dsk eval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub map: f64,
    pub judged_queries: usize,
    pub unjudged_queries: Vec<String>,
    pub per_query: BTreeMap<String, QueryMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub ap: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision_at_k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recall_at_k: Option<f64>,
}
