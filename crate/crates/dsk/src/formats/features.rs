//! Feature files: the binary DSKF layout and a JSON-lines interchange form.
//!
//! DSKF is `"DSKF"`, version `u32 = 1`, `dim: u32`, `count: u64`, then
//! `count` records of `id_len: u16`, UTF-8 id, `dim` little-endian `f32`.

use std::collections::BTreeSet;
use std::path::Path;

use dsk_core::features::FeatureVector;
use serde::{Deserialize, Serialize};

use super::bytes::{u16_len, u32_len, Cursor, Writer};
use crate::error::{read_file, write_file, Error, Result, WithPath};

pub const MAGIC: &[u8; 4] = b"DSKF";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 20;

pub type FeatureRecord = (String, FeatureVector);

/// Feature records in file order with their shared dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub dim: usize,
    pub records: Vec<FeatureRecord>,
}

impl FeatureSet {
    pub fn get(&self, id: &str) -> Option<&FeatureVector> {
        self.records.iter().find(|(i, _)| i == id).map(|(_, v)| v)
    }

    pub fn to_map(&self) -> std::collections::HashMap<&str, &FeatureVector> {
        self.records.iter().map(|(id, v)| (id.as_str(), v)).collect()
    }
}

fn validate(dim: usize, records: &[FeatureRecord]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for (id, v) in records {
        if v.dim() != dim {
            return Err(Error::Data(format!(
                "record {id:?} has dim {}, expected {dim}",
                v.dim()
            )));
        }
        if !seen.insert(id.as_str()) {
            return Err(Error::Data(format!("duplicate id {id:?}")));
        }
        if v.iter().any(|x| !(*x as f32).is_finite()) {
            return Err(Error::Data(format!("record {id:?} has values outside f32 range")));
        }
    }
    Ok(())
}

pub fn encode_features(dim: usize, records: &[FeatureRecord]) -> Result<Vec<u8>> {
    validate(dim, records)?;
    let mut w = Writer::header(MAGIC, VERSION);
    w.u32(u32_len(dim, "dim")?);
    w.u64(records.len() as u64);
    for (id, v) in records {
        w.u16(u16_len(id, "id")?);
        w.bytes(id.as_bytes());
        w.f32s(v.as_slice());
    }
    Ok(w.buf)
}

pub fn decode_features(bytes: &[u8]) -> Result<FeatureSet> {
    let mut c = Cursor::new(bytes);
    c.header(MAGIC, VERSION)?;
    let dim = c.u32("dim")? as usize;
    let count = c.u64("count")?;
    let mut seen = BTreeSet::new();
    let mut records = Vec::new();
    for i in 0..count {
        let at = c.offset();
        let len = c.u16("id length")? as usize;
        let id = c.string(len, "id")?;
        let values = c.f32s(dim, "vector")?;
        if !seen.insert(id.clone()) {
            return Err(Error::integrity(at, format!("duplicate id {id:?} in record {i}")));
        }
        records.push((id, values.into()));
    }
    c.finish()?;
    Ok(FeatureSet { dim, records })
}

pub fn write_feature_file(path: &Path, dim: usize, records: &[FeatureRecord]) -> Result<()> {
    let bytes = encode_features(dim, records).in_file(path)?;
    write_file(path, &bytes)
}

pub fn read_feature_file(path: &Path) -> Result<FeatureSet> {
    decode_features(&read_file(path)?).in_file(path)
}

#[derive(Serialize, Deserialize)]
struct JsonFeature {
    id: String,
    v: Vec<f64>,
}

/// One `{"id": .., "v": [..]}` object per line. The first line fixes the
/// dimension; blank lines are skipped.
pub fn parse_features_jsonl(text: &str) -> Result<FeatureSet> {
    let mut dim = None;
    let mut seen = BTreeSet::new();
    let mut records = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonFeature = serde_json::from_str(line).map_err(|e| Error::parse(line_no, e))?;
        let d = *dim.get_or_insert(rec.v.len());
        if rec.v.len() != d {
            return Err(Error::parse(
                line_no,
                format!("dim {} differs from first line's {d}", rec.v.len()),
            ));
        }
        if rec.v.iter().any(|x| !x.is_finite()) {
            return Err(Error::parse(line_no, "non-finite value"));
        }
        if !seen.insert(rec.id.clone()) {
            return Err(Error::parse(line_no, format!("duplicate id {:?}", rec.id)));
        }
        records.push((rec.id, rec.v.into()));
    }
    Ok(FeatureSet {
        dim: dim.unwrap_or(0),
        records,
    })
}

pub fn features_to_jsonl(records: &[FeatureRecord]) -> String {
    let mut out = String::new();
    for (id, v) in records {
        let line = serde_json::to_string(&JsonFeature {
            id: id.clone(),
            v: v.as_slice().to_vec(),
        })
        .expect("serializing plain data");
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// Reads DSKF, or JSON lines when the path ends in `.jsonl`.
pub fn load_features(path: &Path) -> Result<FeatureSet> {
    if path.extension().is_some_and(|e| e == "jsonl") {
        let bytes = read_file(path)?;
        let text = String::from_utf8(bytes)
            .map_err(|_| Error::Data("not UTF-8".into()))
            .in_file(path)?;
        parse_features_jsonl(&text).in_file(path)
    } else {
        read_feature_file(path)
    }
}
