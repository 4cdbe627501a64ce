//! DSKI index files.
//!
//! Header: `"DSKI"`, version `u32 = 1`, mode `u8` (0 caption based,
//! 1 embedding space), `d: u32`, `records: u64`, `caption_vectors: u64`.
//! Each record: `id_len: u16` + id, `has_uri: u8` (then `uri_len: u32` +
//! uri), `d` little-endian `f64` embedding, `captions: u32`, then per
//! caption `len: u32` + text, followed in caption mode by its `d` `f64`
//! vector.

use std::path::Path;

use dsk_core::numerics::Vector;
use dsk_core::retrieval::{IndexMode, IndexRecord, VectorIndex};

use super::bytes::{u16_len, u32_len, Cursor, Writer};
use crate::error::{read_file, write_file, Error, Result, WithPath};

pub const MAGIC: &[u8; 4] = b"DSKI";
pub const VERSION: u32 = 1;

fn mode_byte(mode: IndexMode) -> u8 {
    match mode {
        IndexMode::CaptionBased => 0,
        IndexMode::EmbeddingSpace => 1,
    }
}

pub fn encode_index(index: &VectorIndex) -> Result<Vec<u8>> {
    let mut w = Writer::header(MAGIC, VERSION);
    w.u8(mode_byte(index.mode()));
    w.u32(u32_len(index.d(), "d")?);
    w.u64(index.len() as u64);
    w.u64(index.caption_vector_count() as u64);
    let caption_mode = index.mode() == IndexMode::CaptionBased;
    for (i, r) in index.records().iter().enumerate() {
        w.u16(u16_len(&r.image_id, "image id")?);
        w.bytes(r.image_id.as_bytes());
        match &r.uri {
            Some(uri) => {
                w.u8(1);
                w.u32(u32_len(uri.len(), "uri")?);
                w.bytes(uri.as_bytes());
            }
            None => w.u8(0),
        }
        w.f64s(r.embedding.as_slice());
        w.u32(u32_len(r.captions.len(), "caption count")?);
        for (j, caption) in r.captions.iter().enumerate() {
            w.u32(u32_len(caption.len(), "caption")?);
            w.bytes(caption.as_bytes());
            if caption_mode {
                w.f64s(index.caption_vectors(i)[j].as_slice());
            }
        }
    }
    Ok(w.buf)
}

pub fn decode_index(bytes: &[u8]) -> Result<VectorIndex> {
    let mut c = Cursor::new(bytes);
    c.header(MAGIC, VERSION)?;
    let mode_at = c.offset();
    let mode = match c.u8("mode")? {
        0 => IndexMode::CaptionBased,
        1 => IndexMode::EmbeddingSpace,
        other => return Err(Error::integrity(mode_at, format!("unknown mode byte {other}"))),
    };
    let d = c.u32("d")? as usize;
    let count = c.u64("record count")?;
    let vector_count = c.u64("caption vector count")?;
    let caption_mode = mode == IndexMode::CaptionBased;

    let mut records = Vec::new();
    let mut caption_vectors = Vec::new();
    let mut seen_vectors = 0u64;
    for _ in 0..count {
        let id_len = c.u16("id length")? as usize;
        let image_id = c.string(id_len, "image id")?;
        let flag_at = c.offset();
        let uri = match c.u8("uri flag")? {
            0 => None,
            1 => {
                let len = c.u32("uri length")? as usize;
                Some(c.string(len, "uri")?)
            }
            other => return Err(Error::integrity(flag_at, format!("bad uri flag {other}"))),
        };
        let embedding = Vector::from(c.f64s(d, "embedding")?);
        let n = c.u32("caption count")? as usize;
        let mut captions = Vec::new();
        let mut vectors = Vec::new();
        for _ in 0..n {
            let len = c.u32("caption length")? as usize;
            captions.push(c.string(len, "caption")?);
            if caption_mode {
                vectors.push(Vector::from(c.f64s(d, "caption vector")?));
                seen_vectors += 1;
            }
        }
        records.push(IndexRecord {
            image_id,
            embedding,
            captions,
            uri,
        });
        caption_vectors.push(vectors);
    }
    let end = c.offset();
    c.finish()?;
    if seen_vectors != vector_count {
        return Err(Error::integrity(
            end,
            format!("header declares {vector_count} caption vectors, found {seen_vectors}"),
        ));
    }
    VectorIndex::from_parts(mode, d, records, caption_vectors).map_err(|e| Error::integrity(end, e.to_string()))
}

pub fn save_index(path: &Path, index: &VectorIndex) -> Result<()> {
    write_file(path, &encode_index(index).in_file(path)?)
}

pub fn load_index(path: &Path) -> Result<VectorIndex> {
    decode_index(&read_file(path)?).in_file(path)
}
