//! Checkpoints for the joint embedding (DSKM) and the captioner (DSKC).
//!
//! DSKM: `"DSKM"`, version `u32 = 1`, `d`, `image_dim`, `text_dim` as `u32`,
//! then `W_v`, `b_v`, `W_u`, `b_u` as little-endian `f64`, row-major.
//!
//! DSKC: `"DSKC"`, version `u32 = 1`, `vocab_size`, `embed_dim`,
//! `hidden_dim`, `image_dim` as `u32`; then `vocab_size` tokens in index
//! order (`u16` length + UTF-8); then the parameter blocks as
//! little-endian `f64`: input embedding, adapter weight, adapter bias, gate
//! weight, gate bias, head weight, head bias.

use std::path::Path;

use dsk_core::captioner::{CaptionerDims, LstmParams, Vocabulary};
use dsk_core::joint::{JointEmbeddingModel, ProjectionLayer};
use dsk_core::numerics::Parameters;

use super::bytes::{u16_len, u32_len, Cursor, Writer};
use crate::error::{read_file, write_file, Error, Result, WithPath};

pub const MODEL_MAGIC: &[u8; 4] = b"DSKM";
pub const CAPTIONER_MAGIC: &[u8; 4] = b"DSKC";
pub const VERSION: u32 = 1;

fn write_groups<P: Parameters>(w: &mut Writer, p: &P) {
    for (_, g) in p.groups() {
        w.f64s(g);
    }
}

fn read_groups<P: Parameters>(c: &mut Cursor<'_>, p: &mut P) -> Result<()> {
    for (name, g) in p.groups_mut() {
        let values = c.f64s(g.len(), name)?;
        g.copy_from_slice(&values);
    }
    Ok(())
}

pub fn encode_model(model: &JointEmbeddingModel) -> Result<Vec<u8>> {
    let mut w = Writer::header(MODEL_MAGIC, VERSION);
    let (d, image_dim, text_dim) = model.shape();
    for x in [d, image_dim, text_dim] {
        w.u32(u32_len(x, "model dimension")?);
    }
    write_groups(&mut w, model);
    Ok(w.buf)
}

pub fn decode_model(bytes: &[u8]) -> Result<JointEmbeddingModel> {
    let mut c = Cursor::new(bytes);
    c.header(MODEL_MAGIC, VERSION)?;
    let at = c.offset();
    let d = c.u32("d")? as usize;
    let image_dim = c.u32("image_dim")? as usize;
    let text_dim = c.u32("text_dim")? as usize;
    if d == 0 || image_dim == 0 || text_dim == 0 {
        return Err(Error::integrity(at, "zero model dimension"));
    }
    let needed = d
        .checked_mul(image_dim + text_dim + 2)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::integrity(at, "model dimensions overflow"))?;
    if needed > c.remaining() {
        return Err(Error::integrity(
            c.offset(),
            format!("truncated parameters: need {needed} bytes, {} left", c.remaining()),
        ));
    }
    let mut model = JointEmbeddingModel::new(
        ProjectionLayer::zeros(d, image_dim),
        ProjectionLayer::zeros(d, text_dim),
    )?;
    read_groups(&mut c, &mut model)?;
    c.finish()?;
    Ok(model)
}

pub fn save_model(path: &Path, model: &JointEmbeddingModel) -> Result<()> {
    write_file(path, &encode_model(model).in_file(path)?)
}

pub fn load_model(path: &Path) -> Result<JointEmbeddingModel> {
    decode_model(&read_file(path)?).in_file(path)
}

/// A trained captioner with the vocabulary it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptionerCheckpoint {
    pub vocab: Vocabulary,
    pub params: LstmParams,
}

pub fn encode_captioner(ckpt: &CaptionerCheckpoint) -> Result<Vec<u8>> {
    let dims = ckpt.params.dims();
    if ckpt.vocab.len() != dims.vocab_size {
        return Err(Error::Data(format!(
            "vocabulary has {} tokens, parameters expect {}",
            ckpt.vocab.len(),
            dims.vocab_size
        )));
    }
    let mut w = Writer::header(CAPTIONER_MAGIC, VERSION);
    for x in [dims.vocab_size, dims.embed_dim, dims.hidden_dim, dims.image_dim] {
        w.u32(u32_len(x, "captioner dimension")?);
    }
    for t in ckpt.vocab.tokens() {
        w.u16(u16_len(t, "token")?);
        w.bytes(t.as_bytes());
    }
    write_groups(&mut w, &ckpt.params);
    Ok(w.buf)
}

pub fn decode_captioner(bytes: &[u8]) -> Result<CaptionerCheckpoint> {
    let mut c = Cursor::new(bytes);
    c.header(CAPTIONER_MAGIC, VERSION)?;
    let at = c.offset();
    let dims = CaptionerDims {
        vocab_size: c.u32("vocab_size")? as usize,
        embed_dim: c.u32("embed_dim")? as usize,
        hidden_dim: c.u32("hidden_dim")? as usize,
        image_dim: c.u32("image_dim")? as usize,
    };
    // Each token needs at least its length prefix.
    if dims.vocab_size.saturating_mul(2) > c.remaining() {
        return Err(Error::integrity(c.offset(), "truncated vocabulary"));
    }
    let mut tokens = Vec::with_capacity(dims.vocab_size);
    for _ in 0..dims.vocab_size {
        let len = c.u16("token length")? as usize;
        tokens.push(c.string(len, "token")?);
    }
    let vocab_at = c.offset();
    let vocab = Vocabulary::from_tokens(tokens).map_err(|e| Error::integrity(vocab_at, e.to_string()))?;
    let mut params = LstmParams::zeros(dims).map_err(|e| Error::integrity(at, e.to_string()))?;
    let needed = params.parameter_count().saturating_mul(8);
    if needed > c.remaining() {
        return Err(Error::integrity(
            c.offset(),
            format!("truncated parameters: need {needed} bytes, {} left", c.remaining()),
        ));
    }
    read_groups(&mut c, &mut params)?;
    c.finish()?;
    Ok(CaptionerCheckpoint { vocab, params })
}

pub fn save_captioner(path: &Path, ckpt: &CaptionerCheckpoint) -> Result<()> {
    write_file(path, &encode_captioner(ckpt).in_file(path)?)
}

pub fn load_captioner(path: &Path) -> Result<CaptionerCheckpoint> {
    decode_captioner(&read_file(path)?).in_file(path)
}
