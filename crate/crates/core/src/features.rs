//! Feature vectors and the built-in hashed text featurizer.
//!
//! Image features and caption features normally come from upstream
//! extractors and are ingested from files. For text, [`HashedTextFeaturizer`]
//! provides a deterministic bag-of-n-grams alternative so captions and
//! queries can be embedded without any pretrained model.
//!
//! Tokenization (shared with the captioner vocabulary):
//!
//! 1. split on Unicode whitespace,
//! 2. lowercase each token,
//! 3. strip leading and trailing ASCII punctuation,
//! 4. drop tokens that end up empty.
//!
//! Each n-gram (n = 1..=`ngram_max`) is hashed with 64-bit FNV-1a over its
//! tokens' UTF-8 bytes joined by a single `0x1F` byte. The bucket is
//! `hash % dim`; bit 63 of the hash set means the n-gram contributes −1,
//! clear means +1. The accumulated vector is L2-normalized unless it is zero.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::numerics::Vector;

/// Raw feature of an image or a text, before projection.
pub type FeatureVector = Vector;

pub const FNV_OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
pub const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
pub const NGRAM_SEPARATOR: u8 = 0x1f;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET_BASIS, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Splits text into normalized tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| t.to_lowercase())
        .filter_map(|t| {
            let s = t.trim_matches(|c: char| c.is_ascii_punctuation());
            (!s.is_empty()).then(|| String::from(s))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashedTextFeaturizer {
    dim: usize,
    ngram_max: usize,
}

impl HashedTextFeaturizer {
    pub const DEFAULT_NGRAM_MAX: usize = 2;

    pub fn new(dim: usize, ngram_max: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("featurizer dim must be at least 1"));
        }
        if ngram_max == 0 {
            return Err(Error::invalid("ngram_max must be at least 1"));
        }
        Ok(Self { dim, ngram_max })
    }

    pub fn with_dim(dim: usize) -> Result<Self> {
        Self::new(dim, Self::DEFAULT_NGRAM_MAX)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ngram_max(&self) -> usize {
        self.ngram_max
    }

    /// Bucket index and sign of one n-gram.
    pub fn bucket(&self, ngram: &[&str]) -> (usize, f64) {
        let mut bytes = Vec::new();
        for (i, tok) in ngram.iter().enumerate() {
            if i > 0 {
                bytes.push(NGRAM_SEPARATOR);
            }
            bytes.extend_from_slice(tok.as_bytes());
        }
        let h = fnv1a64(&bytes);
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        ((h % self.dim as u64) as usize, sign)
    }

    pub fn featurize(&self, text: &str) -> FeatureVector {
        let tokens = tokenize(text);
        let refs: Vec<&str> = tokens.iter().map(String::as_str).collect();
        let mut v = Vector::zeros(self.dim);
        for n in 1..=self.ngram_max.min(refs.len()) {
            for window in refs.windows(n) {
                let (bucket, sign) = self.bucket(window);
                v[bucket] += sign;
            }
        }
        l2_normalize(v.as_mut_slice());
        v
    }
}

/// Free-function form of [`HashedTextFeaturizer::featurize`].
pub fn featurize_text(f: &HashedTextFeaturizer, text: &str) -> FeatureVector {
    f.featurize(text)
}

/// Scales `v` to unit L2 norm in place; zero vectors are left alone.
pub fn l2_normalize(v: &mut [f64]) {
    let norm = math::sqrt(v.iter().map(|x| x * x).sum());
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}
