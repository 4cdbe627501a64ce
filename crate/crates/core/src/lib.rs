//! Core of a cross-modal text-to-image retrieval engine.
//!
//! Everything in this crate is pure computation over in-memory values and
//! builds without `std` (an allocator is required). File formats, the HTTP
//! service and the command line live in the `dsk` companion crate.
//!
//! Two retrieval strategies are supported:
//!
//! * **caption based**: every caption of an image is featurized and
//!   projected with the text projection; an image scores by its closest
//!   caption.
//! * **embedding space**: image features and caption features are projected
//!   into a shared space by two learned affine maps; the query is projected
//!   like a caption and matched directly against image embeddings.
//!
//! Both rank by squared L2 distance with an exact scan.

#![no_std]
// `!(x > 0.0)` is deliberate throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod captioner;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod joint;
mod math;
pub mod numerics;
pub mod retrieval;

pub use error::{Error, Result};
