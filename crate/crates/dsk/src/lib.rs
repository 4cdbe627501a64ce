//! File formats, the HTTP query service and the `dsk` command line on top
//! of `dsk-core`.

pub mod cli;
pub mod error;
pub mod formats;
pub mod pipeline;
pub mod query;
pub mod service;

pub use error::{Error, Result};
