//! On-disk formats. Binary formats are little-endian, read whole into
//! memory, and reject trailing bytes.

mod bytes;
pub mod features;
pub mod index;
pub mod models;
pub mod text;

pub use features::{load_features, read_feature_file, write_feature_file, FeatureRecord, FeatureSet};
pub use index::{load_index, save_index};
pub use models::{load_captioner, load_model, save_captioner, save_model, CaptionerCheckpoint};
pub use text::{caption_feature_id, load_captions, load_qrels, load_run, CaptionEntry, EvalReport, QueryMetrics};
