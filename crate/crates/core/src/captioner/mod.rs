//! Image-conditioned LSTM caption generator.
//!
//! A deliberately small model for caption-based retrieval at desk scale:
//! token embeddings, one LSTM layer, a softmax head, teacher-forced
//! training with backpropagation through time, and greedy decoding.

mod model;
mod train;
mod vocab;

pub use model::{
    caption_nll, greedy_decode, lstm_step, nll_for_tokens, softmax, CaptionLoss, CaptionerDims, LstmParams, LstmState,
};
pub use train::{train_captioner, CaptionExample, CaptionerTrainConfig, CaptionerTrainOutcome};
pub use vocab::{build_vocab, Vocabulary, BOS, EOS, PAD, RESERVED, UNK};

/// Default decode length limit.
pub const DEFAULT_MAX_LEN: usize = 20;
