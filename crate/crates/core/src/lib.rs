//! Sequence-to-sequence recognizer training with edit-distance policy gradients.
//!
//! The crate is organized bottom-up:
//!
//! - [`numgrad`]: reverse-mode autodiff over `f64` tensors.
//! - [`editdist`]: Levenshtein distance, per-step rewards, returns, normalizers.
//! - [`seq2seq`]: the attention encoder-decoder.
//! - [`inference`]: Monte Carlo sampling, greedy and beam decoding.
//! - [`objectives`]: MLE loss and the REINFORCE estimators.
//! - [`synthtask`]: synthetic corpus, file format and CER.
//! - [`train`]: Adam, the two training phases, checkpoints and evaluation.
//! - [`oracle`]: brute-force references used by tests and `oracle-check`.

pub mod editdist;
pub mod inference;
pub mod numgrad;
pub mod objectives;
pub mod oracle;
pub mod parallel;
pub mod rng;
pub mod seq2seq;
pub mod synthtask;
pub mod train;
