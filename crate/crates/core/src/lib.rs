//! Decoding algorithms for autoregressive sequence models, framed as search
//! in a deterministic token-level decision process.
//!
//! - [`mdp`]: states, transitions and terminal rewards.
//! - [`models`]: the policy/value contract, seeded tabular models and the
//!   evaluation ledger.
//! - [`scoring`]: BLEU, embedding-alignment scores and toy metrics.
//! - [`decoders`]: greedy, beam search, value-guided beam search, sampling
//!   with reranking.
//! - [`mcts`]: batched arena MCTS and a recursive reference.
//! - [`oracle`]: exact search for small instances.
//! - [`harness`]: datasets, experiment sweeps, reports and tree export.

pub mod decoders;
pub mod error;
pub mod fixtures;
pub mod harness;
pub mod mcts;
pub mod mdp;
pub mod models;
pub mod oracle;
pub mod scoring;
pub mod seeding;

pub use error::{Error, Result};
pub use mdp::{DecodeState, Score, Sequence, TokenId, Vocab};
