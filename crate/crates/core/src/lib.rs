//! Topic-guided language models benchmarked against LSTM language models.
//!
//! The crate bundles everything needed to compare the model families under one
//! causal evaluation protocol: corpus preparation, LSTM/GRU language models trained
//! with truncated BPTT, collapsed-Gibbs LDA, the TopicRNN / VRTM / TDLM topic-guided
//! models, perplexity and NPMI coherence, and a linear probe of hidden states.

pub mod checkpoint;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod lda;
pub mod numerics;
pub mod probe;
pub mod rnn;
pub mod tglm;

pub use error::{Error, Result};
pub use numerics::{NumArray, Real, Rng};
