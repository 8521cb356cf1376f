//! Topic-guided language models: TopicRNN and VRTM (topic-biased logits with a
//! variational topic posterior) and TDLM (joint topic and language model with a GRU
//! combination head), trained with truncated BPTT and evaluated causally.

mod model;
mod objective;
mod predict;
mod train;

pub use model::{TglmConfig, TglmKind, TopicGuidedLm};
pub use objective::LossParts;
pub use predict::{mixture_next_prob, topic_bias_logits};
