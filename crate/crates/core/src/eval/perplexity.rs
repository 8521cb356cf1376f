use crate::error::{arg_err, Result};

/// `exp(-(1/n) * sum_log_prob)`.
pub fn perplexity(sum_log_prob: f64, n_tokens: usize) -> Result<f64> {
    if n_tokens == 0 {
        return Err(arg_err!("perplexity over zero tokens"));
    }
    Ok((-sum_log_prob / n_tokens as f64).exp())
}

/// Perplexity of a list of per-token natural-log probabilities.
pub fn perplexity_of(log_probs: &[f64]) -> Result<f64> {
    perplexity(log_probs.iter().sum(), log_probs.len())
}

/// Running sum of log-likelihoods and token count; shards merge associatively.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PerplexityAccumulator {
    pub sum_log_prob: f64,
    pub n_tokens: usize,
}

impl PerplexityAccumulator {
    pub fn add(&mut self, log_probs: &[f64]) {
        self.sum_log_prob += log_probs.iter().sum::<f64>();
        self.n_tokens += log_probs.len();
    }

    pub fn merge(&mut self, other: &PerplexityAccumulator) {
        self.sum_log_prob += other.sum_log_prob;
        self.n_tokens += other.n_tokens;
    }

    pub fn perplexity(&self) -> Result<f64> {
        perplexity(self.sum_log_prob, self.n_tokens)
    }
}
