//! Perplexity, NPMI topic coherence and metric reports.

mod coherence;
mod perplexity;
mod report;

pub use coherence::{
    cooccurrence_stats, model_coherence, npmi_pair, npmi_topic, CoherenceBreakdown,
    CooccurrenceStats, NPMI_TOP_NS,
};
pub use perplexity::{perplexity, perplexity_of, PerplexityAccumulator};
pub use report::{mean_std, read_reports, render_table, write_reports, MetricsReport};
