//! Corpus files, vocabularies, bags of words, BPTT batching and synthetic corpora.

mod batch;
mod bow;
mod document;
mod synth;
mod topic_vocab;
mod vocab;

pub use batch::{
    batch_sequences, document_windows, BatchStream, Conditioning, RowInfo, SequenceBatch, Window,
};
pub use bow::{bag_of_words, prefix_bag, read_bow_cache, write_bow_cache, CountVector};
pub use document::{
    encode_corpus, read_corpus, write_corpus, Document, RawDoc, DEFAULT_SENTENCE_SEPARATOR,
};
pub use synth::{generate_synthetic_corpus, SynthConfig, SynthCorpus, SynthSplit, FUNCTION_WORDS, SENTENCE_END};
pub use topic_vocab::{read_stop_list, Exclusion, TopicVocab};
pub use vocab::{Vocabulary, EOS, EOS_ID, NUM_SPECIALS, SOS, SOS_ID, UNK, UNK_ID};
