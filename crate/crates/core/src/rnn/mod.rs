//! LSTM/GRU cells, the LSTM language models, optimizers and the truncated-BPTT trainer.

mod cell;
mod lm;
mod optim;
mod train;

pub use cell::{
    gru_cell, gru_forward, lstm_cell, lstm_forward, GruLayer, GruParams, LayerVars, LstmGate,
    LstmLayer, LstmParams, RnnState,
};
pub(crate) use cell::uniform_init;
pub(crate) use lm::{active_positions, params_from_checkpoint};
pub use lm::{BatchLoss, CoreVars, LaneStates, LmConfig, LstmLm, RnnCore, WindowVars};
pub use optim::{clip_global_norm, Optimizer, OptimizerConfig};
pub use train::{
    corpus_perplexity, load_params, save_checkpoint, train_model, EpochLog, StepRngs, Trainable,
    TrainConfig, TrainOutcome,
};
