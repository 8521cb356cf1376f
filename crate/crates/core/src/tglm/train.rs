use super::model::TopicGuidedLm;
use crate::checkpoint::{Checkpoint, ModelKind};
use crate::corpus::{Document, SequenceBatch};
use crate::error::Result;
use crate::numerics::{ParamSet, Real};
use crate::rnn::{BatchLoss, LmConfig, RnnState, StepRngs, Trainable};

impl<T: Real> Trainable<T> for TopicGuidedLm<T> {
    fn kind(&self) -> ModelKind {
        self.cfg.kind.model_kind()
    }

    fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    fn lm_config(&self) -> &LmConfig {
        &self.cfg.lm
    }

    fn batch_loss(&self, batch: &SequenceBatch, docs: &[Document], init: &RnnState<T>, rngs: StepRngs<'_>) -> Result<BatchLoss<T>> {
        Ok(self.batch_objective(batch, docs, init, Some(rngs.dropout), rngs.noise)?.0)
    }

    fn doc_log_probs(&self, doc: &Document) -> Result<Vec<f64>> {
        self.predict_doc(doc, self.cfg.window)
    }

    fn to_checkpoint(&self) -> Checkpoint {
        TopicGuidedLm::to_checkpoint(self, "")
    }
}
