mod common;

use common::{random_doc, tiny_tglm};
use tglm_core::corpus::{batch_sequences, Conditioning, Document, SequenceBatch};
use tglm_core::numerics::{grad_check, log_sum_exp, softmax, NumArray};
use tglm_core::rnn::{LstmLm, RnnState, Trainable};
use tglm_core::tglm::{mixture_next_prob, topic_bias_logits, TglmKind, TopicGuidedLm};
use tglm_core::checkpoint::Checkpoint;
use tglm_core::Rng;

fn first_batch(docs: &[Document], seq_len: usize, lanes: usize) -> SequenceBatch {
    batch_sequences(docs, seq_len, lanes, None, Conditioning::Document)
        .next()
        .unwrap()
}

fn objective_check(model: &TopicGuidedLm<f64>, docs: &[Document], seq_len: usize) -> f64 {
    let batch = first_batch(docs, seq_len, docs.len());
    let init = RnnState::zeros(1, batch.num_rows(), model.cfg.lm.hidden);
    let loss = |ps: &tglm_core::numerics::ParamSet<f64>| {
        let mut m = model.clone();
        m.params = ps.clone();
        let (out, _) = m.batch_objective(&batch, docs, &init, None, &mut Rng::new(99))?;
        Ok((out.loss, out.grads))
    };
    grad_check(&model.params, loss, 1e-4, 6, &mut Rng::new(3)).unwrap()
}

#[test]
fn elbo_and_joint_gradients_match_finite_differences() {
    let configs = [(10, 2, 4, 1), (12, 3, 5, 2), (9, 4, 3, 3)];
    for kind in TglmKind::ALL {
        for &(v, k, hidden, seed) in &configs {
            let mut model = tiny_tglm(kind, v, k, hidden, 2, seed);
            let mut rng = Rng::new(seed + 10);
            common::randomize(&mut model.params, 0.5, &mut rng);
            let docs = vec![random_doc(&mut rng, 0, v, &[3, 4]), random_doc(&mut rng, 1, v, &[5])];
            let err = objective_check(&model, &docs, 4);
            assert!(err <= 1e-5, "{} V={v} K={k}: relative error {err:e}", kind.name());
        }
    }
}

#[test]
fn stop_label_suppresses_topic_bias() {
    let m = tiny_tglm(TglmKind::TopicRnn, 10, 3, 4, 2, 5);
    let h = [0.1, -0.3, 0.2, 0.05];
    let hrow = NumArray::from_vec(&[1, 4], h.to_vec()).unwrap();
    let plain: Vec<f64> = m.core.logits(&m.params, &hrow, None).data().to_vec();
    assert_eq!(m.topicrnn_logits(&h, &[0.4, -2.0, 1.0], true), plain);
    assert_eq!(m.topicrnn_logits(&h, &[0.0, 0.0, 0.0], false), plain);
    let z = m.topicrnn_logits(&h, &[0.4, -2.0, 1.0], false);
    let p = softmax(&NumArray::vector(z.clone())).unwrap();
    let denom: f64 = z.iter().map(|x| x.exp()).sum();
    for (a, x) in p.data().iter().zip(&z) {
        assert!((a - x.exp() / denom).abs() < 1e-10);
    }
    for v in 0..5 {
        assert_eq!(z[v], plain[v], "no topic bias outside the topic vocabulary");
    }
}

#[test]
fn vrtm_mixture_matches_direct_average() {
    let mut rng = Rng::new(8);
    let base: Vec<f64> = (0..9).map(|_| rng.normal()).collect();
    let ids = [4u32, 5, 7, 8];
    let beta: Vec<f64> = (0..12).map(|_| rng.normal()).collect();
    let theta = [0.2, 0.5, 0.3];
    let p = mixture_next_prob(&base, &beta, &ids, &theta, false);
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    let mut direct = vec![0.0; 9];
    for k in 0..3 {
        let mut z = base.clone();
        for (j, &id) in ids.iter().enumerate() {
            z[id as usize] += beta[k * 4 + j];
        }
        let norm: f64 = z.iter().map(|x| x.exp()).sum();
        for v in 0..9 {
            direct[v] += theta[k] * z[v].exp() / norm;
        }
    }
    for v in 0..9 {
        assert!((p[v] - direct[v]).abs() < 1e-12);
    }
    let one_hot = mixture_next_prob(&base, &beta, &ids, &[0.0, 1.0, 0.0], false);
    let mut single = topic_bias_logits(&base, &beta, &ids, &[0.0, 1.0, 0.0], false);
    let s = softmax(&NumArray::vector(single.clone())).unwrap();
    single.copy_from_slice(s.data());
    assert_eq!(one_hot, single);
    let k1 = mixture_next_prob(&base, &beta[..4], &ids, &[1.0], false);
    let biased = softmax(&NumArray::vector(topic_bias_logits(&base, &beta[..4], &ids, &[1.0], false))).unwrap();
    assert_eq!(k1, biased.data());
}

#[test]
fn kl_vanishes_when_posterior_equals_prior() {
    let mut m = tiny_tglm(TglmKind::TopicRnn, 10, 3, 4, 2, 1);
    for name in ["enc.head.w", "enc.head.b", "enc.logvar.w", "enc.logvar.b"] {
        let id = m.params.find(name).unwrap();
        m.params.get_mut(id).fill(0.0);
    }
    let mut rng = Rng::new(2);
    let docs = vec![random_doc(&mut rng, 0, 10, &[4, 3])];
    let batch = first_batch(&docs, 5, 1);
    let init = RnnState::zeros(1, 1, 4);
    let (_, parts) = m.batch_objective(&batch, &docs, &init, None, &mut Rng::new(0)).unwrap();
    assert_eq!(parts.kl, 0.0);

    let m = tiny_tglm(TglmKind::Vrtm, 10, 3, 4, 2, 1);
    for seed in 0..5 {
        let docs = vec![random_doc(&mut Rng::new(seed), 0, 10, &[6])];
        let batch = first_batch(&docs, 5, 1);
        let (_, parts) = m.batch_objective(&batch, &docs, &init, None, &mut Rng::new(seed)).unwrap();
        assert!(parts.kl >= 0.0);
    }
}

#[test]
fn tdlm_with_closed_update_gate_is_the_plain_lm() {
    let mut m = tiny_tglm(TglmKind::Tdlm, 11, 3, 4, 2, 6);
    let gru_b = m.params.find("gru.b").unwrap();
    m.params.get_mut(gru_b).data_mut()[..4].fill(-1e4);
    let mut lm = LstmLm::<f64>::new(&common::tiny_lm(11, 4, 3, false), &Rng::new(0)).unwrap();
    for name in ["embed", "lstm0.w", "lstm0.u", "lstm0.b", "out.w", "out.b"] {
        let src = m.params.get(m.params.find(name).unwrap()).clone();
        let dst = lm.params.find(name).unwrap();
        *lm.params.get_mut(dst) = src;
    }
    let mut rng = Rng::new(4);
    let docs = vec![random_doc(&mut rng, 0, 11, &[4, 5]), random_doc(&mut rng, 1, 11, &[7])];
    let batch = first_batch(&docs, 6, 2);
    let init = RnnState::zeros(1, 2, 4);
    let (_, parts) = m.batch_objective(&batch, &docs, &init, None, &mut Rng::new(0)).unwrap();
    let plain = lm.batch_loss(&batch, &init, None);
    assert_eq!(parts.nll, plain.nll);
    let single = vec![random_doc(&mut rng, 2, 11, &[6])];
    let b = first_batch(&single, 4, 1);
    let (_, p) = m.batch_objective(&b, &single, &RnnState::zeros(1, 1, 4), None, &mut Rng::new(0)).unwrap();
    assert!(p.topic_nll > 0.0);
}

fn assert_causal(dists: impl Fn(&Document) -> NumArray<f64>, doc: &Document, vocab: usize, trials: usize, seed: u64) {
    let base = dists(doc);
    let mut rng = Rng::new(seed);
    for _ in 0..trials {
        let pos = 1 + rng.below(doc.len() - 2);
        let mut mutated = doc.clone();
        for p in pos..doc.len() - 1 {
            if rng.uniform() < 0.5 {
                mutated.token_ids[p] = (3 + rng.below(vocab - 3)) as u32;
            }
        }
        let old = doc.token_ids[pos];
        while mutated.token_ids[pos] == old {
            mutated.token_ids[pos] = (3 + rng.below(vocab - 3)) as u32;
        }
        let after = dists(&mutated);
        for i in 0..pos {
            assert_eq!(base.row(i), after.row(i), "prediction {i} changed after mutating position {pos}");
        }
    }
}

#[test]
fn predictions_are_causal_and_normalised() {
    for kind in TglmKind::ALL {
        let m = tiny_tglm(kind, 14, 3, 5, 3, 21);
        let doc = random_doc(&mut Rng::new(5), 0, 14, &[6, 9, 7]);
        let d = m.doc_log_dists(&doc, 4).unwrap();
        assert_eq!(d.rows(), doc.len() - 1);
        for i in 0..d.rows() {
            assert!(log_sum_exp(d.row(i)).unwrap().abs() < 1e-6);
        }
        let lp = m.predict_doc(&doc, 4).unwrap();
        assert_eq!(lp.len(), doc.num_predictions());
        assert_causal(|x| m.doc_log_dists(x, 4).unwrap(), &doc, 14, 34, 7);
        assert!(m.doc_log_dists(&doc, 0).is_err());
        let fixed = m.doc_log_dists(&doc, usize::MAX).unwrap();
        for i in 0..fixed.rows() {
            assert!(log_sum_exp(fixed.row(i)).unwrap().abs() < 1e-6);
        }
    }
}

#[test]
fn checkpoint_round_trip_preserves_predictions() {
    for kind in TglmKind::ALL {
        let m = tiny_tglm(kind, 10, 2, 4, 2, 3);
        let ck = Checkpoint::from_bytes(&m.to_checkpoint("").to_bytes()).unwrap();
        assert_eq!(ck.kind, kind.model_kind());
        let back = TopicGuidedLm::<f64>::from_checkpoint(&ck).unwrap();
        let doc = random_doc(&mut Rng::new(1), 0, 10, &[5, 5]);
        assert_eq!(m.predict_doc(&doc, 3).unwrap(), back.predict_doc(&doc, 3).unwrap());
        assert_eq!(Trainable::<f64>::doc_log_probs(&back, &doc).unwrap().len(), doc.num_predictions());
        assert_eq!(back.stop, m.stop);
        assert_eq!(back.top_words(1, 3), m.top_words(1, 3));
    }
}
