mod common;

use std::collections::HashSet;

use common::{random_doc, tiny_lm, tiny_tglm};
use tglm_core::numerics::{grad_check, NumArray, ParamSet};
use tglm_core::probe::{
    check_vocab_hashes, extract_probe_dataset, probe_loss, probe_metrics, read_probe_dataset, score_predictions,
    split_by_document, train_probe, write_probe_dataset, LinearProbe, ProbeExample, ProbeSolver, DEFAULT_RIDGE,
};
use tglm_core::rnn::LstmLm;
use tglm_core::tglm::TglmKind;
use tglm_core::{Error, Rng};

const CG: ProbeSolver = ProbeSolver::Iterative {
    tol: 1e-6,
    max_iter: 10_000,
};

fn gaussian(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.normal()).collect()
}

/// `n` examples over `docs` documents with targets `A h + c (+ noise)`.
fn linear_examples(n: usize, d: usize, k: usize, noise: f64, seed: u64) -> Vec<ProbeExample> {
    let mut rng = Rng::new(seed);
    let a = gaussian(&mut rng, k * d);
    let c = gaussian(&mut rng, k);
    (0..n)
        .map(|i| {
            let h = gaussian(&mut rng, d);
            let target = (0..k)
                .map(|j| c[j] + (0..d).map(|q| a[j * d + q] * h[q]).sum::<f64>() + noise * rng.normal())
                .collect();
            ProbeExample {
                doc_id: (i / 4) as u32,
                offset: (i % 4 * 30) as u32,
                h,
                target,
            }
        })
        .collect()
}

#[test]
fn chunk_starts_and_alignment() {
    let lm = LstmLm::<f64>::new(&tiny_lm(12, 5, 3, false), &Rng::new(0)).unwrap();
    let tglm = tiny_tglm(TglmKind::Tdlm, 12, 3, 4, 2, 1);
    let doc = random_doc(&mut Rng::new(2), 7, 12, &[40, 48]);
    assert_eq!(doc.len(), 90);
    let ex = extract_probe_dataset(&lm, &tglm, std::slice::from_ref(&doc), 30).unwrap();
    assert_eq!(ex.len(), 3);
    assert_eq!(ex.iter().map(|e| e.offset).collect::<Vec<_>>(), vec![0, 30, 60]);
    assert!(ex[0].h.iter().all(|&x| x == 0.0));
    let hidden = lm.core.doc_hidden(&lm.params, &doc);
    assert_eq!(ex[1].h, hidden.row(29));
    for e in &ex {
        assert_eq!(e.doc_id, 7);
        assert_eq!((e.h.len(), e.target.len()), (5, 3));
    }
    let short = random_doc(&mut Rng::new(3), 8, 12, &[28]);
    assert_eq!(extract_probe_dataset(&lm, &tglm, &[short], 30).unwrap().len(), 1);
    assert!(extract_probe_dataset(&lm, &tglm, &[doc], 0).is_err());
}

#[test]
fn targets_and_states_are_causal() {
    let lm = LstmLm::<f64>::new(&tiny_lm(14, 4, 3, false), &Rng::new(0)).unwrap();
    for kind in TglmKind::ALL {
        let tglm = tiny_tglm(kind, 14, 3, 4, 3, 2);
        let doc = random_doc(&mut Rng::new(4), 0, 14, &[30, 50, 20]);
        let base = extract_probe_dataset(&lm, &tglm, std::slice::from_ref(&doc), 30).unwrap();
        let mut rng = Rng::new(5);
        for _ in 0..8 {
            let pos = 1 + rng.below(doc.len() - 2);
            let mut mutated = doc.clone();
            for t in pos..doc.len() - 1 {
                mutated.token_ids[t] = (3 + rng.below(11)) as u32;
            }
            let after = extract_probe_dataset(&lm, &tglm, &[mutated], 30).unwrap();
            for (a, b) in base.iter().zip(&after) {
                if a.offset as usize <= pos {
                    assert_eq!(a, b, "{} chunk {} changed after mutating {pos}", kind.name(), a.offset);
                }
            }
        }
    }
}

#[test]
fn vocabulary_mismatch_is_a_contract_error() {
    let lm = LstmLm::<f64>::new(&tiny_lm(13, 4, 3, false), &Rng::new(0)).unwrap();
    let tglm = tiny_tglm(TglmKind::Vrtm, 12, 3, 4, 2, 1);
    let doc = random_doc(&mut Rng::new(1), 0, 12, &[10]);
    assert!(matches!(extract_probe_dataset(&lm, &tglm, &[doc], 30), Err(Error::Contract(_))));

    let a = lm.to_checkpoint("vocab_hash=00aa\n");
    let b = tglm.to_checkpoint("vocab_hash=00aa\n");
    let c = tglm.to_checkpoint("vocab_hash=ffff\n");
    assert!(check_vocab_hashes(&a, &b).is_ok());
    assert!(matches!(check_vocab_hashes(&a, &c), Err(Error::Contract(_))));
    assert!(matches!(check_vocab_hashes(&lm.to_checkpoint(""), &b), Err(Error::Contract(_))));
}

#[test]
fn split_never_shares_documents() {
    let ex = linear_examples(200, 3, 2, 0.0, 1);
    let (train, held) = split_by_document(ex, 0.25, &mut Rng::new(3));
    assert_eq!(train.len() + held.len(), 200);
    assert!(!held.is_empty() && !train.is_empty());
    let a: HashSet<u32> = train.iter().map(|e| e.doc_id).collect();
    let b: HashSet<u32> = held.iter().map(|e| e.doc_id).collect();
    assert!(a.is_disjoint(&b));
    assert_eq!(b.len(), 13);
}

#[test]
fn realizable_targets_are_recovered() {
    let ex = linear_examples(600, 8, 5, 0.0, 2);
    let (train, held) = ex.split_at(400);
    for solver in [ProbeSolver::Ridge, CG] {
        let p = train_probe(train, DEFAULT_RIDGE, solver).unwrap();
        let m = probe_metrics(&p, held).unwrap();
        assert!(m.r2 >= 0.999, "r2 {}", m.r2);
        assert!(m.acc1 <= m.acc5);
    }
}

#[test]
fn shuffled_targets_explain_nothing() {
    let mut ex = linear_examples(1200, 8, 5, 0.0, 3);
    let mut targets: Vec<Vec<f64>> = ex.iter().map(|e| e.target.clone()).collect();
    Rng::new(4).shuffle(&mut targets);
    for (e, t) in ex.iter_mut().zip(targets) {
        e.target = t;
    }
    let (train, held) = ex.split_at(800);
    let p = train_probe(train, DEFAULT_RIDGE, ProbeSolver::Ridge).unwrap();
    let m = probe_metrics(&p, held).unwrap();
    assert!(m.r2 <= 0.05, "r2 {}", m.r2);
}

#[test]
fn closed_form_and_iterative_solvers_agree() {
    for seed in 0..3 {
        let ex = linear_examples(300, 10, 4, 0.5, 10 + seed);
        let (train, held) = ex.split_at(200);
        let a = probe_metrics(&train_probe(train, DEFAULT_RIDGE, ProbeSolver::Ridge).unwrap(), held).unwrap();
        let b = probe_metrics(&train_probe(train, DEFAULT_RIDGE, CG).unwrap(), held).unwrap();
        assert!((a.mse - b.mse).abs() / a.mse <= 1e-3, "{} vs {}", a.mse, b.mse);
    }
}

#[test]
fn probe_loss_gradients_match_finite_differences() {
    for &(n, d, k, seed) in &[(6, 3, 2, 1u64), (9, 4, 3, 2), (5, 6, 5, 3)] {
        let ex = linear_examples(n, d, k, 0.3, seed);
        let mut rng = Rng::new(seed + 100);
        let mut ps = ParamSet::<f64>::new();
        ps.add("probe.w", NumArray::from_vec(&[d, k], gaussian(&mut rng, d * k)).unwrap());
        ps.add("probe.b", NumArray::vector(gaussian(&mut rng, k)));
        let err = grad_check(&ps, |p| probe_loss(p, &ex, 0.1), 1e-5, 8, &mut rng).unwrap();
        assert!(err <= 1e-5, "config ({n},{d},{k}): {err:e}");
    }
}

#[test]
fn metric_properties() {
    let ex = linear_examples(100, 4, 7, 1.0, 5);
    let targets: Vec<Vec<f64>> = ex.iter().map(|e| e.target.clone()).collect();
    let probe = LinearProbe {
        w: vec![0.1; 7 * 4],
        b: (0..7).map(|j| j as f64 * 0.01).collect(),
        d: 4,
        k: 7,
    };
    let preds: Vec<Vec<f64>> = ex.iter().map(|e| probe.predict(&e.h)).collect();
    let m = score_predictions(&preds, &targets).unwrap();
    assert!(m.acc1 <= m.acc5 && m.r2 <= 1.0);

    let moved = |v: &[Vec<f64>]| -> Vec<Vec<f64>> {
        v.iter()
            .enumerate()
            .map(|(i, r)| r.iter().map(|a| a + 3.5 - i as f64 * 0.25).collect())
            .collect()
    };
    let s = score_predictions(&moved(&preds), &moved(&targets)).unwrap();
    assert_eq!((s.acc1, s.acc5), (m.acc1, m.acc5));

    let n = targets.len() as f64;
    let mean: Vec<f64> = (0..7).map(|j| targets.iter().map(|t| t[j]).sum::<f64>() / n).collect();
    let c = score_predictions(&vec![mean; targets.len()], &targets).unwrap();
    assert!(c.r2.abs() < 1e-12);
    let perfect = score_predictions(&targets, &targets).unwrap();
    assert_eq!((perfect.acc1, perfect.acc5, perfect.r2), (1.0, 1.0, 1.0));
}

#[test]
fn dataset_file_round_trip() {
    let ex = linear_examples(10, 3, 2, 0.0, 6);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("probe.bin");
    write_probe_dataset(&path, &ex).unwrap();
    let back = read_probe_dataset(&path, 3, 2).unwrap();
    assert_eq!(back.len(), 10);
    for (a, b) in ex.iter().zip(&back) {
        assert_eq!((a.doc_id, a.offset), (b.doc_id, b.offset));
        for (x, y) in a.h.iter().chain(&a.target).zip(b.h.iter().chain(&b.target)) {
            assert_eq!(*x as f32 as f64, *y);
        }
    }
    assert!(read_probe_dataset(&path, 4, 2).is_err());
}
