use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use tglm_bench::fixture;
use tglm_core::corpus::{batch_sequences, Conditioning};
use tglm_core::eval::cooccurrence_stats;
use tglm_core::lda::{GibbsState, LdaConfig};
use tglm_core::numerics::{softmax, NumArray};
use tglm_core::rnn::{LmConfig, LstmLm, RnnState};
use tglm_core::Rng;

fn lm_config(vocab: usize) -> LmConfig {
    LmConfig {
        vocab_size: vocab,
        layers: 1,
        hidden: 128,
        embed: 64,
        dropout: 0.0,
        with_gru_head: false,
        gru_input: 128,
        conditioning: Conditioning::Document,
    }
}

fn bench_softmax(c: &mut Criterion) {
    let mut rng = Rng::new(0);
    let v = NumArray::<f64>::from_fn(&[10_000], |_| rng.normal());
    c.bench_function("softmax 10k", |b| b.iter(|| softmax(black_box(&v)).unwrap()));
}

fn bench_lstm(c: &mut Criterion) {
    let f = fixture(40, 300);
    let v = f.vocab.len();
    let lm = LstmLm::<f32>::new(&lm_config(v), &Rng::new(0)).unwrap();
    let tokens: Vec<u32> = f.docs[0].token_ids[..16].to_vec();
    c.bench_function("lstm step 16x128", |b| {
        b.iter_batched(
            || RnnState::zeros(1, 16, 128),
            |mut s| lm.core.step(&lm.params, black_box(&tokens), &mut s),
            BatchSize::SmallInput,
        )
    });
    let batch = batch_sequences(&f.docs, 30, 16, None, Conditioning::Document).next().unwrap();
    let init = RnnState::zeros(1, batch.num_rows(), 128);
    c.bench_function("lstm batch loss+grad 16x30", |b| {
        b.iter(|| lm.batch_loss(black_box(&batch), &init, None))
    });
}

fn bench_gibbs(c: &mut Criterion) {
    let f = fixture(100, 300);
    let cfg = LdaConfig::mallet(10);
    c.bench_function("gibbs sweep 100 docs", |b| {
        b.iter_batched(
            || {
                let mut rng = Rng::new(1);
                (GibbsState::new(&f.bows, &cfg, &mut rng).unwrap(), rng)
            },
            |(mut st, mut rng)| st.sweep(&mut rng),
            BatchSize::LargeInput,
        )
    });
}

fn bench_npmi(c: &mut Criterion) {
    let f = fixture(100, 300);
    c.bench_function("cooccurrence stats 100 docs", |b| {
        b.iter(|| cooccurrence_stats(black_box(&f.docs), &f.tv, 10).unwrap())
    });
}

criterion_group!(benches, bench_softmax, bench_lstm, bench_gibbs, bench_npmi);
criterion_main!(benches);
