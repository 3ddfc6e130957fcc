use std::sync::Arc;

use news_entropy::corpus::{Segment, TokenId, Vocabulary};
use news_entropy::embeddings::EmbeddingTable;
use news_entropy::lstm::{
    loss_and_gradients, sequence_nll, train, Block, Dims, Gate, LstmParams, TrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn vocab(n_words: usize) -> Vocabulary {
    Vocabulary::from_words((0..n_words).map(|i| format!("w{i:02}")).collect()).unwrap()
}

fn seg(ids: Vec<TokenId>, len: usize, pad: TokenId) -> Segment {
    let valid_len = ids.len();
    let mut token_ids = ids;
    token_ids.resize(len, pad);
    Segment {
        token_ids,
        valid_len,
        article_id: Arc::from("t"),
        position: 0,
    }
}

/// Perturbs every bias away from zero so bias gradients are exercised at a generic point.
fn jitter(p: &mut LstmParams, rng: &mut ChaCha8Rng) {
    for g in Gate::ALL {
        for x in p.block_mut(Block::B(g)) {
            *x = rng.random_range(-0.5..0.5);
        }
    }
    for x in p.block_mut(Block::Bs) {
        *x = rng.random_range(-0.5..0.5);
    }
}

fn finite_difference(params: &LstmParams, batch: &[&Segment], emb: &EmbeddingTable, step: f64) -> Vec<f64> {
    let mut p = params.clone();
    (0..p.count())
        .map(|j| {
            let x0 = p.as_slice()[j];
            p.as_mut_slice()[j] = x0 + step;
            let up = loss_and_gradients(&p, batch, emb).unwrap().0;
            p.as_mut_slice()[j] = x0 - step;
            let down = loss_and_gradients(&p, batch, emb).unwrap().0;
            p.as_mut_slice()[j] = x0;
            (up - down) / (2.0 * step)
        })
        .collect()
}

#[test]
fn gradients_match_central_differences_on_20_models() {
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let d_h = rng.random_range(1..=4);
        let d_out = rng.random_range(3..=20);
        let d_in = rng.random_range(1..=5);
        let v = vocab(d_out - 1);
        let emb = EmbeddingTable::random(&v, d_in, seed);
        let mut params = LstmParams::init(Dims::new(d_in, d_h, d_out), seed);
        jitter(&mut params, &mut rng);
        let segs: Vec<Segment> = (0..2)
            .map(|_| {
                let n = rng.random_range(1..=8);
                let ids = (0..n).map(|_| rng.random_range(0..d_out as u32)).collect();
                seg(ids, 8, v.pad_id())
            })
            .collect();
        let batch: Vec<&Segment> = segs.iter().collect();
        let (_, grad) = loss_and_gradients(&params, &batch, &emb).unwrap();
        let fd = finite_difference(&params, &batch, &emb, 1e-5);
        for (a, n) in grad.as_slice().iter().zip(&fd) {
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    println!("max relative error {worst:e}");
    assert!(worst < 1e-4, "max relative error {worst:e}");
}

#[test]
fn output_bias_gradient_is_softmax_minus_onehot() {
    let v = vocab(4);
    let emb = EmbeddingTable::random(&v, 3, 5);
    let params = LstmParams::init(Dims::new(3, 2, 5), 5);
    let s = seg(vec![2], 4, v.pad_id());
    let (_, grad) = loss_and_gradients(&params, &[&s], &emb).unwrap();
    // single position from the start state: the distribution is softmax(U_s h_0 + b_s)
    let model = news_entropy::lstm::Projected::new(&params, &emb).unwrap();
    let mut p = model.next_distribution(&[]).unwrap();
    p[2] -= 1.0;
    for (g, e) in grad.bs().iter().zip(&p) {
        assert!((g - e).abs() < 1e-14);
    }
}

#[test]
fn pad_positions_change_nothing() {
    let v = vocab(9);
    let emb = EmbeddingTable::random(&v, 4, 1);
    let params = LstmParams::init(Dims::new(4, 3, 10), 2);
    let ids: Vec<TokenId> = vec![1, 4, 4, 0, 9, 3];
    let short = seg(ids.clone(), 6, v.pad_id());
    let long = seg(ids, 20, v.pad_id());
    let a = loss_and_gradients(&params, &[&short], &emb).unwrap();
    let b = loss_and_gradients(&params, &[&long], &emb).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    let (na, _) = sequence_nll(&params, &short, &emb, None).unwrap();
    let (nb, _) = sequence_nll(&params, &long, &emb, None).unwrap();
    assert_eq!(na, nb);
}

#[test]
fn loss_is_per_token_mean() {
    let v = vocab(9);
    let emb = EmbeddingTable::random(&v, 4, 1);
    let params = LstmParams::init(Dims::new(4, 3, 10), 3);
    let s1 = seg(vec![1, 2], 5, v.pad_id());
    let s2 = seg(vec![3, 4, 5, 6, 7], 5, v.pad_id());
    let (loss, _) = loss_and_gradients(&params, &[&s1, &s2], &emb).unwrap();
    let total: f64 = [&s1, &s2]
        .iter()
        .flat_map(|s| sequence_nll(&params, s, &emb, None).unwrap().0)
        .sum();
    assert!((loss - total / 7.0).abs() < 1e-13);
    let empty = seg(vec![], 5, v.pad_id());
    assert!(loss_and_gradients(&params, &[&empty], &emb).is_err());
}

fn cycle_corpus(v: &Vocabulary, n: usize, seed: u64) -> Vec<Segment> {
    // deterministic successor w -> w+1 mod V with a little noise
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words = v.len() as u32;
    (0..n)
        .map(|_| {
            let mut w = rng.random_range(0..words);
            let ids = (0..10)
                .map(|_| {
                    let out = w;
                    w = if rng.random_bool(0.9) { (w + 1) % words } else { rng.random_range(0..words) };
                    out
                })
                .collect();
            seg(ids, 10, v.pad_id())
        })
        .collect()
}

#[test]
fn training_is_deterministic_and_reduces_loss() {
    let v = vocab(8);
    let emb = EmbeddingTable::random(&v, 6, 4);
    let init = LstmParams::init(Dims::new(6, 6, v.output_size()), 9);
    let data = cycle_corpus(&v, 300, 1);
    let held = cycle_corpus(&v, 100, 2);
    let config = TrainConfig {
        batch_size: 32,
        epochs: 15,
        seed: 3,
        adam: news_entropy::lstm::AdamConfig {
            lr: 1e-2,
            ..Default::default()
        },
        ..TrainConfig::default()
    };
    let a = train(init.clone(), &data, &emb, &config).unwrap();
    let b = train(init.clone(), &data, &emb, &config).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.loss_trace, b.loss_trace);
    assert_eq!(a.steps, 15 * 10);

    let held_refs: Vec<&Segment> = held.iter().collect();
    let before = loss_and_gradients(&init, &held_refs, &emb).unwrap().0;
    let after = loss_and_gradients(&a.params, &held_refs, &emb).unwrap().0;
    assert!(after < before - 0.5, "{before} -> {after}");

    let none = TrainConfig { epochs: 0, ..config };
    assert_eq!(train(init.clone(), &data, &emb, &none).unwrap().params, init);
}

#[test]
fn thread_count_does_not_change_gradients() {
    let v = vocab(15);
    let emb = EmbeddingTable::random(&v, 5, 4);
    let params = LstmParams::init(Dims::new(5, 4, 16), 1);
    let data = cycle_corpus(&v, 70, 5);
    let batch: Vec<&Segment> = data.iter().collect();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| loss_and_gradients(&params, &batch, &emb).unwrap())
    };
    let one = run(1);
    let four = run(4);
    assert_eq!(one.0, four.0);
    assert_eq!(one.1, four.1);
}
