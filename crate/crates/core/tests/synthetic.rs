use news_entropy::synthetic::{generate_corpus, BigramChain, SyntheticSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn two_state(p: [[f64; 2]; 2]) -> BigramChain {
    BigramChain::new(vec!["a".into(), "b".into()], p.iter().map(|r| r.to_vec()).collect()).unwrap()
}

#[test]
fn two_state_cross_entropy_matches_simulation() {
    let old: [[f64; 2]; 2] = [[0.9, 0.1], [0.3, 0.7]];
    let new: [[f64; 2]; 2] = [[0.5, 0.5], [0.8, 0.2]];
    // stationary law of a two-state chain: pi_0 = q / (p + q) with p = P(0->1), q = P(1->0)
    let pi0 = new[1][0] / (new[0][1] + new[1][0]);
    let pi = [pi0, 1.0 - pi0];
    let closed: f64 = (0..2)
        .flat_map(|i| (0..2).map(move |j| (i, j)))
        .map(|(i, j)| -pi[i] * new[i][j] * old[i][j].ln())
        .sum();
    let (old_c, new_c) = (two_state(old), two_state(new));
    assert!((new_c.cross_entropy_rate(&old_c).unwrap() - closed).abs() < 1e-12);

    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let path = new_c.sampler().unwrap().sample(1_000_000, &mut rng);
    let mc: f64 = path.windows(2).map(|w| -old[w[0]][w[1]].ln()).sum::<f64>() / (path.len() - 1) as f64;
    assert!((mc - closed).abs() / closed < 0.01, "simulated {mc}, closed form {closed}");
}

#[test]
fn generated_bigrams_converge_to_the_chain() {
    let spec = SyntheticSpec {
        vocab_size: 20,
        clusters: 4,
        months: 1,
        articles_per_month: 8400,
        shift_month: None,
        seed: 5,
        ..Default::default()
    };
    let corpus = generate_corpus(&spec).unwrap();
    let chain = &corpus.metadata.pre;
    let v = chain.words.len();
    let index = |w: &str| chain.words.iter().position(|x| x == w).unwrap();
    let mut unigram = vec![0.0; v];
    let mut bigram = vec![vec![0.0; v]; v];
    let (mut tokens, mut pairs) = (0.0, 0.0);
    for a in &corpus.articles {
        let ids: Vec<usize> = a.body.split_whitespace().map(index).collect();
        for &i in &ids {
            unigram[i] += 1.0;
            tokens += 1.0;
        }
        for w in ids.windows(2) {
            bigram[w[0]][w[1]] += 1.0;
            pairs += 1.0;
        }
    }
    assert!(tokens >= 1e6);
    let pi = &corpus.metadata.stationary_pre;
    let tv_uni: f64 = 0.5 * (0..v).map(|i| (unigram[i] / tokens - pi[i]).abs()).sum::<f64>();
    let tv_bi: f64 = 0.5
        * (0..v)
            .flat_map(|i| (0..v).map(move |j| (i, j)))
            .map(|(i, j)| (bigram[i][j] / pairs - pi[i] * chain.trans[i][j]).abs())
            .sum::<f64>();
    assert!(tv_uni < 0.02 && tv_bi < 0.02, "unigram TV {tv_uni}, bigram TV {tv_bi}");
}
