#![allow(dead_code)]

use escl::encoder::TokenSequence;
use escl::evaluation::{
    build_vocab, generate_synthetic_corpus, tokenize, tokenize_pairs, StsPair, SyntheticData,
    SyntheticSpec, Vocabulary,
};

pub struct Bench {
    pub data: SyntheticData,
    pub vocab: Vocabulary,
    pub corpus: Vec<TokenSequence>,
    pub pairs: Vec<StsPair>,
}

pub fn bench(seed: u64, n_train: usize, n_pairs: usize, vocab_size: usize) -> Bench {
    let data = generate_synthetic_corpus(SyntheticSpec {
        seed,
        n_train,
        n_pairs,
        vocab_size,
    })
    .unwrap();
    let (vocab, _) = build_vocab(data.corpus.iter().map(String::as_str)).unwrap();
    let corpus = data
        .corpus
        .iter()
        .map(|l| tokenize(l, &vocab).unwrap())
        .collect();
    let pairs = tokenize_pairs(&data.pairs, &vocab).unwrap();
    Bench {
        data,
        vocab,
        corpus,
        pairs,
    }
}

/// The benchmark every directional check runs on.
pub fn standard_bench() -> Bench {
    bench(0, 512, 256, 200)
}

pub fn small_bench() -> Bench {
    bench(5, 96, 40, 60)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}
