//! Synthetic benchmark with synonym structure.
//!
//! Words are partitioned into synonym classes. A training sentence draws a
//! few classes and two distinct members of each, so synonyms co-occur. An
//! evaluation pair shares a controlled number of classes, always realized
//! with different members on the two sides, and its gold score is the
//! fraction of shared classes. Raw token identity therefore carries no
//! signal; only an encoder that has learned the synonym structure can rank
//! the pairs.

use std::collections::HashMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use super::sts::RawStsPair;
use crate::error::{EsclError, Result};
use crate::numerics::RngStream;

/// Classes mentioned in every generated sentence; gives `CLASSES_PER_SENTENCE + 1`
/// gold levels.
pub const CLASSES_PER_SENTENCE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub n_train: usize,
    pub n_pairs: usize,
    /// Vocabulary size including the two reserved ids.
    pub vocab_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub corpus: Vec<String>,
    pub pairs: Vec<RawStsPair>,
    /// Synonym classes, each a list of words.
    pub classes: Vec<Vec<String>>,
}

impl SyntheticData {
    /// Word to class index.
    pub fn class_map(&self) -> HashMap<&str, usize> {
        self.classes
            .iter()
            .enumerate()
            .flat_map(|(c, words)| words.iter().map(move |w| (w.as_str(), c)))
            .collect()
    }

    /// Cosine between the class-count vectors of two sentences: a
    /// bag-of-words overlap score computed after mapping words to classes.
    pub fn class_overlap_score(&self, a: &str, b: &str) -> f64 {
        let map = self.class_map();
        let counts = |s: &str| {
            let mut v = vec![0.0; self.classes.len()];
            for w in s.split_whitespace() {
                if let Some(&c) = map.get(w) {
                    v[c] += 1.0;
                }
            }
            v
        };
        let (x, y) = (counts(a), counts(b));
        let dot: f64 = x.iter().zip(&y).map(|(p, q)| p * q).sum();
        let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if nx == 0.0 || ny == 0.0 {
            0.0
        } else {
            dot / (nx * ny)
        }
    }
}

fn word(i: usize) -> String {
    format!("w{i:03}")
}

/// Generates a training corpus and graded evaluation pairs.
pub fn generate_synthetic_corpus(spec: SyntheticSpec) -> Result<SyntheticData> {
    if spec.n_train == 0 || spec.n_pairs == 0 {
        return Err(EsclError::Config(
            "n_train and n_pairs must be at least 1".into(),
        ));
    }
    if spec.vocab_size < 20 {
        return Err(EsclError::Config(format!(
            "vocab_size must be at least 20, got {}",
            spec.vocab_size
        )));
    }
    let root = RngStream::new(spec.seed).derive_label("synthetic");
    let n_words = spec.vocab_size - 2;
    let class_size = (n_words / (2 * CLASSES_PER_SENTENCE)).clamp(2, 4);
    let n_classes = n_words / class_size;

    let mut ids: Vec<usize> = (0..n_words).collect();
    ids.shuffle(&mut root.derive_label("classes").generator());
    let mut classes: Vec<Vec<String>> = vec![Vec::new(); n_classes];
    for (pos, &id) in ids.iter().enumerate() {
        classes[pos % n_classes].push(word(id));
    }

    let mut g = root.derive_label("train").generator();
    let corpus = (0..spec.n_train)
        .map(|_| {
            let chosen = rand::seq::index::sample(&mut g, n_classes, CLASSES_PER_SENTENCE);
            let mut tokens: Vec<&str> = Vec::new();
            for c in chosen {
                tokens.extend(classes[c].choose_multiple(&mut g, 2).map(String::as_str));
            }
            tokens.shuffle(&mut g);
            tokens.join(" ")
        })
        .collect();

    let mut g = root.derive_label("pairs").generator();
    let k = CLASSES_PER_SENTENCE;
    let mut pairs: Vec<RawStsPair> = (0..spec.n_pairs)
        .map(|i| {
            let shared = i % (k + 1);
            let picked = rand::seq::index::sample(&mut g, n_classes, 2 * k - shared).into_vec();
            let a_classes = &picked[..k];
            let b_classes: Vec<usize> = picked[..shared]
                .iter()
                .chain(&picked[k..])
                .copied()
                .collect();

            let mut a_tokens: Vec<&str> = Vec::new();
            let mut b_tokens: Vec<&str> = Vec::new();
            for &c in a_classes {
                let mut members: Vec<&str> = classes[c].iter().map(String::as_str).collect();
                members.shuffle(&mut g);
                // a takes up to half of the class so b can use different members
                let take = g.random_range(1..=(members.len() / 2).max(1));
                a_tokens.extend(&members[..take]);
                if b_classes.contains(&c) {
                    let rest = &members[take..];
                    let take_b = g.random_range(1..=rest.len().min(2));
                    b_tokens.extend(&rest[..take_b]);
                }
            }
            for &c in &picked[k..] {
                let n = g.random_range(1..=classes[c].len().min(2));
                b_tokens.extend(classes[c].choose_multiple(&mut g, n).map(String::as_str));
            }
            a_tokens.shuffle(&mut g);
            b_tokens.shuffle(&mut g);
            RawStsPair {
                sentence_a: a_tokens.join(" "),
                sentence_b: b_tokens.join(" "),
                gold: shared as f64 / k as f64,
            }
        })
        .collect();
    pairs.shuffle(&mut g);

    Ok(SyntheticData {
        corpus,
        pairs,
        classes,
    })
}
