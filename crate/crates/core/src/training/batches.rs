use rand::seq::SliceRandom;

use crate::encoder::TokenSequence;
use crate::error::{EsclError, Result};
use crate::numerics::RngStream;

/// Shuffled batch index lists for one epoch over `corpus_len` sentences.
/// The trailing partial batch is dropped.
pub fn epoch_batches(
    corpus_len: usize,
    batch_size: usize,
    rng: &RngStream,
) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(EsclError::Config("batch size must be positive".into()));
    }
    if corpus_len < batch_size {
        return Err(EsclError::Config(format!(
            "corpus of {corpus_len} sentences is smaller than the batch size {batch_size}"
        )));
    }
    let mut order: Vec<usize> = (0..corpus_len).collect();
    order.shuffle(&mut rng.generator());
    Ok(order
        .chunks_exact(batch_size)
        .map(<[usize]>::to_vec)
        .collect())
}

/// One epoch of minibatches drawn from `corpus`, as `(corpus index, sentence)`.
pub fn make_batches<'a>(
    corpus: &'a [TokenSequence],
    batch_size: usize,
    rng: &RngStream,
) -> Result<Vec<Vec<(u64, &'a TokenSequence)>>> {
    Ok(epoch_batches(corpus.len(), batch_size, rng)?
        .into_iter()
        .map(|b| b.into_iter().map(|i| (i as u64, &corpus[i])).collect())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn drops_partial_batch() {
        let b = epoch_batches(10, 4, &RngStream::new(1)).unwrap();
        assert_eq!(b.len(), 2);
        assert!(b.iter().all(|x| x.len() == 4));
    }

    #[test]
    fn deterministic_and_without_duplicates() {
        let rng = RngStream::new(2);
        assert_eq!(
            epoch_batches(37, 5, &rng).unwrap(),
            epoch_batches(37, 5, &rng).unwrap()
        );
        let all: Vec<usize> = epoch_batches(37, 5, &rng).unwrap().concat();
        let set: HashSet<usize> = all.iter().copied().collect();
        assert_eq!(set.len(), all.len());
        assert!(all.iter().all(|&i| i < 37));
        assert_ne!(
            epoch_batches(37, 5, &rng.derive(1)).unwrap(),
            epoch_batches(37, 5, &rng).unwrap()
        );
    }

    #[test]
    fn small_corpus_rejected() {
        assert!(matches!(
            epoch_batches(3, 4, &RngStream::new(0)),
            Err(EsclError::Config(_))
        ));
    }

    #[test]
    fn make_batches_pairs_indices_with_sentences() {
        let corpus: Vec<TokenSequence> = (0..6)
            .map(|i| TokenSequence::new(vec![i + 2]).unwrap())
            .collect();
        for batch in make_batches(&corpus, 3, &RngStream::new(3)).unwrap() {
            for (i, s) in batch {
                assert_eq!(s, &corpus[i as usize]);
            }
        }
    }
}
