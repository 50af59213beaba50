use serde::{Deserialize, Serialize};

use super::vocab::{tokenize, Vocabulary};
use crate::encoder::{embed, EncoderParams, TokenSequence};
use crate::error::{EsclError, Result};
use crate::numerics::{cosine_similarity, spearman_rho};
use crate::parallel;

/// A sentence pair with a gold similarity score, as read from text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawStsPair {
    pub sentence_a: String,
    pub sentence_b: String,
    pub gold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StsPair {
    pub sentence_a: TokenSequence,
    pub sentence_b: TokenSequence,
    pub gold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub dataset: String,
    pub rho: f64,
    pub n_pairs: usize,
}

/// Rho over several seeds of the same setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub dataset: String,
    pub seeds: Vec<u64>,
    pub per_seed_rho: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (0 for a single seed).
    pub std: f64,
    pub median: f64,
}

impl SeedSummary {
    pub fn new(dataset: impl Into<String>, seeds: Vec<u64>, per_seed_rho: Vec<f64>) -> Self {
        let (mean, std, median) = summarize(&per_seed_rho);
        SeedSummary {
            dataset: dataset.into(),
            seeds,
            per_seed_rho,
            mean,
            std,
            median,
        }
    }
}

/// Mean, sample standard deviation and median.
pub(crate) fn summarize(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    (mean, std, median)
}

/// Parses header-less `sentence_a<TAB>sentence_b<TAB>score` lines. All
/// malformed lines are reported; the first one's number is in the error.
pub fn parse_sts(text: &str, source: &str) -> Result<Vec<RawStsPair>> {
    let mut pairs = Vec::new();
    let mut bad: Vec<(usize, String)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            bad.push((
                line_no,
                format!("expected 3 tab-separated fields, found {}", fields.len()),
            ));
            continue;
        }
        if fields[0].trim().is_empty() || fields[1].trim().is_empty() {
            bad.push((line_no, "empty sentence".into()));
            continue;
        }
        match fields[2].trim().parse::<f64>() {
            Ok(gold) if gold.is_finite() => pairs.push(RawStsPair {
                sentence_a: fields[0].to_string(),
                sentence_b: fields[1].to_string(),
                gold,
            }),
            _ => bad.push((
                line_no,
                format!("score '{}' is not a finite number", fields[2]),
            )),
        }
    }
    if let Some((line, reason)) = bad.first() {
        let others: Vec<String> = bad[1..].iter().map(|(l, _)| l.to_string()).collect();
        let reason = if others.is_empty() {
            reason.clone()
        } else {
            format!("{reason} (also malformed: lines {})", others.join(", "))
        };
        return Err(EsclError::Parse {
            path: source.to_string(),
            line: *line,
            reason,
        });
    }
    Ok(pairs)
}

/// Inverse of [`parse_sts`].
pub fn format_sts(pairs: &[RawStsPair]) -> String {
    let mut s = String::new();
    for p in pairs {
        s.push_str(&format!("{}\t{}\t{}\n", p.sentence_a, p.sentence_b, p.gold));
    }
    s
}

/// Non-empty lines of a one-sentence-per-line corpus, plus the number of
/// empty lines skipped.
pub fn parse_corpus(text: &str) -> (Vec<String>, usize) {
    let mut skipped = 0;
    let lines = text
        .lines()
        .filter(|l| {
            let keep = !l.trim().is_empty();
            skipped += usize::from(!keep);
            keep
        })
        .map(str::to_string)
        .collect();
    (lines, skipped)
}

pub fn tokenize_pairs(raw: &[RawStsPair], vocab: &Vocabulary) -> Result<Vec<StsPair>> {
    raw.iter()
        .map(|p| {
            Ok(StsPair {
                sentence_a: tokenize(&p.sentence_a, vocab)?,
                sentence_b: tokenize(&p.sentence_b, vocab)?,
                gold: p.gold,
            })
        })
        .collect()
}

/// Spearman's rho between dropout-free cosine similarities and gold scores.
pub fn evaluate_sts(
    params: &EncoderParams,
    pairs: &[StsPair],
    dataset: &str,
) -> Result<EvalResult> {
    if pairs.len() < 2 {
        return Err(EsclError::Degenerate(format!(
            "{dataset}: need at least 2 pairs, got {}",
            pairs.len()
        )));
    }
    let gold: Vec<f64> = pairs.iter().map(|p| p.gold).collect();
    if gold.iter().all(|&g| g == gold[0]) {
        return Err(EsclError::Degenerate(format!(
            "{dataset}: all gold scores are equal"
        )));
    }
    let embedded = parallel::map(pairs, |p| {
        Ok((embed(params, &p.sentence_a)?, embed(params, &p.sentence_b)?))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    score_embeddings(&embedded, &gold, dataset)
}

/// Spearman's rho between the cosine similarity of each embedding pair and
/// the gold scores.
pub fn score_embeddings(
    embedded: &[(Vec<f64>, Vec<f64>)],
    gold: &[f64],
    dataset: &str,
) -> Result<EvalResult> {
    if embedded.len() != gold.len() {
        return Err(EsclError::Dimension(format!(
            "{dataset}: {} embedded pairs for {} gold scores",
            embedded.len(),
            gold.len()
        )));
    }
    let sims = embedded
        .iter()
        .map(|(a, b)| cosine_similarity(a, b))
        .collect::<Result<Vec<f64>>>()?;
    if sims.iter().all(|&s| s == sims[0]) {
        return Err(EsclError::Degenerate(format!(
            "{dataset}: every pair has the same model similarity"
        )));
    }
    let rho =
        spearman_rho(&sims, gold).map_err(|e| EsclError::Degenerate(format!("{dataset}: {e}")))?;
    Ok(EvalResult {
        dataset: dataset.to_string(),
        rho,
        n_pairs: embedded.len(),
    })
}
