use std::collections::HashMap;

use log::warn;

use crate::encoder::TokenSequence;
use crate::error::{EsclError, Result};

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
const RESERVED: [&str; 2] = ["<pad>", "<unk>"];

/// Token to id map. Ids 0 and 1 are reserved for padding and unknown
/// tokens; the rest are assigned in first-occurrence order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

/// Counts from bulk ingestion.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub lines_read: usize,
    pub empty_lines_skipped: usize,
}

fn words(line: &str) -> impl Iterator<Item = String> + '_ {
    line.split_whitespace().map(str::to_lowercase)
}

impl Vocabulary {
    /// A vocabulary holding only the reserved entries.
    pub fn empty() -> Self {
        Vocabulary::from_tokens(Vec::<String>::new()).expect("no duplicates")
    }

    /// Builds from non-reserved tokens in id order (ids start at 2).
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocabulary {
            tokens: RESERVED.iter().map(|s| s.to_string()).collect(),
            index: HashMap::new(),
        };
        for t in tokens {
            let t = t.into();
            if RESERVED.contains(&t.as_str()) || v.index.contains_key(&t) {
                return Err(EsclError::Input(format!(
                    "duplicate vocabulary entry '{t}'"
                )));
            }
            v.index.insert(t.clone(), v.tokens.len());
            v.tokens.push(t);
        }
        Ok(v)
    }

    fn insert(&mut self, token: String) {
        if !self.index.contains_key(&token) {
            self.index.insert(token.clone(), self.tokens.len());
            self.tokens.push(token);
        }
    }

    /// Number of ids including the reserved ones.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() == RESERVED.len()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// Non-reserved tokens in id order.
    pub fn entries(&self) -> &[String] {
        &self.tokens[RESERVED.len()..]
    }
}

/// Whitespace-tokenized, lowercased vocabulary over `lines`. Empty lines are
/// skipped with a warning and counted.
pub fn build_vocab<'a, I>(lines: I) -> Result<(Vocabulary, IngestReport)>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut vocab = Vocabulary::empty();
    let mut report = IngestReport::default();
    for (i, line) in lines.into_iter().enumerate() {
        report.lines_read += 1;
        if line.trim().is_empty() {
            warn!("skipping empty line {}", i + 1);
            report.empty_lines_skipped += 1;
            continue;
        }
        words(line).for_each(|w| vocab.insert(w));
    }
    if report.lines_read == report.empty_lines_skipped {
        return Err(EsclError::Input(
            "no non-empty lines to build a vocabulary from".into(),
        ));
    }
    Ok((vocab, report))
}

/// Maps a line to ids; unseen tokens become [`UNK_ID`].
pub fn tokenize(line: &str, vocab: &Vocabulary) -> Result<TokenSequence> {
    let ids: Vec<usize> = words(line).map(|w| vocab.id(&w)).collect();
    if ids.is_empty() {
        return Err(EsclError::Input("cannot tokenize an empty line".into()));
    }
    TokenSequence::new(ids)
}
