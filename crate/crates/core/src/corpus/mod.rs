//! Parallel corpus ingestion: tokenization, vocabularies and padded batches.

mod batch;
pub mod toy;
mod vocab;

pub use batch::{make_batches, Batch};
pub use vocab::{Vocabulary, BOS, EOS, PAD, SPECIAL_TOKENS, UNK};

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use unicode_normalization::UnicodeNormalization;

use crate::error::{NmtError, Result};

/// One aligned source/target sentence, already tokenized.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SentencePair {
    pub source: Vec<String>,
    pub target: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Source,
    Target,
}

impl SentencePair {
    pub fn side(&self, side: Side) -> &[String] {
        match side {
            Side::Source => &self.source,
            Side::Target => &self.target,
        }
    }
}

/// Pairs read from a TSV file plus the number of unusable lines.
#[derive(Clone, Debug, Default)]
pub struct Corpus {
    pub pairs: Vec<SentencePair>,
    pub skipped: usize,
}

/// Lowercases, applies canonical composition (NFC), and splits on whitespace.
/// Every character that is neither alphanumeric nor whitespace becomes a
/// token of its own.
pub fn tokenize(text: &str) -> Vec<String> {
    let normalized: String = text.to_lowercase().nfc().collect();
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in normalized.chars() {
        if c.is_alphanumeric() {
            current.push(c);
            continue;
        }
        if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
        if !c.is_whitespace() {
            tokens.push(c.to_string());
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Parses Tatoeba-style lines: `target<TAB>source[<TAB>attribution]`.
///
/// With `swap_columns` the first column is read as the source instead.
pub fn parse_tsv(text: &str, swap_columns: bool) -> Result<Corpus> {
    let mut corpus = Corpus::default();
    for line in text.lines() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let (Some(first), Some(second)) = (fields.next(), fields.next()) else {
            corpus.skipped += 1;
            continue;
        };
        let (target, source) = if swap_columns {
            (tokenize(second), tokenize(first))
        } else {
            (tokenize(first), tokenize(second))
        };
        if source.is_empty() || target.is_empty() {
            corpus.skipped += 1;
            continue;
        }
        corpus.pairs.push(SentencePair { source, target });
    }
    if corpus.pairs.is_empty() {
        return Err(NmtError::Format(format!(
            "no usable sentence pairs ({} malformed lines)",
            corpus.skipped
        )));
    }
    Ok(corpus)
}

pub fn load_tsv(path: impl AsRef<Path>, swap_columns: bool) -> Result<Corpus> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| NmtError::io(path, e))?;
    parse_tsv(&text, swap_columns).map_err(|e| match e {
        NmtError::Format(msg) => NmtError::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Deterministic shuffled split into (train, validation, test).
///
/// Partition sizes are `round(n * train_frac)` and `round(n * val_frac)`;
/// the test set receives the remainder.
pub fn split_dataset(
    pairs: &[SentencePair],
    train_frac: f64,
    val_frac: f64,
    seed: u64,
) -> Result<(Vec<SentencePair>, Vec<SentencePair>, Vec<SentencePair>)> {
    let valid = |f: f64| f > 0.0 && f <= 1.0;
    if !valid(train_frac) || !valid(val_frac) || train_frac + val_frac > 1.0 + 1e-12 {
        return Err(NmtError::Config(format!(
            "split fractions must be positive and sum to at most 1 (train {train_frac}, validation {val_frac})"
        )));
    }
    let n = pairs.len();
    let n_train = ((n as f64 * train_frac).round() as usize).min(n);
    let n_val = ((n as f64 * val_frac).round() as usize).min(n - n_train);
    Ok(split_counts(pairs, n_train, n_val, seed))
}

/// Largest test set used by the default split.
pub const DEFAULT_TEST_CAP: usize = 3900;

/// The default experimental split: 5% validation, a test set of 5% capped
/// at [`DEFAULT_TEST_CAP`] pairs, the rest for training. On the full
/// 176,692-pair German-English Tatoeba file this yields 163,957 / 8,835 / 3,900.
pub fn default_split(
    pairs: &[SentencePair],
    seed: u64,
) -> (Vec<SentencePair>, Vec<SentencePair>, Vec<SentencePair>) {
    experiment_split(pairs, 0.05, seed).expect("5% validation is always valid")
}

/// Like [`default_split`] with a custom validation fraction.
pub fn experiment_split(
    pairs: &[SentencePair],
    val_frac: f64,
    seed: u64,
) -> Result<(Vec<SentencePair>, Vec<SentencePair>, Vec<SentencePair>)> {
    if !(val_frac > 0.0 && val_frac < 0.95) {
        return Err(NmtError::Config(format!(
            "validation fraction must lie in (0, 0.95), got {val_frac}"
        )));
    }
    let n = pairs.len();
    let n_val = (n as f64 * val_frac).round() as usize;
    let n_test = ((n as f64 * 0.05).round() as usize)
        .min(DEFAULT_TEST_CAP)
        .min(n - n_val);
    Ok(split_counts(pairs, n - n_val - n_test, n_val, seed))
}

fn split_counts(
    pairs: &[SentencePair],
    n_train: usize,
    n_val: usize,
    seed: u64,
) -> (Vec<SentencePair>, Vec<SentencePair>, Vec<SentencePair>) {
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pick = |idx: &[usize]| idx.iter().map(|&i| pairs[i].clone()).collect::<Vec<_>>();
    (
        pick(&order[..n_train]),
        pick(&order[n_train..n_train + n_val]),
        pick(&order[n_train + n_val..]),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &[&str]) -> Vec<String> {
        s.iter().map(|t| t.to_string()).collect()
    }

    #[test]
    fn tokenize_splits_punctuation() {
        assert_eq!(tokenize("Hello, world!"), toks(&["hello", ",", "world", "!"]));
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("Müde."), toks(&["müde", "."]));
    }

    #[test]
    fn tokenize_composes_decomposed_umlauts() {
        let decomposed = "Mu\u{0308}de";
        assert_eq!(tokenize(decomposed), toks(&["müde"]));
    }

    #[test]
    fn tsv_reads_target_then_source() {
        let c = parse_tsv("Hi.\tHallo!\n", false).unwrap();
        assert_eq!(c.pairs.len(), 1);
        assert_eq!(c.pairs[0].source, toks(&["hallo", "!"]));
        assert_eq!(c.pairs[0].target, toks(&["hi", "."]));
    }

    #[test]
    fn tsv_drops_attribution_and_counts_bad_lines() {
        let text = "Go.\tGeh.\tCC-BY 2.0 (France) Attribution: tatoeba.org #2877272\nbroken line\n\nRun!\tLauf!\n";
        let c = parse_tsv(text, false).unwrap();
        assert_eq!(c.pairs.len(), 2);
        assert_eq!(c.skipped, 1);
        assert_eq!(c.pairs[0].source, toks(&["geh", "."]));
    }

    #[test]
    fn tsv_swap_columns() {
        let c = parse_tsv("Hi.\tHallo!", true).unwrap();
        assert_eq!(c.pairs[0].source, toks(&["hi", "."]));
    }

    #[test]
    fn empty_tsv_is_a_format_error() {
        assert!(matches!(parse_tsv("", false), Err(NmtError::Format(_))));
        assert!(matches!(parse_tsv("no tabs here\n", false), Err(NmtError::Format(_))));
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let err = load_tsv("/nonexistent/corpus.tsv", false).unwrap_err();
        assert!(matches!(err, NmtError::Io { .. }));
    }

    fn numbered(n: usize) -> Vec<SentencePair> {
        (0..n)
            .map(|i| SentencePair {
                source: vec![format!("s{i}")],
                target: vec![format!("t{i}")],
            })
            .collect()
    }

    #[test]
    fn split_sizes_and_partition() {
        let pairs = numbered(100);
        let (tr, va, te) = split_dataset(&pairs, 0.90, 0.05, 7).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (90, 5, 5));
        let mut all: Vec<_> = tr.iter().chain(&va).chain(&te).cloned().collect();
        all.sort_by(|a, b| a.source.cmp(&b.source));
        let mut expected = pairs.clone();
        expected.sort_by(|a, b| a.source.cmp(&b.source));
        assert_eq!(all, expected);
        assert_eq!(split_dataset(&pairs, 0.90, 0.05, 7).unwrap().0, tr);
    }

    #[test]
    fn split_rejects_bad_fractions() {
        let pairs = numbered(10);
        assert!(split_dataset(&pairs, 0.0, 0.1, 1).is_err());
        assert!(split_dataset(&pairs, 0.9, 0.2, 1).is_err());
        assert!(split_dataset(&pairs, 1.2, 0.1, 1).is_err());
    }

    #[test]
    fn default_split_matches_full_tatoeba_counts() {
        let pairs = numbered(176_692);
        let (tr, va, te) = default_split(&pairs, 0);
        assert_eq!((tr.len(), va.len(), te.len()), (163_957, 8_835, 3_900));
    }
}
