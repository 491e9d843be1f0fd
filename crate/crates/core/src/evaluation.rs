//! Corpus BLEU, batch translation and ablation sweeps.

use std::collections::HashMap;
use std::fmt;

use crate::config::TrainConfig;
use crate::corpus::{tokenize, SentencePair};
use crate::error::{NmtError, Result};
use crate::training::{fit, TrainedModel};

/// Maximum n-gram order.
pub const BLEU_ORDER: usize = 4;

/// Full-scale reference scores at depth 3, with and without position
/// embeddings. Printed next to desk-scale results; not expected from them.
pub const ANCHOR_BLEU_WITH_POSITION: f64 = 30.6;
pub const ANCHOR_BLEU_WITHOUT_POSITION: f64 = 27.9;

/// Sentences translated per forward pass in [`translate_tokens`].
const TRANSLATE_BATCH: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct BleuReport {
    /// 0 to 100.
    pub bleu: f64,
    /// Modified n-gram precisions after the zero floor, orders 1 to 4.
    pub precisions: [f64; BLEU_ORDER],
    pub brevity_penalty: f64,
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl fmt::Display for BleuReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = &self.precisions;
        write!(
            f,
            "BLEU = {:.2}  p1..p4 = {:.4}/{:.4}/{:.4}/{:.4}  BP = {:.4}  (hyp_len = {}, ref_len = {})",
            self.bleu, p[0], p[1], p[2], p[3], self.brevity_penalty, self.hyp_len, self.ref_len
        )
    }
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            let key: Vec<&str> = window.iter().map(AsRef::as_ref).collect();
            *counts.entry(key).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus-level BLEU-4 with clipped n-gram precision and a single reference.
///
/// A zero precision is floored at `1 / (2 * c)` where `c` is the number of
/// hypothesis n-grams of that order (at least 1). An order with no n-grams
/// on either side (all sentences shorter than n) counts as precision 1.
/// An empty hypothesis corpus scores 0.
pub fn bleu_corpus<H, R>(hypotheses: &[Vec<H>], references: &[Vec<R>]) -> Result<BleuReport>
where
    H: AsRef<str>,
    R: AsRef<str>,
{
    if hypotheses.len() != references.len() {
        return Err(NmtError::Invalid(format!(
            "{} hypotheses but {} references",
            hypotheses.len(),
            references.len()
        )));
    }
    if hypotheses.is_empty() {
        return Err(NmtError::Invalid("BLEU needs at least one sentence".into()));
    }
    let mut matches = [0usize; BLEU_ORDER];
    let mut hyp_total = [0usize; BLEU_ORDER];
    let mut ref_total = [0usize; BLEU_ORDER];
    for (hyp, reference) in hypotheses.iter().zip(references) {
        for n in 1..=BLEU_ORDER {
            let h = ngram_counts(hyp, n);
            let r = ngram_counts(reference, n);
            for (gram, &count) in &h {
                matches[n - 1] += count.min(r.get(gram).copied().unwrap_or(0));
            }
            hyp_total[n - 1] += hyp.len().saturating_sub(n - 1);
            ref_total[n - 1] += reference.len().saturating_sub(n - 1);
        }
    }
    let hyp_len = hyp_total[0];
    let ref_len = ref_total[0];
    let mut precisions = [0.0; BLEU_ORDER];
    for n in 0..BLEU_ORDER {
        precisions[n] = if hyp_total[n] == 0 && ref_total[n] == 0 {
            1.0
        } else if matches[n] == 0 {
            1.0 / (2.0 * hyp_total[n].max(1) as f64)
        } else {
            matches[n] as f64 / hyp_total[n] as f64
        };
    }
    let brevity_penalty = if hyp_len == 0 {
        0.0
    } else if hyp_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    let log_mean = precisions.iter().map(|p| p.ln()).sum::<f64>() / BLEU_ORDER as f64;
    let bleu = (100.0 * brevity_penalty * log_mean.exp()).clamp(0.0, 100.0);
    Ok(BleuReport {
        bleu,
        precisions,
        brevity_penalty,
        hyp_len,
        ref_len,
    })
}

/// Greedy translation of pre-tokenized sentences.
///
/// Out-of-vocabulary tokens map to UNK, sources longer than the position
/// table are truncated, and empty sources yield empty translations.
pub fn translate_tokens<S: AsRef<str>>(trained: &TrainedModel, sources: &[Vec<S>], max_len: usize) -> Result<Vec<Vec<String>>> {
    let limit = trained.config.max_positions;
    let mut out = vec![Vec::new(); sources.len()];
    let todo: Vec<(usize, Vec<usize>)> = sources
        .iter()
        .enumerate()
        .filter(|(_, s)| !s.is_empty())
        .map(|(i, s)| {
            let mut ids = trained.src_vocab.encode(s);
            ids.truncate(limit);
            (i, ids)
        })
        .collect();
    for chunk in todo.chunks(TRANSLATE_BATCH) {
        let ids: Vec<Vec<usize>> = chunk.iter().map(|(_, ids)| ids.clone()).collect();
        let decoded = trained.model.translate_ids(&ids, max_len)?;
        for ((i, _), hyp) in chunk.iter().zip(decoded) {
            out[*i] = trained.tgt_vocab.decode(&hyp);
        }
    }
    Ok(out)
}

/// Tokenizes raw sentences and translates them; one token list per input.
pub fn translate_corpus<S: AsRef<str>>(trained: &TrainedModel, sources: &[S], max_len: usize) -> Result<Vec<Vec<String>>> {
    let tokenized: Vec<Vec<String>> = sources.iter().map(|s| tokenize(s.as_ref())).collect();
    translate_tokens(trained, &tokenized, max_len)
}

/// Translates every source in `pairs` and scores against the targets.
pub fn evaluate_pairs(trained: &TrainedModel, pairs: &[SentencePair]) -> Result<BleuReport> {
    let sources: Vec<Vec<String>> = pairs.iter().map(|p| p.source.clone()).collect();
    let refs: Vec<Vec<String>> = pairs.iter().map(|p| p.target.clone()).collect();
    let hyps = translate_tokens(trained, &sources, trained.config.max_decode_len)?;
    bleu_corpus(&hyps, &refs)
}

/// Column names of [`csv_row`].
pub fn csv_header() -> String {
    let mut cols: Vec<String> = TrainConfig::default()
        .to_pairs()
        .into_iter()
        .map(|(k, _)| k.to_string())
        .collect();
    cols.extend(
        ["epochs_run", "val_loss", "p1", "p2", "p3", "p4", "bp", "bleu", "hyp_len", "ref_len"]
            .iter()
            .map(|s| s.to_string()),
    );
    cols.join(",")
}

/// One machine-readable result line: every config value, then the scores.
pub fn csv_row(config: &TrainConfig, epochs_run: usize, val_loss: f64, report: &BleuReport) -> String {
    let mut cols: Vec<String> = config.to_pairs().into_iter().map(|(_, v)| v).collect();
    cols.push(epochs_run.to_string());
    cols.push(format!("{val_loss:?}"));
    cols.extend(report.precisions.iter().map(|p| format!("{p:?}")));
    cols.push(format!("{:?}", report.brevity_penalty));
    cols.push(format!("{:?}", report.bleu));
    cols.push(report.hyp_len.to_string());
    cols.push(report.ref_len.to_string());
    cols.join(",")
}

#[derive(Clone, Debug)]
pub struct AblationRow {
    pub config: TrainConfig,
    pub epochs_run: usize,
    pub val_loss: f64,
    pub test: BleuReport,
}

#[derive(Clone, Debug, Default)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn find(&self, conv_layers: usize, position_embedding: bool) -> Vec<&AblationRow> {
        self.rows
            .iter()
            .filter(|r| r.config.conv_layers == conv_layers && r.config.position_embedding == position_embedding)
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = csv_header();
        out.push('\n');
        for r in &self.rows {
            out.push_str(&csv_row(&r.config, r.epochs_run, r.val_loss, &r.test));
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for AblationTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "# corpus BLEU-4, zero precisions floored at 1/(2*count); full-scale anchors at depth 3: \
             {ANCHOR_BLEU_WITH_POSITION} with / {ANCHOR_BLEU_WITHOUT_POSITION} without position embedding"
        )?;
        writeln!(f, "{:>5} {:>4} {:>6} {:>7} {:>9} {:>7} {:>6} {:>7}", "depth", "pos", "seed", "epochs", "val_loss", "p1", "BP", "BLEU")?;
        for r in &self.rows {
            writeln!(
                f,
                "{:>5} {:>4} {:>6} {:>7} {:>9.4} {:>7.4} {:>6.3} {:>7.2}",
                r.config.conv_layers,
                if r.config.position_embedding { "on" } else { "off" },
                r.config.seed,
                r.epochs_run,
                r.val_loss,
                r.test.precisions[0],
                r.test.brevity_penalty,
                r.test.bleu
            )?;
        }
        Ok(())
    }
}

/// Trains one model per (depth, position embedding) combination on a shared
/// split and seed, reporting validation loss and test BLEU for each.
pub fn ablation_sweep(
    train: &[SentencePair],
    val: &[SentencePair],
    test: &[SentencePair],
    depths: &[usize],
    position_embedding: &[bool],
    base: &TrainConfig,
    mut on_row: impl FnMut(&AblationRow),
) -> Result<AblationTable> {
    let mut table = AblationTable::default();
    for &depth in depths {
        for &pos in position_embedding {
            let mut config = base.clone();
            config.conv_layers = depth;
            config.position_embedding = pos;
            let outcome = fit(train, val, &config, |_| {})?;
            let test_report = evaluate_pairs(&outcome.best, test)?;
            let row = AblationRow {
                config,
                epochs_run: outcome.history.len(),
                val_loss: outcome.best.best_val_loss,
                test: test_report,
            };
            on_row(&row);
            table.rows.push(row);
        }
    }
    Ok(table)
}

/// Median of a nonempty slice (mean of the middle two for even lengths).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[mid] } else { (v[mid - 1] + v[mid]) / 2.0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn clipped_unigram_precision() {
        let r = bleu_corpus(&[toks("the the the")], &[toks("the cat")]).unwrap();
        assert_eq!(r.precisions[0], 1.0 / 3.0);
        assert_eq!(r.hyp_len, 3);
        assert_eq!(r.ref_len, 2);
        assert_eq!(r.brevity_penalty, 1.0);
    }

    #[test]
    fn identity_is_100() {
        let h = vec![toks("a b c d e"), toks("x y"), toks("q")];
        assert_eq!(bleu_corpus(&h, &h).unwrap().bleu, 100.0);
    }

    #[test]
    fn disjoint_is_small_and_finite() {
        let hyps = vec![toks("a b c d"); 25];
        let refs = vec![toks("w x y z"); 25];
        let r = bleu_corpus(&hyps, &refs).unwrap();
        assert!(r.bleu.is_finite() && r.bleu > 0.0 && r.bleu < 1.0, "{r}");
    }

    #[test]
    fn brevity_penalty_applies_to_short_output() {
        let r = bleu_corpus(&[toks("a b")], &[toks("a b c d")]).unwrap();
        assert!((r.brevity_penalty - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn empty_hypothesis_scores_zero() {
        let r = bleu_corpus(&[Vec::<String>::new()], &[toks("a b")]).unwrap();
        assert_eq!(r.bleu, 0.0);
    }

    #[test]
    fn count_mismatch_is_an_error() {
        assert!(bleu_corpus(&[toks("a")], &[toks("a"), toks("b")]).is_err());
    }

    #[test]
    fn median_handles_odd_and_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn csv_header_and_row_align() {
        let report = bleu_corpus(&[toks("a b")], &[toks("a b")]).unwrap();
        let row = csv_row(&TrainConfig::default(), 3, 1.5, &report);
        assert_eq!(csv_header().split(',').count(), row.split(',').count());
    }
}
