use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{SentencePair, Vocabulary, BOS, EOS, PAD};
use crate::error::{NmtError, Result};

/// Padded id matrices for one mini-batch.
///
/// Target rows are `BOS w_1 .. w_m EOS` followed by `PAD`; `tgt_lengths`
/// counts the BOS and EOS markers. `pair_indices` records which input pair
/// each row came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    pub src_ids: Vec<Vec<usize>>,
    pub src_lengths: Vec<usize>,
    pub tgt_ids: Vec<Vec<usize>>,
    pub tgt_lengths: Vec<usize>,
    pub tgt_mask: Vec<Vec<u8>>,
    pub pair_indices: Vec<usize>,
}

fn pad_rows(rows: &[Vec<usize>]) -> (Vec<Vec<usize>>, Vec<usize>) {
    let width = rows.iter().map(Vec::len).max().unwrap_or(0);
    let lengths = rows.iter().map(Vec::len).collect();
    let padded = rows
        .iter()
        .map(|r| {
            let mut row = r.clone();
            row.resize(width, PAD);
            row
        })
        .collect();
    (padded, lengths)
}

fn mask_for(lengths: &[usize], width: usize) -> Vec<Vec<u8>> {
    lengths
        .iter()
        .map(|&len| (0..width).map(|t| u8::from(t < len)).collect())
        .collect()
}

impl Batch {
    /// Builds a batch from encoded (source, target) id sequences. Targets are
    /// given without BOS/EOS.
    pub fn from_ids(rows: &[(Vec<usize>, Vec<usize>)]) -> Self {
        let src: Vec<Vec<usize>> = rows.iter().map(|(s, _)| s.clone()).collect();
        let tgt: Vec<Vec<usize>> = rows
            .iter()
            .map(|(_, t)| {
                let mut row = Vec::with_capacity(t.len() + 2);
                row.push(BOS);
                row.extend_from_slice(t);
                row.push(EOS);
                row
            })
            .collect();
        let (src_ids, src_lengths) = pad_rows(&src);
        let (tgt_ids, tgt_lengths) = pad_rows(&tgt);
        let width = tgt_ids.first().map_or(0, Vec::len);
        Self {
            tgt_mask: mask_for(&tgt_lengths, width),
            src_ids,
            src_lengths,
            tgt_ids,
            tgt_lengths,
            pair_indices: (0..rows.len()).collect(),
        }
    }

    /// A source-only batch, used for translation. Targets hold just `BOS EOS`.
    pub fn from_sources(sources: &[Vec<usize>]) -> Self {
        let rows: Vec<_> = sources.iter().map(|s| (s.clone(), Vec::new())).collect();
        Self::from_ids(&rows)
    }

    pub fn len(&self) -> usize {
        self.src_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src_ids.is_empty()
    }

    pub fn src_width(&self) -> usize {
        self.src_ids.first().map_or(0, Vec::len)
    }

    pub fn tgt_width(&self) -> usize {
        self.tgt_ids.first().map_or(0, Vec::len)
    }

    pub fn src_mask(&self) -> Vec<Vec<u8>> {
        mask_for(&self.src_lengths, self.src_width())
    }

    /// Number of predicted target tokens (every target position after BOS).
    pub fn target_tokens(&self) -> usize {
        self.tgt_lengths.iter().map(|l| l.saturating_sub(1)).sum()
    }
}

/// Groups pairs into length-bucketed batches.
///
/// Pairs are shuffled with `shuffle_seed`, stably sorted by source length,
/// cut into consecutive chunks of `batch_size`, and the chunk order is then
/// shuffled again. Every pair lands in exactly one batch.
pub fn make_batches(
    pairs: &[SentencePair],
    src_vocab: &Vocabulary,
    tgt_vocab: &Vocabulary,
    batch_size: usize,
    shuffle_seed: u64,
) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(NmtError::Config("batch size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut rng);
    order.sort_by_key(|&i| pairs[i].source.len());

    let mut batches: Vec<Batch> = order
        .chunks(batch_size)
        .map(|chunk| {
            let rows: Vec<_> = chunk
                .iter()
                .map(|&i| {
                    (
                        src_vocab.encode(&pairs[i].source),
                        tgt_vocab.encode(&pairs[i].target),
                    )
                })
                .collect();
            let mut b = Batch::from_ids(&rows);
            b.pair_indices = chunk.to_vec();
            b
        })
        .collect();
    batches.shuffle(&mut rng);
    Ok(batches)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Side;

    fn pair(src_len: usize, tag: usize) -> SentencePair {
        SentencePair {
            source: (0..src_len).map(|i| format!("w{}", (i + tag) % 3)).collect(),
            target: vec![format!("t{}", tag % 2)],
        }
    }

    fn vocabs(pairs: &[SentencePair]) -> (Vocabulary, Vocabulary) {
        (
            Vocabulary::build(pairs, Side::Source, 100, 1).unwrap(),
            Vocabulary::build(pairs, Side::Target, 100, 1).unwrap(),
        )
    }

    #[test]
    fn batch_counts() {
        let pairs: Vec<_> = (0..5).map(|i| pair(2 + i, i)).collect();
        let (sv, tv) = vocabs(&pairs);
        let batches = make_batches(&pairs, &sv, &tv, 2, 0).unwrap();
        let mut sizes: Vec<_> = batches.iter().map(Batch::len).collect();
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        assert_eq!(sizes, vec![2, 2, 1]);
    }

    #[test]
    fn padding_and_masks() {
        let pairs = vec![pair(3, 0), pair(5, 1)];
        let (sv, tv) = vocabs(&pairs);
        let b = &make_batches(&pairs, &sv, &tv, 2, 0).unwrap()[0];
        assert_eq!(b.src_width(), 5);
        let short = b.src_lengths.iter().position(|&l| l == 3).unwrap();
        assert_eq!(&b.src_ids[short][3..], &[PAD, PAD]);
        assert_eq!(b.src_mask()[short], vec![1, 1, 1, 0, 0]);
        for (row, len) in b.tgt_mask.iter().zip(&b.tgt_lengths) {
            assert_eq!(row.iter().map(|&m| m as usize).sum::<usize>(), *len);
        }
        assert_eq!(b.tgt_ids[0][0], BOS);
        assert_eq!(b.tgt_ids[0][2], EOS);
    }

    #[test]
    fn zero_batch_size_is_rejected() {
        let pairs = vec![pair(1, 0)];
        let (sv, tv) = vocabs(&pairs);
        assert!(make_batches(&pairs, &sv, &tv, 0, 0).is_err());
    }

    #[test]
    fn same_seed_same_batches() {
        let pairs: Vec<_> = (0..40).map(|i| pair(1 + i % 7, i)).collect();
        let (sv, tv) = vocabs(&pairs);
        let a = make_batches(&pairs, &sv, &tv, 4, 9).unwrap();
        let b = make_batches(&pairs, &sv, &tv, 4, 9).unwrap();
        assert_eq!(a, b);
    }
}
