//! Attention GRU decoder.
//!
//! At every step the previous decoder state scores each annotation with an
//! additive scorer `v . tanh(W1 h + b1 + W2 e_t + b2)`, the scores become
//! attention weights through a softmax over the source positions, and the
//! weighted sum of annotations (the context) is fed with the previous target
//! embedding into a GRU. The new state is projected to vocabulary logits.

use rand::Rng;

use crate::config::ModelConfig;
use crate::corpus::{BOS, EOS};
use crate::encoder::{weight, zeros, Annotations, GruParams};
use crate::error::{NmtError, Result};
use crate::params::{Bindings, ParamId, ParamStore};
use crate::tensor::{Tape, Var};

/// Score given to padded source positions before the softmax. Finite so the
/// tape never holds infinities, and far enough below any real score
/// (bounded by `|v|_1`) that `exp` underflows to exactly zero.
pub const MASKED_SCORE: f64 = -1e30;

#[derive(Clone, Debug)]
pub struct Decoder {
    pub tgt_emb: ParamId,
    pub attn_w1: ParamId,
    pub attn_b1: ParamId,
    pub attn_w2: ParamId,
    pub attn_b2: ParamId,
    pub attn_v: ParamId,
    pub gru: GruParams,
    pub out_w: ParamId,
    pub out_b: ParamId,
    pub init_w: ParamId,
    pub init_b: ParamId,
    attn_dim: usize,
    vocab: usize,
}

/// Annotation-side quantities computed once per source batch.
#[derive(Clone, Debug)]
pub struct AttentionMemory {
    /// `[B, T, A]`: `W2 e_t + b2`.
    pub keys: Var,
    /// `[B, T, 2H]`.
    pub annotations: Var,
    /// `[B, T]`: 0 at real positions, [`MASKED_SCORE`] at padding.
    pub mask_bias: Var,
    pub batch: usize,
    pub width: usize,
}

/// Batched decoder state.
#[derive(Clone, Debug)]
pub struct DecodeState {
    /// `[B, H_d]`.
    pub h: Var,
    pub prev_tokens: Vec<usize>,
    pub step: usize,
}

fn argmax_lowest(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

impl Decoder {
    pub fn new<R: Rng + ?Sized>(cfg: &ModelConfig, store: &mut ParamStore, rng: &mut R) -> Self {
        let (hd, a, ann) = (cfg.dec_hidden, cfg.attn_dim, cfg.annotation_dim());
        Self {
            tgt_emb: weight(store, "decoder.tgt_emb", &[cfg.tgt_vocab, cfg.tgt_emb_dim], rng),
            attn_w1: weight(store, "decoder.attn.w1", &[hd, a], rng),
            attn_b1: zeros(store, "decoder.attn.b1", &[a]),
            attn_w2: weight(store, "decoder.attn.w2", &[ann, a], rng),
            attn_b2: zeros(store, "decoder.attn.b2", &[a]),
            attn_v: weight(store, "decoder.attn.v", &[a, 1], rng),
            gru: GruParams::new(store, "decoder.gru", ann + cfg.tgt_emb_dim, hd, rng),
            out_w: weight(store, "decoder.out.weight", &[hd, cfg.tgt_vocab], rng),
            out_b: zeros(store, "decoder.out.bias", &[cfg.tgt_vocab]),
            init_w: weight(store, "decoder.init.weight", &[ann, hd], rng),
            init_b: zeros(store, "decoder.init.bias", &[hd]),
            attn_dim: a,
            vocab: cfg.tgt_vocab,
        }
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    /// Projects annotations once so every decode step only adds `W1 h + b1`.
    pub fn memory(&self, tape: &mut Tape, p: &Bindings, ann: &Annotations) -> Result<AttentionMemory> {
        let (batch, width) = (ann.batch(), ann.width);
        if batch == 0 || width == 0 || ann.lengths.contains(&0) {
            return Err(NmtError::Invalid(
                "attention needs at least one unmasked source position per sentence".into(),
            ));
        }
        let e_dim = 2 * ann.hidden;
        let flat = tape.reshape(ann.states, &[batch * width, e_dim])?;
        let keys = tape.matmul(flat, p[self.attn_w2])?;
        let keys = tape.add(keys, p[self.attn_b2])?;
        let keys = tape.reshape(keys, &[batch, width, self.attn_dim])?;
        let bias = ann
            .lengths
            .iter()
            .flat_map(|&l| (0..width).map(move |t| if t < l { 0.0 } else { MASKED_SCORE }))
            .collect();
        let mask_bias = tape.constant_from(&[batch, width], bias)?;
        Ok(AttentionMemory {
            keys,
            annotations: ann.states,
            mask_bias,
            batch,
            width,
        })
    }

    /// `[B, T]` additive scores for the previous state `h_prev` (`[B, H_d]`),
    /// with padded positions pushed to [`MASKED_SCORE`].
    pub fn attention_scores(&self, tape: &mut Tape, p: &Bindings, mem: &AttentionMemory, h_prev: Var) -> Result<Var> {
        let (b, t, a) = (mem.batch, mem.width, self.attn_dim);
        let query = tape.matmul(h_prev, p[self.attn_w1])?;
        let query = tape.add(query, p[self.attn_b1])?;
        let query = tape.reshape(query, &[b, 1, a])?;
        let hidden = tape.add(mem.keys, query)?;
        let hidden = tape.tanh(hidden);
        let hidden = tape.reshape(hidden, &[b * t, a])?;
        let scores = tape.matmul(hidden, p[self.attn_v])?;
        let scores = tape.reshape(scores, &[b, t])?;
        tape.add(scores, mem.mask_bias)
    }

    /// Softmax over source positions.
    pub fn attention_weights(&self, tape: &mut Tape, scores: Var) -> Result<Var> {
        let shape = tape.shape(scores);
        if shape.len() != 2 || shape[1] == 0 {
            return Err(NmtError::Invalid(format!(
                "attention scores must be [B, T] with T > 0, got {shape:?}"
            )));
        }
        let width = shape[1];
        let all_masked = tape
            .value(scores)
            .chunks(width)
            .any(|row| row.iter().all(|&s| s <= MASKED_SCORE / 2.0));
        if all_masked {
            return Err(NmtError::Invalid("every source position is masked".into()));
        }
        tape.softmax(scores, 1)
    }

    /// `sum_t alpha_t e_t`, `[B, 2H]`.
    pub fn context_vector(&self, tape: &mut Tape, alpha: Var, mem: &AttentionMemory) -> Result<Var> {
        let weights = tape.reshape(alpha, &[mem.batch, mem.width, 1])?;
        let weighted = tape.mul(mem.annotations, weights)?;
        tape.sum_axis(weighted, 1)
    }

    /// `h_0 = tanh(W_init [fwd_last : bwd_first] + b_init)`, where `fwd_last`
    /// is the forward state at each sentence's final token.
    pub fn init_state(&self, tape: &mut Tape, p: &Bindings, ann: &Annotations) -> Result<DecodeState> {
        let (batch, width, hidden) = (ann.batch(), ann.width, ann.hidden);
        if batch == 0 || width == 0 || ann.lengths.contains(&0) {
            return Err(NmtError::Invalid("cannot initialise the decoder from an empty source".into()));
        }
        let select: Vec<f64> = ann
            .lengths
            .iter()
            .flat_map(|&l| (0..width).map(move |t| if t + 1 == l { 1.0 } else { 0.0 }))
            .collect();
        let select = tape.constant_from(&[batch, width, 1], select)?;
        let last = tape.mul(ann.forward, select)?;
        let last = tape.sum_axis(last, 1)?;
        let first = tape.narrow(ann.backward, 1, 0, 1)?;
        let first = tape.reshape(first, &[batch, hidden])?;
        let ends = tape.concat(last, first, 1)?;
        let h = tape.matmul(ends, p[self.init_w])?;
        let h = tape.add(h, p[self.init_b])?;
        Ok(DecodeState {
            h: tape.tanh(h),
            prev_tokens: vec![BOS; batch],
            step: 0,
        })
    }

    /// One decoder step returning the new hidden state and `[B, V]` logits.
    pub fn step_logits(
        &self,
        tape: &mut Tape,
        p: &Bindings,
        mem: &AttentionMemory,
        h_prev: Var,
        prev_tokens: &[usize],
    ) -> Result<(Var, Var)> {
        let scores = self.attention_scores(tape, p, mem, h_prev)?;
        let alpha = self.attention_weights(tape, scores)?;
        let context = self.context_vector(tape, alpha, mem)?;
        let prev = tape.embedding_lookup(p[self.tgt_emb], prev_tokens)?;
        let input = tape.concat(context, prev, 1)?;
        let h = self.gru.cell(tape, p, input, h_prev)?;
        let logits = tape.matmul(h, p[self.out_w])?;
        let logits = tape.add(logits, p[self.out_b])?;
        Ok((h, logits))
    }

    /// Advances `state` by one token; returns the next state (with its
    /// `prev_tokens` unchanged) and the `[B, V]` next-token distribution.
    pub fn decode_step(
        &self,
        tape: &mut Tape,
        p: &Bindings,
        mem: &AttentionMemory,
        state: &DecodeState,
    ) -> Result<(DecodeState, Var)> {
        let (h, logits) = self.step_logits(tape, p, mem, state.h, &state.prev_tokens)?;
        let dist = tape.softmax(logits, 1)?;
        Ok((
            DecodeState {
                h,
                prev_tokens: state.prev_tokens.clone(),
                step: state.step + 1,
            },
            dist,
        ))
    }

    /// Logits `[B, M - 1, V]` for a BOS-prefixed target matrix of width `M`.
    /// Step `i` is fed the gold token at column `i`.
    pub fn teacher_forced_logits(
        &self,
        tape: &mut Tape,
        p: &Bindings,
        ann: &Annotations,
        tgt_ids: &[Vec<usize>],
    ) -> Result<Var> {
        let batch = ann.batch();
        let width = tgt_ids.first().map_or(0, Vec::len);
        if tgt_ids.len() != batch || width < 2 || tgt_ids.iter().any(|r| r.len() != width) {
            return Err(NmtError::shape(
                "teacher_forced_logits",
                format!("target matrix must be {batch} rows of equal width >= 2"),
            ));
        }
        let mem = self.memory(tape, p, ann)?;
        let mut h = self.init_state(tape, p, ann)?.h;
        let mut steps = Vec::with_capacity(width - 1);
        for i in 0..width - 1 {
            let prev: Vec<usize> = tgt_ids.iter().map(|r| r[i]).collect();
            let (next, logits) = self.step_logits(tape, p, &mem, h, &prev)?;
            h = next;
            steps.push(tape.reshape(logits, &[batch, 1, self.vocab])?);
        }
        tape.concat_all(&steps, 1)
    }

    /// Greedy decoding: feeds back the argmax token (lowest id on ties) until
    /// EOS or `max_len` tokens. EOS is not included in the output.
    pub fn greedy_decode(&self, tape: &mut Tape, p: &Bindings, ann: &Annotations, max_len: usize) -> Result<Vec<Vec<usize>>> {
        if max_len == 0 {
            return Err(NmtError::Config("max decode length must be at least 1".into()));
        }
        let batch = ann.batch();
        let mem = self.memory(tape, p, ann)?;
        let mut state = self.init_state(tape, p, ann)?;
        let mut out = vec![Vec::new(); batch];
        let mut done = vec![false; batch];
        for _ in 0..max_len {
            let (h, logits) = self.step_logits(tape, p, &mem, state.h, &state.prev_tokens)?;
            let values = tape.value(logits);
            let mut next = Vec::with_capacity(batch);
            for b in 0..batch {
                let tok = argmax_lowest(&values[b * self.vocab..(b + 1) * self.vocab]);
                if !done[b] {
                    if tok == EOS {
                        done[b] = true;
                    } else {
                        out[b].push(tok);
                    }
                }
                next.push(tok);
            }
            if done.iter().all(|&d| d) {
                break;
            }
            state = DecodeState {
                h,
                prev_tokens: next,
                step: state.step + 1,
            };
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::argmax_lowest;

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax_lowest(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax_lowest(&[2.0, 2.0]), 0);
    }
}
