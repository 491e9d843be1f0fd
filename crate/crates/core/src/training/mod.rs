//! Adadelta training with validation-based early stopping and checkpoints.

mod adadelta;
pub mod checkpoint;

pub use adadelta::{adadelta_update, clip_gradients, grad_norm, Accumulators, Adadelta};
pub use checkpoint::{load_checkpoint, save_checkpoint, FORMAT_VERSION};

use crate::config::TrainConfig;
use crate::corpus::{make_batches, Batch, SentencePair, Side, Vocabulary};
use crate::error::{NmtError, Result};
use crate::model::Seq2Seq;

/// A model together with everything needed to use or resume it.
#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub config: TrainConfig,
    pub src_vocab: Vocabulary,
    pub tgt_vocab: Vocabulary,
    pub model: Seq2Seq,
    pub epoch: usize,
    pub best_val_loss: f64,
}

impl TrainedModel {
    /// Fresh, untrained model sized for the given vocabularies.
    pub fn init(config: TrainConfig, src_vocab: Vocabulary, tgt_vocab: Vocabulary) -> Result<Self> {
        config.validate()?;
        let model = Seq2Seq::new(config.model_config(src_vocab.len(), tgt_vocab.len()), config.seed)?;
        Ok(Self {
            config,
            src_vocab,
            tgt_vocab,
            model,
            epoch: 0,
            best_val_loss: f64::INFINITY,
        })
    }

    pub fn batches(&self, pairs: &[SentencePair], seed: u64) -> Result<Vec<Batch>> {
        make_batches(pairs, &self.src_vocab, &self.tgt_vocab, self.config.batch_size, seed)
    }
}

/// Builds both vocabularies from training pairs.
pub fn build_vocabs(pairs: &[SentencePair], config: &TrainConfig) -> Result<(Vocabulary, Vocabulary)> {
    Ok((
        Vocabulary::build(pairs, Side::Source, config.max_vocab, config.min_freq)?,
        Vocabulary::build(pairs, Side::Target, config.max_vocab, config.min_freq)?,
    ))
}

/// Drops pairs whose source or target exceeds `max_sentence_len` tokens.
pub fn filter_long(pairs: &[SentencePair], max_len: usize) -> Vec<SentencePair> {
    pairs
        .iter()
        .filter(|p| p.source.len() <= max_len && p.target.len() <= max_len)
        .cloned()
        .collect()
}

/// One pass over `batches`: forward, backward, clip, Adadelta step.
/// Returns the token-weighted mean loss.
pub fn train_epoch(model: &mut Seq2Seq, batches: &[Batch], config: &TrainConfig, opt: &mut Adadelta) -> Result<f64> {
    let mut total = 0.0;
    let mut tokens = 0usize;
    for (i, batch) in batches.iter().enumerate() {
        model.params.zero_grad();
        let loss = model.accumulate_gradients(batch)?;
        if !loss.is_finite() {
            model.params.zero_grad();
            return Err(NmtError::NonFiniteLoss { batch: i, loss });
        }
        clip_gradients(&mut model.params, config.grad_clip_norm);
        opt.step(&mut model.params);
        let n = batch.target_tokens();
        total += loss * n as f64;
        tokens += n;
    }
    model.params.zero_grad();
    if tokens == 0 {
        return Err(NmtError::Invalid("training epoch saw no target tokens".into()));
    }
    Ok(total / tokens as f64)
}

/// Token-weighted mean loss; never mutates the model.
pub fn validate(model: &Seq2Seq, batches: &[Batch]) -> Result<f64> {
    let mut total = 0.0;
    let mut tokens = 0usize;
    for batch in batches {
        let n = batch.target_tokens();
        total += model.loss(batch)? * n as f64;
        tokens += n;
    }
    if tokens == 0 {
        return Err(NmtError::Invalid("validation set has no target tokens".into()));
    }
    Ok(total / tokens as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub improved: bool,
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub best: TrainedModel,
    pub history: Vec<EpochReport>,
}

/// Trains from scratch on `train` with early stopping on `val`.
///
/// Batches are reshuffled every epoch from `seed + epoch`. Training stops
/// after `config.epochs` epochs or `config.patience` epochs without a new
/// best validation loss. `on_epoch` sees every epoch report as it happens.
pub fn fit(
    train: &[SentencePair],
    val: &[SentencePair],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochReport),
) -> Result<FitOutcome> {
    config.validate()?;
    let train = filter_long(train, config.max_sentence_len);
    let val = filter_long(val, config.max_sentence_len);
    if train.is_empty() || val.is_empty() {
        return Err(NmtError::Format(format!(
            "need training and validation pairs within {} tokens (got {} / {})",
            config.max_sentence_len,
            train.len(),
            val.len()
        )));
    }
    let (src_vocab, tgt_vocab) = build_vocabs(&train, config)?;
    let mut current = TrainedModel::init(config.clone(), src_vocab, tgt_vocab)?;
    let val_batches = current.batches(&val, config.seed)?;
    let mut opt = Adadelta::new(
        &current.model.params,
        config.adadelta_lr,
        config.adadelta_rho,
        config.adadelta_eps,
    );
    let mut best = current.clone();
    let mut history = Vec::new();
    let mut stale = 0;
    for epoch in 1..=config.epochs {
        let batches = current.batches(&train, config.seed.wrapping_add(epoch as u64))?;
        let train_loss = train_epoch(&mut current.model, &batches, config, &mut opt)?;
        let val_loss = validate(&current.model, &val_batches)?;
        current.epoch = epoch;
        let improved = val_loss < best.best_val_loss;
        if improved {
            current.best_val_loss = val_loss;
            best = current.clone();
            stale = 0;
        } else {
            stale += 1;
        }
        let report = EpochReport {
            epoch,
            train_loss,
            val_loss,
            improved,
        };
        on_epoch(&report);
        history.push(report);
        if stale >= config.patience.max(1) {
            break;
        }
    }
    Ok(FitOutcome { best, history })
}
