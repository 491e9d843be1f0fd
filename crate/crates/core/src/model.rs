//! Encoder-decoder model and its training loss.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::ModelConfig;
use crate::corpus::Batch;
use crate::decoder::Decoder;
use crate::encoder::{Annotations, Encoder};
use crate::error::{NmtError, Result};
use crate::params::{Bindings, ParamStore};
use crate::tensor::{Tape, Var};

#[derive(Clone, Debug)]
pub struct Seq2Seq {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub encoder: Encoder,
    pub decoder: Decoder,
}

impl Seq2Seq {
    /// Builds and initializes a model; identical seeds give identical weights.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let encoder = Encoder::new(&config, &mut params, &mut rng);
        let decoder = Decoder::new(&config, &mut params, &mut rng);
        Ok(Self {
            config,
            params,
            encoder,
            decoder,
        })
    }

    pub fn encode(&self, tape: &mut Tape, p: &Bindings, batch: &Batch) -> Result<Annotations> {
        self.encoder.encode(tape, p, &batch.src_ids, &batch.src_lengths)
    }

    /// Masked token-mean negative log-likelihood of the batch targets.
    pub fn forward_loss(&self, tape: &mut Tape, p: &Bindings, batch: &Batch) -> Result<Var> {
        let ann = self.encode(tape, p, batch)?;
        let logits = self.decoder.teacher_forced_logits(tape, p, &ann, &batch.tgt_ids)?;
        let steps = batch.tgt_width() - 1;
        let vocab = self.decoder.vocab();
        let logits = tape.reshape(logits, &[batch.len() * steps, vocab])?;
        let targets: Vec<usize> = batch.tgt_ids.iter().flat_map(|r| r[1..].iter().copied()).collect();
        let mask: Vec<f64> = batch
            .tgt_mask
            .iter()
            .flat_map(|r| r[1..].iter().map(|&m| f64::from(m)))
            .collect();
        tape.nll_loss(logits, &targets, &mask)
    }

    /// Loss without recording gradients or touching parameters.
    pub fn loss(&self, batch: &Batch) -> Result<f64> {
        let mut tape = Tape::new();
        let p = self.params.bind_frozen(&mut tape);
        let loss = self.forward_loss(&mut tape, &p, batch)?;
        Ok(tape.value(loss)[0])
    }

    /// Computes the loss and adds its gradient into every trainable
    /// parameter's gradient slot.
    pub fn accumulate_gradients(&mut self, batch: &Batch) -> Result<f64> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape);
        let loss = self.forward_loss(&mut tape, &p, batch)?;
        let value = tape.value(loss)[0];
        tape.backward(loss)?;
        self.params.collect_grads(&tape, &p);
        Ok(value)
    }

    /// Greedy translation of already-encoded source sentences.
    pub fn translate_ids(&self, sources: &[Vec<usize>], max_len: usize) -> Result<Vec<Vec<usize>>> {
        if sources.is_empty() {
            return Ok(Vec::new());
        }
        if sources.iter().any(Vec::is_empty) {
            return Err(NmtError::Invalid("cannot translate an empty source sentence".into()));
        }
        let batch = Batch::from_sources(sources);
        let mut tape = Tape::new();
        let p = self.params.bind_frozen(&mut tape);
        let ann = self.encode(&mut tape, &p, &batch)?;
        self.decoder.greedy_decode(&mut tape, &p, &ann, max_len)
    }
}
