//! Convolutional-recurrent encoder.
//!
//! Tokens are embedded (word + learned position), passed through a stack of
//! same-length convolutions with per-layer skip connections and `tanh`, added
//! back onto the embedding, layer-normalized, and finally read by a
//! bidirectional GRU whose per-position states form the annotations.

use rand::Rng;

use crate::config::ModelConfig;
use crate::error::{NmtError, Result};
use crate::params::{Bindings, ParamId, ParamStore};
use crate::tensor::{Tape, Tensor, Var};

/// Half-width of the uniform distribution used for every weight matrix.
pub const INIT_RANGE: f64 = 0.08;
pub const LAYER_NORM_EPS: f64 = 1e-5;

pub(crate) fn weight<R: Rng + ?Sized>(
    store: &mut ParamStore,
    name: &str,
    shape: &[usize],
    rng: &mut R,
) -> ParamId {
    store.add(name, Tensor::uniform(shape, -INIT_RANGE, INIT_RANGE, rng), true)
}

pub(crate) fn zeros(store: &mut ParamStore, name: &str, shape: &[usize]) -> ParamId {
    store.add(name, Tensor::zeros(shape), true)
}

/// Gated recurrent unit. Each gate matrix acts on the concatenation
/// `[input : hidden]` and is `(input + hidden) x hidden`.
#[derive(Clone, Debug)]
pub struct GruParams {
    pub w_z: ParamId,
    pub w_r: ParamId,
    pub w_h: ParamId,
    pub b_z: ParamId,
    pub b_r: ParamId,
    pub b_h: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl GruParams {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let shape = [input + hidden, hidden];
        Self {
            w_z: weight(store, &format!("{prefix}.w_z"), &shape, rng),
            w_r: weight(store, &format!("{prefix}.w_r"), &shape, rng),
            w_h: weight(store, &format!("{prefix}.w_h"), &shape, rng),
            b_z: zeros(store, &format!("{prefix}.b_z"), &[hidden]),
            b_r: zeros(store, &format!("{prefix}.b_r"), &[hidden]),
            b_h: zeros(store, &format!("{prefix}.b_h"), &[hidden]),
            input,
            hidden,
        }
    }

    /// One step for a batch: `x` is `[B, input]`, `h_prev` is `[B, hidden]`.
    ///
    /// ```text
    /// z  = sigmoid([x : h] W_z + b_z)
    /// r  = sigmoid([x : h] W_r + b_r)
    /// h~ = tanh([x : r*h] W_h + b_h)
    /// h' = (1 - z) * h + z * h~
    /// ```
    pub fn cell(&self, tape: &mut Tape, p: &Bindings, x: Var, h_prev: Var) -> Result<Var> {
        let xh = tape.concat(x, h_prev, 1)?;
        let z = tape.matmul(xh, p[self.w_z])?;
        let z = tape.add(z, p[self.b_z])?;
        let z = tape.sigmoid(z);
        let r = tape.matmul(xh, p[self.w_r])?;
        let r = tape.add(r, p[self.b_r])?;
        let r = tape.sigmoid(r);
        let rh = tape.mul(r, h_prev)?;
        let xrh = tape.concat(x, rh, 1)?;
        let cand = tape.matmul(xrh, p[self.w_h])?;
        let cand = tape.add(cand, p[self.b_h])?;
        let cand = tape.tanh(cand);
        let delta = tape.sub(cand, h_prev)?;
        let step = tape.mul(z, delta)?;
        tape.add(h_prev, step)
    }
}

#[derive(Clone, Debug)]
pub struct ConvLayer {
    pub kernel: ParamId,
    pub bias: ParamId,
}

/// Per-sentence encoder output.
#[derive(Clone, Debug)]
pub struct Annotations {
    /// `[B, T, 2H]`: forward and backward states concatenated per position.
    pub states: Var,
    /// `[B, T, H]` forward-direction states.
    pub forward: Var,
    /// `[B, T, H]` backward-direction states.
    pub backward: Var,
    pub lengths: Vec<usize>,
    pub width: usize,
    pub hidden: usize,
}

impl Annotations {
    pub fn batch(&self) -> usize {
        self.lengths.len()
    }
}

#[derive(Clone, Debug)]
pub struct Encoder {
    pub word_emb: ParamId,
    pub pos_emb: ParamId,
    pub conv: Vec<ConvLayer>,
    pub ln_gain: ParamId,
    pub ln_bias: ParamId,
    pub gru_fwd: GruParams,
    pub gru_bwd: GruParams,
    d_model: usize,
    max_positions: usize,
}

/// `[B, T, width]` constant with ones at real positions and zeros at padding.
fn position_mask(tape: &mut Tape, lengths: &[usize], steps: usize, width: usize) -> Result<Var> {
    let mut data = Vec::with_capacity(lengths.len() * steps * width);
    for &len in lengths {
        for t in 0..steps {
            let m = if t < len { 1.0 } else { 0.0 };
            data.extend(std::iter::repeat(m).take(width));
        }
    }
    tape.constant_from(&[lengths.len(), steps, width], data)
}

fn step_mask(tape: &mut Tape, lengths: &[usize], t: usize, width: usize) -> Result<Option<Var>> {
    if lengths.iter().all(|&l| t < l) {
        return Ok(None);
    }
    let data = lengths
        .iter()
        .flat_map(|&l| std::iter::repeat(if t < l { 1.0 } else { 0.0 }).take(width))
        .collect();
    tape.constant_from(&[lengths.len(), width], data).map(Some)
}

impl Encoder {
    /// Registers encoder parameters. With position embedding disabled the
    /// position table is all zeros and frozen.
    pub fn new<R: Rng + ?Sized>(cfg: &ModelConfig, store: &mut ParamStore, rng: &mut R) -> Self {
        let d = cfg.d_model;
        let word_emb = weight(store, "encoder.word_emb", &[cfg.src_vocab, d], rng);
        let pos_emb = if cfg.position_embedding {
            weight(store, "encoder.pos_emb", &[cfg.max_positions, d], rng)
        } else {
            store.add("encoder.pos_emb", Tensor::zeros(&[cfg.max_positions, d]), false)
        };
        let conv = (0..cfg.conv_layers)
            .map(|l| ConvLayer {
                kernel: weight(store, &format!("encoder.conv.{l}.kernel"), &[cfg.kernel_width, d, d], rng),
                bias: zeros(store, &format!("encoder.conv.{l}.bias"), &[d]),
            })
            .collect();
        let ln_gain = store.add("encoder.ln.gain", Tensor::ones(&[d]), true);
        let ln_bias = zeros(store, "encoder.ln.bias", &[d]);
        let gru_fwd = GruParams::new(store, "encoder.gru_fwd", d, cfg.enc_hidden, rng);
        let gru_bwd = GruParams::new(store, "encoder.gru_bwd", d, cfg.enc_hidden, rng);
        Self {
            word_emb,
            pos_emb,
            conv,
            ln_gain,
            ln_bias,
            gru_fwd,
            gru_bwd,
            d_model: d,
            max_positions: cfg.max_positions,
        }
    }

    pub fn hidden(&self) -> usize {
        self.gru_fwd.hidden
    }

    /// Word plus position embedding, `[B, T, d]`. Positions count from zero.
    pub fn embed(&self, tape: &mut Tape, p: &Bindings, src_ids: &[Vec<usize>]) -> Result<Var> {
        let batch = src_ids.len();
        let steps = src_ids.first().map_or(0, Vec::len);
        if batch == 0 || steps == 0 {
            return Err(NmtError::Invalid("cannot embed an empty source batch".into()));
        }
        if let Some(row) = src_ids.iter().find(|r| r.len() != steps) {
            return Err(NmtError::shape(
                "embed",
                format!("ragged source rows ({} vs {steps})", row.len()),
            ));
        }
        if steps > self.max_positions {
            return Err(NmtError::Length {
                len: steps,
                limit: self.max_positions,
            });
        }
        let flat: Vec<usize> = src_ids.iter().flatten().copied().collect();
        let words = tape.embedding_lookup(p[self.word_emb], &flat)?;
        let words = tape.reshape(words, &[batch, steps, self.d_model])?;
        let positions: Vec<usize> = (0..steps).collect();
        let pos = tape.embedding_lookup(p[self.pos_emb], &positions)?;
        tape.add(words, pos)
    }

    /// Stacked convolutions: `x <- tanh(conv(mask * x)) + x` per layer.
    /// Padding is zeroed before every convolution so it never reaches a real
    /// position. With no layers this is the identity.
    pub fn conv_stack(&self, tape: &mut Tape, p: &Bindings, a: Var, lengths: &[usize]) -> Result<Var> {
        let shape = tape.shape(a).to_vec();
        let steps = shape[1];
        let mask = if lengths.iter().all(|&l| l >= steps) {
            None
        } else {
            Some(position_mask(tape, lengths, steps, shape[2])?)
        };
        let mut x = a;
        for layer in &self.conv {
            let input = match mask {
                Some(m) => tape.mul(x, m)?,
                None => x,
            };
            let y = tape.conv1d(input, p[layer.kernel], p[layer.bias])?;
            let y = tape.tanh(y);
            x = tape.add(y, x)?;
        }
        Ok(x)
    }

    /// `layer_norm(c + a)` per position.
    pub fn residual_layernorm(&self, tape: &mut Tape, p: &Bindings, c: Var, a: Var) -> Result<Var> {
        if tape.shape(c) != tape.shape(a) {
            return Err(NmtError::shape(
                "residual_layernorm",
                format!("{:?} vs {:?}", tape.shape(c), tape.shape(a)),
            ));
        }
        let sum = tape.add(c, a)?;
        tape.layer_norm(sum, p[self.ln_gain], p[self.ln_bias], LAYER_NORM_EPS)
    }

    /// Bidirectional GRU over `[B, T, d]`. Each direction starts from a zero
    /// state at its own sentence boundary; outputs past a sentence's length
    /// are zero.
    pub fn bigru_encode(&self, tape: &mut Tape, p: &Bindings, x: Var, lengths: &[usize]) -> Result<Annotations> {
        let shape = tape.shape(x).to_vec();
        let (batch, steps, d) = (shape[0], shape[1], shape[2]);
        if lengths.len() != batch || lengths.iter().any(|&l| l > steps) {
            return Err(NmtError::shape(
                "bigru_encode",
                format!("lengths {lengths:?} do not fit a batch of shape {shape:?}"),
            ));
        }
        let hidden = self.hidden();
        let inputs = (0..steps)
            .map(|t| {
                let xt = tape.narrow(x, 1, t, 1)?;
                tape.reshape(xt, &[batch, d])
            })
            .collect::<Result<Vec<_>>>()?;
        let masks = (0..steps)
            .map(|t| step_mask(tape, lengths, t, hidden))
            .collect::<Result<Vec<_>>>()?;
        let zero = tape.constant(&Tensor::zeros(&[batch, hidden]));

        let mut fwd = Vec::with_capacity(steps);
        let mut h = zero;
        for t in 0..steps {
            h = self.gru_fwd.cell(tape, p, inputs[t], h)?;
            if let Some(m) = masks[t] {
                h = tape.mul(h, m)?;
            }
            fwd.push(tape.reshape(h, &[batch, 1, hidden])?);
        }
        let mut bwd = vec![zero; steps];
        let mut h = zero;
        for t in (0..steps).rev() {
            h = self.gru_bwd.cell(tape, p, inputs[t], h)?;
            if let Some(m) = masks[t] {
                h = tape.mul(h, m)?;
            }
            bwd[t] = tape.reshape(h, &[batch, 1, hidden])?;
        }
        let forward = tape.concat_all(&fwd, 1)?;
        let backward = tape.concat_all(&bwd, 1)?;
        let states = tape.concat(forward, backward, 2)?;
        Ok(Annotations {
            states,
            forward,
            backward,
            lengths: lengths.to_vec(),
            width: steps,
            hidden,
        })
    }

    /// Full encoder: embed, convolve, fuse with the embedding, normalize, BiGRU.
    pub fn encode(&self, tape: &mut Tape, p: &Bindings, src_ids: &[Vec<usize>], lengths: &[usize]) -> Result<Annotations> {
        if lengths.contains(&0) {
            return Err(NmtError::Invalid("source sentence is empty".into()));
        }
        let a = self.embed(tape, p, src_ids)?;
        let c = self.conv_stack(tape, p, a, lengths)?;
        let normed = self.residual_layernorm(tape, p, c, a)?;
        self.bigru_encode(tape, p, normed, lengths)
    }
}
