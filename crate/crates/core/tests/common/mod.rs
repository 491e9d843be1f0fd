#![allow(dead_code)]

use convrec_nmt::tensor::{Tape, Tensor, Var};
use convrec_nmt::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random(shape: &[usize], seed: u64) -> Tensor {
    Tensor::uniform(shape, -1.0, 1.0, &mut rng(seed))
}

pub fn t(shape: &[usize], data: &[f64]) -> Tensor {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

/// Reduces `x` to a scalar through fixed random weights, so every output
/// element reaches the loss with a distinct coefficient.
pub fn project(tape: &mut Tape, x: Var, seed: u64) -> Result<Var> {
    let shape = tape.shape(x).to_vec();
    let w = Tensor::uniform(&shape, -1.0, 1.0, &mut rng(seed ^ 0x9e37));
    let w = tape.constant(&w);
    let y = tape.mul(x, w)?;
    Ok(tape.sum(y))
}

pub fn assert_close(actual: &[f64], expected: &[f64], tol: f64) {
    assert_eq!(actual.len(), expected.len(), "length mismatch");
    for (i, (a, e)) in actual.iter().zip(expected).enumerate() {
        assert!((a - e).abs() <= tol, "element {i}: {a} vs {e} (tol {tol})");
    }
}

use convrec_nmt::gradcheck::{compare_param_grads, numeric_param_grads, GradCheckReport, DEFAULT_STEP};
use convrec_nmt::params::{Bindings, ParamStore};
use convrec_nmt::{ModelConfig, Seq2Seq};

/// Analytic versus central-difference gradients for every trainable
/// parameter in `store`; `build` must return a scalar.
pub fn param_gradcheck<F>(store: &mut ParamStore, build: F) -> GradCheckReport
where
    F: Fn(&mut Tape, &Bindings) -> Result<Var>,
{
    store.zero_grad();
    let mut tape = Tape::new();
    let p = store.bind(&mut tape);
    let out = build(&mut tape, &p).unwrap();
    tape.backward(out).unwrap();
    store.collect_grads(&tape, &p);
    let numeric = numeric_param_grads(store, DEFAULT_STEP, |s| {
        let mut tape = Tape::new();
        let p = s.bind_frozen(&mut tape);
        let out = build(&mut tape, &p)?;
        Ok(tape.value(out)[0])
    })
    .unwrap();
    compare_param_grads(store, &numeric)
}

/// The gradient-check model: d=8, H=6, H_d=8, two conv layers of width 3,
/// twenty-word vocabularies.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        src_vocab: 20,
        tgt_vocab: 20,
        d_model: 8,
        max_positions: 10,
        conv_layers: 2,
        kernel_width: 3,
        enc_hidden: 6,
        dec_hidden: 8,
        attn_dim: 8,
        tgt_emb_dim: 8,
        position_embedding: true,
    }
}

pub fn tiny_model(seed: u64) -> Seq2Seq {
    Seq2Seq::new(tiny_config(), seed).unwrap()
}

/// Draws every trainable parameter, biases and layer-norm included, from
/// uniform(-0.5, 0.5) so no gradient is trivially zero.
pub fn randomize(store: &mut ParamStore, seed: u64) {
    let mut r = rng(seed);
    for p in store.iter_mut().filter(|p| p.trainable) {
        let shape = p.tensor.shape().to_vec();
        p.tensor = Tensor::uniform(&shape, -0.5, 0.5, &mut r);
    }
}
