//! Runs the encoder stage by stage on one sentence: embeddings, the
//! convolution stack, the residual layer norm and the bidirectional GRU.
//!
//! cargo run --release --example encode_sentence

use convrec_nmt::{ModelConfig, Seq2Seq, Tape};

fn norms(tape: &Tape, v: convrec_nmt::Var, width: usize) -> Vec<String> {
    tape.value(v)
        .chunks(width)
        .map(|row| format!("{:.3}", row.iter().map(|x| x * x).sum::<f64>().sqrt()))
        .collect()
}

fn main() -> convrec_nmt::Result<()> {
    let config = ModelConfig {
        src_vocab: 50,
        tgt_vocab: 50,
        d_model: 16,
        max_positions: 20,
        conv_layers: 3,
        kernel_width: 3,
        enc_hidden: 8,
        dec_hidden: 16,
        attn_dim: 16,
        tgt_emb_dim: 16,
        position_embedding: true,
    };
    let model = Seq2Seq::new(config, 42)?;
    let sentence = vec![vec![7, 12, 9, 30, 4]];

    let mut tape = Tape::new();
    let p = model.params.bind_frozen(&mut tape);
    let enc = &model.encoder;
    let a = enc.embed(&mut tape, &p, &sentence)?;
    let c = enc.conv_stack(&mut tape, &p, a, &[5])?;
    let x = enc.residual_layernorm(&mut tape, &p, c, a)?;
    let ann = enc.bigru_encode(&mut tape, &p, x, &[5])?;

    println!("embedding norms     {:?}", norms(&tape, a, 16));
    println!("conv output norms   {:?}", norms(&tape, c, 16));
    println!("layer-norm output   {:?}", norms(&tape, x, 16));
    println!("annotation shape    {:?}", tape.shape(ann.states));
    println!("annotation norms    {:?}", norms(&tape, ann.states, 2 * ann.hidden));
    Ok(())
}
