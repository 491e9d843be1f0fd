//! Greedy decoding one step at a time, printing the attention weights over
//! the source at every step.
//!
//! cargo run --release --example attention_decode

use convrec_nmt::corpus::EOS;
use convrec_nmt::{ModelConfig, Seq2Seq, Tape};

fn main() -> convrec_nmt::Result<()> {
    let config = ModelConfig {
        src_vocab: 30,
        tgt_vocab: 30,
        d_model: 16,
        max_positions: 20,
        conv_layers: 2,
        kernel_width: 3,
        enc_hidden: 8,
        dec_hidden: 16,
        attn_dim: 16,
        tgt_emb_dim: 16,
        position_embedding: true,
    };
    let model = Seq2Seq::new(config, 3)?;
    let source = vec![vec![5, 6, 7, 8]];

    let mut tape = Tape::new();
    let p = model.params.bind_frozen(&mut tape);
    let ann = model.encoder.encode(&mut tape, &p, &source, &[4])?;
    let mem = model.decoder.memory(&mut tape, &p, &ann)?;
    let mut state = model.decoder.init_state(&mut tape, &p, &ann)?;

    for _ in 0..6 {
        let scores = model.decoder.attention_scores(&mut tape, &p, &mem, state.h)?;
        let alpha = model.decoder.attention_weights(&mut tape, scores)?;
        let weights: Vec<String> = tape.value(alpha).iter().map(|w| format!("{w:.4}")).collect();
        let (mut next, dist) = model.decoder.decode_step(&mut tape, &p, &mem, &state)?;
        let probs = tape.value(dist);
        // Lowest id wins ties, as in greedy_decode.
        let best = (0..probs.len()).fold(0, |b, i| if probs[i] > probs[b] { i } else { b });
        println!(
            "step {}  attention [{}]  emits {best:>2} (p = {:.4})",
            state.step,
            weights.join(" "),
            probs[best]
        );
        if best == EOS {
            break;
        }
        next.prev_tokens = vec![best];
        state = next;
    }
    println!("greedy output: {:?}", model.translate_ids(&source, 6)?);
    Ok(())
}
