//! Overfits 32 synthetic German-English pairs with the tiny preset and checks
//! that greedy decoding reproduces every training target.
//!
//! cargo run --release --example overfit_toy [-- key=value ...]

use std::time::Instant;

use convrec_nmt::corpus::toy;
use convrec_nmt::evaluation::evaluate_pairs;
use convrec_nmt::training::{build_vocabs, train_epoch, validate, Adadelta, TrainedModel};
use convrec_nmt::{Preset, TrainConfig};

fn main() -> convrec_nmt::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut config = TrainConfig::preset(Preset::Tiny);
    for kv in &args {
        let (k, v) = kv.split_once('=').expect("arguments are key=value");
        config.set(k, v)?;
    }
    let pairs = toy::generate(32, 7);
    let (sv, tv) = build_vocabs(&pairs, &config)?;
    println!("vocab: {} source / {} target", sv.len(), tv.len());
    let mut trained = TrainedModel::init(config.clone(), sv, tv)?;
    let mut opt = Adadelta::new(&trained.model.params, config.adadelta_lr, config.adadelta_rho, config.adadelta_eps);
    let eval_batches = trained.batches(&pairs, 0)?;
    println!("initial loss {:.4} (ln V = {:.4})", validate(&trained.model, &eval_batches)?, (trained.tgt_vocab.len() as f64).ln());
    let start = Instant::now();
    for epoch in 1..=config.epochs {
        let batches = trained.batches(&pairs, config.seed + epoch as u64)?;
        let loss = train_epoch(&mut trained.model, &batches, &config, &mut opt)?;
        trained.epoch = epoch;
        if epoch % 10 == 0 || loss < 0.1 {
            println!("epoch {epoch:>3}  loss {loss:.4}  {:.1}s", start.elapsed().as_secs_f64());
        }
        if loss < 0.1 {
            break;
        }
    }
    let report = evaluate_pairs(&trained, &pairs)?;
    println!("training-set {report}");
    Ok(())
}
