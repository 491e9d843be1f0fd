//! Trains briefly, saves a checkpoint, prints its manifest, reloads it and
//! confirms the translations match.
//!
//! cargo run --release --example checkpoint_roundtrip [-- DIR]

use convrec_nmt::corpus::toy;
use convrec_nmt::evaluation::translate_tokens;
use convrec_nmt::training::checkpoint::read_manifest;
use convrec_nmt::training::{fit, load_checkpoint, save_checkpoint};
use convrec_nmt::{Preset, TrainConfig};

fn main() -> convrec_nmt::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("nmt-checkpoint-example"));

    let mut config = TrainConfig::preset(Preset::Tiny);
    config.d_model = 16;
    config.enc_hidden = 8;
    config.dec_hidden = 16;
    config.attn_dim = 16;
    config.tgt_emb_dim = 16;
    config.epochs = 3;

    let pairs = toy::generate(40, 1);
    let (train, val) = pairs.split_at(36);
    let outcome = fit(train, val, &config, |r| {
        println!("epoch {}  train {:.4}  val {:.4}", r.epoch, r.train_loss, r.val_loss);
    })?;
    save_checkpoint(&outcome.best, &dir)?;

    let manifest = read_manifest(&dir)?.render();
    println!("--- {}/manifest (first 12 lines)", dir.display());
    for line in manifest.lines().take(12) {
        println!("{line}");
    }
    println!("... {} lines total", manifest.lines().count());

    let loaded = load_checkpoint(&dir)?;
    let sources: Vec<_> = val.iter().map(|p| p.source.clone()).collect();
    let before = translate_tokens(&outcome.best, &sources, 20)?;
    let after = translate_tokens(&loaded, &sources, 20)?;
    for (src, out) in sources.iter().zip(&after) {
        println!("{} -> {}", src.join(" "), out.join(" "));
    }
    println!("identical after reload: {}", before == after);
    Ok(())
}
