//! Depth and position-embedding sweep on a synthetic 5,000-pair corpus.
//!
//! cargo run --release --example ablation_sweep [-- depths seeds]
//! e.g. `-- 3 1,2,3` trains depth 3 with and without position embeddings
//! for three seeds.

use std::time::Instant;

use convrec_nmt::corpus::{default_split, toy};
use convrec_nmt::evaluation::{ablation_sweep, median, AblationTable};
use convrec_nmt::{Preset, TrainConfig};

fn list<T: std::str::FromStr>(arg: Option<&String>, default: &str) -> Vec<T> {
    arg.map(String::as_str)
        .unwrap_or(default)
        .split(',')
        .map(|s| s.parse().ok().expect("comma-separated list"))
        .collect()
}

fn main() -> convrec_nmt::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let depths: Vec<usize> = list(args.first(), "3");
    let seeds: Vec<u64> = list(args.get(1), "1");
    let pairs = toy::generate(5000, 2024);
    let (train, val, test) = default_split(&pairs, 0);
    println!("{} train / {} validation / {} test", train.len(), val.len(), test.len());
    let mut table = AblationTable::default();
    let start = Instant::now();
    for seed in seeds {
        let config = TrainConfig {
            seed,
            ..TrainConfig::preset(Preset::Tiny)
        };
        let part = ablation_sweep(&train, &val, &test, &depths, &[true, false], &config, |r| {
            println!(
                "[{:>6.0}s] depth {} pos {:<5} seed {}: {} epochs, val_loss {:.4}, BLEU {:.2}",
                start.elapsed().as_secs_f64(),
                r.config.conv_layers,
                r.config.position_embedding,
                r.config.seed,
                r.epochs_run,
                r.val_loss,
                r.test.bleu
            );
        })?;
        table.rows.extend(part.rows);
    }
    print!("\n{table}");
    for &d in &depths {
        for pos in [true, false] {
            let bleu: Vec<f64> = table.find(d, pos).iter().map(|r| r.test.bleu).collect();
            println!("depth {d} pos {pos}: median BLEU {:.2}", median(&bleu).unwrap_or(f64::NAN));
        }
    }
    Ok(())
}
