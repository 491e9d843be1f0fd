//! Tokenizes a few TSV lines, builds vocabularies, and prints the padded
//! batches the trainer would see.
//!
//! cargo run --release --example tokenize_and_batch

use convrec_nmt::corpus::{make_batches, parse_tsv, tokenize, Side, Vocabulary};

const TSV: &str = "\
I'm hungry!\tIch habe Hunger!\tCC-BY 2.0 (France) Attribution: tatoeba.org
The dog sleeps.\tDer Hund schläft.
Where is the station?\tWo ist der Bahnhof?
this line has no tab
The cat sleeps.\tDie Katze schläft.
";

fn main() -> convrec_nmt::Result<()> {
    println!("{:?}", tokenize("Don't panic, it's 5:30!"));

    let corpus = parse_tsv(TSV, false)?;
    println!("{} pairs, {} malformed lines skipped", corpus.pairs.len(), corpus.skipped);

    let src = Vocabulary::build(&corpus.pairs, Side::Source, 100, 1)?;
    let tgt = Vocabulary::build(&corpus.pairs, Side::Target, 100, 1)?;
    println!("source vocabulary: {:?}", src.tokens());
    println!("unknown word -> id {}", src.id("flugzeug"));

    for (i, batch) in make_batches(&corpus.pairs, &src, &tgt, 2, 0)?.iter().enumerate() {
        println!("batch {i}");
        for (row, ids) in batch.src_ids.iter().enumerate() {
            println!("  src {ids:?}  len {}", batch.src_lengths[row]);
        }
        for (ids, mask) in batch.tgt_ids.iter().zip(&batch.tgt_mask) {
            println!("  tgt {ids:?}  mask {mask:?}");
        }
    }
    Ok(())
}
