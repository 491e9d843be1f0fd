//! Corpus BLEU on hand-written hypotheses.
//!
//! cargo run --release --example bleu_score

use convrec_nmt::evaluation::bleu_corpus;

fn words(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

fn main() -> convrec_nmt::Result<()> {
    let refs: Vec<Vec<&str>> = ["the cat is on the mat", "there is a dog in the garden", "i am hungry"]
        .iter()
        .map(|s| words(s))
        .collect();

    let cases = [
        ("identical", ["the cat is on the mat", "there is a dog in the garden", "i am hungry"]),
        ("close", ["the cat sat on the mat", "there is a dog in a garden", "i am hungry"]),
        ("short", ["the cat", "a dog", "hungry"]),
        ("unrelated", ["completely different words here", "nothing matches", "at all"]),
    ];
    for (name, hyps) in cases {
        let hyps: Vec<Vec<&str>> = hyps.iter().map(|s| words(s)).collect();
        println!("{name:>9}: {}", bleu_corpus(&hyps, &refs)?);
    }

    let clipped = bleu_corpus(&[words("the the the")], &[words("the cat")])?;
    println!("clipped unigram precision of \"the the the\" vs \"the cat\": {}", clipped.precisions[0]);
    Ok(())
}
