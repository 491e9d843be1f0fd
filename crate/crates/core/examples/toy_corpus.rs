//! Writes a synthetic German-English corpus in the Tatoeba TSV layout
//! (`english<TAB>german`) to stdout.
//!
//! cargo run --example toy_corpus -- 5000 > de-en.tsv

use convrec_nmt::corpus::toy;

fn main() {
    let mut args = std::env::args().skip(1);
    let n = args.next().map_or(1000, |s| s.parse().expect("pair count"));
    let seed = args.next().map_or(2024, |s| s.parse().expect("seed"));
    print!("{}", toy::generate_tsv(n, seed));
}
