//! A small synthetic German-English corpus with real morphology and word
//! order effects (case-marked articles, adjective endings, verb-second
//! fronting, negation with `nicht`/`kein`).
//!
//! English renderings vary freely between synonyms, contractions and adverb
//! placement, the way a crowd-sourced corpus holds several phrasings of the
//! same sentence; the German side alone never determines them.
//!
//! Used for desk-scale experiments where no downloaded corpus is available.
//! Lines come out in Tatoeba order: `English<TAB>German`, so loading them
//! without column swapping translates German into English.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{parse_tsv, SentencePair};

#[derive(Clone, Copy, PartialEq, Eq)]
enum Gender {
    M,
    F,
    N,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Case {
    Nom,
    Acc,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Det {
    The,
    A,
    No,
}

const NOUNS: &[(&str, &str, Gender)] = &[
    ("man", "Mann", Gender::M),
    ("woman", "Frau", Gender::F),
    ("child", "Kind", Gender::N),
    ("dog", "Hund", Gender::M),
    ("cat", "Katze", Gender::F),
    ("horse", "Pferd", Gender::N),
    ("teacher", "Lehrer", Gender::M),
    ("girl", "Mädchen", Gender::N),
    ("book", "Buch", Gender::N),
    ("apple", "Apfel", Gender::M),
    ("car", "Auto", Gender::N),
    ("house", "Haus", Gender::N),
    ("table", "Tisch", Gender::M),
    ("ball", "Ball", Gender::M),
    ("flower", "Blume", Gender::F),
    ("letter", "Brief", Gender::M),
    ("door", "Tür", Gender::F),
    ("bird", "Vogel", Gender::M),
];

const ANIMATE: usize = 8;

const ADJECTIVES: &[(&[&str], &str)] = &[
    (&["big", "large"], "groß"),
    (&["small", "little"], "klein"),
    (&["old"], "alt"),
    (&["young"], "jung"),
    (&["red"], "rot"),
    (&["new"], "neu"),
];

/// English (third person, base form) variants and the German third person.
const VERBS: &[(&[(&str, &str)], &str)] = &[
    (&[("sees", "see")], "sieht"),
    (&[("likes", "like")], "mag"),
    (&[("has", "have")], "hat"),
    (&[("buys", "buy")], "kauft"),
    (&[("finds", "find")], "findet"),
    (&[("needs", "need")], "braucht"),
    (&[("visits", "visit")], "besucht"),
    (&[("holds", "hold")], "hält"),
    (&[("looks for", "look for"), ("searches for", "search for")], "sucht"),
];

const ADVERBS: &[(&[&str], &str)] = &[
    (&["today"], "heute"),
    (&["now", "right now"], "jetzt"),
    (&["often", "frequently"], "oft"),
    (&["again"], "wieder"),
    (&["here"], "hier"),
];

fn pick<'a, T, R: Rng>(rng: &mut R, options: &'a [T]) -> &'a T {
    &options[rng.gen_range(0..options.len())]
}

fn article(det: Det, gender: Gender, case: Case) -> &'static str {
    use {Case::*, Gender::*};
    match (det, gender, case) {
        (Det::The, M, Nom) => "der",
        (Det::The, M, Acc) => "den",
        (Det::The, F, _) => "die",
        (Det::The, N, _) => "das",
        (Det::A, M, Acc) => "einen",
        (Det::A, F, _) => "eine",
        (Det::A, _, _) => "ein",
        (Det::No, M, Acc) => "keinen",
        (Det::No, F, _) => "keine",
        (Det::No, _, _) => "kein",
    }
}

fn adjective_ending(det: Det, gender: Gender, case: Case) -> &'static str {
    use {Case::*, Gender::*};
    match (det, gender, case) {
        (_, M, Acc) => "en",
        (Det::The, _, _) => "e",
        (_, M, Nom) => "er",
        (_, F, _) => "e",
        (_, N, _) => "es",
    }
}

struct Phrase {
    en: String,
    de: String,
}

/// English and German renderings of one noun phrase. English always uses
/// `det_en`; German may differ (negated indefinites take `kein`).
fn noun_phrase<R: Rng>(rng: &mut R, noun: usize, adjective: Option<usize>, det_en: Det, det_de: Det, case: Case) -> Phrase {
    let (en_noun, de_noun, gender) = NOUNS[noun];
    let adj = adjective.map(|i| (*pick(rng, ADJECTIVES[i].0), ADJECTIVES[i].1));
    let en_det = match det_en {
        Det::The => "the",
        _ => {
            let first = adj.map_or(en_noun, |(a, _)| a);
            if first.starts_with(['a', 'e', 'i', 'o', 'u']) {
                "an"
            } else {
                "a"
            }
        }
    };
    let mut en = en_det.to_string();
    let mut de = article(det_de, gender, case).to_string();
    if let Some((a_en, a_de)) = adj {
        en = format!("{en} {a_en}");
        de = format!("{de} {a_de}{}", adjective_ending(det_de, gender, case));
    }
    Phrase {
        en: format!("{en} {en_noun}"),
        de: format!("{de} {de_noun}"),
    }
}

fn maybe_adjective<R: Rng>(rng: &mut R) -> Option<usize> {
    rng.gen_bool(0.4).then(|| rng.gen_range(0..ADJECTIVES.len()))
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    chars
        .next()
        .map(|c| c.to_uppercase().chain(chars).collect())
        .unwrap_or_default()
}

fn sentence<R: Rng>(rng: &mut R) -> (String, String) {
    let subject_det = if rng.gen_bool(0.7) { Det::The } else { Det::A };
    let subject_adj = maybe_adjective(rng);
    let subject_noun = rng.gen_range(0..ANIMATE);
    let subject = noun_phrase(rng, subject_noun, subject_adj, subject_det, subject_det, Case::Nom);

    let (variants, vde) = VERBS[rng.gen_range(0..VERBS.len())];
    let (v3, vbase) = *pick(rng, variants);
    let negated = rng.gen_bool(0.25);
    let object_det = if rng.gen_bool(0.6) { Det::The } else { Det::A };
    let object_de_det = if negated && object_det == Det::A { Det::No } else { object_det };
    let object_adj = maybe_adjective(rng);
    let object_noun = rng.gen_range(0..NOUNS.len());
    let object = noun_phrase(rng, object_noun, object_adj, object_det, object_de_det, Case::Acc);
    let adverb = rng
        .gen_bool(0.5)
        .then(|| *pick(rng, ADVERBS))
        .map(|(en, de)| (*pick(rng, en), de));
    let fronted = rng.gen_bool(0.5);

    let verb_en = match (negated, rng.gen_bool(0.5)) {
        (false, _) => v3.to_string(),
        (true, true) => format!("does not {vbase}"),
        (true, false) => format!("doesn't {vbase}"),
    };
    let mut en = format!("{} {verb_en} {}", subject.en, object.en);
    match adverb {
        Some((a, _)) if rng.gen_bool(0.2) => en = format!("{a}, {en}"),
        Some((a, _)) => en = format!("{en} {a}"),
        None => {}
    }

    let mut de = match adverb {
        Some((_, a)) if fronted => format!("{a} {vde} {} {}", subject.de, object.de),
        Some((_, a)) => format!("{} {vde} {} {a}", subject.de, object.de),
        None => format!("{} {vde} {}", subject.de, object.de),
    };
    if negated && object_de_det != Det::No {
        de.push_str(" nicht");
    }
    (capitalize(&format!("{en}.")), capitalize(&format!("{de}.")))
}

/// `n` distinct `English<TAB>German` lines, deterministic in `seed`.
pub fn generate_tsv(n: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut lines = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while lines.len() < n && attempts < n * 50 + 1000 {
        attempts += 1;
        let (en, de) = sentence(&mut rng);
        if seen.insert(de.clone()) {
            lines.push(format!("{en}\t{de}"));
        }
    }
    lines.shuffle(&mut rng);
    let mut text = lines.join("\n");
    text.push('\n');
    text
}

/// Tokenized German-to-English pairs.
pub fn generate(n: usize, seed: u64) -> Vec<SentencePair> {
    parse_tsv(&generate_tsv(n.max(1), seed), false)
        .map(|c| c.pairs)
        .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_distinct() {
        let a = generate_tsv(200, 3);
        assert_eq!(a, generate_tsv(200, 3));
        let pairs = generate(200, 3);
        assert_eq!(pairs.len(), 200);
        let distinct: HashSet<_> = pairs.iter().map(|p| p.source.clone()).collect();
        assert_eq!(distinct.len(), 200);
    }

    #[test]
    fn german_morphology() {
        assert_eq!(article(Det::The, Gender::M, Case::Acc), "den");
        assert_eq!(article(Det::No, Gender::M, Case::Acc), "keinen");
        assert_eq!(adjective_ending(Det::A, Gender::N, Case::Nom), "es");
        assert_eq!(adjective_ending(Det::The, Gender::M, Case::Nom), "e");
    }

    #[test]
    fn lines_are_tatoeba_ordered() {
        let text = generate_tsv(50, 1);
        for line in text.lines() {
            let (en, de) = line.split_once('\t').unwrap();
            assert!(en.ends_with('.') && de.ends_with('.'));
        }
    }
}
