//! Synthetic fixtures shared by the integration suites: two toy
//! languages with disjoint scripts, a deterministic tag language, and a
//! previous-word-attachment grammar. All generators are seeded, so the
//! first `k` sentences of a size-`n` call are a prefix of a larger call
//! and slices make proper held-out splits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use adapt_core::subword::{train_subword, SpecialTokens, SubwordModel, DEFAULT_MARKER};
use adapt_core::tasks::Sentence;

pub const LANG_A_WORDS: [&str; 10] =
    ["kala", "koer", "ujub", "magab", "suur", "hea", "maja", "mets", "järv", "jões"];
pub const LANG_B_WORDS: [&str; 8] =
    ["вода", "кофе", "мост", "небо", "гора", "путь", "стол", "окно"];

pub fn language_a(n: usize) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA11A);
    (0..n)
        .map(|_| {
            let k = rng.gen_range(4..9);
            (0..k)
                .map(|_| LANG_A_WORDS[rng.gen_range(0..LANG_A_WORDS.len())])
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}

pub fn language_b(n: usize) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xB22B);
    (0..n)
        .map(|_| {
            let k = rng.gen_range(3..7);
            (0..k)
                .map(|_| LANG_B_WORDS[rng.gen_range(0..LANG_B_WORDS.len())])
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}

/// Tokenizer over both toy languages. Budget 128 is comfortably below
/// the merge capacity of the mixed corpus.
pub fn toy_tokenizer() -> SubwordModel {
    let mut lines = language_a(400);
    lines.extend(language_b(100));
    train_subword(lines.into_iter(), 128, SpecialTokens::default(), DEFAULT_MARKER).unwrap()
}

fn tag_of(word: &str) -> &'static str {
    match word {
        "kala" | "koer" | "maja" | "mets" | "järv" | "jões" => "NOUN",
        "ujub" | "magab" => "VERB",
        _ => "ADJ",
    }
}

/// Sentences whose tag is a pure function of the word identity.
pub fn tag_language(n: usize) -> Vec<Sentence> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7A6);
    (0..n)
        .map(|_| {
            let k = rng.gen_range(3..7);
            let words: Vec<String> = (0..k)
                .map(|_| LANG_A_WORDS[rng.gen_range(0..LANG_A_WORDS.len())].to_string())
                .collect();
            Sentence {
                upos: words.iter().map(|w| tag_of(w).to_string()).collect(),
                heads: (0..k).collect(),
                words,
                language: "aa".into(),
            }
        })
        .collect()
}

/// Grammar where word j attaches to word j-1 and the first word to root.
pub fn previous_word_grammar(n: usize) -> Vec<Sentence> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x94a);
    (0..n)
        .map(|_| {
            let k = rng.gen_range(3..8);
            let words: Vec<String> = (0..k)
                .map(|_| LANG_A_WORDS[rng.gen_range(0..LANG_A_WORDS.len())].to_string())
                .collect();
            Sentence {
                upos: vec!["X".to_string(); k],
                heads: (0..k).collect(),
                words,
                language: "aa".into(),
            }
        })
        .collect()
}
