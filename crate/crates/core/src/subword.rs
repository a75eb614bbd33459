//! Subword vocabulary training, encoding, and tokenizer diagnostics.
//!
//! The trainer is a greedy highest-frequency pair merger over
//! NFC-normalized, whitespace-split words. Word-initial pieces carry a
//! boundary marker glued to their first character, SentencePiece-style.
//! Ties between equally frequent pairs break lexicographically, so
//! training is a pure function of the input text, and both marked and
//! unmarked single-character symbols for every observed character seed
//! the base vocabulary, so any word built from training characters
//! encodes without unknowns.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

/// Training input is capped at this many lines.
pub const TRAIN_LINE_CAP: usize = 5_000_000;

pub const DEFAULT_MARKER: char = '▁';

/// The five reserved tokens, in id order starting at 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpecialTokens {
    pub begin: String,
    pub end: String,
    pub pad: String,
    pub mask: String,
    pub unknown: String,
}

impl Default for SpecialTokens {
    fn default() -> Self {
        Self {
            begin: "<s>".into(),
            end: "</s>".into(),
            pad: "<pad>".into(),
            mask: "<mask>".into(),
            unknown: "<unk>".into(),
        }
    }
}

impl SpecialTokens {
    pub fn as_vec(&self) -> Vec<String> {
        vec![
            self.begin.clone(),
            self.end.clone(),
            self.pad.clone(),
            self.mask.clone(),
            self.unknown.clone(),
        ]
    }
}

pub const BEGIN_ID: u32 = 0;
pub const END_ID: u32 = 1;
pub const PAD_ID: u32 = 2;
pub const MASK_ID: u32 = 3;
pub const UNK_ID: u32 = 4;
pub const N_SPECIALS: u32 = 5;

#[derive(Debug, Error)]
pub enum SubwordError {
    #[error("vocab budget {budget} is below the base inventory of {base} (specials + alphabet symbols)")]
    BudgetTooSmall { budget: usize, base: usize },
    #[error("vocab budget {budget} is unreachable: merges exhausted at size {reached}")]
    BudgetUnreachable { budget: usize, reached: usize },
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("diagnostics need a nonempty sample")]
    EmptySample,
    #[error("cannot read {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("model file malformed at line {line}: {message}")]
    Malformed { line: usize, message: String },
}

/// Trained subword vocabulary: ordered tokens, prioritized merge rules,
/// and the marker/special conventions needed to encode and decode.
#[derive(Debug, Clone)]
pub struct SubwordModel {
    specials: SpecialTokens,
    marker: char,
    vocab: Vec<String>,
    token_ids: HashMap<String, u32>,
    merges: Vec<(String, String)>,
    merge_ranks: HashMap<(String, String), usize>,
    alphabet: BTreeSet<char>,
}

impl SubwordModel {
    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn marker(&self) -> char {
        self.marker
    }

    pub fn specials(&self) -> &SpecialTokens {
        &self.specials
    }

    pub fn tokens(&self) -> &[String] {
        &self.vocab
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn alphabet(&self) -> &BTreeSet<char> {
        &self.alphabet
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.vocab.get(id as usize).map(|s| s.as_str())
    }

    pub fn id_of(&self, token: &str) -> Option<u32> {
        self.token_ids.get(token).copied()
    }

    pub fn is_special(id: u32) -> bool {
        id < N_SPECIALS
    }

    /// Token surface with any leading boundary marker removed.
    pub fn normalized_surface<'a>(&self, token: &'a str) -> &'a str {
        token.strip_prefix(self.marker).unwrap_or(token)
    }
}

fn word_symbols(word: &str, marker: char) -> Vec<String> {
    let mut symbols = Vec::new();
    for (i, c) in word.chars().enumerate() {
        if i == 0 {
            symbols.push(format!("{marker}{c}"));
        } else {
            symbols.push(c.to_string());
        }
    }
    symbols
}

/// Train a subword model with a greedy pair-merge loop.
///
/// Deterministic given the line sequence: word and pair counts live in
/// ordered maps and equal-count ties pick the lexicographically smallest
/// pair. Stops exactly at `vocab_size`; a budget below the base
/// inventory, or one that merges cannot reach, is an error.
pub fn train_subword(
    lines: impl IntoIterator<Item = String>,
    vocab_size: usize,
    specials: SpecialTokens,
    marker: char,
) -> Result<SubwordModel, SubwordError> {
    let mut word_counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut alphabet: BTreeSet<char> = BTreeSet::new();
    for line in lines.into_iter().take(TRAIN_LINE_CAP) {
        let normalized: String = line.nfc().collect();
        for word in normalized.split_whitespace() {
            *word_counts.entry(word.to_string()).or_insert(0) += 1;
            alphabet.extend(word.chars());
        }
    }
    if word_counts.is_empty() {
        return Err(SubwordError::EmptyCorpus);
    }

    let mut vocab: Vec<String> = specials.as_vec();
    let mut base_symbols: BTreeSet<String> = BTreeSet::new();
    for c in &alphabet {
        base_symbols.insert(c.to_string());
        base_symbols.insert(format!("{marker}{c}"));
    }
    vocab.extend(base_symbols.iter().cloned());
    if vocab_size < vocab.len() {
        return Err(SubwordError::BudgetTooSmall { budget: vocab_size, base: vocab.len() });
    }

    let mut words: Vec<(Vec<String>, u64)> = word_counts
        .iter()
        .map(|(word, count)| (word_symbols(word, marker), *count))
        .collect();

    let mut merges: Vec<(String, String)> = Vec::new();
    let mut in_vocab: BTreeSet<String> = vocab.iter().cloned().collect();
    while vocab.len() < vocab_size {
        let mut pair_counts: BTreeMap<(&str, &str), u64> = BTreeMap::new();
        for (symbols, count) in &words {
            for pair in symbols.windows(2) {
                *pair_counts.entry((pair[0].as_str(), pair[1].as_str())).or_insert(0) += count;
            }
        }
        // BTreeMap iterates in pair order, so keeping the first strict
        // maximum realizes the lexicographic tie-break.
        let best = pair_counts
            .iter()
            .fold(None, |best: Option<(&(&str, &str), u64)>, (pair, count)| match best {
                Some((_, best_count)) if *count <= best_count => best,
                _ => Some((pair, *count)),
            });
        let Some(((left, right), _)) = best else {
            return Err(SubwordError::BudgetUnreachable {
                budget: vocab_size,
                reached: vocab.len(),
            });
        };
        let (left, right) = (left.to_string(), right.to_string());
        let merged = format!("{left}{right}");

        for (symbols, _) in &mut words {
            let mut i = 0;
            while i + 1 < symbols.len() {
                if symbols[i] == left && symbols[i + 1] == right {
                    symbols[i] = merged.clone();
                    symbols.remove(i + 1);
                }
                i += 1;
            }
        }
        merges.push((left, right));
        // Distinct merge paths can produce an already-known string; the
        // rule still applies during encoding but adds no vocab entry.
        if in_vocab.insert(merged.clone()) {
            vocab.push(merged);
        }
        if merges.len() > vocab_size.saturating_mul(8) + 1024 {
            return Err(SubwordError::BudgetUnreachable {
                budget: vocab_size,
                reached: vocab.len(),
            });
        }
    }

    let token_ids = vocab
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i as u32))
        .collect();
    let merge_ranks = merges
        .iter()
        .enumerate()
        .map(|(i, m)| (m.clone(), i))
        .collect();
    Ok(SubwordModel { specials, marker, vocab, token_ids, merges, merge_ranks, alphabet })
}

fn encode_word(model: &SubwordModel, word: &str, out: &mut Vec<u32>) {
    let mut symbols = word_symbols(word, model.marker);
    loop {
        let mut best: Option<(usize, usize)> = None; // (rank, position)
        for i in 0..symbols.len().saturating_sub(1) {
            let key = (symbols[i].clone(), symbols[i + 1].clone());
            if let Some(&rank) = model.merge_ranks.get(&key) {
                if best.map_or(true, |(r, _)| rank < r) {
                    best = Some((rank, i));
                }
            }
        }
        let Some((_, i)) = best else { break };
        let merged = format!("{}{}", symbols[i], symbols[i + 1]);
        symbols[i] = merged;
        symbols.remove(i + 1);
    }
    for symbol in symbols {
        out.push(model.id_of(&symbol).unwrap_or(UNK_ID));
    }
}

/// Encode text to token ids, optionally wrapped in begin/end.
///
/// Characters outside the training alphabet become one unknown id each.
pub fn encode(model: &SubwordModel, text: &str, with_specials: bool) -> Vec<u32> {
    let normalized: String = text.nfc().collect();
    let mut ids = Vec::new();
    if with_specials {
        ids.push(BEGIN_ID);
    }
    for word in normalized.split_whitespace() {
        encode_word(model, word, &mut ids);
    }
    if with_specials {
        ids.push(END_ID);
    }
    ids
}

/// Decode ids back to text. Begin/end/pad/mask disappear; unknown ids
/// surface as the unknown token string. Exact for text over the training
/// alphabet, modulo whitespace normalization.
pub fn decode(model: &SubwordModel, ids: &[u32]) -> String {
    let mut joined = String::new();
    for &id in ids {
        match id {
            BEGIN_ID | END_ID | PAD_ID | MASK_ID => {}
            UNK_ID => joined.push_str(&model.specials.unknown),
            _ => {
                if let Some(token) = model.token(id) {
                    joined.push_str(token);
                }
            }
        }
    }
    joined
        .split(model.marker)
        .filter(|piece| !piece.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Tokenizer health measures over a text sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenizerDiagnostics {
    /// Input characters (whitespace and markers excluded) per content token.
    pub chars_per_token: f64,
    /// Unknown tokens over all content tokens.
    pub unk_unigram_frequency: f64,
    /// Mean encoded length per line, begin/end included.
    pub mean_sequence_length: f64,
}

impl TokenizerDiagnostics {
    pub fn to_tsv(&self) -> String {
        format!(
            "metric\tvalue\nchars_per_token\t{:.4}\nunk_unigram_frequency\t{:.6}\nmean_sequence_length\t{:.4}\n",
            self.chars_per_token, self.unk_unigram_frequency, self.mean_sequence_length
        )
    }
}

/// Compute [`TokenizerDiagnostics`] over a sample of lines.
///
/// Character totals come from the input (non-whitespace characters), so
/// an unknown character contributes one character and one token and the
/// ratio collapses toward 1 as coverage degrades.
pub fn diagnostics(
    model: &SubwordModel,
    sample: &[String],
) -> Result<TokenizerDiagnostics, SubwordError> {
    if sample.is_empty() {
        return Err(SubwordError::EmptySample);
    }
    let mut chars = 0usize;
    let mut tokens = 0usize;
    let mut unks = 0usize;
    for line in sample {
        let normalized: String = line.nfc().collect();
        for word in normalized.split_whitespace() {
            chars += word.chars().count();
        }
        let ids = encode(model, line, false);
        tokens += ids.len();
        unks += ids.iter().filter(|&&id| id == UNK_ID).count();
    }
    let tokens_f = tokens.max(1) as f64;
    Ok(TokenizerDiagnostics {
        chars_per_token: chars as f64 / tokens_f,
        unk_unigram_frequency: unks as f64 / tokens_f,
        mean_sequence_length: (tokens + 2 * sample.len()) as f64 / sample.len() as f64,
    })
}

/// Mean encoded sequence length over lines, begin/end included.
pub fn mean_sequence_length(model: &SubwordModel, lines: &[String]) -> f64 {
    if lines.is_empty() {
        return 0.0;
    }
    let total: usize = lines.iter().map(|l| encode(model, l, true).len()).sum();
    total as f64 / lines.len() as f64
}

impl SubwordModel {
    /// Serialize as a plain-text file: a header with sizes and
    /// conventions, the vocabulary in id order, then the merge rules in
    /// priority order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("subword-model v1\n");
        out.push_str(&format!("marker\t{}\n", self.marker));
        out.push_str(&format!(
            "specials\t{}\t{}\t{}\t{}\t{}\n",
            self.specials.begin,
            self.specials.end,
            self.specials.pad,
            self.specials.mask,
            self.specials.unknown
        ));
        out.push_str(&format!("alphabet\t{}\n", self.alphabet.iter().collect::<String>()));
        out.push_str(&format!("vocab\t{}\n", self.vocab.len()));
        out.push_str(&format!("merges\t{}\n", self.merges.len()));
        for token in &self.vocab {
            out.push_str(token);
            out.push('\n');
        }
        for (left, right) in &self.merges {
            out.push_str(&format!("{left} {right}\n"));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, SubwordError> {
        let malformed = |line: usize, message: &str| SubwordError::Malformed {
            line,
            message: message.to_string(),
        };
        let mut lines = text.lines().enumerate();
        let mut expect = |what: &str| {
            lines
                .next()
                .ok_or_else(|| malformed(0, &format!("missing {what}")))
        };

        let (_, magic) = expect("magic")?;
        if magic != "subword-model v1" {
            return Err(malformed(1, "bad magic"));
        }
        let (n, marker_line) = expect("marker")?;
        let marker = marker_line
            .strip_prefix("marker\t")
            .and_then(|m| m.chars().next())
            .ok_or_else(|| malformed(n + 1, "bad marker line"))?;
        let (n, specials_line) = expect("specials")?;
        let parts: Vec<&str> = specials_line.split('\t').collect();
        if parts.len() != 6 || parts[0] != "specials" {
            return Err(malformed(n + 1, "bad specials line"));
        }
        let specials = SpecialTokens {
            begin: parts[1].into(),
            end: parts[2].into(),
            pad: parts[3].into(),
            mask: parts[4].into(),
            unknown: parts[5].into(),
        };
        let (n, alpha_line) = expect("alphabet")?;
        let alphabet: BTreeSet<char> = alpha_line
            .strip_prefix("alphabet\t")
            .ok_or_else(|| malformed(n + 1, "bad alphabet line"))?
            .chars()
            .collect();
        let (n, vocab_line) = expect("vocab count")?;
        let vocab_len: usize = vocab_line
            .strip_prefix("vocab\t")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| malformed(n + 1, "bad vocab count"))?;
        let (n, merges_line) = expect("merge count")?;
        let merges_len: usize = merges_line
            .strip_prefix("merges\t")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| malformed(n + 1, "bad merge count"))?;

        let mut vocab = Vec::with_capacity(vocab_len);
        for _ in 0..vocab_len {
            let (n, token) = lines
                .next()
                .ok_or_else(|| malformed(0, "vocab list truncated"))?;
            if token.is_empty() {
                return Err(malformed(n + 1, "empty vocab entry"));
            }
            vocab.push(token.to_string());
        }
        let mut merges = Vec::with_capacity(merges_len);
        for _ in 0..merges_len {
            let (n, rule) = lines
                .next()
                .ok_or_else(|| malformed(0, "merge list truncated"))?;
            let (left, right) = rule
                .split_once(' ')
                .ok_or_else(|| malformed(n + 1, "merge rule needs two symbols"))?;
            merges.push((left.to_string(), right.to_string()));
        }

        let token_ids = vocab
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        let merge_ranks = merges
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        Ok(Self { specials, marker, vocab, token_ids, merges, merge_ranks, alphabet })
    }

    pub fn save(&self, path: &Path) -> Result<(), SubwordError> {
        std::fs::write(path, self.to_text()).map_err(|source| SubwordError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, SubwordError> {
        let text = std::fs::read_to_string(path).map_err(|source| SubwordError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_text(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn train_on(lines: &[&str], budget: usize) -> SubwordModel {
        train_subword(
            lines.iter().map(|s| s.to_string()),
            budget,
            SpecialTokens::default(),
            DEFAULT_MARKER,
        )
        .unwrap()
    }

    fn repeated(line: &str, times: usize) -> Vec<String> {
        std::iter::repeat(line.to_string()).take(times).collect()
    }

    #[test]
    fn merge_for_frequent_pair_appears() {
        // Base inventory: 5 specials + {a, b, ▁a, ▁b} = 9; budget 10 buys
        // one merge, and (▁a, b) is the most frequent pair.
        let model = train_subword(
            repeated("abab ab", 1000),
            10,
            SpecialTokens::default(),
            DEFAULT_MARKER,
        )
        .unwrap();
        assert!(model
            .tokens()
            .iter()
            .any(|t| model.normalized_surface(t) == "ab"));
    }

    #[test]
    fn encode_uses_both_merges_from_traced_run() {
        // Budget 11 = base 9 + 2 merges. Traced by hand: merge 1 is
        // (▁a, b) with count 2000; merge 2 ties at 1000 and the
        // lexicographic break picks (a, b) over (▁ab, a).
        let model = train_subword(
            repeated("abab ab", 1000),
            11,
            SpecialTokens::default(),
            DEFAULT_MARKER,
        )
        .unwrap();
        assert_eq!(model.merges()[0], ("▁a".to_string(), "b".to_string()));
        assert_eq!(model.merges()[1], ("a".to_string(), "b".to_string()));
        let ids = encode(&model, "abab", false);
        assert_eq!(ids.len(), 2);
        assert!(ids.iter().all(|&id| !SubwordModel::is_special(id)));
    }

    #[test]
    fn budget_at_base_inventory_gives_character_model() {
        let model = train_on(&["ab ba"], 9);
        assert_eq!(model.vocab_size(), 9);
        assert!(model.merges().is_empty());
        assert_eq!(encode(&model, "ab", false).len(), 2);
    }

    #[test]
    fn budget_below_base_inventory_is_rejected() {
        let result = train_subword(
            repeated("ab", 5),
            8,
            SpecialTokens::default(),
            DEFAULT_MARKER,
        );
        assert!(matches!(result, Err(SubwordError::BudgetTooSmall { .. })));
    }

    #[test]
    fn training_is_deterministic() {
        let a = train_on(&["koer magab", "kass magab", "koer jookseb"], 40);
        let b = train_on(&["koer magab", "kass magab", "koer jookseb"], 40);
        assert_eq!(a.tokens(), b.tokens());
        assert_eq!(a.merges(), b.merges());
    }

    #[test]
    fn out_of_alphabet_char_is_single_unknown() {
        let model = train_on(&["ab ab"], 10);
        assert_eq!(encode(&model, "Ж", false), vec![UNK_ID]);
    }

    #[test]
    fn specials_occupy_lowest_ids() {
        let model = train_on(&["ab"], 9);
        assert_eq!(model.id_of("<s>"), Some(BEGIN_ID));
        assert_eq!(model.id_of("</s>"), Some(END_ID));
        assert_eq!(model.id_of("<pad>"), Some(PAD_ID));
        assert_eq!(model.id_of("<mask>"), Some(MASK_ID));
        assert_eq!(model.id_of("<unk>"), Some(UNK_ID));
    }

    #[test]
    fn every_emitted_id_is_in_range() {
        let model = train_on(&["üks kaks kolm neli viis"], 40);
        for id in encode(&model, "üks kuus seitse", true) {
            assert!((id as usize) < model.vocab_size());
        }
    }

    #[test]
    fn roundtrip_over_training_alphabet() {
        let model = train_on(&["tere tulemast koju", "tere hommikust"], 40);
        let text = "tere koju hommikust";
        assert_eq!(decode(&model, &encode(&model, text, true)), text);
    }

    #[test]
    fn whitespace_normalizes_on_roundtrip() {
        let model = train_on(&["a b"], 9);
        assert_eq!(decode(&model, &encode(&model, "  a   b ", false)), "a b");
    }

    #[test]
    fn chars_per_token_counts_whole_word_token() {
        // Trace for "aaaa": (a,a) wins first, then ties resolve
        // lexicographically until ▁aaaa exists as one piece at budget
        // 10 = 5 specials + {a, ▁a} + 3 merges.
        let full = train_subword(
            repeated("aaaa", 50),
            10,
            SpecialTokens::default(),
            DEFAULT_MARKER,
        )
        .unwrap();
        let ids = encode(&full, "aaaa", false);
        assert_eq!(ids.len(), 1, "tokens: {:?}", full.tokens());
        let diag = diagnostics(&full, &["aaaa".to_string()]).unwrap();
        assert_eq!(diag.chars_per_token, 4.0);
        assert_eq!(diag.unk_unigram_frequency, 0.0);
    }

    #[test]
    fn unknown_frequency_small_on_training_text() {
        let lines: Vec<String> = vec![
            "kala ujub vees".into(),
            "koer magab maja ees".into(),
            "kass istub aknal".into(),
        ];
        let model = train_subword(
            lines.clone().into_iter(),
            60,
            SpecialTokens::default(),
            DEFAULT_MARKER,
        )
        .unwrap();
        let diag = diagnostics(&model, &lines).unwrap();
        assert!(diag.unk_unigram_frequency <= 0.005);
    }

    #[test]
    fn disjoint_alphabet_collapses_diagnostics() {
        let train: Vec<String> = vec!["kala ujub vees".into(), "koer magab maja ees".into()];
        let model = train_subword(
            train.clone().into_iter(),
            48,
            SpecialTokens::default(),
            DEFAULT_MARKER,
        )
        .unwrap();
        let in_domain = diagnostics(&model, &train).unwrap();
        let shifted: Vec<String> = vec!["щурӧм вӧлӧм".into(), "гӧгӧр бур".into()];
        let out = diagnostics(&model, &shifted).unwrap();
        assert!(out.unk_unigram_frequency >= 0.5);
        assert!(out.chars_per_token < in_domain.chars_per_token);
        assert!(out.chars_per_token <= 1.05);
    }

    #[test]
    fn empty_sample_is_rejected() {
        let model = train_on(&["ab"], 9);
        assert!(matches!(diagnostics(&model, &[]), Err(SubwordError::EmptySample)));
    }

    #[test]
    fn character_model_sequence_length_is_content_plus_specials() {
        let model = train_on(&["ab cd"], 13);
        assert_eq!(mean_sequence_length(&model, &["ab cd".to_string()]), 6.0);
    }

    #[test]
    fn larger_budget_weakly_shortens_sequences() {
        let lines: Vec<String> = (0..50)
            .map(|i| format!("sõna number {} kordub siin tekstis", i % 7))
            .collect();
        let small = train_subword(
            lines.clone().into_iter(),
            50,
            SpecialTokens::default(),
            DEFAULT_MARKER,
        )
        .unwrap();
        let large = train_subword(
            lines.clone().into_iter(),
            62,
            SpecialTokens::default(),
            DEFAULT_MARKER,
        )
        .unwrap();
        assert!(mean_sequence_length(&large, &lines) <= mean_sequence_length(&small, &lines));
    }

    #[test]
    fn compression_is_monotone_in_budget() {
        let lines: Vec<String> = (0..60)
            .map(|i| format!("mets järv mägi {} jõgi saar {}", i % 5, (i * 3) % 7))
            .collect();
        let mut last = 0.0;
        for budget in [44, 48, 52, 56] {
            let model = train_subword(
                lines.clone().into_iter(),
                budget,
                SpecialTokens::default(),
                DEFAULT_MARKER,
            )
            .unwrap();
            let cpt = diagnostics(&model, &lines).unwrap().chars_per_token;
            assert!(cpt >= last - 1e-12, "budget {budget}: {cpt} < {last}");
            last = cpt;
        }
    }

    #[test]
    fn text_roundtrip_preserves_model() {
        let model = train_on(&["tere tulemast", "tere õhtust", "head aega"], 45);
        let restored = SubwordModel::from_text(&model.to_text()).unwrap();
        assert_eq!(model.tokens(), restored.tokens());
        assert_eq!(model.merges(), restored.merges());
        assert_eq!(model.alphabet(), restored.alphabet());
        let text = "tere aega";
        assert_eq!(
            encode(&model, text, true),
            encode(&restored, text, true)
        );
    }

    proptest! {
        #[test]
        fn roundtrip_holds_for_words_over_the_alphabet(
            words in proptest::collection::vec("[abcdef]{1,8}", 1..6)
        ) {
            let corpus = ["abc def fed cba", "ace bdf abcdef"];
            let model = train_on(&corpus, 30);
            let text = words.join(" ");
            prop_assert_eq!(decode(&model, &encode(&model, &text, true)), text);
        }

        #[test]
        fn encode_never_exceeds_vocab_range(text in "\\PC{0,40}") {
            let model = train_on(&["tere maailm"], 26);
            for id in encode(&model, &text, true) {
                prop_assert!((id as usize) < model.vocab_size());
            }
        }
    }
}
