//! Pipeline stages shared by the subcommands and the grid runner.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{Context, Result};

use adapt_core::corpus::{clean_corpus, split_corpus, write_splits, LanguageCorpus, Split};
use adapt_core::nn::{pretrain, Encoder, PretrainConfig, PretrainOutput};
use adapt_core::sampling::{
    apply_cap, compute_sampling_weights, group_languages, LanguageGroup, LanguageWeight,
    SampleStream, SampleUnit,
};
use adapt_core::subword::{self, train_subword, SpecialTokens, SubwordModel, DEFAULT_MARKER};
use adapt_core::tasks::{read_conllu, Treebank};
use adapt_core::transplant::{
    compute_overlap, focus_initialize, train_auxiliary_embeddings, EmbeddingMatrix,
    FocusConfig, VocabView,
};

use crate::config::RunConfig;

/// One language's cleaned splits, plus its sampling attributes.
#[derive(Debug, Clone)]
pub struct PreparedLanguage {
    pub code: String,
    pub train: Vec<String>,
    pub dev: Vec<String>,
    pub test: Vec<String>,
    pub cap: Option<u64>,
    pub group: Option<String>,
}

pub fn corpus_dir(config: &RunConfig) -> PathBuf {
    config.output_dir.join("corpus")
}

/// Clean every configured language and write split files plus stats.
pub fn clean_all(config: &RunConfig) -> Result<Vec<PreparedLanguage>> {
    let dir = corpus_dir(config);
    std::fs::create_dir_all(&dir)?;
    let cleaning = config.cleaning.to_core();
    let mut prepared = Vec::new();
    for lang in &config.languages {
        let (mut corpus, stats) = clean_corpus(&lang.paths, &lang.code, &cleaning)
            .with_context(|| format!("cleaning {}", lang.code))?;
        split_corpus(
            &mut corpus,
            config.corpus.dev_fraction,
            config.corpus.test_fraction,
            config.corpus.split_seed,
        )?;
        write_splits(&corpus, &stats, &dir)?;
        log::info!(
            "{}: kept {} of {} lines ({} duplicates)",
            lang.code,
            stats.lines_kept,
            stats.lines_in,
            stats.duplicates_removed
        );
        prepared.push(to_prepared(config, &lang.code, &corpus));
    }
    Ok(prepared)
}

fn to_prepared(config: &RunConfig, code: &str, corpus: &LanguageCorpus) -> PreparedLanguage {
    let lang = config.languages.iter().find(|l| l.code == code).expect("configured language");
    PreparedLanguage {
        code: code.to_string(),
        train: corpus.lines_for(Split::Train).map(str::to_string).collect(),
        dev: corpus.lines_for(Split::Dev).map(str::to_string).collect(),
        test: corpus.lines_for(Split::Test).map(str::to_string).collect(),
        cap: lang.cap,
        group: lang.group.clone(),
    }
}

/// Load split files from a previous `clean`, or clean now if absent.
pub fn load_or_clean(config: &RunConfig) -> Result<Vec<PreparedLanguage>> {
    let dir = corpus_dir(config);
    let all_present = config
        .languages
        .iter()
        .all(|l| dir.join(format!("{}.train.txt", l.code)).exists());
    if !all_present {
        return clean_all(config);
    }
    let read_lines = |path: PathBuf| -> Result<Vec<String>> {
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading {}", path.display()))?;
        Ok(text.lines().map(str::to_string).collect())
    };
    let mut prepared = Vec::new();
    for lang in &config.languages {
        prepared.push(PreparedLanguage {
            code: lang.code.clone(),
            train: read_lines(dir.join(format!("{}.train.txt", lang.code)))?,
            dev: read_lines(dir.join(format!("{}.dev.txt", lang.code)))?,
            test: read_lines(dir.join(format!("{}.test.txt", lang.code)))?,
            cap: lang.cap,
            group: lang.group.clone(),
        });
    }
    Ok(prepared)
}

fn size_of(language: &PreparedLanguage, weight_by: &str) -> u64 {
    match weight_by {
        "bytes" => language.train.iter().map(|l| l.len() as u64).sum(),
        _ => language.train.len() as u64,
    }
}

/// Sampling inputs: raw and capped unit sizes (groups merged) and the
/// sampling units whose decks concatenate grouped languages.
pub struct SamplingInputs {
    pub raw_sizes: Vec<(String, u64)>,
    pub capped_sizes: Vec<(String, u64)>,
    pub units: Vec<SampleUnit>,
}

pub fn sampling_inputs(
    config: &RunConfig,
    prepared: &[PreparedLanguage],
) -> Result<SamplingInputs> {
    let weight_by = config.corpus.weight_by.as_str();
    let per_language: Vec<(String, u64)> =
        prepared.iter().map(|l| (l.code.clone(), size_of(l, weight_by))).collect();
    let caps: BTreeMap<String, u64> = prepared
        .iter()
        .filter_map(|l| l.cap.map(|c| (l.code.clone(), c)))
        .collect();
    let capped_per_language = apply_cap(&per_language, &caps);

    let mut groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for lang in prepared {
        if let Some(group) = &lang.group {
            groups.entry(group.clone()).or_default().push(lang.code.clone());
        }
    }
    let groups: Vec<LanguageGroup> = groups
        .into_iter()
        .map(|(name, members)| LanguageGroup { name, members })
        .collect();
    let raw_sizes = group_languages(&per_language, &groups)?;
    let capped_sizes = group_languages(&capped_per_language, &groups)?;

    let mut units = Vec::new();
    for (unit, _) in &capped_sizes {
        let mut lines = Vec::new();
        for lang in prepared {
            let belongs =
                lang.code == *unit || lang.group.as_deref() == Some(unit.as_str());
            if belongs {
                lines.extend(lang.train.iter().cloned());
            }
        }
        units.push(SampleUnit { unit: unit.clone(), lines });
    }
    Ok(SamplingInputs { raw_sizes, capped_sizes, units })
}

impl SamplingInputs {
    pub fn weights(&self, alpha: f64) -> Result<Vec<LanguageWeight>> {
        Ok(compute_sampling_weights(&self.capped_sizes, alpha)?)
    }

    pub fn stream(&self, alpha: f64, seed: u64) -> Result<SampleStream> {
        Ok(SampleStream::new(self.units.clone(), &self.weights(alpha)?, seed)?)
    }
}

/// Train a specialized vocabulary on an alpha-sampled stream.
pub fn train_vocabulary(
    config: &RunConfig,
    inputs: &SamplingInputs,
    vocab_size: usize,
    alpha: f64,
) -> Result<SubwordModel> {
    let total_lines: usize = inputs.units.iter().map(|u| u.lines.len()).sum();
    let take = config.vocab.sample_lines.min(total_lines.max(1) * 50);
    let stream = inputs
        .stream(alpha, config.vocab.seed)?
        .take(take)
        .map(|(_, line)| line);
    Ok(train_subword(stream, vocab_size, SpecialTokens::default(), DEFAULT_MARKER)?)
}

/// The stand-in "original" model: a vocabulary trained over the whole
/// corpus and a seeded encoder holding its embedding table.
pub fn base_model(
    config: &RunConfig,
    inputs: &SamplingInputs,
) -> Result<(SubwordModel, Encoder)> {
    let tokenizer =
        train_vocabulary(config, inputs, config.base.vocab_size, config.vocab.train_alpha)?;
    let encoder_config = config.encoder.to_core(tokenizer.vocab_size());
    let encoder = Encoder::build(encoder_config, None, config.base.seed)?;
    Ok((tokenizer, encoder))
}

/// FOCUS transplant from an old embedding matrix onto a new vocabulary.
pub fn transplant_embeddings(
    config: &RunConfig,
    inputs: &SamplingInputs,
    old_embedding: &EmbeddingMatrix,
    old_view: &VocabView,
    new_tokenizer: &SubwordModel,
) -> Result<EmbeddingMatrix> {
    let aux_lines: Vec<String> = inputs
        .stream(config.vocab.train_alpha, config.transplant.seed ^ 0xa0c)?
        .take(config.transplant.aux_lines)
        .map(|(_, line)| line)
        .collect();
    let aux = train_auxiliary_embeddings(
        &aux_lines,
        new_tokenizer,
        config.transplant.aux_dim,
        config.transplant.window,
    )?;
    let new_view = VocabView::from_model(new_tokenizer);
    let overlap = compute_overlap(old_view, &new_view);
    let focus = FocusConfig {
        neighbors: config.transplant.neighbors,
        seed: config.transplant.seed,
        noise_fraction: config.transplant.noise_fraction,
    };
    Ok(focus_initialize(old_embedding, &overlap, &new_view, &aux, &focus)?)
}

/// Pretrain one configuration cell and return its output.
pub fn pretrain_cell(
    config: &RunConfig,
    inputs: &SamplingInputs,
    tokenizer: &Arc<SubwordModel>,
    embedding: &EmbeddingMatrix,
    steps: u64,
    alpha: f64,
) -> Result<PretrainOutput> {
    let encoder_config = config.encoder.to_core(tokenizer.vocab_size());
    let mut encoder = Encoder::build(encoder_config, Some(embedding), config.pretrain.seed)?;

    let stream_seed = (steps ^ (alpha * 1000.0) as u64).wrapping_mul(0x9e37);
    let tok = Arc::clone(tokenizer);
    let mut encoded = inputs
        .stream(alpha, stream_seed)?
        .map(move |(_, line)| subword::encode(&tok, &line, false));
    let dev: Vec<Vec<u32>> = {
        let mut dev_lines: Vec<&String> = Vec::new();
        // Interleave so every language contributes early lines.
        let per_lang: Vec<&Vec<String>> = inputs.units.iter().map(|u| &u.lines).collect();
        let _ = per_lang;
        for lang in inputs.units.iter() {
            dev_lines.extend(lang.lines.iter().take(0));
        }
        drop(dev_lines);
        Vec::new()
    };
    let _ = dev;
    let dev: Vec<Vec<u32>> = dev_lines_for(config, inputs)?
        .iter()
        .map(|l| subword::encode(tokenizer, l, false))
        .collect();
    let pretrain_config: PretrainConfig = config.pretrain.to_core(steps, stream_seed);
    Ok(pretrain(&mut encoder, &mut encoded, &pretrain_config, &dev)?)
}

fn dev_lines_for(config: &RunConfig, _inputs: &SamplingInputs) -> Result<Vec<String>> {
    let prepared = load_or_clean(config)?;
    let mut lines = Vec::new();
    for lang in &prepared {
        lines.extend(lang.dev.iter().cloned());
    }
    if lines.is_empty() {
        // Tiny corpora may round dev splits to zero; fall back to a
        // slice of train.
        for lang in &prepared {
            lines.extend(lang.train.iter().take(8).cloned());
        }
    }
    Ok(lines)
}

/// Load the configured treebank inventory.
pub fn load_inventory(config: &RunConfig) -> Result<Vec<Treebank>> {
    let mut inventory = Vec::new();
    for lang in &config.languages {
        if lang.treebank_train.is_none()
            && lang.treebank_dev.is_none()
            && lang.treebank_test.is_none()
        {
            continue;
        }
        let read = |path: &Option<PathBuf>| -> Result<Vec<adapt_core::tasks::Sentence>> {
            match path {
                Some(p) => Ok(read_conllu(p)?),
                None => Ok(Vec::new()),
            }
        };
        inventory.push(Treebank {
            language: lang.code.clone(),
            train: read(&lang.treebank_train)?,
            dev: read(&lang.treebank_dev)?,
            test: read(&lang.treebank_test)?,
        });
    }
    Ok(inventory)
}
