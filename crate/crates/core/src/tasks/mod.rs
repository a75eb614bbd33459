//! Treebank tasks: POS tagging and unlabeled dependency parsing, with
//! the few-shot / full-finetune / zero-shot evaluation protocols.
//!
//! Words are represented by the encoder vector of their first subword
//! piece. Fine-tuning trains the whole model (encoder and head) with
//! Adam at a constant learning rate, evaluates on dev every few epochs,
//! optionally stops early on a patience window, and returns the
//! checkpoint with the best dev score.

pub mod conllu;
pub mod heads;

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use conllu::{parse_conllu, read_conllu};
pub use heads::{biaffine_scores, BiaffineHead, PosHead};

use crate::analysis::{ResultRecord, Setting, Task};
use crate::nn::encoder::Bound;
use crate::nn::{
    clip_global_norm, AdamState, Encoder, EncoderCheckpoint, Graph, Matrix, NodeId, ParamSet,
};
use crate::subword::{self, SubwordModel, UNK_ID};

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("treebank parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("head index {head} out of range for a {len}-word sentence")]
    HeadOutOfRange { head: usize, len: usize },
    #[error("no training sentences left after preparation")]
    EmptyTrainingSet,
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("zero-shot needs at least one language with a train split")]
    NoTrainableLanguage,
    #[error("invalid finetune config: {0}")]
    InvalidConfig(String),
}

/// One treebank sentence: surface words, universal POS tags, and the
/// head index per word (0 = root).
#[derive(Debug, Clone, PartialEq)]
pub struct Sentence {
    pub words: Vec<String>,
    pub upos: Vec<String>,
    pub heads: Vec<usize>,
    pub language: String,
}

impl Sentence {
    pub fn validate(&self) -> Result<(), TaskError> {
        let n = self.words.len();
        debug_assert_eq!(n, self.upos.len());
        debug_assert_eq!(n, self.heads.len());
        for &head in &self.heads {
            if head > n {
                return Err(TaskError::HeadOutOfRange { head, len: n });
            }
        }
        Ok(())
    }
}

/// Fine-tuning regime. Defaults follow the full-scale recipe; the
/// learning rate and sizes get overridden for desk-scale runs.
#[derive(Debug, Clone)]
pub struct FinetuneConfig {
    pub learning_rate: f64,
    pub max_epochs: u64,
    pub eval_interval_epochs: u64,
    /// `None` disables early stopping (the few-shot regime).
    pub patience_epochs: Option<u64>,
    pub batch_size: usize,
    pub max_grad_norm: f64,
    /// Training sentences are capped at this count after a seeded shuffle.
    pub train_cap: usize,
    pub seeds: Vec<u64>,
    /// Sentences sampled per language in the few-shot setting.
    pub few_shot_sentences: usize,
    /// Dev sentences carved from train when a treebank has no dev split.
    pub dev_carve: usize,
    /// Biaffine arc dimension.
    pub arc_dim: usize,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-6,
            max_epochs: 64,
            eval_interval_epochs: 2,
            patience_epochs: Some(8),
            batch_size: 72,
            max_grad_norm: 1.0,
            train_cap: 32_768,
            seeds: vec![0, 1, 2, 3],
            few_shot_sentences: 512,
            dev_carve: 300,
            arc_dim: 64,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<(), TaskError> {
        if self.max_epochs == 0 || self.batch_size == 0 || self.eval_interval_epochs == 0 {
            return Err(TaskError::InvalidConfig(
                "epochs, batch size, and eval interval must be positive".into(),
            ));
        }
        if let Some(p) = self.patience_epochs {
            if p % self.eval_interval_epochs != 0 {
                return Err(TaskError::InvalidConfig(format!(
                    "patience {p} must be a multiple of the eval interval {}",
                    self.eval_interval_epochs
                )));
            }
        }
        Ok(())
    }
}

/// A sentence encoded for the model: subword ids with begin/end, the
/// first-piece position of each kept word, and the gold annotations of
/// the kept words. Words that do not fit in `max_positions` are
/// dropped from the inputs; prediction pads them with sentinel values
/// that never match gold, so they count as errors.
#[derive(Debug, Clone)]
struct EncodedSentence {
    ids: Vec<u32>,
    first_piece: Vec<usize>,
    tags: Vec<usize>,
    heads: Vec<usize>,
}

fn encode_sentence(
    sentence: &Sentence,
    tokenizer: &SubwordModel,
    tag_ids: &dyn Fn(&str) -> usize,
    max_positions: usize,
) -> EncodedSentence {
    let mut ids = vec![subword::BEGIN_ID];
    let mut first_piece = Vec::new();
    let mut kept = 0;
    for word in &sentence.words {
        let pieces = subword::encode(tokenizer, word, false);
        let pieces = if pieces.is_empty() { vec![UNK_ID] } else { pieces };
        if ids.len() + pieces.len() + 1 > max_positions {
            break;
        }
        first_piece.push(ids.len());
        ids.extend(pieces);
        kept += 1;
    }
    ids.push(subword::END_ID);
    EncodedSentence {
        ids,
        first_piece,
        tags: sentence.upos.iter().take(kept).map(|t| tag_ids(t)).collect(),
        heads: sentence.heads.iter().take(kept).copied().collect(),
    }
}

/// A fine-tuned model: encoder, task head, and the tag inventory for
/// POS models.
#[derive(Debug, Clone)]
pub struct FinetunedModel {
    pub encoder: Encoder,
    pub task: Task,
    pub pos_head: Option<PosHead>,
    pub parser_head: Option<BiaffineHead>,
    pub tag_names: Vec<String>,
}

impl FinetunedModel {
    fn head_params(&self) -> &ParamSet {
        match self.task {
            Task::Pos => &self.pos_head.as_ref().expect("pos head").params,
            Task::Uas => &self.parser_head.as_ref().expect("parser head").params,
        }
    }

    fn head_params_mut(&mut self) -> &mut ParamSet {
        match self.task {
            Task::Pos => &mut self.pos_head.as_mut().expect("pos head").params,
            Task::Uas => &mut self.parser_head.as_mut().expect("parser head").params,
        }
    }
}

/// Word-level tag accuracy in [0, 100].
pub fn pos_accuracy(predicted: &[Vec<String>], gold: &[Sentence]) -> f64 {
    let mut correct = 0usize;
    let mut total = 0usize;
    for (pred, sentence) in predicted.iter().zip(gold) {
        total += sentence.words.len();
        correct += pred
            .iter()
            .zip(&sentence.upos)
            .filter(|(a, b)| a.as_str() == b.as_str())
            .count();
    }
    if total == 0 {
        0.0
    } else {
        100.0 * correct as f64 / total as f64
    }
}

/// Fraction of words whose predicted head matches gold, in [0, 100].
pub fn uas_score(predicted: &[Vec<usize>], gold: &[Sentence]) -> f64 {
    let mut correct = 0usize;
    let mut total = 0usize;
    for (pred, sentence) in predicted.iter().zip(gold) {
        total += sentence.words.len();
        correct += pred.iter().zip(&sentence.heads).filter(|(a, b)| a == b).count();
    }
    if total == 0 {
        0.0
    } else {
        100.0 * correct as f64 / total as f64
    }
}

fn word_vectors(
    model: &FinetunedModel,
    graph: &mut Graph,
    bound: &Bound,
    encoded: &EncodedSentence,
) -> Option<NodeId> {
    if encoded.first_piece.is_empty() {
        return None;
    }
    let hidden = model.encoder.hidden_states(graph, bound, &encoded.ids);
    Some(graph.gather(hidden, &encoded.first_piece))
}

/// Predict tags (as names) for each sentence.
pub fn predict_tags(
    model: &FinetunedModel,
    tokenizer: &SubwordModel,
    sentences: &[Sentence],
) -> Vec<Vec<String>> {
    let head = model.pos_head.as_ref().expect("pos head");
    let max_positions = model.encoder.config.max_positions;
    sentences
        .iter()
        .map(|sentence| {
            let encoded = encode_sentence(sentence, tokenizer, &|_| 0, max_positions);
            let mut graph = Graph::new();
            let enc_bound = model.encoder.params.bind(&mut graph);
            let head_bound = head.params.bind(&mut graph);
            let mut tags: Vec<String> = Vec::with_capacity(sentence.words.len());
            if let Some(words) = word_vectors(model, &mut graph, &enc_bound, &encoded) {
                let logits = head.logits(&mut graph, &head_bound, words);
                let values = graph.value(logits);
                for r in 0..values.rows {
                    let best = values
                        .row(r)
                        .iter()
                        .enumerate()
                        .max_by(|a, b| a.1.total_cmp(b.1))
                        .map(|(i, _)| i)
                        .unwrap_or(0);
                    tags.push(model.tag_names.get(best).cloned().unwrap_or_default());
                }
            }
            // Truncated words get an empty prediction, which never
            // matches a gold tag.
            tags.resize(sentence.words.len(), String::new());
            tags
        })
        .collect()
}

/// Predict a head index for each word (per-dependent argmax, no tree
/// constraint).
pub fn predict_heads(
    model: &FinetunedModel,
    tokenizer: &SubwordModel,
    sentences: &[Sentence],
) -> Vec<Vec<usize>> {
    let head = model.parser_head.as_ref().expect("parser head");
    let max_positions = model.encoder.config.max_positions;
    sentences
        .iter()
        .map(|sentence| {
            let encoded = encode_sentence(sentence, tokenizer, &|_| 0, max_positions);
            let mut graph = Graph::new();
            let enc_bound = model.encoder.params.bind(&mut graph);
            let head_bound = head.params.bind(&mut graph);
            let mut heads: Vec<usize> = Vec::with_capacity(sentence.words.len());
            if let Some(words) = word_vectors(model, &mut graph, &enc_bound, &encoded) {
                let scores = head.scores(&mut graph, &head_bound, words);
                let values = graph.value(scores);
                for r in 0..values.rows {
                    let best = values
                        .row(r)
                        .iter()
                        .enumerate()
                        .max_by(|a, b| a.1.total_cmp(b.1))
                        .map(|(i, _)| i)
                        .unwrap_or(0);
                    heads.push(best);
                }
            }
            // A sentinel no sentence can contain marks truncated words.
            heads.resize(sentence.words.len(), usize::MAX);
            heads
        })
        .collect()
}

/// Task score on a test set: POS accuracy or UAS, in [0, 100].
pub fn evaluate(
    model: &FinetunedModel,
    tokenizer: &SubwordModel,
    test: &[Sentence],
    task: Task,
) -> Result<f64, TaskError> {
    if test.is_empty() {
        return Err(TaskError::EmptyTestSet);
    }
    Ok(match task {
        Task::Pos => pos_accuracy(&predict_tags(model, tokenizer, test), test),
        Task::Uas => uas_score(&predict_heads(model, tokenizer, test), test),
    })
}

fn batch_task_loss(
    model: &FinetunedModel,
    graph: &mut Graph,
    enc_bound: &Bound,
    head_bound: &Bound,
    batch: &[&EncodedSentence],
) -> Option<NodeId> {
    let mut pieces = Vec::new();
    let mut count = 0usize;
    for encoded in batch {
        let Some(words) = word_vectors(model, graph, enc_bound, encoded) else { continue };
        let nll = match model.task {
            Task::Pos => {
                let head = model.pos_head.as_ref().expect("pos head");
                let logits = head.logits(graph, head_bound, words);
                count += encoded.tags.len();
                graph.sum_nll(logits, encoded.tags.iter().map(|&t| Some(t)).collect())
            }
            Task::Uas => {
                let head = model.parser_head.as_ref().expect("parser head");
                let scores = head.scores(graph, head_bound, words);
                count += encoded.heads.len();
                graph.sum_nll(scores, encoded.heads.iter().map(|&h| Some(h)).collect())
            }
        };
        pieces.push(nll);
    }
    if pieces.is_empty() || count == 0 {
        return None;
    }
    let mut total = pieces[0];
    for &p in &pieces[1..] {
        total = graph.add(total, p);
    }
    Some(graph.scale(total, 1.0 / count as f64))
}

fn finetune_task(
    checkpoint: &EncoderCheckpoint,
    train: &[Sentence],
    dev: &[Sentence],
    tokenizer: &SubwordModel,
    config: &FinetuneConfig,
    seed: u64,
    task: Task,
) -> Result<FinetunedModel, TaskError> {
    config.validate()?;
    if train.is_empty() {
        return Err(TaskError::EmptyTrainingSet);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut rng);
    order.truncate(config.train_cap);

    let tag_names: Vec<String> = {
        let set: BTreeSet<&str> =
            train.iter().flat_map(|s| s.upos.iter().map(|t| t.as_str())).collect();
        set.into_iter().map(str::to_string).collect()
    };
    let tag_of = |tag: &str| tag_names.binary_search_by(|t| t.as_str().cmp(tag)).unwrap_or(0);

    let encoder = checkpoint.encoder();
    let max_positions = encoder.config.max_positions;
    let encoded: Vec<EncodedSentence> = order
        .iter()
        .map(|&i| encode_sentence(&train[i], tokenizer, &tag_of, max_positions))
        .collect();
    let all_unknown = encoded
        .iter()
        .flat_map(|e| e.ids.iter())
        .filter(|&&id| !subword::SubwordModel::is_special(id))
        .count()
        == 0;
    if all_unknown {
        log::warn!("every training token tokenizes to <unk>; proceeding anyway");
    }

    let mut model = match task {
        Task::Pos => FinetunedModel {
            pos_head: Some(PosHead::new(encoder.config.hidden, tag_names.len().max(1), seed)),
            parser_head: None,
            encoder,
            task,
            tag_names,
        },
        Task::Uas => FinetunedModel {
            pos_head: None,
            parser_head: Some(BiaffineHead::new(encoder.config.hidden, config.arc_dim, seed)),
            encoder,
            task,
            tag_names,
        },
    };

    let n_enc = model.encoder.params.len();
    let n_head = model.head_params().len();
    let mut adam = {
        let mut combined = ParamSet::new();
        for (name, m) in model.encoder.params.iter() {
            combined.insert(name, m.clone());
        }
        for (name, m) in model.head_params().iter() {
            combined.insert(name, m.clone());
        }
        AdamState::for_params(&combined)
    };

    let mut best: Option<(f64, Encoder, ParamSet, u64)> = None;
    let evaluate_dev = |model: &FinetunedModel,
                        epoch: u64,
                        best: &mut Option<(f64, Encoder, ParamSet, u64)>| {
        let score = if dev.is_empty() {
            0.0
        } else {
            evaluate(model, tokenizer, dev, task).unwrap_or(0.0)
        };
        if best.as_ref().map_or(true, |(s, ..)| score > *s) {
            *best = Some((score, model.encoder.clone(), model.head_params().clone(), epoch));
        }
        score
    };

    for epoch in 1..=config.max_epochs {
        let mut epoch_order: Vec<usize> = (0..encoded.len()).collect();
        epoch_order.shuffle(&mut rng);
        for chunk in epoch_order.chunks(config.batch_size) {
            let batch: Vec<&EncodedSentence> = chunk.iter().map(|&i| &encoded[i]).collect();
            let mut graph = Graph::new();
            let enc_bound = model.encoder.params.bind(&mut graph);
            let head_bound = model.head_params().bind(&mut graph);
            let Some(loss) =
                batch_task_loss(&model, &mut graph, &enc_bound, &head_bound, &batch)
            else {
                continue;
            };
            if !graph.value(loss).data[0].is_finite() {
                log::warn!("non-finite fine-tuning loss at epoch {epoch}; skipping batch");
                continue;
            }
            graph.backward(loss);

            let mut grads: Vec<(usize, Matrix)> = Vec::new();
            for i in 0..n_enc {
                if let Some(g) = graph.grad(enc_bound.nodes[i]) {
                    grads.push((i, g.clone()));
                }
            }
            for i in 0..n_head {
                if let Some(g) = graph.grad(head_bound.nodes[i]) {
                    grads.push((n_enc + i, g.clone()));
                }
            }
            clip_global_norm(&mut grads, config.max_grad_norm);
            for (index, grad) in &grads {
                let param = if *index < n_enc {
                    model.encoder.params.at_mut(*index)
                } else {
                    model.head_params_mut().at_mut(*index - n_enc)
                };
                adam.update(*index, param, grad, config.learning_rate);
            }
        }

        if epoch % config.eval_interval_epochs == 0 || epoch == config.max_epochs {
            evaluate_dev(&model, epoch, &mut best);
            if let Some(patience) = config.patience_epochs {
                let best_epoch = best.as_ref().map(|(_, _, _, e)| *e).unwrap_or(0);
                if epoch.saturating_sub(best_epoch) >= patience {
                    break;
                }
            }
        }
    }
    if best.is_none() {
        evaluate_dev(&model, config.max_epochs, &mut best);
    }

    let (_, best_encoder, best_head, _) = best.expect("at least one dev evaluation ran");
    model.encoder = best_encoder;
    *model.head_params_mut() = best_head;
    Ok(model)
}

/// Fine-tune a POS tagger from a pretrained checkpoint.
pub fn finetune_pos(
    checkpoint: &EncoderCheckpoint,
    train: &[Sentence],
    dev: &[Sentence],
    tokenizer: &SubwordModel,
    config: &FinetuneConfig,
    seed: u64,
) -> Result<FinetunedModel, TaskError> {
    finetune_task(checkpoint, train, dev, tokenizer, config, seed, Task::Pos)
}

/// Fine-tune a biaffine dependency parser from a pretrained checkpoint.
pub fn finetune_parser(
    checkpoint: &EncoderCheckpoint,
    train: &[Sentence],
    dev: &[Sentence],
    tokenizer: &SubwordModel,
    config: &FinetuneConfig,
    seed: u64,
) -> Result<FinetunedModel, TaskError> {
    finetune_task(checkpoint, train, dev, tokenizer, config, seed, Task::Uas)
}

/// One language's annotated data.
#[derive(Debug, Clone, Default)]
pub struct Treebank {
    pub language: String,
    pub train: Vec<Sentence>,
    pub dev: Vec<Sentence>,
    pub test: Vec<Sentence>,
}

/// Provenance of the checkpoint being evaluated, carried into records.
#[derive(Debug, Clone, Copy)]
pub struct RunMeta {
    pub lapt_steps: u64,
    pub vocab_size: u32,
    pub alpha: f64,
}

fn carve_dev(treebank: &Treebank, count: usize, seed: u64) -> (Vec<Sentence>, Vec<Sentence>) {
    if !treebank.dev.is_empty() || treebank.train.is_empty() {
        return (treebank.train.clone(), treebank.dev.clone());
    }
    let carve = count.min(treebank.train.len() / 2);
    let mut order: Vec<usize> = (0..treebank.train.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0xca4e));
    let dev_idx: BTreeSet<usize> = order.into_iter().take(carve).collect();
    let mut train = Vec::new();
    let mut dev = Vec::new();
    for (i, s) in treebank.train.iter().enumerate() {
        if dev_idx.contains(&i) {
            dev.push(s.clone());
        } else {
            train.push(s.clone());
        }
    }
    (train, dev)
}

fn sample_sentences(sentences: &[Sentence], count: usize, seed: u64) -> Vec<Sentence> {
    if sentences.len() <= count {
        return sentences.to_vec();
    }
    let mut order: Vec<usize> = (0..sentences.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0xfe45));
    order.truncate(count);
    order.into_iter().map(|i| sentences[i].clone()).collect()
}

/// Run one evaluation protocol over a treebank inventory and emit one
/// record per (language, task, seed).
///
/// Few-shot fine-tunes on a seeded sample of `few_shot_sentences` per
/// language with no early stopping; full-finetune uses each full train
/// split (capped) with the configured patience; zero-shot fine-tunes
/// once per seed on the concatenation of every train split and
/// evaluates on the languages that have only a test split. Languages
/// without a dev split get one carved from train.
pub fn run_setting(
    setting: Setting,
    checkpoint: &EncoderCheckpoint,
    inventory: &[Treebank],
    tokenizer: &SubwordModel,
    config: &FinetuneConfig,
    meta: &RunMeta,
) -> Result<Vec<ResultRecord>, TaskError> {
    config.validate()?;
    let mut records = Vec::new();
    let record = |language: &str, task: Task, lines: usize, seed: u64, score: f64| ResultRecord {
        language: language.to_string(),
        task,
        setting,
        lapt_steps: meta.lapt_steps,
        vocab_size: meta.vocab_size,
        alpha: meta.alpha,
        finetuning_lines: lines as u64,
        seed,
        score,
    };

    match setting {
        Setting::FewShot | Setting::FullFinetune => {
            let per_setting = FinetuneConfig {
                patience_epochs: if setting == Setting::FewShot {
                    None
                } else {
                    config.patience_epochs
                },
                ..config.clone()
            };
            for treebank in inventory {
                if treebank.train.is_empty() || treebank.test.is_empty() {
                    continue;
                }
                let (train_all, dev) = carve_dev(treebank, config.dev_carve, 0);
                for &seed in &config.seeds {
                    let train = if setting == Setting::FewShot {
                        let take = config.few_shot_sentences;
                        if train_all.len() < take {
                            log::warn!(
                                "{}: only {} train sentences for a {}-shot run; using all",
                                treebank.language,
                                train_all.len(),
                                take
                            );
                        }
                        sample_sentences(&train_all, take, seed)
                    } else {
                        train_all.clone()
                    };
                    let lines = train.len().min(per_setting.train_cap);
                    for task in Task::ALL {
                        let model = finetune_task(
                            checkpoint,
                            &train,
                            &dev,
                            tokenizer,
                            &per_setting,
                            seed,
                            task,
                        )?;
                        let score = evaluate(&model, tokenizer, &treebank.test, task)?;
                        records.push(record(&treebank.language, task, lines, seed, score));
                    }
                }
            }
        }
        Setting::ZeroShot => {
            let trainable: Vec<&Treebank> =
                inventory.iter().filter(|t| !t.train.is_empty()).collect();
            if trainable.is_empty() {
                return Err(TaskError::NoTrainableLanguage);
            }
            let targets: Vec<&Treebank> = inventory
                .iter()
                .filter(|t| t.train.is_empty() && !t.test.is_empty())
                .collect();
            let mut train = Vec::new();
            let mut dev = Vec::new();
            for treebank in &trainable {
                let (mut t, mut d) = carve_dev(treebank, config.dev_carve, 0);
                t.truncate(config.train_cap);
                train.append(&mut t);
                dev.append(&mut d);
            }
            let lines = train.len();
            for &seed in &config.seeds {
                for task in Task::ALL {
                    let model =
                        finetune_task(checkpoint, &train, &dev, tokenizer, config, seed, task)?;
                    for target in &targets {
                        let score = evaluate(&model, tokenizer, &target.test, task)?;
                        records.push(record(&target.language, task, lines, seed, score));
                    }
                }
            }
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::EncoderConfig;
    use crate::subword::{train_subword, SpecialTokens, DEFAULT_MARKER};

    fn oracle_heads(sentences: &[Sentence]) -> Vec<Vec<usize>> {
        sentences.iter().map(|s| s.heads.clone()).collect()
    }

    fn sentence(words: &[&str], tags: &[&str], heads: &[usize]) -> Sentence {
        Sentence {
            words: words.iter().map(|s| s.to_string()).collect(),
            upos: tags.iter().map(|s| s.to_string()).collect(),
            heads: heads.to_vec(),
            language: "xx".into(),
        }
    }

    #[test]
    fn oracle_head_predictor_scores_exactly_100() {
        let gold = vec![
            sentence(&["a", "b", "c"], &["X", "X", "X"], &[2, 0, 2]),
            sentence(&["d", "e"], &["X", "X"], &[0, 1]),
        ];
        assert_eq!(uas_score(&oracle_heads(&gold), &gold), 100.0);
    }

    #[test]
    fn all_root_predictor_scores_the_root_fraction() {
        // 10 words, 3 attach to root.
        let gold = vec![
            sentence(&["a", "b", "c", "d", "e", "f"], &["X"; 6], &[0, 1, 1, 0, 4, 4]),
            sentence(&["g", "h", "i", "j"], &["X"; 4], &[0, 1, 2, 3]),
        ];
        let all_root: Vec<Vec<usize>> = gold.iter().map(|s| vec![0; s.words.len()]).collect();
        assert_eq!(uas_score(&all_root, &gold), 30.0);
    }

    #[test]
    fn disjoint_tagset_predictor_scores_zero() {
        let gold = vec![sentence(&["a", "b"], &["NOUN", "VERB"], &[0, 1])];
        let predictions = vec![vec!["ADJ".to_string(), "ADJ".to_string()]];
        assert_eq!(pos_accuracy(&predictions, &gold), 0.0);
    }

    fn make_tokenizer(lines: &[String], budget: usize) -> SubwordModel {
        train_subword(lines.iter().cloned(), budget, SpecialTokens::default(), DEFAULT_MARKER)
            .unwrap()
    }

    fn fresh_checkpoint(tokenizer: &SubwordModel, seed: u64) -> EncoderCheckpoint {
        let config = EncoderConfig {
            layers: 1,
            hidden: 16,
            ffn: 32,
            heads: 2,
            max_positions: 32,
            vocab_size: tokenizer.vocab_size(),
        };
        let encoder = Encoder::build(config.clone(), None, seed).unwrap();
        EncoderCheckpoint {
            config,
            step: 0,
            dev_loss: f64::NAN,
            adam: AdamState::for_params(&encoder.params),
            params: encoder.params,
        }
    }

    /// Deterministic tag language: the tag is a pure function of the
    /// word.
    fn tag_language(n: usize) -> Vec<Sentence> {
        let lexicon = [
            ("kala", "NOUN"),
            ("koer", "NOUN"),
            ("ujub", "VERB"),
            ("magab", "VERB"),
            ("suur", "ADJ"),
            ("hea", "ADJ"),
        ];
        (0..n)
            .map(|i| {
                let picks =
                    [lexicon[i % 6], lexicon[(i / 2 + 1) % 6], lexicon[(i / 3 + 4) % 6]];
                Sentence {
                    words: picks.iter().map(|(w, _)| w.to_string()).collect(),
                    upos: picks.iter().map(|(_, t)| t.to_string()).collect(),
                    heads: vec![0, 1, 2],
                    language: "toy".into(),
                }
            })
            .collect()
    }

    fn quick_finetune_config() -> FinetuneConfig {
        FinetuneConfig {
            learning_rate: 8e-3,
            max_epochs: 10,
            eval_interval_epochs: 2,
            patience_epochs: None,
            batch_size: 16,
            seeds: vec![0],
            few_shot_sentences: 32,
            dev_carve: 8,
            arc_dim: 16,
            ..FinetuneConfig::default()
        }
    }

    #[test]
    fn pos_finetune_learns_a_deterministic_tag_language() {
        let sentences = tag_language(200);
        let lines: Vec<String> = sentences.iter().map(|s| s.words.join(" ")).collect();
        let tokenizer = make_tokenizer(&lines, 49);
        let checkpoint = fresh_checkpoint(&tokenizer, 5);
        let train = &sentences[..160];
        let dev = &sentences[160..180];
        let test = &sentences[180..];
        let model =
            finetune_pos(&checkpoint, train, dev, &tokenizer, &quick_finetune_config(), 0)
                .unwrap();
        let accuracy = evaluate(&model, &tokenizer, test, Task::Pos).unwrap();
        assert!(accuracy >= 90.0, "accuracy {accuracy}");
    }

    /// Grammar where every word attaches to the previous word and the
    /// first word to root.
    fn previous_word_grammar(n: usize) -> Vec<Sentence> {
        let words = ["üks", "kaks", "kolm", "neli", "viis", "kuus"];
        (0..n)
            .map(|i| {
                let len = 3 + (i % 3);
                let picked: Vec<String> =
                    (0..len).map(|j| words[(i + j) % 6].to_string()).collect();
                Sentence {
                    upos: vec!["X".to_string(); len],
                    heads: (0..len).collect(),
                    words: picked,
                    language: "toy".into(),
                }
            })
            .collect()
    }

    #[test]
    fn parser_finetune_learns_previous_word_attachment() {
        let sentences = previous_word_grammar(160);
        let lines: Vec<String> = sentences.iter().map(|s| s.words.join(" ")).collect();
        let tokenizer = make_tokenizer(&lines, 45);
        let checkpoint = fresh_checkpoint(&tokenizer, 6);
        let model = finetune_parser(
            &checkpoint,
            &sentences[..120],
            &sentences[120..140],
            &tokenizer,
            &quick_finetune_config(),
            0,
        )
        .unwrap();
        let uas = evaluate(&model, &tokenizer, &sentences[140..], Task::Uas).unwrap();
        assert!(uas >= 90.0, "UAS {uas}");
    }

    #[test]
    fn initial_parser_loss_is_near_uniform_cross_entropy() {
        let sentences = previous_word_grammar(8);
        let lines: Vec<String> = sentences.iter().map(|s| s.words.join(" ")).collect();
        let tokenizer = make_tokenizer(&lines, 45);
        let checkpoint = fresh_checkpoint(&tokenizer, 6);
        let head = BiaffineHead::new(16, 16, 0);
        let model = FinetunedModel {
            encoder: checkpoint.encoder(),
            task: Task::Uas,
            pos_head: None,
            parser_head: Some(head),
            tag_names: vec![],
        };

        // Mean per-dependent NLL for a sentence of n words should sit
        // near ln(n + 1) while the initial scores are near-uniform.
        let encoded = encode_sentence(
            &sentences[0],
            &tokenizer,
            &|_| 0,
            model.encoder.config.max_positions,
        );
        let mut graph = Graph::new();
        let enc_bound = model.encoder.params.bind(&mut graph);
        let head_bound = model.head_params().bind(&mut graph);
        let loss =
            batch_task_loss(&model, &mut graph, &enc_bound, &head_bound, &[&encoded]).unwrap();
        let n = sentences[0].words.len() as f64;
        let expected = (n + 1.0).ln();
        let got = graph.value(loss).data[0];
        assert!((got - expected).abs() < 0.05, "loss {got} vs ln(n+1) {expected}");
    }

    #[test]
    fn same_seed_reproduces_the_same_model() {
        let sentences = tag_language(40);
        let lines: Vec<String> = sentences.iter().map(|s| s.words.join(" ")).collect();
        let tokenizer = make_tokenizer(&lines, 49);
        let checkpoint = fresh_checkpoint(&tokenizer, 5);
        let config = FinetuneConfig { max_epochs: 4, ..quick_finetune_config() };
        let a =
            finetune_pos(&checkpoint, &sentences[..30], &sentences[30..], &tokenizer, &config, 3)
                .unwrap();
        let b =
            finetune_pos(&checkpoint, &sentences[..30], &sentences[30..], &tokenizer, &config, 3)
                .unwrap();
        assert_eq!(a.encoder.params, b.encoder.params);
        assert_eq!(a.pos_head.unwrap().params, b.pos_head.unwrap().params);
    }

    #[test]
    fn patience_must_align_with_eval_interval() {
        let config = FinetuneConfig {
            patience_epochs: Some(3),
            eval_interval_epochs: 2,
            ..FinetuneConfig::default()
        };
        assert!(matches!(config.validate(), Err(TaskError::InvalidConfig(_))));
    }

    fn toy_inventory() -> (Vec<Treebank>, SubwordModel, EncoderCheckpoint) {
        let tagged = tag_language(80);
        let lines: Vec<String> = tagged.iter().map(|s| s.words.join(" ")).collect();
        let tokenizer = make_tokenizer(&lines, 49);
        let checkpoint = fresh_checkpoint(&tokenizer, 7);
        let inventory = vec![
            Treebank {
                language: "aa".into(),
                train: tagged[..40].to_vec(),
                dev: tagged[40..50].to_vec(),
                test: tagged[50..60].to_vec(),
            },
            Treebank {
                language: "bb".into(),
                train: vec![],
                dev: vec![],
                test: tagged[60..70].to_vec(),
            },
        ];
        (inventory, tokenizer, checkpoint)
    }

    #[test]
    fn few_shot_emits_records_per_language_task_and_seed() {
        let (inventory, tokenizer, checkpoint) = toy_inventory();
        let config = FinetuneConfig {
            seeds: vec![0, 1],
            max_epochs: 2,
            few_shot_sentences: 8,
            ..quick_finetune_config()
        };
        let meta = RunMeta { lapt_steps: 100, vocab_size: 120, alpha: 0.2 };
        let records =
            run_setting(Setting::FewShot, &checkpoint, &inventory, &tokenizer, &config, &meta)
                .unwrap();
        // One trainable language x 2 tasks x 2 seeds.
        assert_eq!(records.len(), 4);
        assert!(records.iter().all(|r| r.language == "aa"));
        assert!(records.iter().all(|r| r.finetuning_lines == 8));
        assert!(records.iter().all(|r| (0.0..=100.0).contains(&r.score)));
    }

    #[test]
    fn few_shot_sampling_is_deterministic_per_seed() {
        let sentences = tag_language(30);
        let a = sample_sentences(&sentences, 10, 4);
        let b = sample_sentences(&sentences, 10, 4);
        let c = sample_sentences(&sentences, 10, 5);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn zero_shot_trains_on_concatenation_and_scores_test_only_languages() {
        let (inventory, tokenizer, checkpoint) = toy_inventory();
        let config =
            FinetuneConfig { seeds: vec![0], max_epochs: 2, ..quick_finetune_config() };
        let meta = RunMeta { lapt_steps: 100, vocab_size: 120, alpha: 0.2 };
        let records =
            run_setting(Setting::ZeroShot, &checkpoint, &inventory, &tokenizer, &config, &meta)
                .unwrap();
        // One target language x 2 tasks x 1 seed.
        assert_eq!(records.len(), 2);
        assert!(records.iter().all(|r| r.language == "bb"));
        // Concatenated training set: all 40 "aa" train sentences.
        assert!(records.iter().all(|r| r.finetuning_lines == 40));
    }

    #[test]
    fn zero_shot_without_trainable_language_is_rejected() {
        let (mut inventory, tokenizer, checkpoint) = toy_inventory();
        inventory[0].train.clear();
        let config = quick_finetune_config();
        let meta = RunMeta { lapt_steps: 0, vocab_size: 0, alpha: 0.1 };
        assert!(matches!(
            run_setting(Setting::ZeroShot, &checkpoint, &inventory, &tokenizer, &config, &meta),
            Err(TaskError::NoTrainableLanguage)
        ));
    }

    #[test]
    fn dev_carve_is_deterministic_and_disjoint() {
        let treebank = Treebank {
            language: "aa".into(),
            train: tag_language(40),
            dev: vec![],
            test: vec![],
        };
        let (train_a, dev_a) = carve_dev(&treebank, 10, 0);
        let (train_b, dev_b) = carve_dev(&treebank, 10, 0);
        assert_eq!(train_a, train_b);
        assert_eq!(dev_a, dev_b);
        assert_eq!(dev_a.len(), 10);
        assert_eq!(train_a.len(), 30);
    }

    #[test]
    fn task_model_bytes_roundtrip() {
        let sentences = tag_language(40);
        let lines: Vec<String> = sentences.iter().map(|s| s.words.join(" ")).collect();
        let tokenizer = make_tokenizer(&lines, 49);
        let checkpoint = fresh_checkpoint(&tokenizer, 5);
        let config = FinetuneConfig { max_epochs: 2, ..quick_finetune_config() };
        let model =
            finetune_pos(&checkpoint, &sentences[..30], &sentences[30..], &tokenizer, &config, 3)
                .unwrap();
        let restored = FinetunedModel::from_bytes(&model.to_bytes()).unwrap();
        assert_eq!(restored.task, model.task);
        assert_eq!(restored.tag_names, model.tag_names);
        let test = tag_language(50);
        let a = evaluate(&model, &tokenizer, &test[40..], Task::Pos).unwrap();
        let b = evaluate(&restored, &tokenizer, &test[40..], Task::Pos).unwrap();
        // f32 storage can nudge scores; identical argmaxes expected on
        // this scale.
        assert_eq!(a, b);
    }

    #[test]
    fn truncation_counts_lost_words_as_errors() {
        let long = Sentence {
            words: (0..40).map(|i| format!("w{i}")).collect(),
            upos: vec!["X".to_string(); 40],
            heads: vec![0; 40],
            language: "xx".into(),
        };
        let lines = vec![long.words.join(" ")];
        let tokenizer =
            train_subword(lines.into_iter(), 67, SpecialTokens::default(), DEFAULT_MARKER)
                .unwrap();
        let encoded = encode_sentence(&long, &tokenizer, &|_| 0, 16);
        assert!(encoded.first_piece.len() < 40);
        assert!(encoded.ids.len() <= 16);
        let predictions = predict_heads(
            &FinetunedModel {
                encoder: Encoder::build(
                    crate::nn::EncoderConfig {
                        layers: 1,
                        hidden: 8,
                        ffn: 16,
                        heads: 2,
                        max_positions: 16,
                        vocab_size: tokenizer.vocab_size(),
                    },
                    None,
                    0,
                )
                .unwrap(),
                task: Task::Uas,
                pos_head: None,
                parser_head: Some(BiaffineHead::new(8, 4, 0)),
                tag_names: vec![],
            },
            &tokenizer,
            std::slice::from_ref(&long),
        );
        // Truncated words carry a sentinel that can never match gold.
        assert_eq!(predictions[0].len(), 40);
        assert!(predictions[0].iter().any(|&h| h == usize::MAX));
    }
}

// ---------------------------------------------------------------------
// Task-model serialization: magic, task tag, tag names, encoder config
// block, then the encoder and head tensors in the checkpoint layout.
// ---------------------------------------------------------------------

const TASK_MODEL_MAGIC: &[u8; 8] = b"ATSKMDL1";

impl FinetunedModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        use crate::nn::write_tensor_data;
        let mut out = Vec::new();
        out.extend_from_slice(TASK_MODEL_MAGIC);
        out.push(match self.task {
            Task::Pos => 0u8,
            Task::Uas => 1u8,
        });
        out.extend_from_slice(&(self.tag_names.len() as u32).to_le_bytes());
        for tag in &self.tag_names {
            out.extend_from_slice(&(tag.len() as u32).to_le_bytes());
            out.extend_from_slice(tag.as_bytes());
        }
        let config = &self.encoder.config;
        for v in [
            config.layers,
            config.hidden,
            config.ffn,
            config.heads,
            config.max_positions,
            config.vocab_size,
        ] {
            out.extend_from_slice(&(v as u64).to_le_bytes());
        }
        let arc_dim = self.parser_head.as_ref().map(|h| h.arc_dim).unwrap_or(0);
        out.extend_from_slice(&(arc_dim as u64).to_le_bytes());
        for params in [&self.encoder.params, self.head_params()] {
            out.extend_from_slice(&(params.len() as u32).to_le_bytes());
            for (name, m) in params.iter() {
                out.extend_from_slice(&(name.len() as u32).to_le_bytes());
                out.extend_from_slice(name.as_bytes());
                out.extend_from_slice(&(m.rows as u64).to_le_bytes());
                out.extend_from_slice(&(m.cols as u64).to_le_bytes());
                write_tensor_data(&mut out, m);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, crate::nn::NnError> {
        use crate::nn::{NnError, Reader};
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != TASK_MODEL_MAGIC {
            return Err(NnError::MalformedCheckpoint("bad task-model magic".into()));
        }
        let task = match r.take(1)?[0] {
            0 => Task::Pos,
            1 => Task::Uas,
            other => {
                return Err(NnError::MalformedCheckpoint(format!("unknown task tag {other}")))
            }
        };
        let n_tags = r.u32()? as usize;
        let mut tag_names = Vec::with_capacity(n_tags);
        for _ in 0..n_tags {
            let len = r.u32()? as usize;
            let tag = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| NnError::MalformedCheckpoint("tag is not UTF-8".into()))?;
            tag_names.push(tag);
        }
        let config = crate::nn::EncoderConfig {
            layers: r.u64()? as usize,
            hidden: r.u64()? as usize,
            ffn: r.u64()? as usize,
            heads: r.u64()? as usize,
            max_positions: r.u64()? as usize,
            vocab_size: r.u64()? as usize,
        };
        let arc_dim = r.u64()? as usize;
        let mut read_params = |r: &mut Reader| -> Result<ParamSet, NnError> {
            let count = r.u32()? as usize;
            let mut params = ParamSet::new();
            for _ in 0..count {
                let len = r.u32()? as usize;
                let name = String::from_utf8(r.take(len)?.to_vec())
                    .map_err(|_| NnError::MalformedCheckpoint("name is not UTF-8".into()))?;
                let rows = r.u64()? as usize;
                let cols = r.u64()? as usize;
                params.insert(name, r.tensor(rows, cols)?);
            }
            Ok(params)
        };
        let encoder_params = read_params(&mut r)?;
        let head_params = read_params(&mut r)?;
        let encoder = Encoder { config, params: encoder_params };
        Ok(match task {
            Task::Pos => {
                let n = tag_names.len().max(1);
                let mut head = PosHead::new(encoder.config.hidden, n, 0);
                head.params = head_params;
                FinetunedModel {
                    encoder,
                    task,
                    pos_head: Some(head),
                    parser_head: None,
                    tag_names,
                }
            }
            Task::Uas => {
                let mut head = BiaffineHead::new(encoder.config.hidden, arc_dim.max(1), 0);
                head.params = head_params;
                FinetunedModel {
                    encoder,
                    task,
                    pos_head: None,
                    parser_head: Some(head),
                    tag_names,
                }
            }
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), TaskError> {
        std::fs::write(path, self.to_bytes()).map_err(|source| TaskError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &std::path::Path) -> Result<Self, TaskError> {
        let bytes = std::fs::read(path).map_err(|source| TaskError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes).map_err(|e| TaskError::Parse {
            line: 0,
            message: e.to_string(),
        })
    }
}
