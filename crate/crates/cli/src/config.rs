//! Declarative run configuration, loaded from one TOML file.
//!
//! Hyperparameter defaults mirror the full-scale training and
//! fine-tuning recipes; a desk-scale config overrides the sizes (see
//! `configs/desk.toml`). Validation aggregates every problem instead of
//! stopping at the first.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use adapt_core::corpus::CleaningConfig;
use adapt_core::nn::{EncoderConfig, PretrainConfig};
use adapt_core::tasks::FinetuneConfig;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub languages: Vec<LanguageConfig>,
    #[serde(default)]
    pub cleaning: CleaningSection,
    #[serde(default)]
    pub corpus: CorpusSection,
    #[serde(default)]
    pub vocab: VocabSection,
    #[serde(default)]
    pub base: BaseSection,
    #[serde(default)]
    pub encoder: EncoderSection,
    #[serde(default)]
    pub transplant: TransplantSection,
    #[serde(default)]
    pub pretrain: PretrainSection,
    #[serde(default)]
    pub finetune: FinetuneSection,
    pub grid: GridSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LanguageConfig {
    pub code: String,
    #[serde(default)]
    pub paths: Vec<PathBuf>,
    #[serde(default)]
    pub high_resource: bool,
    /// Cap on this language's sampling size, in the `weight_by` unit.
    #[serde(default)]
    pub cap: Option<u64>,
    /// Languages sharing a group name sample as one unit.
    #[serde(default)]
    pub group: Option<String>,
    #[serde(default)]
    pub treebank_train: Option<PathBuf>,
    #[serde(default)]
    pub treebank_dev: Option<PathBuf>,
    #[serde(default)]
    pub treebank_test: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CleaningSection {
    pub min_tokens: usize,
    pub max_avg_token_chars: f64,
    pub max_token_chars: usize,
    pub min_alpha_fraction: f64,
    pub langid_reject_threshold: f64,
}

impl Default for CleaningSection {
    fn default() -> Self {
        let c = CleaningConfig::default();
        Self {
            min_tokens: c.min_tokens,
            max_avg_token_chars: c.max_avg_token_chars,
            max_token_chars: c.max_token_chars,
            min_alpha_fraction: c.min_alpha_fraction,
            langid_reject_threshold: c.langid_reject_threshold,
        }
    }
}

impl CleaningSection {
    pub fn to_core(&self) -> CleaningConfig {
        CleaningConfig {
            min_tokens: self.min_tokens,
            max_avg_token_chars: self.max_avg_token_chars,
            max_token_chars: self.max_token_chars,
            min_alpha_fraction: self.min_alpha_fraction,
            langid_reject_threshold: self.langid_reject_threshold,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSection {
    pub dev_fraction: f64,
    pub test_fraction: f64,
    pub split_seed: u64,
    /// Sampling sizes measured in "lines" or "bytes".
    pub weight_by: String,
}

impl Default for CorpusSection {
    fn default() -> Self {
        Self {
            dev_fraction: 0.05,
            test_fraction: 0.05,
            split_seed: 13,
            weight_by: "lines".into(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VocabSection {
    /// Alpha used when sampling vocabulary training text.
    pub train_alpha: f64,
    /// Cap on sampled vocabulary training lines.
    pub sample_lines: usize,
    pub seed: u64,
}

impl Default for VocabSection {
    fn default() -> Self {
        Self { train_alpha: 0.2, sample_lines: 5_000_000, seed: 101 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaseSection {
    /// Vocabulary size of the stand-in "original" model.
    pub vocab_size: usize,
    pub seed: u64,
}

impl Default for BaseSection {
    fn default() -> Self {
        Self { vocab_size: 96, seed: 7 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderSection {
    pub layers: usize,
    pub hidden: usize,
    pub ffn: usize,
    pub heads: usize,
    pub max_positions: usize,
}

impl Default for EncoderSection {
    fn default() -> Self {
        Self { layers: 2, hidden: 64, ffn: 256, heads: 2, max_positions: 256 }
    }
}

impl EncoderSection {
    pub fn to_core(&self, vocab_size: usize) -> EncoderConfig {
        EncoderConfig {
            layers: self.layers,
            hidden: self.hidden,
            ffn: self.ffn,
            heads: self.heads,
            max_positions: self.max_positions,
            vocab_size,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransplantSection {
    pub neighbors: usize,
    pub aux_dim: usize,
    pub window: usize,
    pub noise_fraction: f64,
    pub seed: u64,
    /// Lines sampled for auxiliary co-occurrence statistics.
    pub aux_lines: usize,
}

impl Default for TransplantSection {
    fn default() -> Self {
        Self { neighbors: 10, aux_dim: 64, window: 5, noise_fraction: 0.01, seed: 0, aux_lines: 20_000 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainSection {
    pub freeze_steps: u64,
    pub mask_prob: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_grad_norm: f64,
    /// 0 means the automatic `max(total/50, 100)` cadence.
    pub dev_eval_interval: u64,
    pub seed: u64,
}

impl Default for PretrainSection {
    fn default() -> Self {
        Self {
            freeze_steps: 10_000,
            mask_prob: 0.15,
            learning_rate: 1e-5,
            batch_size: 200,
            max_grad_norm: 1.0,
            dev_eval_interval: 0,
            seed: 42,
        }
    }
}

impl PretrainSection {
    pub fn to_core(&self, total_steps: u64, stream_seed: u64) -> PretrainConfig {
        PretrainConfig {
            total_steps,
            freeze_steps: self.freeze_steps.min(total_steps),
            mask_prob: self.mask_prob,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            max_grad_norm: self.max_grad_norm,
            dev_eval_interval: if self.dev_eval_interval == 0 {
                None
            } else {
                Some(self.dev_eval_interval)
            },
            seed: self.seed ^ stream_seed,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FinetuneSection {
    pub learning_rate: f64,
    pub max_epochs: u64,
    pub eval_interval_epochs: u64,
    pub patience_epochs: u64,
    pub batch_size: usize,
    pub max_grad_norm: f64,
    pub train_cap: usize,
    pub few_shot_sentences: usize,
    pub dev_carve: usize,
    pub arc_dim: usize,
    pub seeds: Vec<u64>,
}

impl Default for FinetuneSection {
    fn default() -> Self {
        let f = FinetuneConfig::default();
        Self {
            learning_rate: f.learning_rate,
            max_epochs: f.max_epochs,
            eval_interval_epochs: f.eval_interval_epochs,
            patience_epochs: f.patience_epochs.unwrap_or(8),
            batch_size: f.batch_size,
            max_grad_norm: f.max_grad_norm,
            train_cap: f.train_cap,
            few_shot_sentences: f.few_shot_sentences,
            dev_carve: f.dev_carve,
            arc_dim: f.arc_dim,
            seeds: f.seeds,
        }
    }
}

impl FinetuneSection {
    pub fn to_core(&self) -> FinetuneConfig {
        FinetuneConfig {
            learning_rate: self.learning_rate,
            max_epochs: self.max_epochs,
            eval_interval_epochs: self.eval_interval_epochs,
            patience_epochs: Some(self.patience_epochs),
            batch_size: self.batch_size,
            max_grad_norm: self.max_grad_norm,
            train_cap: self.train_cap,
            seeds: self.seeds.clone(),
            few_shot_sentences: self.few_shot_sentences,
            dev_carve: self.dev_carve,
            arc_dim: self.arc_dim,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub lapt_steps: Vec<u64>,
    pub vocab_sizes: Vec<usize>,
    pub alphas: Vec<f64>,
    #[serde(default = "default_settings")]
    pub settings: Vec<String>,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn default_settings() -> Vec<String> {
    vec!["few_shot".into(), "zero_shot".into()]
}

fn default_workers() -> usize {
    1
}

impl RunConfig {
    /// Load and validate, honoring the `ADAPT_OUTPUT_ROOT` override.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        let mut config: RunConfig = toml::from_str(&text)
            .map_err(|e| anyhow::anyhow!("config {} is not valid TOML: {e}", path.display()))?;
        if let Ok(root) = std::env::var("ADAPT_OUTPUT_ROOT") {
            config.output_dir = PathBuf::from(root).join(&config.output_dir);
        }
        let problems = config.validate();
        if !problems.is_empty() {
            anyhow::bail!("invalid config:\n  - {}", problems.join("\n  - "));
        }
        Ok(config)
    }

    /// Every problem found, not just the first.
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.languages.is_empty() {
            problems.push("at least one [[languages]] entry is required".into());
        }
        let mut seen = BTreeMap::new();
        for lang in &self.languages {
            if seen.insert(lang.code.clone(), ()).is_some() {
                problems.push(format!("duplicate language code {:?}", lang.code));
            }
            for path in &lang.paths {
                if !path.exists() {
                    problems.push(format!(
                        "{}: corpus file {} does not exist",
                        lang.code,
                        path.display()
                    ));
                }
            }
            for (label, path) in [
                ("treebank_train", &lang.treebank_train),
                ("treebank_dev", &lang.treebank_dev),
                ("treebank_test", &lang.treebank_test),
            ] {
                if let Some(p) = path {
                    if !p.exists() {
                        problems.push(format!(
                            "{}: {label} {} does not exist",
                            lang.code,
                            p.display()
                        ));
                    }
                }
            }
        }
        if self.cleaning.to_core().validate().is_err() {
            problems.push("cleaning thresholds must be positive (fraction at most 1)".into());
        }
        let fractions_ok = (0.0..1.0).contains(&self.corpus.dev_fraction)
            && (0.0..1.0).contains(&self.corpus.test_fraction)
            && self.corpus.dev_fraction + self.corpus.test_fraction < 1.0;
        if !fractions_ok {
            problems.push("corpus dev/test fractions must be in [0,1) and sum below 1".into());
        }
        if self.corpus.weight_by != "lines" && self.corpus.weight_by != "bytes" {
            problems.push(format!(
                "corpus.weight_by must be \"lines\" or \"bytes\", got {:?}",
                self.corpus.weight_by
            ));
        }
        if !(0.0..=1.0).contains(&self.vocab.train_alpha) {
            problems.push("vocab.train_alpha must lie in [0, 1]".into());
        }
        if self.encoder.hidden == 0 || self.encoder.heads == 0 {
            problems.push("encoder dims must be positive".into());
        } else if self.encoder.hidden % self.encoder.heads != 0 {
            problems.push(format!(
                "encoder hidden {} must be divisible by heads {}",
                self.encoder.hidden, self.encoder.heads
            ));
        }
        if self.grid.lapt_steps.is_empty()
            || self.grid.vocab_sizes.is_empty()
            || self.grid.alphas.is_empty()
        {
            problems.push("grid lists (lapt_steps, vocab_sizes, alphas) must be nonempty".into());
        }
        for &steps in &self.grid.lapt_steps {
            if steps == 0 {
                problems.push("grid lapt_steps entries must be positive".into());
            }
        }
        for &alpha in &self.grid.alphas {
            if !(0.0..=1.0).contains(&alpha) {
                problems.push(format!("grid alpha {alpha} must lie in [0, 1]"));
            }
        }
        for &setting in &["few_shot", "full_finetune", "zero_shot"] {
            let _ = setting;
        }
        for s in &self.grid.settings {
            if s.parse::<adapt_core::analysis::Setting>().is_err() {
                problems.push(format!("unknown grid setting {s:?}"));
            }
        }
        if self.grid.workers == 0 {
            problems.push("grid.workers must be at least 1".into());
        }
        if self.finetune.eval_interval_epochs == 0
            || self.finetune.patience_epochs % self.finetune.eval_interval_epochs.max(1) != 0
        {
            problems.push("finetune patience must be a multiple of the eval interval".into());
        }
        problems
    }

    pub fn high_resource_codes(&self) -> std::collections::BTreeSet<String> {
        self.languages
            .iter()
            .filter(|l| l.high_resource)
            .map(|l| l.code.clone())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_toml(dir: &Path) -> String {
        let data = dir.join("aa.txt");
        std::fs::write(&data, "tere tulemast siia\nteine rida siin\n").unwrap();
        format!(
            r#"
output_dir = "{out}"

[[languages]]
code = "aa"
paths = ["{data}"]
high_resource = true

[grid]
lapt_steps = [10]
vocab_sizes = [64]
alphas = [0.2]
"#,
            out = dir.join("out").display(),
            data = data.display()
        )
    }

    #[test]
    fn minimal_config_parses_with_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let text = minimal_toml(dir.path());
        let config: RunConfig = toml::from_str(&text).unwrap();
        assert!(config.validate().is_empty());
        assert_eq!(config.pretrain.freeze_steps, 10_000);
        assert_eq!(config.finetune.seeds, vec![0, 1, 2, 3]);
        assert_eq!(config.finetune.batch_size, 72);
        assert_eq!(config.finetune.max_epochs, 64);
        assert!((config.pretrain.learning_rate - 1e-5).abs() < 1e-18);
    }

    #[test]
    fn validation_aggregates_all_problems() {
        let config: RunConfig = toml::from_str(
            r#"
output_dir = "/tmp/x"

[[languages]]
code = "aa"
paths = ["/nonexistent/aa.txt"]

[encoder]
hidden = 10
heads = 3

[grid]
lapt_steps = []
vocab_sizes = [64]
alphas = [1.5]
"#,
        )
        .unwrap();
        let problems = config.validate();
        assert!(problems.len() >= 3, "problems: {problems:?}");
        assert!(problems.iter().any(|p| p.contains("does not exist")));
        assert!(problems.iter().any(|p| p.contains("divisible")));
        assert!(problems.iter().any(|p| p.contains("nonempty")));
        assert!(problems.iter().any(|p| p.contains("alpha 1.5")));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let result: Result<RunConfig, _> = toml::from_str(
            r#"
output_dir = "/tmp/x"
totally_unknown_key = 1

[[languages]]
code = "aa"

[grid]
lapt_steps = [1]
vocab_sizes = [1]
alphas = [0.1]
"#,
        );
        assert!(result.is_err());
    }
}
