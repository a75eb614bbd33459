//! Compute-cost modeling, mixed-effects regression, and reporting.

pub mod lmm;
pub mod records;
pub mod report;

use thiserror::Error;

pub use lmm::{fit_lmm, Coefficient, FixedTerm, LmmFit, LmmSpec};
pub use records::{ResultRecord, Setting, Task};
pub use report::{emit_report, marginalize, MarginalCell, ReportTable};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("need at least two groups for a random intercept, got {0}")]
    TooFewGroups(usize),
    #[error("design matrix is rank deficient; collinear columns: {columns:?}")]
    RankDeficient { columns: Vec<String> },
    #[error("variance-ratio search did not converge; final bracket [{lo}, {hi}]")]
    NonConvergence { lo: f64, hi: f64 },
    #[error("no records supplied")]
    EmptyRecords,
    #[error("unknown record column {0:?}")]
    UnknownColumn(String),
    #[error("records file malformed at line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("cannot access {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Dimensions that determine parameter and FLOP counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostModel {
    pub layers: u64,
    pub hidden: u64,
    pub ffn: u64,
    pub max_positions: u64,
    pub vocab: u64,
}

impl CostModel {
    /// The 12-layer, 768-wide reference encoder with a given vocabulary.
    pub fn xlmr_base(vocab: u64) -> Self {
        Self { layers: 12, hidden: 768, ffn: 3072, max_positions: 512, vocab }
    }

    /// Closed-form total parameter count.
    ///
    /// token embedding `v*d` + positional `P*d`
    /// + per layer: attention `4d^2 + 4d`, feed-forward `2*d*f + f + d`,
    ///   two layer norms `4d`
    /// + LM head: dense `d^2 + d`, layer norm `2d`, tied-decoder bias `v`.
    pub fn count_parameters(&self) -> u64 {
        let d = self.hidden;
        let f = self.ffn;
        let per_layer = 4 * d * d + 4 * d + 2 * d * f + f + d + 4 * d;
        let head = d * d + d + 2 * d + self.vocab;
        self.vocab * d + self.max_positions * d + self.layers * per_layer + head
    }

    /// Parameters excluding everything vocabulary-sized (token table and
    /// head bias); equal to the total count at a hypothetical vocabulary
    /// of zero.
    pub fn non_embedding_parameters(&self) -> u64 {
        self.count_parameters() - self.vocab * self.hidden - self.vocab
    }

    pub fn flops_per_token(&self) -> u64 {
        flops_per_token(self.non_embedding_parameters(), self.hidden, self.vocab)
    }
}

/// Operations per training step per token: `6 * (N + d*v + 2d)`.
pub fn flops_per_token(non_embedding_params: u64, hidden: u64, vocab: u64) -> u64 {
    6 * (non_embedding_params + hidden * vocab + 2 * hidden)
}

/// Training-cost ratio of configuration `a` over `b`, where per-sequence
/// cost is FLOPs per token times the mean tokenized sequence length.
pub fn relative_cost(a: &CostModel, b: &CostModel, mean_len_a: f64, mean_len_b: f64) -> f64 {
    (a.flops_per_token() as f64 * mean_len_a) / (b.flops_per_token() as f64 * mean_len_b)
}

/// Parameter/FLOPs table for a set of vocabulary sizes, as delimited text.
pub fn cost_table(dims: &CostModel, vocabs: &[u64]) -> String {
    let mut out = String::from("vocab_size\tparameters\tnon_embedding\tflops_per_token\n");
    for &v in vocabs {
        let model = CostModel { vocab: v, ..dims.clone() };
        out.push_str(&format!(
            "{v}\t{}\t{}\t{}\n",
            model.count_parameters(),
            model.non_embedding_parameters(),
            model.flops_per_token()
        ));
    }
    out
}
