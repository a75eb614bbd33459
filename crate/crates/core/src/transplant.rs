//! Embedding transplantation onto a new vocabulary.
//!
//! Tokens shared between the old and new vocabularies (byte-identical
//! after boundary-marker normalization, specials matched by role) keep
//! their old embedding rows verbatim. Novel tokens get a convex
//! combination of the old rows of their most similar overlapping tokens,
//! where similarity comes from an auxiliary embedding space built on
//! target-language text (PPMI co-occurrence counts factored by truncated
//! SVD) and the combination weights are the sparsemax of the top-k
//! similarities. Novel tokens the auxiliary model never saw fall back to
//! the overlap mean plus a small seeded perturbation.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::subword::{self, SubwordModel};

#[derive(Debug, Error)]
pub enum TransplantError {
    #[error("embedding dimensions do not line up: {0}")]
    DimensionMismatch(String),
    #[error("sparsemax input is empty")]
    EmptyScores,
    #[error("no overlapping tokens between old and new vocabulary; transplant is undefined")]
    NoOverlap,
    #[error("auxiliary embeddings must cover the new vocabulary: have {have} rows, need {need}")]
    AuxiliaryCoverage { have: usize, need: usize },
    #[error("neighbor count k must be at least 1")]
    InvalidNeighborCount,
    #[error("auxiliary corpus is empty")]
    EmptyAuxCorpus,
    #[error("cannot read {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("embedding file malformed at line {line}: {message}")]
    Malformed { line: usize, message: String },
}

/// Dense token-embedding table keyed by a vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub tokens: Vec<String>,
    pub dim: usize,
    data: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn zeros(tokens: Vec<String>, dim: usize) -> Self {
        let data = vec![0.0; tokens.len() * dim];
        Self { tokens, dim, data }
    }

    pub fn from_rows(tokens: Vec<String>, dim: usize, data: Vec<f64>) -> Result<Self, TransplantError> {
        if data.len() != tokens.len() * dim {
            return Err(TransplantError::DimensionMismatch(format!(
                "{} tokens x {} dims needs {} values, got {}",
                tokens.len(),
                dim,
                tokens.len() * dim,
                data.len()
            )));
        }
        Ok(Self { tokens, dim, data })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_row_norm(&self) -> f64 {
        (0..self.len())
            .map(|i| self.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// Word2vec-style text format: a `rows dims` header, then one line
    /// per token with space-separated values. f64 values are written in
    /// Rust's shortest round-trip form, so save/load is exact.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.len(), self.dim);
        for (i, token) in self.tokens.iter().enumerate() {
            out.push_str(token);
            for v in self.row(i) {
                out.push(' ');
                out.push_str(&format!("{v}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, TransplantError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or(TransplantError::Malformed { line: 1, message: "empty file".into() })?;
        let mut parts = header.split_whitespace();
        let rows: usize = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or(TransplantError::Malformed { line: 1, message: "bad row count".into() })?;
        let dim: usize = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or(TransplantError::Malformed { line: 1, message: "bad dim count".into() })?;

        let mut tokens = Vec::with_capacity(rows);
        let mut data = Vec::with_capacity(rows * dim);
        for _ in 0..rows {
            let (n, line) = lines.next().ok_or(TransplantError::Malformed {
                line: 0,
                message: "fewer rows than header declares".into(),
            })?;
            let mut fields = line.split(' ');
            let token = fields.next().filter(|t| !t.is_empty()).ok_or(
                TransplantError::Malformed { line: n + 1, message: "missing token".into() },
            )?;
            tokens.push(token.to_string());
            let mut count = 0;
            for field in fields {
                let v: f64 = field.parse().map_err(|_| TransplantError::Malformed {
                    line: n + 1,
                    message: format!("bad float {field:?}"),
                })?;
                data.push(v);
                count += 1;
            }
            if count != dim {
                return Err(TransplantError::Malformed {
                    line: n + 1,
                    message: format!("expected {dim} values, got {count}"),
                });
            }
        }
        Self::from_rows(tokens, dim, data)
    }

    pub fn save(&self, path: &Path) -> Result<(), TransplantError> {
        std::fs::write(path, self.to_text()).map_err(|source| TransplantError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, TransplantError> {
        let text = std::fs::read_to_string(path).map_err(|source| TransplantError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_text(&text)
    }
}

/// A vocabulary as the transplant sees it: token surfaces, the boundary
/// marker convention, and which ids play the five special roles.
#[derive(Debug, Clone)]
pub struct VocabView {
    pub tokens: Vec<String>,
    pub marker: char,
    /// Ids of (begin, end, pad, mask, unknown).
    pub special_ids: [u32; 5],
}

impl VocabView {
    pub fn from_model(model: &SubwordModel) -> Self {
        Self {
            tokens: model.tokens().to_vec(),
            marker: model.marker(),
            special_ids: [0, 1, 2, 3, 4],
        }
    }

    fn is_special(&self, id: u32) -> bool {
        self.special_ids.contains(&id)
    }

    fn normalized(&self, id: u32) -> &str {
        let token = self.tokens[id as usize].as_str();
        token.strip_prefix(self.marker).unwrap_or(token)
    }
}

/// Pairs of (new id, old id) whose tokens transplant by exact copy.
#[derive(Debug, Clone, Default)]
pub struct OverlapMap {
    pub pairs: Vec<(u32, u32)>,
}

impl OverlapMap {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn old_id_for(&self, new_id: u32) -> Option<u32> {
        self.pairs.iter().find(|(n, _)| *n == new_id).map(|(_, o)| *o)
    }
}

/// Match tokens whose normalized surface forms are byte-identical.
///
/// Special tokens map to their counterparts by role regardless of
/// surface. When several old tokens normalize to the same form the
/// lowest old id wins.
pub fn compute_overlap(old: &VocabView, new: &VocabView) -> OverlapMap {
    let mut old_by_form: HashMap<&str, u32> = HashMap::new();
    for id in 0..old.tokens.len() as u32 {
        if old.is_special(id) {
            continue;
        }
        old_by_form.entry(old.normalized(id)).or_insert(id);
    }

    let mut pairs = Vec::new();
    for role in 0..5 {
        pairs.push((new.special_ids[role], old.special_ids[role]));
    }
    for id in 0..new.tokens.len() as u32 {
        if new.is_special(id) {
            continue;
        }
        if let Some(&old_id) = old_by_form.get(new.normalized(id)) {
            pairs.push((id, old_id));
        }
    }
    pairs.sort_unstable();
    pairs.dedup_by_key(|(new_id, _)| *new_id);
    OverlapMap { pairs }
}

/// Per-token auxiliary vectors over the new vocabulary, used only for
/// similarity ranking. Rows of tokens never seen in the auxiliary corpus
/// are zero.
#[derive(Debug, Clone)]
pub struct AuxiliaryEmbeddings {
    pub dim: usize,
    rows: Vec<f64>,
    vocab_size: usize,
}

impl AuxiliaryEmbeddings {
    /// Wrap externally computed auxiliary vectors (row-major,
    /// `vocab_size * dim` values).
    pub fn from_rows(dim: usize, rows: Vec<f64>, vocab_size: usize) -> Self {
        assert_eq!(rows.len(), vocab_size * dim, "row data must be vocab_size * dim");
        Self { dim, rows, vocab_size }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn row(&self, id: u32) -> &[f64] {
        &self.rows[id as usize * self.dim..(id as usize + 1) * self.dim]
    }

    pub fn is_zero(&self, id: u32) -> bool {
        self.row(id).iter().all(|&v| v == 0.0)
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Build auxiliary embeddings from co-occurrence statistics.
///
/// Lines are tokenized with `model`, symmetric counts are collected
/// within `window` positions, converted to positive PMI, and factored by
/// truncated SVD; token vectors are the left singular vectors scaled by
/// the square root of their singular values. Deterministic: there is no
/// randomness anywhere in the procedure. If the PPMI matrix has rank
/// below `aux_dim` the dimensionality is reduced to the rank with a
/// warning.
pub fn train_auxiliary_embeddings(
    lines: &[String],
    model: &SubwordModel,
    aux_dim: usize,
    window: usize,
) -> Result<AuxiliaryEmbeddings, TransplantError> {
    if lines.is_empty() {
        return Err(TransplantError::EmptyAuxCorpus);
    }
    let v = model.vocab_size();
    let mut counts: HashMap<(u32, u32), f64> = HashMap::new();
    let mut seen = vec![false; v];
    for line in lines {
        let ids = subword::encode(model, line, false);
        for (i, &a) in ids.iter().enumerate() {
            seen[a as usize] = true;
            for &b in ids.iter().skip(i + 1).take(window) {
                *counts.entry((a, b)).or_insert(0.0) += 1.0;
                *counts.entry((b, a)).or_insert(0.0) += 1.0;
            }
        }
    }

    let mut row_sums = vec![0.0f64; v];
    let mut total = 0.0f64;
    for (&(a, _), &c) in &counts {
        row_sums[a as usize] += c;
        total += c;
    }

    let mut ppmi = DMatrix::<f64>::zeros(v, v);
    for (&(a, b), &c) in &counts {
        let denom = row_sums[a as usize] * row_sums[b as usize];
        if denom > 0.0 {
            let pmi = (c * total / denom).ln();
            if pmi > 0.0 {
                ppmi[(a as usize, b as usize)] = pmi;
            }
        }
    }

    let svd = ppmi.svd(true, false);
    let u = svd.u.as_ref().expect("left singular vectors requested");
    let singular = &svd.singular_values;
    let tol = singular.iter().cloned().fold(0.0, f64::max) * (v as f64) * f64::EPSILON;
    let rank = singular.iter().filter(|&&s| s > tol).count();
    let dim = aux_dim.min(rank).max(1).min(v);
    if dim < aux_dim {
        log::warn!(
            "auxiliary dimension reduced from {aux_dim} to {dim}: PPMI matrix rank is {rank}"
        );
    }

    let mut rows = vec![0.0f64; v * dim];
    for token in 0..v {
        if !seen[token] {
            continue; // never-seen tokens keep a zero row
        }
        for j in 0..dim {
            rows[token * dim + j] = u[(token, j)] * singular[j].sqrt();
        }
    }
    Ok(AuxiliaryEmbeddings { dim, rows, vocab_size: v })
}

/// Euclidean projection of a score vector onto the probability simplex.
///
/// Output entries are nonnegative, sum to 1, and are exactly zero for
/// scores far enough below the maximum; a vector already on the simplex
/// is a fixed point.
pub fn sparsemax(scores: &[f64]) -> Result<Vec<f64>, TransplantError> {
    if scores.is_empty() {
        return Err(TransplantError::EmptyScores);
    }
    let mut sorted: Vec<f64> = scores.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut support = 0;
    let mut threshold_sum = 0.0;
    for (j, &z) in sorted.iter().enumerate() {
        cumulative += z;
        let k = (j + 1) as f64;
        if 1.0 + k * z > cumulative {
            support = j + 1;
            threshold_sum = cumulative;
        }
    }
    let tau = (threshold_sum - 1.0) / support as f64;
    Ok(scores.iter().map(|&z| (z - tau).max(0.0)).collect())
}

/// Knobs for [`focus_initialize`].
#[derive(Debug, Clone)]
pub struct FocusConfig {
    /// How many overlapping neighbors a novel token draws from.
    pub neighbors: usize,
    /// Seed for the zero-auxiliary fallback perturbation.
    pub seed: u64,
    /// Fallback noise magnitude as a fraction of the mean old row norm.
    pub noise_fraction: f64,
}

impl Default for FocusConfig {
    fn default() -> Self {
        Self { neighbors: 10, seed: 0, noise_fraction: 0.01 }
    }
}

/// Re-initialize an embedding matrix for `new_vocab` from `old_emb`.
///
/// Overlapping tokens copy their old rows bitwise. Each novel token
/// takes the sparsemax-weighted sum of the old rows of its `k` most
/// cosine-similar overlapping tokens in the auxiliary space. Novel
/// tokens with a zero auxiliary vector get the mean overlap row plus a
/// seeded perturbation of norm `noise_fraction x mean old row norm`.
pub fn focus_initialize(
    old_emb: &EmbeddingMatrix,
    overlap: &OverlapMap,
    new_vocab: &VocabView,
    aux: &AuxiliaryEmbeddings,
    config: &FocusConfig,
) -> Result<EmbeddingMatrix, TransplantError> {
    if overlap.is_empty() {
        return Err(TransplantError::NoOverlap);
    }
    if config.neighbors == 0 {
        return Err(TransplantError::InvalidNeighborCount);
    }
    let n_new = new_vocab.tokens.len();
    if aux.vocab_size() < n_new {
        return Err(TransplantError::AuxiliaryCoverage { have: aux.vocab_size(), need: n_new });
    }
    let dim = old_emb.dim;
    let mut out = EmbeddingMatrix::zeros(new_vocab.tokens.clone(), dim);

    let mut is_overlap = vec![false; n_new];
    for &(new_id, old_id) in &overlap.pairs {
        if old_id as usize >= old_emb.len() {
            return Err(TransplantError::DimensionMismatch(format!(
                "overlap references old id {old_id} beyond {} rows",
                old_emb.len()
            )));
        }
        out.row_mut(new_id as usize).copy_from_slice(old_emb.row(old_id as usize));
        is_overlap[new_id as usize] = true;
    }

    // Neighbor pool: overlapping non-special tokens the auxiliary model
    // actually saw. Specials drop out naturally (they never co-occur).
    let pool: Vec<(u32, u32)> = overlap
        .pairs
        .iter()
        .copied()
        .filter(|&(new_id, _)| !new_vocab.is_special(new_id) && !aux.is_zero(new_id))
        .collect();

    let overlap_mean: Vec<f64> = {
        let mut mean = vec![0.0; dim];
        for &(_, old_id) in &overlap.pairs {
            for (m, v) in mean.iter_mut().zip(old_emb.row(old_id as usize)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= overlap.pairs.len() as f64);
        mean
    };
    let mean_norm = {
        let total: f64 = (0..old_emb.len())
            .map(|i| old_emb.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
            .sum();
        total / old_emb.len().max(1) as f64
    };
    let noise_scale = config.noise_fraction * mean_norm;

    for new_id in 0..n_new as u32 {
        if is_overlap[new_id as usize] {
            continue;
        }
        let use_fallback = aux.is_zero(new_id) || pool.is_empty();
        if use_fallback {
            let row = out.row_mut(new_id as usize);
            row.copy_from_slice(&overlap_mean);
            let mut rng = ChaCha8Rng::seed_from_u64(
                config.seed ^ (new_id as u64).wrapping_mul(0x9e3779b97f4a7c15),
            );
            let noise: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm: f64 = noise.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                for (r, n) in row.iter_mut().zip(noise) {
                    *r += n / norm * noise_scale;
                }
            }
            continue;
        }

        let mut sims: Vec<(f64, u32)> = pool
            .iter()
            .map(|&(cand_new, cand_old)| {
                (cosine(aux.row(new_id), aux.row(cand_new)), cand_old)
            })
            .collect();
        sims.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        sims.truncate(config.neighbors);

        if sims.len() == 1 {
            // Degenerate convex combination: exact copy of the neighbor.
            out.row_mut(new_id as usize).copy_from_slice(old_emb.row(sims[0].1 as usize));
            continue;
        }
        let weights = sparsemax(&sims.iter().map(|(s, _)| *s).collect::<Vec<_>>())?;
        let row = out.row_mut(new_id as usize);
        for (&w, &(_, old_id)) in weights.iter().zip(sims.iter()) {
            if w == 0.0 {
                continue;
            }
            for (r, v) in row.iter_mut().zip(old_emb.row(old_id as usize)) {
                *r += w * v;
            }
        }
    }

    debug_assert!(out.all_finite());
    Ok(out)
}
