//! Tiny bidirectional transformer encoder with a tied masked-LM head.
//!
//! Post-norm blocks: `x = LN(x + MHA(x))` then `x = LN(x + FFN(x))`.
//! Logits tie to the token embedding table (`h * E^T + b`), so embedding
//! rows receive gradient from both the input lookup and the output head.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::graph::{Graph, Matrix, NodeId};
use super::NnError;
use crate::transplant::EmbeddingMatrix;

const INIT_STD: f64 = 0.02;

/// Shape of the encoder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderConfig {
    pub layers: usize,
    pub hidden: usize,
    pub ffn: usize,
    pub heads: usize,
    pub max_positions: usize,
    pub vocab_size: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        // Desk-scale dims; max_positions matches the full-scale setup.
        Self { layers: 2, hidden: 64, ffn: 256, heads: 2, max_positions: 256, vocab_size: 0 }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if self.layers == 0 || self.hidden == 0 || self.ffn == 0 || self.heads == 0 {
            return Err(NnError::InvalidConfig("all encoder dims must be positive".into()));
        }
        if self.hidden % self.heads != 0 {
            return Err(NnError::InvalidConfig(format!(
                "hidden dim {} not divisible by {} heads",
                self.hidden, self.heads
            )));
        }
        if self.vocab_size == 0 {
            return Err(NnError::InvalidConfig("vocab_size must be positive".into()));
        }
        if self.max_positions < 2 {
            return Err(NnError::InvalidConfig("max_positions must be at least 2".into()));
        }
        Ok(())
    }
}

/// Ordered named tensors. Iteration order is insertion order, which
/// every consumer (init, Adam, clipping, checkpoints) relies on for
/// determinism.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    entries: Vec<(String, Matrix)>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self { entries: Vec::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Matrix) {
        self.entries.push((name.into(), value));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.entries.iter().map(|(n, m)| (n.as_str(), m))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|(n, _)| n == name)
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn at(&self, index: usize) -> (&str, &Matrix) {
        let (n, m) = &self.entries[index];
        (n.as_str(), m)
    }

    pub fn at_mut(&mut self, index: usize) -> &mut Matrix {
        &mut self.entries[index].1
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|(_, m)| m.all_finite())
    }
}

impl Default for ParamSet {
    fn default() -> Self {
        Self::new()
    }
}

/// Leaf bindings of a [`ParamSet`] inside one graph, index-aligned.
pub struct Bound {
    pub nodes: Vec<NodeId>,
}

impl ParamSet {
    pub fn bind(&self, graph: &mut Graph) -> Bound {
        Bound { nodes: self.entries.iter().map(|(_, m)| graph.leaf(m.clone())).collect() }
    }
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z * std
        })
        .collect();
    Matrix::from_vec(rows, cols, data)
}

/// The encoder: a config plus its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub params: ParamSet,
}

/// Names of the tensors a freeze window leaves trainable: the token
/// embedding table and the tied head bias.
pub const EMBEDDING_PARAMS: [&str; 2] = ["embed.tokens", "head.bias"];

/// True for tensors inside transformer blocks or the positional table,
/// all of which freeze together during the freeze window.
pub fn is_block_param(name: &str) -> bool {
    name.starts_with("layer") || name == "embed.positions"
}

impl Encoder {
    /// Build with seeded Gaussian parameters. When `embedding` is given
    /// its rows replace the token table verbatim (the transplant
    /// hand-off); its shape must match the config exactly.
    pub fn build(
        config: EncoderConfig,
        embedding: Option<&EmbeddingMatrix>,
        seed: u64,
    ) -> Result<Self, NnError> {
        config.validate()?;
        if let Some(emb) = embedding {
            if emb.len() != config.vocab_size || emb.dim != config.hidden {
                return Err(NnError::InvalidConfig(format!(
                    "supplied embedding is {}x{}, encoder needs {}x{}",
                    emb.len(),
                    emb.dim,
                    config.vocab_size,
                    config.hidden
                )));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.hidden;
        let mut params = ParamSet::new();

        let tokens = match embedding {
            Some(emb) => Matrix::from_vec(emb.len(), emb.dim, emb.values().to_vec()),
            None => gaussian_matrix(&mut rng, config.vocab_size, d, INIT_STD),
        };
        params.insert("embed.tokens", tokens);
        params.insert(
            "embed.positions",
            gaussian_matrix(&mut rng, config.max_positions, d, INIT_STD),
        );
        for layer in 0..config.layers {
            for proj in ["wq", "wk", "wv", "wo"] {
                params.insert(
                    format!("layer{layer}.attn.{proj}"),
                    gaussian_matrix(&mut rng, d, d, INIT_STD),
                );
            }
            for bias in ["bq", "bk", "bv", "bo"] {
                params.insert(format!("layer{layer}.attn.{bias}"), Matrix::zeros(1, d));
            }
            params.insert(
                format!("layer{layer}.ln1.gain"),
                Matrix::from_vec(1, d, vec![1.0; d]),
            );
            params.insert(format!("layer{layer}.ln1.bias"), Matrix::zeros(1, d));
            params.insert(
                format!("layer{layer}.ffn.w1"),
                gaussian_matrix(&mut rng, d, config.ffn, INIT_STD),
            );
            params.insert(format!("layer{layer}.ffn.b1"), Matrix::zeros(1, config.ffn));
            params.insert(
                format!("layer{layer}.ffn.w2"),
                gaussian_matrix(&mut rng, config.ffn, d, INIT_STD),
            );
            params.insert(format!("layer{layer}.ffn.b2"), Matrix::zeros(1, d));
            params.insert(
                format!("layer{layer}.ln2.gain"),
                Matrix::from_vec(1, d, vec![1.0; d]),
            );
            params.insert(format!("layer{layer}.ln2.bias"), Matrix::zeros(1, d));
        }
        params.insert("head.bias", Matrix::zeros(1, config.vocab_size));
        Ok(Self { config, params })
    }

    pub fn embedding_matrix(&self, tokens: Vec<String>) -> EmbeddingMatrix {
        let table = self.params.get("embed.tokens").expect("token table");
        EmbeddingMatrix::from_rows(tokens, table.cols, table.data.clone())
            .expect("table shape is consistent")
    }

    fn node(&self, bound: &Bound, name: &str) -> NodeId {
        bound.nodes[self.params.index_of(name).unwrap_or_else(|| panic!("param {name}"))]
    }

    /// Contextual hidden states `[n, d]` for one id sequence.
    pub fn hidden_states(&self, graph: &mut Graph, bound: &Bound, ids: &[u32]) -> NodeId {
        let n = ids.len();
        assert!(n > 0, "empty sequence");
        assert!(
            n <= self.config.max_positions,
            "sequence length {n} exceeds max positions {}",
            self.config.max_positions
        );
        let d = self.config.hidden;
        let heads = self.config.heads;
        let dh = d / heads;

        let token_rows: Vec<usize> = ids.iter().map(|&id| id as usize).collect();
        let position_rows: Vec<usize> = (0..n).collect();
        let tok = graph.gather(self.node(bound, "embed.tokens"), &token_rows);
        let pos = graph.gather(self.node(bound, "embed.positions"), &position_rows);
        let mut x = graph.add(tok, pos);

        for layer in 0..self.config.layers {
            let name = |suffix: &str| format!("layer{layer}.{suffix}");
            let wq = self.node(bound, &name("attn.wq"));
            let wk = self.node(bound, &name("attn.wk"));
            let wv = self.node(bound, &name("attn.wv"));
            let wo = self.node(bound, &name("attn.wo"));
            let bq = self.node(bound, &name("attn.bq"));
            let bk = self.node(bound, &name("attn.bk"));
            let bv = self.node(bound, &name("attn.bv"));
            let bo = self.node(bound, &name("attn.bo"));

            let q_full = graph.matmul(x, wq);
            let q = graph.add_row(q_full, bq);
            let k_full = graph.matmul(x, wk);
            let k = graph.add_row(k_full, bk);
            let v_full = graph.matmul(x, wv);
            let v = graph.add_row(v_full, bv);

            let mut contexts = Vec::with_capacity(heads);
            for h in 0..heads {
                let qh = graph.slice_cols(q, h * dh, dh);
                let kh = graph.slice_cols(k, h * dh, dh);
                let vh = graph.slice_cols(v, h * dh, dh);
                let raw = graph.matmul_tb(qh, kh);
                let scaled = graph.scale(raw, 1.0 / (dh as f64).sqrt());
                let attn = graph.softmax_rows(scaled);
                contexts.push(graph.matmul(attn, vh));
            }
            let ctx = graph.concat_cols(&contexts);
            let proj = graph.matmul(ctx, wo);
            let proj = graph.add_row(proj, bo);
            let residual = graph.add(x, proj);
            x = graph.layer_norm(
                residual,
                self.node(bound, &name("ln1.gain")),
                self.node(bound, &name("ln1.bias")),
            );

            let up = graph.matmul(x, self.node(bound, &name("ffn.w1")));
            let up = graph.add_row(up, self.node(bound, &name("ffn.b1")));
            let act = graph.gelu(up);
            let down = graph.matmul(act, self.node(bound, &name("ffn.w2")));
            let down = graph.add_row(down, self.node(bound, &name("ffn.b2")));
            let residual = graph.add(x, down);
            x = graph.layer_norm(
                residual,
                self.node(bound, &name("ln2.gain")),
                self.node(bound, &name("ln2.bias")),
            );
        }
        x
    }

    /// Vocabulary logits `[n, v]` via the tied head.
    pub fn mlm_logits(&self, graph: &mut Graph, bound: &Bound, ids: &[u32]) -> NodeId {
        let hidden = self.hidden_states(graph, bound, ids);
        let tied = graph.matmul_tb(hidden, self.node(bound, "embed.tokens"));
        graph.add_row(tied, self.node(bound, "head.bias"))
    }
}
