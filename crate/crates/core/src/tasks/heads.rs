//! Task heads over the encoder's word representations: a linear POS
//! classifier and a biaffine head scorer for dependency arcs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::nn::encoder::Bound;
use crate::nn::{Graph, Matrix, NodeId, ParamSet};

const INIT_STD: f64 = 0.02;

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z * INIT_STD
        })
        .collect();
    Matrix::from_vec(rows, cols, data)
}

/// Linear classifier over each word's first-subword vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PosHead {
    pub params: ParamSet,
    pub n_tags: usize,
}

impl PosHead {
    pub fn new(hidden: usize, n_tags: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        params.insert("pos.w", gaussian(&mut rng, hidden, n_tags));
        params.insert("pos.b", Matrix::zeros(1, n_tags));
        Self { params, n_tags }
    }

    /// Tag logits `[n_words, n_tags]` from word vectors `[n_words, d]`.
    pub fn logits(&self, graph: &mut Graph, bound: &Bound, words: NodeId) -> NodeId {
        let w = bound.nodes[self.params.index_of("pos.w").unwrap()];
        let b = bound.nodes[self.params.index_of("pos.b").unwrap()];
        let scores = graph.matmul(words, w);
        graph.add_row(scores, b)
    }
}

/// Biaffine arc scorer.
///
/// Two one-hidden-layer feed-forward nets map each word vector to a
/// head representation and a dependent representation; a learned root
/// vector occupies head position 0. The score of the arc `head i ->
/// dependent j` is `h_j_dep^T U h_i_head + W . h_i_head + b`, and a
/// softmax per dependent over candidate heads turns scores into a
/// distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct BiaffineHead {
    pub params: ParamSet,
    pub arc_dim: usize,
}

impl BiaffineHead {
    pub fn new(hidden: usize, arc_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        params.insert("bi.root", gaussian(&mut rng, 1, hidden));
        for side in ["head", "dep"] {
            params.insert(format!("bi.{side}.w1"), gaussian(&mut rng, hidden, arc_dim));
            params.insert(format!("bi.{side}.b1"), Matrix::zeros(1, arc_dim));
            params.insert(format!("bi.{side}.w2"), gaussian(&mut rng, arc_dim, arc_dim));
            params.insert(format!("bi.{side}.b2"), Matrix::zeros(1, arc_dim));
        }
        params.insert("bi.u", gaussian(&mut rng, arc_dim, arc_dim));
        params.insert("bi.w", gaussian(&mut rng, 1, arc_dim));
        params.insert("bi.b", Matrix::zeros(1, 1));
        Self { params, arc_dim }
    }

    fn node(&self, bound: &Bound, name: &str) -> NodeId {
        bound.nodes[self.params.index_of(name).unwrap_or_else(|| panic!("param {name}"))]
    }

    fn ffn(&self, graph: &mut Graph, bound: &Bound, side: &str, x: NodeId) -> NodeId {
        let up = graph.matmul(x, self.node(bound, &format!("bi.{side}.w1")));
        let up = graph.add_row(up, self.node(bound, &format!("bi.{side}.b1")));
        let act = graph.gelu(up);
        let out = graph.matmul(act, self.node(bound, &format!("bi.{side}.w2")));
        graph.add_row(out, self.node(bound, &format!("bi.{side}.b2")))
    }

    /// Arc scores `[n_words, n_words + 1]`: row j holds the scores of
    /// every candidate head (column 0 = root, column i = word i) for
    /// dependent j+1. Softmax rows to get per-dependent head
    /// distributions.
    pub fn scores(&self, graph: &mut Graph, bound: &Bound, words: NodeId) -> NodeId {
        let root = self.node(bound, "bi.root");
        let with_root = graph.concat_rows(&[root, words]);
        let h_head = self.ffn(graph, bound, "head", with_root);
        let h_dep = self.ffn(graph, bound, "dep", words);

        let u = self.node(bound, "bi.u");
        let dep_u = graph.matmul(h_dep, u);
        let bilinear = graph.matmul_tb(dep_u, h_head);

        let w = self.node(bound, "bi.w");
        let head_scores = graph.matmul_tb(h_head, w);
        let head_scores_row = graph.transpose(head_scores);
        let with_linear = graph.add_row(bilinear, head_scores_row);
        graph.add_scalar(with_linear, self.node(bound, "bi.b"))
    }
}

/// Arc score matrix in `(n_heads + 1) x n_dependents` orientation, for
/// callers that want the dense scores rather than the graph node.
pub fn biaffine_scores(
    head: &BiaffineHead,
    word_vectors: &Matrix,
) -> Matrix {
    let mut graph = Graph::new();
    let bound = head.params.bind(&mut graph);
    let words = graph.leaf(word_vectors.clone());
    let scores = head.scores(&mut graph, &bound, words);
    graph.value(scores).transpose()
}
