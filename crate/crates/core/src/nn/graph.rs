//! A small eager tape: 2-D f64 tensors, forward values computed at node
//! creation, gradients by a single reverse sweep over the tape.

use std::fmt;

/// Row-major dense matrix. Scalars are 1x1, row vectors 1xN.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "shape {rows}x{cols} vs {} values", data.len());
        Self { rows, cols, data }
    }

    pub fn scalar(v: f64) -> Self {
        Self::from_vec(1, 1, vec![v])
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// `self * other`, ikj loop order.
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows);
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.at(i, k);
                if a == 0.0 {
                    continue;
                }
                let src = other.row(k);
                let dst = out.row_mut(i);
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        out
    }

    /// `self * other^T`.
    pub fn matmul_tb(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.cols);
        let mut out = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..other.rows {
                let b = other.row(j);
                *out.at_mut(i, j) = a.iter().zip(b).map(|(x, y)| x * y).sum();
            }
        }
        out
    }

    /// `self^T * other`.
    pub fn matmul_ta(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows);
        let mut out = Matrix::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let a = self.row(k);
            let b = other.row(k);
            for (i, &av) in a.iter().enumerate() {
                if av == 0.0 {
                    continue;
                }
                let dst = out.row_mut(i);
                for (d, &bv) in dst.iter_mut().zip(b) {
                    *d += av * bv;
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                *out.at_mut(c, r) = self.at(r, c);
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale_assign(&mut self, c: f64) {
        for v in &mut self.data {
            *v *= c;
        }
    }
}

impl fmt::Display for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}x{}]", self.rows, self.cols)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub usize);

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// Rows of `table` selected by index; duplicates scatter-add back.
    Gather { table: NodeId, ids: Vec<usize> },
    MatMul { a: NodeId, b: NodeId },
    /// `a * b^T`; ties output logits to an embedding table.
    MatMulTB { a: NodeId, b: NodeId },
    Add { a: NodeId, b: NodeId },
    /// Matrix plus a `1 x cols` row broadcast over every row.
    AddRow { a: NodeId, row: NodeId },
    /// Matrix plus a `1 x 1` scalar broadcast everywhere.
    AddScalar { a: NodeId, s: NodeId },
    Scale { a: NodeId, c: f64 },
    Gelu { a: NodeId },
    SoftmaxRows { a: NodeId },
    LayerNorm { x: NodeId, gain: NodeId, bias: NodeId },
    SliceCols { a: NodeId, start: usize, len: usize },
    ConcatCols { parts: Vec<NodeId> },
    ConcatRows { parts: Vec<NodeId> },
    Transpose { a: NodeId },
    /// Scalar sum of `logsumexp(row) - row[target]` over rows with a target.
    SumNll { logits: NodeId, targets: Vec<Option<usize>> },
}

struct Node {
    value: Matrix,
    grad: Option<Matrix>,
    op: Op,
}

/// Computation tape. Values are eager; call [`Graph::backward`] once on
/// a scalar node, then read gradients with [`Graph::grad`].
pub struct Graph {
    nodes: Vec<Node>,
}

fn gelu_scalar(x: f64) -> f64 {
    // tanh approximation; smooth everywhere, which the finite-difference
    // checks rely on.
    const C: f64 = 0.7978845608028654; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_derivative(x: f64) -> f64 {
    const C: f64 = 0.7978845608028654;
    let u = C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    let sech2 = 1.0 - t * t;
    0.5 * (1.0 + t) + 0.5 * x * sech2 * C * (1.0 + 3.0 * 0.044715 * x * x)
}

fn softmax_rows(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for r in 0..out.rows {
        let row = out.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

impl Graph {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    pub fn grad(&self, id: NodeId) -> Option<&Matrix> {
        self.nodes[id.0].grad.as_ref()
    }

    fn push(&mut self, value: Matrix, op: Op) -> NodeId {
        self.nodes.push(Node { value, grad: None, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn gather(&mut self, table: NodeId, ids: &[usize]) -> NodeId {
        let src = self.value(table);
        let mut out = Matrix::zeros(ids.len(), src.cols);
        for (r, &id) in ids.iter().enumerate() {
            out.row_mut(r).copy_from_slice(src.row(id));
        }
        self.push(out, Op::Gather { table, ids: ids.to_vec() })
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = self.value(a).matmul(self.value(b));
        self.push(out, Op::MatMul { a, b })
    }

    pub fn matmul_tb(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = self.value(a).matmul_tb(self.value(b));
        self.push(out, Op::MatMulTB { a, b })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        self.push(out, Op::Add { a, b })
    }

    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        let r = self.value(row).clone();
        assert_eq!(r.rows, 1);
        let mut out = self.value(a).clone();
        assert_eq!(out.cols, r.cols);
        for i in 0..out.rows {
            for (v, b) in out.row_mut(i).iter_mut().zip(&r.data) {
                *v += b;
            }
        }
        self.push(out, Op::AddRow { a, row })
    }

    pub fn add_scalar(&mut self, a: NodeId, s: NodeId) -> NodeId {
        let sv = self.value(s).data[0];
        let mut out = self.value(a).clone();
        for v in &mut out.data {
            *v += sv;
        }
        self.push(out, Op::AddScalar { a, s })
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let mut out = self.value(a).clone();
        out.scale_assign(c);
        self.push(out, Op::Scale { a, c })
    }

    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let mut out = self.value(a).clone();
        for v in &mut out.data {
            *v = gelu_scalar(*v);
        }
        self.push(out, Op::Gelu { a })
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let out = softmax_rows(self.value(a));
        self.push(out, Op::SoftmaxRows { a })
    }

    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> NodeId {
        let xv = self.value(x);
        let g = self.value(gain);
        let b = self.value(bias);
        assert_eq!(g.rows, 1);
        assert_eq!(b.rows, 1);
        let mut out = Matrix::zeros(xv.rows, xv.cols);
        let n = xv.cols as f64;
        for r in 0..xv.rows {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            for c in 0..xv.cols {
                *out.at_mut(r, c) = g.data[c] * (row[c] - mean) * inv + b.data[c];
            }
        }
        self.push(out, Op::LayerNorm { x, gain, bias })
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let src = self.value(a);
        let mut out = Matrix::zeros(src.rows, len);
        for r in 0..src.rows {
            out.row_mut(r).copy_from_slice(&src.row(r)[start..start + len]);
        }
        self.push(out, Op::SliceCols { a, start, len })
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut out = Matrix::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let src = self.value(p);
            assert_eq!(src.rows, rows);
            for r in 0..rows {
                out.row_mut(r)[offset..offset + src.cols].copy_from_slice(src.row(r));
            }
            offset += src.cols;
        }
        self.push(out, Op::ConcatCols { parts: parts.to_vec() })
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> NodeId {
        let cols = self.value(parts[0]).cols;
        let rows: usize = parts.iter().map(|&p| self.value(p).rows).sum();
        let mut out = Matrix::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let src = self.value(p);
            assert_eq!(src.cols, cols);
            for r in 0..src.rows {
                out.row_mut(offset + r).copy_from_slice(src.row(r));
            }
            offset += src.rows;
        }
        self.push(out, Op::ConcatRows { parts: parts.to_vec() })
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let out = self.value(a).transpose();
        self.push(out, Op::Transpose { a })
    }

    /// Sum of per-row negative log-likelihoods under a row softmax, over
    /// rows that carry a target. Pair with [`Graph::scale`] to average.
    pub fn sum_nll(&mut self, logits: NodeId, targets: Vec<Option<usize>>) -> NodeId {
        let lv = self.value(logits);
        assert_eq!(lv.rows, targets.len());
        let mut total = 0.0;
        for (r, target) in targets.iter().enumerate() {
            let Some(t) = target else { continue };
            let row = lv.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse - row[*t];
        }
        self.push(Matrix::scalar(total), Op::SumNll { logits, targets })
    }

    fn grad_buffer(&mut self, id: NodeId) -> &mut Matrix {
        let (rows, cols) = {
            let v = &self.nodes[id.0].value;
            (v.rows, v.cols)
        };
        self.nodes[id.0].grad.get_or_insert_with(|| Matrix::zeros(rows, cols))
    }

    fn add_grad(&mut self, id: NodeId, delta: &Matrix) {
        self.grad_buffer(id).add_assign(delta);
    }

    /// Reverse sweep from a scalar node. Gradients accumulate on every
    /// node that contributed; leaves keep theirs for the caller.
    pub fn backward(&mut self, loss: NodeId) {
        {
            let v = &self.nodes[loss.0].value;
            assert_eq!((v.rows, v.cols), (1, 1), "backward needs a scalar loss");
        }
        self.grad_buffer(loss).data[0] = 1.0;

        for idx in (0..self.nodes.len()).rev() {
            let Some(grad) = self.nodes[idx].grad.clone() else { continue };
            let op = self.nodes[idx].op.clone();
            match op {
                Op::Leaf => {}
                Op::Gather { table, ids } => {
                    let mut delta = Matrix::zeros(
                        self.value(table).rows,
                        self.value(table).cols,
                    );
                    for (r, &row_id) in ids.iter().enumerate() {
                        for (d, g) in delta.row_mut(row_id).iter_mut().zip(grad.row(r)) {
                            *d += g;
                        }
                    }
                    self.add_grad(table, &delta);
                }
                Op::MatMul { a, b } => {
                    let da = grad.matmul_tb(self.value(b));
                    let db = self.value(a).matmul_ta(&grad);
                    self.add_grad(a, &da);
                    self.add_grad(b, &db);
                }
                Op::MatMulTB { a, b } => {
                    let da = grad.matmul(self.value(b));
                    let db = grad.matmul_ta(self.value(a));
                    self.add_grad(a, &da);
                    self.add_grad(b, &db);
                }
                Op::Add { a, b } => {
                    self.add_grad(a, &grad);
                    self.add_grad(b, &grad);
                }
                Op::AddRow { a, row } => {
                    self.add_grad(a, &grad);
                    let mut dr = Matrix::zeros(1, grad.cols);
                    for r in 0..grad.rows {
                        for (d, g) in dr.data.iter_mut().zip(grad.row(r)) {
                            *d += g;
                        }
                    }
                    self.add_grad(row, &dr);
                }
                Op::AddScalar { a, s } => {
                    self.add_grad(a, &grad);
                    let total: f64 = grad.data.iter().sum();
                    self.add_grad(s, &Matrix::scalar(total));
                }
                Op::Scale { a, c } => {
                    let mut da = grad.clone();
                    da.scale_assign(c);
                    self.add_grad(a, &da);
                }
                Op::Gelu { a } => {
                    let mut da = grad.clone();
                    for (d, &x) in da.data.iter_mut().zip(&self.value(a).data) {
                        *d *= gelu_derivative(x);
                    }
                    self.add_grad(a, &da);
                }
                Op::SoftmaxRows { a } => {
                    let y = self.nodes[idx].value.clone();
                    let mut da = Matrix::zeros(y.rows, y.cols);
                    for r in 0..y.rows {
                        let dot: f64 =
                            grad.row(r).iter().zip(y.row(r)).map(|(g, v)| g * v).sum();
                        for c in 0..y.cols {
                            *da.at_mut(r, c) = (grad.at(r, c) - dot) * y.at(r, c);
                        }
                    }
                    self.add_grad(a, &da);
                }
                Op::LayerNorm { x, gain, bias } => {
                    let xv = self.value(x).clone();
                    let g = self.value(gain).clone();
                    let n = xv.cols as f64;
                    let mut dx = Matrix::zeros(xv.rows, xv.cols);
                    let mut dgain = Matrix::zeros(1, xv.cols);
                    let mut dbias = Matrix::zeros(1, xv.cols);
                    for r in 0..xv.rows {
                        let row = xv.row(r);
                        let mean = row.iter().sum::<f64>() / n;
                        let var =
                            row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                        let inv = 1.0 / (var + LN_EPS).sqrt();
                        let xhat: Vec<f64> = row.iter().map(|v| (v - mean) * inv).collect();
                        let gy: Vec<f64> = grad
                            .row(r)
                            .iter()
                            .zip(&g.data)
                            .map(|(gr, gn)| gr * gn)
                            .collect();
                        let mean_gy = gy.iter().sum::<f64>() / n;
                        let mean_gy_xhat =
                            gy.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / n;
                        for c in 0..xv.cols {
                            *dx.at_mut(r, c) =
                                (gy[c] - mean_gy - xhat[c] * mean_gy_xhat) * inv;
                            dgain.data[c] += grad.at(r, c) * xhat[c];
                            dbias.data[c] += grad.at(r, c);
                        }
                    }
                    self.add_grad(x, &dx);
                    self.add_grad(gain, &dgain);
                    self.add_grad(bias, &dbias);
                }
                Op::SliceCols { a, start, len } => {
                    let mut da = Matrix::zeros(self.value(a).rows, self.value(a).cols);
                    for r in 0..grad.rows {
                        for c in 0..len {
                            *da.at_mut(r, start + c) = grad.at(r, c);
                        }
                    }
                    self.add_grad(a, &da);
                }
                Op::ConcatCols { parts } => {
                    let mut offset = 0;
                    for p in parts {
                        let cols = self.value(p).cols;
                        let mut dp = Matrix::zeros(grad.rows, cols);
                        for r in 0..grad.rows {
                            dp.row_mut(r)
                                .copy_from_slice(&grad.row(r)[offset..offset + cols]);
                        }
                        self.add_grad(p, &dp);
                        offset += cols;
                    }
                }
                Op::ConcatRows { parts } => {
                    let mut offset = 0;
                    for p in parts {
                        let rows = self.value(p).rows;
                        let mut dp = Matrix::zeros(rows, grad.cols);
                        for r in 0..rows {
                            dp.row_mut(r).copy_from_slice(grad.row(offset + r));
                        }
                        self.add_grad(p, &dp);
                        offset += rows;
                    }
                }
                Op::Transpose { a } => {
                    let da = grad.transpose();
                    self.add_grad(a, &da);
                }
                Op::SumNll { logits, targets } => {
                    let g = grad.data[0];
                    let probs = softmax_rows(self.value(logits));
                    let mut dl = Matrix::zeros(probs.rows, probs.cols);
                    for (r, target) in targets.iter().enumerate() {
                        let Some(t) = target else { continue };
                        for c in 0..probs.cols {
                            *dl.at_mut(r, c) = g * probs.at(r, c);
                        }
                        *dl.at_mut(r, *t) -= g;
                    }
                    self.add_grad(logits, &dl);
                }
            }
        }
    }
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    /// Finite-difference check of `build`'s scalar output against the
    /// backward sweep, for every entry of every leaf.
    fn check_gradients(
        leaves: &[Matrix],
        build: impl Fn(&mut Graph, &[NodeId]) -> NodeId,
        tol: f64,
    ) {
        let mut graph = Graph::new();
        let ids: Vec<NodeId> = leaves.iter().map(|m| graph.leaf(m.clone())).collect();
        let loss = build(&mut graph, &ids);
        graph.backward(loss);
        let analytic: Vec<Matrix> =
            ids.iter().map(|&id| graph.grad(id).cloned().unwrap_or_else(|| {
                Matrix::zeros(graph.value(id).rows, graph.value(id).cols)
            })).collect();

        let h = 1e-5;
        for (li, leaf) in leaves.iter().enumerate() {
            for e in 0..leaf.data.len() {
                let eval = |delta: f64| {
                    let mut graph = Graph::new();
                    let ids: Vec<NodeId> = leaves
                        .iter()
                        .enumerate()
                        .map(|(i, m)| {
                            let mut m = m.clone();
                            if i == li {
                                m.data[e] += delta;
                            }
                            graph.leaf(m)
                        })
                        .collect();
                    let loss = build(&mut graph, &ids);
                    graph.value(loss).data[0]
                };
                let numeric = (eval(h) - eval(-h)) / (2.0 * h);
                let a = analytic[li].data[e];
                let denom = a.abs().max(numeric.abs()).max(1e-4);
                assert!(
                    (a - numeric).abs() / denom < tol,
                    "leaf {li} entry {e}: analytic {a} vs numeric {numeric}"
                );
            }
        }
    }

    #[test]
    fn square_function_has_linear_gradient() {
        let mut graph = Graph::new();
        let x = graph.leaf(Matrix::scalar(3.0));
        let sq = graph.matmul(x, x);
        graph.backward(sq);
        assert_eq!(graph.grad(x).unwrap().data[0], 6.0);
    }

    #[test]
    fn unused_leaf_gets_no_gradient() {
        let mut graph = Graph::new();
        let x = graph.leaf(Matrix::scalar(2.0));
        let unused = graph.leaf(Matrix::scalar(5.0));
        let y = graph.matmul(x, x);
        graph.backward(y);
        assert!(graph.grad(unused).is_none());
        let _ = unused;
    }

    #[test]
    fn matmul_chain_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let leaves = vec![
            random_matrix(&mut rng, 3, 4),
            random_matrix(&mut rng, 4, 2),
            random_matrix(&mut rng, 3, 2),
        ];
        check_gradients(
            &leaves,
            |g, ids| {
                let prod = g.matmul(ids[0], ids[1]);
                let scores = g.matmul_tb(prod, ids[2]);
                let soft = g.softmax_rows(scores);
                g.sum_nll(soft, vec![Some(0), Some(1), None])
            },
            1e-6,
        );
    }

    #[test]
    fn layer_norm_and_gelu_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let leaves = vec![
            random_matrix(&mut rng, 3, 5),
            random_matrix(&mut rng, 1, 5),
            random_matrix(&mut rng, 1, 5),
        ];
        check_gradients(
            &leaves,
            |g, ids| {
                let act = g.gelu(ids[0]);
                let normed = g.layer_norm(act, ids[1], ids[2]);
                g.sum_nll(normed, vec![Some(2), Some(0), Some(4)])
            },
            1e-5,
        );
    }

    #[test]
    fn gather_concat_slice_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let leaves = vec![random_matrix(&mut rng, 4, 6), random_matrix(&mut rng, 1, 6)];
        check_gradients(
            &leaves,
            |g, ids| {
                let picked = g.gather(ids[0], &[0, 2, 2, 3]);
                let left = g.slice_cols(picked, 0, 3);
                let right = g.slice_cols(picked, 3, 3);
                let pasted = g.concat_cols(&[right, left]);
                let biased = g.add_row(pasted, ids[1]);
                let rowsum = g.slice_cols(biased, 1, 3);
                g.sum_nll(rowsum, vec![Some(0), Some(1), Some(2), Some(0)])
            },
            1e-6,
        );
    }

    #[test]
    fn add_scalar_transpose_concat_rows_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let leaves = vec![
            random_matrix(&mut rng, 2, 3),
            random_matrix(&mut rng, 1, 3),
            Matrix::scalar(0.3),
        ];
        check_gradients(
            &leaves,
            |g, ids| {
                let stacked = g.concat_rows(&[ids[1], ids[0]]);
                let t = g.transpose(stacked);
                let back = g.transpose(t);
                let shifted = g.add_scalar(back, ids[2]);
                let scaled = g.scale(shifted, 1.7);
                g.sum_nll(scaled, vec![Some(1), Some(2), Some(0)])
            },
            1e-6,
        );
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut graph = Graph::new();
        let x = graph.leaf(Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, -1.0, 0.0, 1.0]));
        let s = graph.softmax_rows(x);
        for r in 0..2 {
            let sum: f64 = graph.value(s).row(r).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn nll_of_uniform_logits_is_log_n() {
        let mut graph = Graph::new();
        let logits = graph.leaf(Matrix::zeros(2, 7));
        let nll = graph.sum_nll(logits, vec![Some(3), Some(0)]);
        let expected = 2.0 * (7.0f64).ln();
        assert!((graph.value(nll).data[0] - expected).abs() < 1e-12);
    }
}
