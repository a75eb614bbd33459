//! Differentiable-computation core and masked-LM pretraining.
//!
//! [`graph`] holds the autodiff tape, [`encoder`] the transformer.
//! This module adds the training machinery: the 80/10/10 masking
//! corruption, Adam with global-norm clipping and a linear decay
//! schedule, a freeze window during which only the token embeddings and
//! tied head bias move, periodic dev evaluation, and selection of the
//! checkpoint with the lowest dev loss.

pub mod encoder;
pub mod graph;

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use encoder::{Encoder, EncoderConfig, ParamSet};
pub use graph::{Graph, Matrix, NodeId};

use crate::subword::{BEGIN_ID, END_ID, MASK_ID, N_SPECIALS};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("invalid encoder config: {0}")]
    InvalidConfig(String),
    #[error("invalid pretrain config: {0}")]
    InvalidPretrainConfig(String),
    #[error("dev set is empty")]
    EmptyDevSet,
    #[error("training stream ended; pretraining requires an infinite stream")]
    StreamEnded,
    #[error("cannot read {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint file malformed: {0}")]
    MalformedCheckpoint(String),
}

/// Pretraining hyperparameters. The defaults mirror the full-scale
/// regime; tests and desk runs override the sizes.
#[derive(Debug, Clone)]
pub struct PretrainConfig {
    pub total_steps: u64,
    /// Steps during which transformer blocks and positional rows stay
    /// frozen; only the token table and head bias move.
    pub freeze_steps: u64,
    pub mask_prob: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_grad_norm: f64,
    /// Dev evaluation cadence; `None` picks `max(total_steps / 50, 100)`.
    pub dev_eval_interval: Option<u64>,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            total_steps: 100_000,
            freeze_steps: 10_000,
            mask_prob: 0.15,
            learning_rate: 1e-5,
            batch_size: 200,
            max_grad_norm: 1.0,
            dev_eval_interval: None,
            seed: 0,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if self.total_steps == 0 {
            return Err(NnError::InvalidPretrainConfig("total_steps must be positive".into()));
        }
        if self.freeze_steps > self.total_steps {
            return Err(NnError::InvalidPretrainConfig(
                "freeze_steps must not exceed total_steps".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.mask_prob) {
            return Err(NnError::InvalidPretrainConfig("mask_prob must be in [0,1]".into()));
        }
        if self.batch_size == 0 {
            return Err(NnError::InvalidPretrainConfig("batch_size must be positive".into()));
        }
        Ok(())
    }

    /// Linear decay to zero at `total_steps`.
    pub fn learning_rate_at(&self, step: u64) -> f64 {
        self.learning_rate * (1.0 - step as f64 / self.total_steps as f64)
    }

    pub fn effective_eval_interval(&self) -> u64 {
        self.dev_eval_interval.unwrap_or_else(|| (self.total_steps / 50).max(100)).max(1)
    }
}

/// Corrupt a batch for masked-LM training.
///
/// Every non-special position is selected independently with
/// `mask_prob`; a selected position becomes the mask token with
/// probability 0.8, a uniformly random content token with 0.1, and stays
/// itself with 0.1. Labels hold the original ids at selected positions
/// only.
pub fn mlm_mask(
    batch: &[Vec<u32>],
    mask_prob: f64,
    seed: u64,
    vocab_size: u32,
) -> (Vec<Vec<u32>>, Vec<Vec<Option<u32>>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corrupted = Vec::with_capacity(batch.len());
    let mut labels = Vec::with_capacity(batch.len());
    let content_span = vocab_size.saturating_sub(N_SPECIALS).max(1);
    for seq in batch {
        let mut out = seq.clone();
        let mut lab = vec![None; seq.len()];
        for (i, &id) in seq.iter().enumerate() {
            if id < N_SPECIALS {
                continue;
            }
            if rng.gen::<f64>() >= mask_prob {
                continue;
            }
            lab[i] = Some(id);
            let roll: f64 = rng.gen();
            if roll < 0.8 {
                out[i] = MASK_ID;
            } else if roll < 0.9 {
                out[i] = N_SPECIALS + rng.gen_range(0..content_span);
            }
        }
        corrupted.push(out);
        labels.push(lab);
    }
    (corrupted, labels)
}

/// Adam with per-tensor moments and step counters. A tensor's counter
/// only advances when it is updated, so parameters that unfreeze late
/// still get proper bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
    pub t: Vec<u64>,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl AdamState {
    pub fn for_params(params: &ParamSet) -> Self {
        let shapes: Vec<(usize, usize)> =
            params.iter().map(|(_, m)| (m.rows, m.cols)).collect();
        Self {
            m: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
            v: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
            t: vec![0; shapes.len()],
        }
    }

    pub fn update(&mut self, index: usize, param: &mut Matrix, grad: &Matrix, lr: f64) {
        self.t[index] += 1;
        let t = self.t[index] as f64;
        let m = &mut self.m[index];
        let v = &mut self.v[index];
        for ((p, g), (mm, vv)) in param
            .data
            .iter_mut()
            .zip(&grad.data)
            .zip(m.data.iter_mut().zip(v.data.iter_mut()))
        {
            *mm = ADAM_BETA1 * *mm + (1.0 - ADAM_BETA1) * g;
            *vv = ADAM_BETA2 * *vv + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = *mm / (1.0 - ADAM_BETA1.powf(t));
            let v_hat = *vv / (1.0 - ADAM_BETA2.powf(t));
            *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
}

/// Scale gradients in place so their global norm is at most `max_norm`.
/// Returns the post-clip norm.
pub fn clip_global_norm(grads: &mut [(usize, Matrix)], max_norm: f64) -> f64 {
    let total: f64 = grads.iter().map(|(_, g)| g.frobenius_sq()).sum();
    let norm = total.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for (_, g) in grads.iter_mut() {
            g.scale_assign(scale);
        }
        max_norm
    } else {
        norm
    }
}

/// Snapshot of the model and optimizer at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderCheckpoint {
    pub config: EncoderConfig,
    pub step: u64,
    pub dev_loss: f64,
    pub params: ParamSet,
    pub adam: AdamState,
}

impl EncoderCheckpoint {
    pub fn encoder(&self) -> Encoder {
        Encoder { config: self.config.clone(), params: self.params.clone() }
    }
}

/// One dev evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DevPoint {
    pub step: u64,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct DivergenceReport {
    pub step: u64,
    pub message: String,
}

/// What pretraining hands back: the best-dev checkpoint, the full dev
/// trajectory, and a divergence report if training aborted early.
#[derive(Debug, Clone)]
pub struct PretrainOutput {
    pub best: EncoderCheckpoint,
    pub trajectory: Vec<DevPoint>,
    pub divergence: Option<DivergenceReport>,
}

impl PretrainOutput {
    /// Loss trajectory as delimited text.
    pub fn trajectory_tsv(&self) -> String {
        let mut out = String::from("step\tdev_loss\n");
        for p in &self.trajectory {
            out.push_str(&format!("{}\t{}\n", p.step, p.loss));
        }
        out
    }
}

fn wrap_sequence(seq: &[u32], max_positions: usize) -> Vec<u32> {
    let content = &seq[..seq.len().min(max_positions - 2)];
    let mut out = Vec::with_capacity(content.len() + 2);
    out.push(BEGIN_ID);
    out.extend_from_slice(content);
    out.push(END_ID);
    out
}

/// Mean masked-LM loss over a batch of wrapped+corrupted sequences.
/// Returns `(loss node, masked position count)`.
fn batch_loss(
    encoder: &Encoder,
    graph: &mut Graph,
    bound: &encoder::Bound,
    corrupted: &[Vec<u32>],
    labels: &[Vec<Option<u32>>],
) -> (Option<NodeId>, usize) {
    let mut pieces = Vec::new();
    let mut count = 0usize;
    for (seq, lab) in corrupted.iter().zip(labels) {
        let n_targets = lab.iter().flatten().count();
        if n_targets == 0 {
            continue;
        }
        count += n_targets;
        let logits = encoder.mlm_logits(graph, bound, seq);
        let targets: Vec<Option<usize>> =
            lab.iter().map(|t| t.map(|id| id as usize)).collect();
        pieces.push(graph.sum_nll(logits, targets));
    }
    if pieces.is_empty() {
        return (None, 0);
    }
    let mut total = pieces[0];
    for &p in &pieces[1..] {
        total = graph.add(total, p);
    }
    (Some(graph.scale(total, 1.0 / count as f64)), count)
}

/// Dev MLM loss under a fixed corruption seed, so successive evaluations
/// are comparable.
pub fn dev_loss(encoder: &Encoder, dev: &[Vec<u32>], config: &PretrainConfig) -> f64 {
    let wrapped: Vec<Vec<u32>> = dev
        .iter()
        .map(|s| wrap_sequence(s, encoder.config.max_positions))
        .collect();
    let (corrupted, labels) = mlm_mask(
        &wrapped,
        config.mask_prob,
        config.seed ^ 0x5eed_dead_beef,
        encoder.config.vocab_size as u32,
    );
    let mut total = 0.0;
    let mut count = 0usize;
    let chunk_size = config.batch_size.max(1);
    for (chunk_idx, chunk) in corrupted.chunks(chunk_size).enumerate() {
        let offset = chunk_idx * chunk_size;
        let labs = &labels[offset..offset + chunk.len()];
        let mut graph = Graph::new();
        let bound = encoder.params.bind(&mut graph);
        let (loss, n) = batch_loss(encoder, &mut graph, &bound, chunk, labs);
        if let Some(loss) = loss {
            total += graph.value(loss).data[0] * n as f64;
            count += n;
        }
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

/// Run masked-LM pretraining over an infinite stream of content-token
/// sequences (no begin/end; they are added here).
///
/// For steps below `freeze_steps` only the token embedding table and
/// tied head bias update. The learning rate decays linearly to zero at
/// `total_steps` and gradients are clipped to `max_grad_norm` global
/// norm per step. Dev loss is recorded at step 0, every evaluation
/// interval, and at the end; the returned checkpoint is the one with
/// the minimum recorded dev loss. A non-finite training loss aborts
/// with the last finite checkpoint and a divergence report.
pub fn pretrain(
    encoder: &mut Encoder,
    stream: &mut impl Iterator<Item = Vec<u32>>,
    config: &PretrainConfig,
    dev: &[Vec<u32>],
) -> Result<PretrainOutput, NnError> {
    config.validate()?;
    if dev.is_empty() {
        return Err(NnError::EmptyDevSet);
    }

    let mut adam = AdamState::for_params(&encoder.params);
    let trainable_during_freeze: Vec<usize> = encoder::EMBEDDING_PARAMS
        .iter()
        .filter_map(|name| encoder.params.index_of(name))
        .collect();
    let all_params: Vec<usize> = (0..encoder.params.len()).collect();
    let interval = config.effective_eval_interval();

    let mut trajectory = Vec::new();
    let mut best: Option<EncoderCheckpoint> = None;
    let record_eval = |encoder: &Encoder,
                           adam: &AdamState,
                           step: u64,
                           trajectory: &mut Vec<DevPoint>,
                           best: &mut Option<EncoderCheckpoint>| {
        let loss = dev_loss(encoder, dev, config);
        trajectory.push(DevPoint { step, loss });
        let improved = best.as_ref().map_or(true, |b| loss < b.dev_loss);
        if improved && loss.is_finite() && encoder.params.all_finite() {
            *best = Some(EncoderCheckpoint {
                config: encoder.config.clone(),
                step,
                dev_loss: loss,
                params: encoder.params.clone(),
                adam: adam.clone(),
            });
        }
    };

    record_eval(encoder, &adam, 0, &mut trajectory, &mut best);

    for step in 0..config.total_steps {
        let mut batch = Vec::with_capacity(config.batch_size);
        for _ in 0..config.batch_size {
            let seq = stream.next().ok_or(NnError::StreamEnded)?;
            batch.push(wrap_sequence(&seq, encoder.config.max_positions));
        }
        let (corrupted, labels) = mlm_mask(
            &batch,
            config.mask_prob,
            config.seed.wrapping_add(step).wrapping_mul(0x9e3779b97f4a7c15),
            encoder.config.vocab_size as u32,
        );

        let mut graph = Graph::new();
        let bound = encoder.params.bind(&mut graph);
        let (loss, _count) = batch_loss(encoder, &mut graph, &bound, &corrupted, &labels);
        let Some(loss) = loss else {
            continue; // nothing was masked this step
        };
        let loss_value = graph.value(loss).data[0];
        if !loss_value.is_finite() {
            let report = DivergenceReport {
                step,
                message: format!("training loss became {loss_value} at step {step}"),
            };
            let best = best.expect("a step-0 evaluation always exists");
            return Ok(PretrainOutput { best, trajectory, divergence: Some(report) });
        }
        graph.backward(loss);

        let trainable: &[usize] = if step < config.freeze_steps {
            &trainable_during_freeze
        } else {
            &all_params
        };
        let mut grads: Vec<(usize, Matrix)> = trainable
            .iter()
            .filter_map(|&i| graph.grad(bound.nodes[i]).cloned().map(|g| (i, g)))
            .collect();
        clip_global_norm(&mut grads, config.max_grad_norm);
        let lr = config.learning_rate_at(step);
        for (index, grad) in &grads {
            adam.update(*index, encoder.params.at_mut(*index), grad, lr);
        }

        let completed = step + 1;
        if completed % interval == 0 || completed == config.total_steps {
            record_eval(encoder, &adam, completed, &mut trajectory, &mut best);
        }
    }

    let best = best.expect("a step-0 evaluation always exists");
    Ok(PretrainOutput { best, trajectory, divergence: None })
}

// ---------------------------------------------------------------------
// Checkpoint serialization.
//
// Layout (all integers little-endian):
//   magic   8 bytes  "AENCCKP1"
//   config  6 x u64  layers, hidden, ffn, heads, max_positions, vocab
//   step    u64
//   dev_loss f64
//   tensors u32 count, then per tensor:
//     name   u32 length + UTF-8 bytes
//     shape  u64 rows, u64 cols
//     data   rows*cols f32 values
//   adam moments: per tensor (same order) m data, v data (f32), t u64
// ---------------------------------------------------------------------

const CHECKPOINT_MAGIC: &[u8; 8] = b"AENCCKP1";

pub(crate) fn write_tensor_data(out: &mut Vec<u8>, m: &Matrix) {
    for &v in &m.data {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

pub(crate) struct Reader<'a> {
    pub(crate) bytes: &'a [u8],
    pub(crate) pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        if self.pos + n > self.bytes.len() {
            return Err(NnError::MalformedCheckpoint("unexpected end of file".into()));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    pub(crate) fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64, NnError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64, NnError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn tensor(&mut self, rows: usize, cols: usize) -> Result<Matrix, NnError> {
        let raw = self.take(rows * cols * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        Ok(Matrix::from_vec(rows, cols, data))
    }
}

impl EncoderCheckpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        for v in [
            self.config.layers,
            self.config.hidden,
            self.config.ffn,
            self.config.heads,
            self.config.max_positions,
            self.config.vocab_size,
        ] {
            out.extend_from_slice(&(v as u64).to_le_bytes());
        }
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&self.dev_loss.to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, m) in self.params.iter() {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(m.rows as u64).to_le_bytes());
            out.extend_from_slice(&(m.cols as u64).to_le_bytes());
            write_tensor_data(&mut out, m);
        }
        for i in 0..self.params.len() {
            write_tensor_data(&mut out, &self.adam.m[i]);
            write_tensor_data(&mut out, &self.adam.v[i]);
            out.extend_from_slice(&self.adam.t[i].to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NnError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(NnError::MalformedCheckpoint("bad magic".into()));
        }
        let config = EncoderConfig {
            layers: r.u64()? as usize,
            hidden: r.u64()? as usize,
            ffn: r.u64()? as usize,
            heads: r.u64()? as usize,
            max_positions: r.u64()? as usize,
            vocab_size: r.u64()? as usize,
        };
        let step = r.u64()?;
        let dev_loss = r.f64()?;
        let n_tensors = r.u32()? as usize;
        let mut params = ParamSet::new();
        let mut shapes = Vec::with_capacity(n_tensors);
        for _ in 0..n_tensors {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| NnError::MalformedCheckpoint("name is not UTF-8".into()))?;
            let rows = r.u64()? as usize;
            let cols = r.u64()? as usize;
            shapes.push((rows, cols));
            params.insert(name, r.tensor(rows, cols)?);
        }
        let mut adam = AdamState { m: Vec::new(), v: Vec::new(), t: Vec::new() };
        for &(rows, cols) in &shapes {
            adam.m.push(r.tensor(rows, cols)?);
            adam.v.push(r.tensor(rows, cols)?);
            adam.t.push(r.u64()?);
        }
        Ok(Self { config, step, dev_loss, params, adam })
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        let mut file = std::fs::File::create(path).map_err(|source| NnError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        file.write_all(&self.to_bytes()).map_err(|source| NnError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|source| NnError::Io { path: path.to_path_buf(), source })?;
        Self::from_bytes(&bytes)
    }
}

/// Mean MLM loss and per-parameter gradients for one corrupted batch;
/// the entry point the gradient checks drive.
pub fn mlm_loss_and_gradients(
    encoder: &Encoder,
    corrupted: &[Vec<u32>],
    labels: &[Vec<Option<u32>>],
) -> (f64, Vec<(String, Matrix)>) {
    let mut graph = Graph::new();
    let bound = encoder.params.bind(&mut graph);
    let (loss, _) = batch_loss(encoder, &mut graph, &bound, corrupted, labels);
    let loss = loss.expect("batch must contain at least one masked position");
    let value = graph.value(loss).data[0];
    graph.backward(loss);
    let grads = encoder
        .params
        .iter()
        .enumerate()
        .map(|(i, (name, m))| {
            let g = graph
                .grad(bound.nodes[i])
                .cloned()
                .unwrap_or_else(|| Matrix::zeros(m.rows, m.cols));
            (name.to_string(), g)
        })
        .collect();
    (value, grads)
}
