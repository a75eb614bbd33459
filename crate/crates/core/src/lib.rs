//! Core library for adapting a pretrained multilingual encoder to a
//! family of related languages.
//!
//! The pipeline stages map onto the top-level modules:
//!
//! - [`corpus`]: line-level cleaning filters, exact deduplication, and
//!   deterministic train/dev/test splits.
//! - [`sampling`]: alpha-weighted multinomial language sampling with
//!   per-language caps, language grouping, and a seeded sentence stream.
//! - [`subword`]: a deterministic greedy pair-merge subword trainer with
//!   encode/decode and tokenizer diagnostics.
//! - [`transplant`]: embedding re-initialization for a new vocabulary —
//!   exact-overlap rows are copied, novel rows are sparsemax-weighted
//!   combinations of the most similar overlapping tokens.
//! - [`nn`]: a small f64 autodiff graph and transformer encoder with
//!   masked-language-model pretraining, freeze scheduling, linear
//!   learning-rate decay, and best-dev checkpointing.
//! - [`tasks`]: CoNLL-U ingestion, POS tagging and biaffine dependency
//!   parsing heads, and the few-shot / full-finetune / zero-shot
//!   evaluation protocols.
//! - [`analysis`]: parameter/FLOPs cost modeling, random-intercept
//!   linear mixed-effects regression, and report emission.

pub mod analysis;
pub mod corpus;
pub mod nn;
pub mod sampling;
pub mod subword;
pub mod tasks;
pub mod transplant;
