//! Alpha-weighted multinomial language sampling.
//!
//! Unit weights follow `q_i = n_i^alpha / sum_j n_j^alpha` over per-unit
//! sizes, after optional per-language byte caps and after merging grouped
//! languages into single sampling units. [`SampleStream`] turns the
//! weights into an infinite, seeded, sentence-wise line stream.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// A set of language codes sampled as if they were a single language.
#[derive(Debug, Clone)]
pub struct LanguageGroup {
    pub name: String,
    pub members: Vec<String>,
}

/// One sampling unit (language or group) with its probability.
#[derive(Debug, Clone, PartialEq)]
pub struct LanguageWeight {
    pub unit: String,
    pub probability: f64,
}

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("alpha must lie in [0, 1], got {0}")]
    InvalidAlpha(f64),
    #[error("no sampling units supplied")]
    NoUnits,
    #[error("unit {0} has zero size")]
    ZeroSize(String),
    #[error("group {group} references unknown code {code}")]
    UnknownCode { group: String, code: String },
    #[error("code {code} appears in more than one group")]
    OverlappingGroups { code: String },
    #[error("unit {0} has no lines")]
    EmptyUnit(String),
    #[error("weights do not cover unit {0}")]
    MissingWeight(String),
}

/// Apply per-language caps: `size' = min(size, cap)` where a cap exists.
pub fn apply_cap(sizes: &[(String, u64)], caps: &BTreeMap<String, u64>) -> Vec<(String, u64)> {
    sizes
        .iter()
        .map(|(code, size)| {
            let capped = caps.get(code).map_or(*size, |cap| (*size).min(*cap));
            (code.clone(), capped)
        })
        .collect()
}

/// Merge grouped languages into single units whose size is the member sum.
/// The group takes the list position of its first member; other members
/// disappear as standalone units.
pub fn group_languages(
    sizes: &[(String, u64)],
    groups: &[LanguageGroup],
) -> Result<Vec<(String, u64)>, SamplingError> {
    let known: BTreeSet<&str> = sizes.iter().map(|(c, _)| c.as_str()).collect();
    let mut member_of: BTreeMap<&str, &str> = BTreeMap::new();
    for group in groups {
        for code in &group.members {
            if !known.contains(code.as_str()) {
                return Err(SamplingError::UnknownCode {
                    group: group.name.clone(),
                    code: code.clone(),
                });
            }
            if member_of.insert(code.as_str(), group.name.as_str()).is_some() {
                return Err(SamplingError::OverlappingGroups { code: code.clone() });
            }
        }
    }

    let mut group_size: BTreeMap<&str, u64> = BTreeMap::new();
    for (code, size) in sizes {
        if let Some(group) = member_of.get(code.as_str()) {
            *group_size.entry(group).or_insert(0) += size;
        }
    }

    let mut out = Vec::new();
    let mut emitted: BTreeSet<&str> = BTreeSet::new();
    for (code, size) in sizes {
        match member_of.get(code.as_str()) {
            None => out.push((code.clone(), *size)),
            Some(group) => {
                if emitted.insert(group) {
                    out.push((group.to_string(), group_size[group]));
                }
            }
        }
    }
    Ok(out)
}

/// `q_i = n_i^alpha / sum_j n_j^alpha`. `alpha = 1` is proportional
/// sampling, `alpha = 0` uniform.
pub fn compute_sampling_weights(
    unit_sizes: &[(String, u64)],
    alpha: f64,
) -> Result<Vec<LanguageWeight>, SamplingError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(SamplingError::InvalidAlpha(alpha));
    }
    if unit_sizes.is_empty() {
        return Err(SamplingError::NoUnits);
    }
    for (unit, size) in unit_sizes {
        if *size == 0 {
            return Err(SamplingError::ZeroSize(unit.clone()));
        }
    }
    let powered: Vec<f64> = unit_sizes.iter().map(|(_, n)| (*n as f64).powf(alpha)).collect();
    let total: f64 = powered.iter().sum();
    Ok(unit_sizes
        .iter()
        .zip(powered)
        .map(|((unit, _), p)| LanguageWeight { unit: unit.clone(), probability: p / total })
        .collect())
}

/// Divide a shared step budget across units proportionally to their
/// weights: each unit gets `floor(q_i * total)` and the largest-weight
/// unit absorbs the remainder.
pub fn allocate_budget(total_steps: u64, weights: &[LanguageWeight]) -> Vec<(String, u64)> {
    let mut out: Vec<(String, u64)> = weights
        .iter()
        .map(|w| (w.unit.clone(), (w.probability * total_steps as f64).floor() as u64))
        .collect();
    let assigned: u64 = out.iter().map(|(_, s)| s).sum();
    if let Some(largest) = weights
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| a.probability.total_cmp(&b.probability))
        .map(|(i, _)| i)
    {
        out[largest].1 += total_steps - assigned;
    }
    out
}

/// Lines owned by one sampling unit. For a group this is the
/// concatenation of member lines, so a uniform draw over the deck picks
/// members proportionally to their size.
#[derive(Debug, Clone)]
pub struct SampleUnit {
    pub unit: String,
    pub lines: Vec<String>,
}

/// Infinite seeded line stream: each draw picks a unit from the weights,
/// then the next line of that unit's shuffled deck. An exhausted deck is
/// reshuffled and cycled, so small corpora repeat per-epoch rather than
/// running dry. The whole stream is a pure function of the seed.
pub struct SampleStream {
    units: Vec<SampleUnit>,
    cumulative: Vec<f64>,
    decks: Vec<Vec<usize>>,
    positions: Vec<usize>,
    rng: ChaCha8Rng,
}

impl SampleStream {
    pub fn new(
        units: Vec<SampleUnit>,
        weights: &[LanguageWeight],
        seed: u64,
    ) -> Result<Self, SamplingError> {
        if units.is_empty() {
            return Err(SamplingError::NoUnits);
        }
        let by_unit: BTreeMap<&str, f64> =
            weights.iter().map(|w| (w.unit.as_str(), w.probability)).collect();
        let mut cumulative = Vec::with_capacity(units.len());
        let mut acc = 0.0;
        for unit in &units {
            if unit.lines.is_empty() {
                return Err(SamplingError::EmptyUnit(unit.unit.clone()));
            }
            let q = by_unit
                .get(unit.unit.as_str())
                .ok_or_else(|| SamplingError::MissingWeight(unit.unit.clone()))?;
            acc += q;
            cumulative.push(acc);
        }
        let decks = units.iter().map(|u| (0..u.lines.len()).collect()).collect();
        let positions = vec![usize::MAX; units.len()]; // force initial shuffle
        Ok(Self { units, cumulative, decks, positions, rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    fn draw_unit(&mut self) -> usize {
        let total = *self.cumulative.last().unwrap();
        let u: f64 = self.rng.gen::<f64>() * total;
        match self.cumulative.iter().position(|&c| u < c) {
            Some(i) => i,
            None => self.cumulative.len() - 1,
        }
    }
}

impl Iterator for SampleStream {
    /// `(unit index, line)` pairs; the stream never ends.
    type Item = (usize, String);

    fn next(&mut self) -> Option<Self::Item> {
        let unit = self.draw_unit();
        if self.positions[unit] >= self.decks[unit].len() {
            self.decks[unit].shuffle(&mut self.rng);
            self.positions[unit] = 0;
        }
        let line_idx = self.decks[unit][self.positions[unit]];
        self.positions[unit] += 1;
        Some((unit, self.units[unit].lines[line_idx].clone()))
    }
}

/// Composition table for plotting: unit, raw size, capped size, and the
/// weight at each requested alpha.
pub fn weight_table(
    raw_sizes: &[(String, u64)],
    capped_sizes: &[(String, u64)],
    alphas: &[f64],
) -> Result<String, SamplingError> {
    let mut header = String::from("unit\traw_size\tcapped_size");
    for alpha in alphas {
        header.push_str(&format!("\tq_alpha_{alpha}"));
    }
    header.push('\n');

    let mut columns: Vec<Vec<f64>> = Vec::new();
    for alpha in alphas {
        let weights = compute_sampling_weights(capped_sizes, *alpha)?;
        columns.push(weights.into_iter().map(|w| w.probability).collect());
    }

    let raw: BTreeMap<&str, u64> = raw_sizes.iter().map(|(c, s)| (c.as_str(), *s)).collect();
    let mut out = header;
    for (i, (unit, capped)) in capped_sizes.iter().enumerate() {
        let raw_size = raw.get(unit.as_str()).copied().unwrap_or(*capped);
        out.push_str(&format!("{unit}\t{raw_size}\t{capped}"));
        for col in &columns {
            out.push_str(&format!("\t{:.6}", col[i]));
        }
        out.push('\n');
    }
    Ok(out)
}
