use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use super::{Dataset, Split, SplitStats};
use crate::error::{Result, StanceError};
use crate::text::{is_stop_word, TextTokenizer};

pub fn split_stats(dataset: &Dataset) -> SplitStats {
    let count = |s| dataset.split(s).count();
    SplitStats::new(count(Split::Train), count(Split::Dev), count(Split::Test))
}

/// Vocabulary size and per-example token-length summary.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct VocabStats {
    pub unique_words: usize,
    pub mean_tokens: f64,
    pub p25_tokens: f64,
    pub median_tokens: f64,
    pub max_tokens: f64,
}

/// Unique case-preserved types over target and context of every example,
/// and length statistics of the tokenised (target, context) pair.
pub fn vocab_stats(dataset: &Dataset, tokenizer: &dyn TextTokenizer) -> VocabStats {
    let mut types: HashSet<String> = HashSet::new();
    let mut lengths = Vec::with_capacity(dataset.examples.len());
    for e in &dataset.examples {
        let target = tokenizer.tokens(&e.target);
        let context = tokenizer.tokens(&e.context);
        lengths.push((target.len() + context.len()) as f64);
        types.extend(target);
        types.extend(context);
    }
    if lengths.is_empty() {
        return VocabStats::default();
    }
    lengths.sort_by(f64::total_cmp);
    let mean = lengths.iter().sum::<f64>() / lengths.len() as f64;
    VocabStats {
        unique_words: types.len(),
        mean_tokens: mean,
        p25_tokens: percentile(&lengths, 0.25),
        median_tokens: percentile(&lengths, 0.5),
        max_tokens: *lengths.last().unwrap(),
    }
}

/// Linear-interpolation percentile of sorted data.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Word-type overlap between datasets: `values[i][j]` is the share of
/// dataset i's types that also occur in dataset j.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapMatrix {
    pub datasets: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl OverlapMatrix {
    pub fn get(&self, row: &str, col: &str) -> Option<f64> {
        let i = self.datasets.iter().position(|d| d == row)?;
        let j = self.datasets.iter().position(|d| d == col)?;
        Some(self.values[i][j])
    }
}

fn content_types(dataset: &Dataset, tokenizer: &dyn TextTokenizer) -> BTreeSet<String> {
    dataset
        .examples
        .iter()
        .flat_map(|e| tokenizer.tokens(&e.target).into_iter().chain(tokenizer.tokens(&e.context)))
        .filter(|t| !is_stop_word(t))
        .collect()
}

pub fn overlap_matrix(datasets: &[&Dataset], tokenizer: &dyn TextTokenizer) -> Result<OverlapMatrix> {
    if datasets.len() < 2 {
        return Err(StanceError::invalid("overlap matrix needs at least two datasets"));
    }
    let types: Vec<BTreeSet<String>> = datasets.iter().map(|d| content_types(d, tokenizer)).collect();
    if let Some(i) = types.iter().position(BTreeSet::is_empty) {
        return Err(StanceError::invalid(format!(
            "dataset {} has an empty vocabulary; its overlap row is undefined",
            datasets[i].name()
        )));
    }
    let values = types
        .iter()
        .map(|row| {
            types
                .iter()
                .map(|col| row.intersection(col).count() as f64 / row.len() as f64)
                .collect()
        })
        .collect();
    Ok(OverlapMatrix {
        datasets: datasets.iter().map(|d| d.name().to_string()).collect(),
        values,
    })
}

/// Percentage of dev/test examples whose full pair, target or context also
/// occurs in the training split.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitOverlap {
    pub dev_full: f64,
    pub dev_target: f64,
    pub dev_context: f64,
    pub test_full: f64,
    pub test_target: f64,
    pub test_context: f64,
}

pub fn split_overlap(dataset: &Dataset) -> SplitOverlap {
    let train: Vec<_> = dataset.split(Split::Train).collect();
    let pairs: HashSet<(&str, &str)> = train.iter().map(|e| (e.target.as_str(), e.context.as_str())).collect();
    let targets: HashSet<&str> = train.iter().map(|e| e.target.as_str()).filter(|t| !t.is_empty()).collect();
    let contexts: HashSet<&str> = train.iter().map(|e| e.context.as_str()).collect();
    let pct = |split: Split| {
        let rows: Vec<_> = dataset.split(split).collect();
        if rows.is_empty() {
            return (0.0, 0.0, 0.0);
        }
        let n = rows.len() as f64;
        let full = rows.iter().filter(|e| pairs.contains(&(e.target.as_str(), e.context.as_str()))).count();
        let target = rows.iter().filter(|e| targets.contains(e.target.as_str())).count();
        let context = rows.iter().filter(|e| contexts.contains(e.context.as_str())).count();
        (100.0 * full as f64 / n, 100.0 * target as f64 / n, 100.0 * context as f64 / n)
    };
    let (dev_full, dev_target, dev_context) = pct(Split::Dev);
    let (test_full, test_target, test_context) = pct(Split::Test);
    SplitOverlap {
        dev_full,
        dev_target,
        dev_context,
        test_full,
        test_target,
        test_context,
    }
}
