use std::collections::HashSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Registry;
use crate::error::{Result, StanceError};

/// Provenance attached to a report.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportMetadata {
    pub config_hash: Option<String>,
    pub strategy: Option<String>,
    pub held_out: Option<String>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetScore {
    pub dataset: String,
    pub macro_f1: f64,
}

/// Per-dataset macro-F1 plus their unweighted mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scores: Vec<DatasetScore>,
    pub average: f64,
    pub metadata: ReportMetadata,
}

/// Hex SHA-256 of the JSON encoding of `value`.
pub fn config_hash<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Sorts scores into the builtin registry order (unknown datasets last,
/// alphabetically) and averages them.
pub fn aggregate_report(scores: &[(String, f64)], metadata: ReportMetadata) -> Result<EvalReport> {
    aggregate_report_with(scores, metadata, &Registry::builtin())
}

pub fn aggregate_report_with(scores: &[(String, f64)], metadata: ReportMetadata, registry: &Registry) -> Result<EvalReport> {
    if scores.is_empty() {
        return Err(StanceError::invalid("cannot aggregate an empty score list"));
    }
    let mut seen = HashSet::new();
    for (name, score) in scores {
        if !seen.insert(name.as_str()) {
            return Err(StanceError::invalid(format!("dataset `{name}` scored twice")));
        }
        if !score.is_finite() || !(0.0..=100.0).contains(score) {
            return Err(StanceError::invalid(format!("score {score} for `{name}` is outside [0, 100]")));
        }
    }
    let mut sorted: Vec<DatasetScore> = scores
        .iter()
        .map(|(dataset, macro_f1)| DatasetScore {
            dataset: dataset.clone(),
            macro_f1: *macro_f1,
        })
        .collect();
    sorted.sort_by(|a, b| {
        let rank = |n: &str| registry.position(n).unwrap_or(usize::MAX);
        rank(&a.dataset).cmp(&rank(&b.dataset)).then_with(|| a.dataset.cmp(&b.dataset))
    });
    let average = sorted.iter().map(|s| s.macro_f1).sum::<f64>() / sorted.len() as f64;
    Ok(EvalReport {
        scores: sorted,
        average,
        metadata,
    })
}

impl EvalReport {
    pub fn get(&self, dataset: &str) -> Option<f64> {
        self.scores.iter().find(|s| s.dataset == dataset).map(|s| s.macro_f1)
    }

    /// Two-column plain-text table ending in the average row.
    pub fn render_table(&self) -> String {
        let width = self.scores.iter().map(|s| s.dataset.len()).max().unwrap_or(0).max("average".len());
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  macro-F1", "dataset");
        let _ = writeln!(out, "{}", "-".repeat(width + 10));
        for s in &self.scores {
            let _ = writeln!(out, "{:<width$}  {:>8.2}", s.dataset, s.macro_f1);
        }
        let _ = writeln!(out, "{}", "-".repeat(width + 10));
        let _ = writeln!(out, "{:<width$}  {:>8.2}", "average", self.average);
        out
    }
}
