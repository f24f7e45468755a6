use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::macro_f1;
use crate::corpus::{Dataset, Split};
use crate::error::{Result, StanceError};
use crate::text::is_stop_word;

/// Which split the majority class is read from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MajoritySource {
    #[default]
    Test,
    Train,
}

/// Most frequent label; ties go to the label listed first in `inventory`.
pub fn majority_label<S: AsRef<str>, L: AsRef<str>>(labels: &[S], inventory: &[L]) -> Result<String> {
    if labels.is_empty() {
        return Err(StanceError::invalid("majority of an empty label list"));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for l in labels {
        *counts.entry(l.as_ref()).or_default() += 1;
    }
    let rank = |l: &str| inventory.iter().position(|i| i.as_ref() == l).unwrap_or(usize::MAX);
    let (label, _) = counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then_with(|| rank(b.0).cmp(&rank(a.0))).then_with(|| b.0.cmp(a.0)))
        .unwrap();
    Ok(label.to_string())
}

/// `size` copies of the majority label of `labels`.
pub fn majority_baseline<S: AsRef<str>, L: AsRef<str>>(labels: &[S], inventory: &[L], size: usize) -> Result<Vec<String>> {
    Ok(vec![majority_label(labels, inventory)?; size])
}

/// Mean macro-F1 of uniformly random predictions over `trials` draws.
pub fn random_baseline<G: AsRef<str>, L: AsRef<str>>(golds: &[G], inventory: &[L], seed: u64, trials: usize) -> Result<f64> {
    if trials == 0 {
        return Err(StanceError::invalid("random baseline needs at least one trial"));
    }
    if inventory.is_empty() {
        return Err(StanceError::invalid("random baseline needs a non-empty inventory"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..trials {
        let preds: Vec<&str> = golds.iter().map(|_| inventory[rng.random_range(0..inventory.len())].as_ref()).collect();
        total += macro_f1(&preds, golds, inventory)?;
    }
    Ok(total / trials as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TfidfConfig {
    pub max_features: usize,
    /// Inverse regularisation strength of the logistic classifiers.
    pub c: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for TfidfConfig {
    fn default() -> Self {
        Self {
            max_features: 15_000,
            c: 1.0,
            max_iterations: 100,
            tolerance: 1e-4,
        }
    }
}

pub type SparseVector = Vec<(usize, f64)>;

/// Unigram TF-IDF with smoothed idf and l2-normalised rows.
#[derive(Debug, Clone)]
pub struct TfidfVectorizer {
    vocabulary: HashMap<String, usize>,
    idf: Vec<f64>,
    token_pattern: Regex,
}

fn word_pattern() -> Regex {
    Regex::new(r"\b\w\w+\b").expect("valid pattern")
}

impl TfidfVectorizer {
    /// Learns the vocabulary (the `max_features` most frequent terms, ties
    /// alphabetical) and document frequencies from `documents`.
    pub fn fit<S: AsRef<str>>(documents: &[S], max_features: usize) -> Result<Self> {
        if documents.is_empty() {
            return Err(StanceError::invalid("cannot fit TF-IDF on zero documents"));
        }
        let token_pattern = word_pattern();
        let mut term_counts: HashMap<String, usize> = HashMap::new();
        let mut doc_freq: HashMap<String, usize> = HashMap::new();
        for doc in documents {
            let terms = analyze(&token_pattern, doc.as_ref());
            let mut seen: Vec<&String> = terms.iter().collect();
            seen.sort();
            seen.dedup();
            for t in seen {
                *doc_freq.entry(t.clone()).or_default() += 1;
            }
            for t in terms {
                *term_counts.entry(t).or_default() += 1;
            }
        }
        let mut terms: Vec<(String, usize)> = term_counts.into_iter().collect();
        terms.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        terms.truncate(max_features);
        let mut kept: Vec<String> = terms.into_iter().map(|(t, _)| t).collect();
        kept.sort();
        let n = documents.len() as f64;
        let idf = kept.iter().map(|t| ((1.0 + n) / (1.0 + doc_freq[t] as f64)).ln() + 1.0).collect();
        let vocabulary = kept.into_iter().enumerate().map(|(i, t)| (t, i)).collect();
        Ok(Self {
            vocabulary,
            idf,
            token_pattern,
        })
    }

    pub fn len(&self) -> usize {
        self.idf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.idf.is_empty()
    }

    pub fn transform(&self, document: &str) -> SparseVector {
        let mut counts: HashMap<usize, f64> = HashMap::new();
        for t in analyze(&self.token_pattern, document) {
            if let Some(&i) = self.vocabulary.get(&t) {
                *counts.entry(i).or_default() += 1.0;
            }
        }
        let mut row: SparseVector = counts.into_iter().map(|(i, c)| (i, c * self.idf[i])).collect();
        row.sort_by_key(|(i, _)| *i);
        let norm = row.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|(_, v)| *v /= norm);
        }
        row
    }
}

fn analyze(pattern: &Regex, text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    pattern
        .find_iter(&lower)
        .map(|m| m.as_str().to_string())
        .filter(|t| !is_stop_word(t))
        .collect()
}

/// L2-regularised binary logistic regression on sparse rows, fitted with
/// L-BFGS. The intercept is not penalised.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryLogistic {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl BinaryLogistic {
    pub fn fit(rows: &[SparseVector], targets: &[bool], dim: usize, config: &TfidfConfig) -> Self {
        let objective = |x: &[f64]| -> (f64, Vec<f64>) {
            let (w, b) = x.split_at(dim);
            let mut loss = 0.5 * w.iter().map(|v| v * v).sum::<f64>();
            let mut grad: Vec<f64> = w.to_vec();
            grad.push(0.0);
            for (row, &t) in rows.iter().zip(targets) {
                let y = if t { 1.0 } else { -1.0 };
                let z = row.iter().map(|(i, v)| w[*i] * v).sum::<f64>() + b[0];
                let m = y * z;
                // log(1 + exp(-m)), stable in both directions
                loss += config.c * if m > 0.0 { (-m).exp().ln_1p() } else { -m + m.exp().ln_1p() };
                let s = -y / (1.0 + m.exp());
                for (i, v) in row {
                    grad[*i] += config.c * s * v;
                }
                grad[dim] += config.c * s;
            }
            (loss, grad)
        };
        let x = lbfgs(objective, vec![0.0; dim + 1], config.max_iterations, config.tolerance);
        Self {
            intercept: x[dim],
            weights: x[..dim].to_vec(),
        }
    }

    pub fn decision(&self, row: &SparseVector) -> f64 {
        row.iter().map(|(i, v)| self.weights[*i] * v).sum::<f64>() + self.intercept
    }
}

/// Limited-memory BFGS with a backtracking Armijo line search.
fn lbfgs(f: impl Fn(&[f64]) -> (f64, Vec<f64>), mut x: Vec<f64>, max_iterations: usize, tolerance: f64) -> Vec<f64> {
    const MEMORY: usize = 10;
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let (mut fx, mut g) = f(&x);
    let mut history: std::collections::VecDeque<(Vec<f64>, Vec<f64>, f64)> = std::collections::VecDeque::new();
    for iteration in 0..max_iterations {
        if g.iter().fold(0.0f64, |m, v| m.max(v.abs())) <= tolerance {
            break;
        }
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let scale = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= scale);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut direction: Vec<f64> = q.into_iter().map(|v| -v).collect();
        let mut slope = dot(&g, &direction);
        if slope >= 0.0 {
            direction = g.iter().map(|v| -v).collect();
            slope = dot(&g, &direction);
            history.clear();
        }
        let mut step = if iteration == 0 && history.is_empty() {
            1.0 / dot(&g, &g).sqrt().max(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..50 {
            let candidate: Vec<f64> = x.iter().zip(&direction).map(|(xi, di)| xi + step * di).collect();
            let (fc, gc) = f(&candidate);
            if fc <= fx + 1e-4 * step * slope {
                accepted = Some((candidate, fc, gc));
                break;
            }
            step *= 0.5;
        }
        let Some((next, f_next, g_next)) = accepted else { break };
        let s: Vec<f64> = next.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_next.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 {
            if history.len() == MEMORY {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        let improvement = fx - f_next;
        x = next;
        fx = f_next;
        g = g_next;
        if improvement.abs() <= 1e-12 * fx.abs().max(1.0) {
            break;
        }
    }
    x
}

/// One-vs-rest TF-IDF logistic regression.
#[derive(Debug, Clone)]
pub struct TfidfClassifier {
    vectorizer: TfidfVectorizer,
    classes: Vec<String>,
    models: Vec<BinaryLogistic>,
}

impl TfidfClassifier {
    /// `examples` are (target, context, label) triples; the vocabulary is
    /// fitted on `target + context`, and target and context are vectorised
    /// separately then concatenated.
    pub fn fit<L: AsRef<str>>(examples: &[(&str, &str, &str)], inventory: &[L], config: &TfidfConfig) -> Result<Self> {
        if examples.is_empty() {
            return Err(StanceError::invalid("TF-IDF baseline needs training examples"));
        }
        let docs: Vec<String> = examples.iter().map(|(t, c, _)| format!("{t} {c}")).collect();
        let vectorizer = TfidfVectorizer::fit(&docs, config.max_features)?;
        let rows: Vec<SparseVector> = examples.iter().map(|(t, c, _)| features(&vectorizer, t, c)).collect();
        let classes: Vec<String> = inventory
            .iter()
            .map(|l| l.as_ref().to_string())
            .filter(|l| examples.iter().any(|e| e.2 == l))
            .collect();
        if classes.is_empty() {
            return Err(StanceError::invalid("no training label belongs to the inventory"));
        }
        let dim = 2 * vectorizer.len();
        let models = if classes.len() == 1 {
            Vec::new()
        } else {
            classes
                .iter()
                .map(|c| {
                    let targets: Vec<bool> = examples.iter().map(|e| e.2 == c).collect();
                    BinaryLogistic::fit(&rows, &targets, dim, config)
                })
                .collect()
        };
        Ok(Self {
            vectorizer,
            classes,
            models,
        })
    }

    pub fn predict(&self, target: &str, context: &str) -> &str {
        if self.models.is_empty() {
            return &self.classes[0];
        }
        let row = features(&self.vectorizer, target, context);
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (i, m) in self.models.iter().enumerate() {
            let s = m.decision(&row);
            if s > best_score {
                best = i;
                best_score = s;
            }
        }
        &self.classes[best]
    }
}

fn features(vectorizer: &TfidfVectorizer, target: &str, context: &str) -> SparseVector {
    let offset = vectorizer.len();
    let mut row = vectorizer.transform(target);
    row.extend(vectorizer.transform(context).into_iter().map(|(i, v)| (i + offset, v)));
    row
}

/// Fits on the training split of `dataset` and predicts its test split.
pub fn tfidf_logreg_baseline(dataset: &Dataset, config: &TfidfConfig) -> Result<Vec<String>> {
    let train: Vec<(&str, &str, &str)> = dataset
        .split(Split::Train)
        .map(|e| (e.target.as_str(), e.context.as_str(), e.label.as_str()))
        .collect();
    let model = TfidfClassifier::fit(&train, &dataset.descriptor.labels, config)?;
    Ok(dataset
        .split(Split::Test)
        .map(|e| model.predict(&e.target, &e.context).to_string())
        .collect())
}
