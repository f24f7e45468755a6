use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{sample_proportional, split_overlap, split_stats, vocab_stats, ContextKind, Dataset, SourceGroup, TargetKind};
use crate::embeddings::project_2d;
use crate::error::{Result, StanceError};
use crate::model::MoleModel;
use crate::text::WordTokenizer;

/// Names of the entries of [`DatasetFeatureVector::values`], in order.
///
/// Sizes are example counts, overlaps are percentages of dev/test examples
/// seen in train, `vocabulary` counts case-preserved word types, and the
/// `source_*`, `target_*` and `context_*` entries are one-hot indicators.
pub fn feature_names() -> Vec<String> {
    let mut names: Vec<String> = [
        "train_size",
        "dev_size",
        "test_size",
        "dev_full_overlap",
        "dev_target_overlap",
        "dev_context_overlap",
        "test_full_overlap",
        "test_target_overlap",
        "test_context_overlap",
        "vocabulary",
        "unique_labels",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    names.extend(SourceGroup::ALL.iter().map(|g| format!("source_{}", g.as_str())));
    names.extend(TargetKind::ALL.iter().map(|k| format!("target_{}", snake(k))));
    names.extend(ContextKind::ALL.iter().map(|k| format!("context_{}", snake(k))));
    names
}

fn snake<T: Serialize>(value: &T) -> String {
    serde_json::to_value(value)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFeatureVector {
    pub dataset: String,
    pub values: Vec<f64>,
}

impl DatasetFeatureVector {
    pub fn from_dataset(dataset: &Dataset) -> Self {
        let sizes = split_stats(dataset);
        let overlap = split_overlap(dataset);
        let vocab = vocab_stats(dataset, &WordTokenizer);
        let d = &dataset.descriptor;
        let mut values = vec![
            sizes.train as f64,
            sizes.dev as f64,
            sizes.test as f64,
            overlap.dev_full,
            overlap.dev_target,
            overlap.dev_context,
            overlap.test_full,
            overlap.test_target,
            overlap.test_context,
            vocab.unique_words as f64,
            d.labels.len() as f64,
        ];
        let one_hot = |hit: bool| if hit { 1.0 } else { 0.0 };
        values.extend(SourceGroup::ALL.iter().map(|g| one_hot(*g == d.source_group)));
        values.extend(TargetKind::ALL.iter().map(|k| one_hot(*k == d.target_kind)));
        values.extend(ContextKind::ALL.iter().map(|k| one_hot(*k == d.context_kind)));
        Self {
            dataset: dataset.name().to_string(),
            values,
        }
    }
}

/// Sample Pearson correlation; `None` when either side is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureCorrelation {
    pub feature: String,
    /// Undefined for features that are constant across the datasets.
    pub r: Option<f64>,
}

/// Correlation of each feature with `scores` across datasets.
pub fn pearson_correlation(features: &[DatasetFeatureVector], scores: &[f64]) -> Result<Vec<FeatureCorrelation>> {
    if features.len() != scores.len() {
        return Err(StanceError::invalid(format!(
            "{} feature vectors for {} scores",
            features.len(),
            scores.len()
        )));
    }
    if features.len() < 3 {
        return Err(StanceError::invalid("correlation needs at least three datasets"));
    }
    let names = feature_names();
    if let Some(bad) = features.iter().find(|f| f.values.len() != names.len()) {
        return Err(StanceError::invalid(format!("feature vector of `{}` has the wrong length", bad.dataset)));
    }
    Ok(names
        .into_iter()
        .enumerate()
        .map(|(i, feature)| {
            let column: Vec<f64> = features.iter().map(|f| f.values[i]).collect();
            FeatureCorrelation {
                feature,
                r: pearson(&column, scores),
            }
        })
        .collect())
}

/// Maps a (context, target) pair to a fixed-width vector.
pub trait PairEncoder: Sync {
    fn encode_pair(&self, context: &str, target: &str) -> Result<Vec<f64>>;
}

impl PairEncoder for MoleModel {
    fn encode_pair(&self, context: &str, target: &str) -> Result<Vec<f64>> {
        self.pooled_encoding(context, target)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub dataset: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scatter {
    pub points: Vec<ScatterPoint>,
    /// Per-dataset mean of its points, in input dataset order.
    pub centroids: Vec<ScatterPoint>,
}

/// Samples `n` examples proportionally across `datasets`, encodes them and
/// projects the encodings to two dimensions.
pub fn dataset_scatter_2d(datasets: &[&Dataset], encoder: &dyn PairEncoder, n: usize, seed: u64) -> Result<Scatter> {
    let sample = sample_proportional(datasets, n, seed)?;
    let encodings: Vec<Vec<f64>> = sample
        .par_iter()
        .map(|e| encoder.encode_pair(&e.context, &e.target))
        .collect::<Result<_>>()?;
    let coords = project_2d(&encodings)?;
    let points: Vec<ScatterPoint> = sample
        .iter()
        .zip(coords)
        .map(|(e, [x, y])| ScatterPoint {
            dataset: e.dataset.clone(),
            x,
            y,
        })
        .collect();
    let centroids = datasets
        .iter()
        .filter_map(|d| {
            let own: Vec<&ScatterPoint> = points.iter().filter(|p| p.dataset == d.name()).collect();
            if own.is_empty() {
                return None;
            }
            let k = own.len() as f64;
            Some(ScatterPoint {
                dataset: d.name().to_string(),
                x: own.iter().map(|p| p.x).sum::<f64>() / k,
                y: own.iter().map(|p| p.y).sum::<f64>() / k,
            })
        })
        .collect();
    Ok(Scatter { points, centroids })
}

/// One marker of an SVG scatter plot.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotPoint {
    pub series: String,
    pub x: f64,
    pub y: f64,
    pub annotation: Option<String>,
    pub highlight: bool,
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Standalone SVG scatter plot with one colour per series and a legend.
pub fn scatter_svg(points: &[PlotPoint], title: &str) -> String {
    const W: f64 = 800.0;
    const H: f64 = 600.0;
    const PAD: f64 = 40.0;
    const LEGEND: f64 = 180.0;
    let mut series: Vec<&str> = Vec::new();
    for p in points {
        if !series.contains(&p.series.as_str()) {
            series.push(&p.series);
        }
    }
    let bounds = |f: fn(&PlotPoint) -> f64| {
        let lo = points.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        if lo.is_finite() && hi > lo { (lo, hi) } else { (lo.min(0.0) - 1.0, hi.max(0.0) + 1.0) }
    };
    let (x0, x1) = bounds(|p| p.x);
    let (y0, y1) = bounds(|p| p.y);
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - LEGEND - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="20" font-family="sans-serif" font-size="14">{}</text>"#, PAD, escape(title));
    for p in points.iter().filter(|p| !p.highlight) {
        let color = PALETTE[series.iter().position(|s| *s == p.series).unwrap() % PALETTE.len()];
        let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{color}" fill-opacity="0.5"/>"#, sx(p.x), sy(p.y));
    }
    for p in points.iter().filter(|p| p.highlight) {
        let color = PALETTE[series.iter().position(|s| *s == p.series).unwrap() % PALETTE.len()];
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="6" fill="{color}" stroke="black" stroke-width="1.5"/>"#,
            sx(p.x),
            sy(p.y)
        );
    }
    for p in points {
        if let Some(text) = &p.annotation {
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="10">{}</text>"#,
                sx(p.x) + 4.0,
                sy(p.y) - 4.0,
                escape(text)
            );
        }
    }
    for (i, s) in series.iter().enumerate() {
        let y = PAD + 16.0 * i as f64;
        let x = W - LEGEND + 10.0;
        let _ = writeln!(svg, r#"<rect x="{x}" y="{}" width="10" height="10" fill="{}"/>"#, y - 9.0, PALETTE[i % PALETTE.len()]);
        let _ = writeln!(svg, r#"<text x="{}" y="{y}" font-family="sans-serif" font-size="11">{}</text>"#, x + 14.0, escape(s));
    }
    svg.push_str("</svg>\n");
    svg
}
