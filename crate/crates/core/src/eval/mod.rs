//! Scoring, non-neural baselines, report aggregation and dataset-level
//! analysis.

mod analysis;
mod baselines;
mod metrics;
mod report;

pub use analysis::{
    dataset_scatter_2d, feature_names, pearson, pearson_correlation, scatter_svg, DatasetFeatureVector, FeatureCorrelation,
    PairEncoder, PlotPoint, Scatter, ScatterPoint,
};
pub use baselines::{
    majority_baseline, majority_label, random_baseline, tfidf_logreg_baseline, BinaryLogistic, MajoritySource, SparseVector,
    TfidfClassifier, TfidfConfig, TfidfVectorizer,
};
pub use metrics::macro_f1;
pub use report::{aggregate_report, aggregate_report_with, config_hash, DatasetScore, EvalReport, ReportMetadata};
