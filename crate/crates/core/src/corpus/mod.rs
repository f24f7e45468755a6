//! Unified stance corpus: schema, loading and per-dataset statistics.
//!
//! Every dataset lives under `<root>/<dataset>/{train,dev,test}.jsonl`,
//! one [`StanceExample`] per line. Records are validated against the
//! dataset's [`DatasetDescriptor`] as they are read.

mod registry;
mod sample;
mod stats;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, StanceError};
use crate::io::write_atomic;

pub use registry::{reference, Registry};
pub use sample::{apportion, sample_proportional};
pub use stats::{overlap_matrix, split_stats, split_overlap, vocab_stats, OverlapMatrix, SplitOverlap, VocabStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = StanceError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(StanceError::invalid(format!("unknown split `{other}`"))),
        }
    }
}

/// One (target, context, label) triple.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StanceExample {
    pub id: String,
    pub dataset: String,
    pub split: Split,
    pub target: String,
    pub context: String,
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceGroup {
    Debates,
    News,
    SocialMedia,
    Various,
}

impl SourceGroup {
    pub const ALL: [SourceGroup; 4] = [
        SourceGroup::Debates,
        SourceGroup::News,
        SourceGroup::SocialMedia,
        SourceGroup::Various,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SourceGroup::Debates => "debates",
            SourceGroup::News => "news",
            SourceGroup::SocialMedia => "social_media",
            SourceGroup::Various => "various",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Claim,
    Headline,
    Person,
    Topic,
    /// Implicit target; records may carry an empty target.
    None,
}

impl TargetKind {
    pub const ALL: [TargetKind; 5] = [
        TargetKind::Claim,
        TargetKind::Headline,
        TargetKind::Person,
        TargetKind::Topic,
        TargetKind::None,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextKind {
    Article,
    Claim,
    Post,
    Thread,
    Sentence,
    Tweet,
}

impl ContextKind {
    pub const ALL: [ContextKind; 6] = [
        ContextKind::Article,
        ContextKind::Claim,
        ContextKind::Post,
        ContextKind::Thread,
        ContextKind::Sentence,
        ContextKind::Tweet,
    ];
}

/// Static description of a dataset: provenance group, input kinds and
/// the ordered label inventory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetDescriptor {
    pub name: String,
    pub source_group: SourceGroup,
    pub target_kind: TargetKind,
    pub context_kind: ContextKind,
    pub labels: Vec<String>,
    /// Reference split sizes of the published splits, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_sizes: Option<SplitStats>,
}

impl DatasetDescriptor {
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(StanceError::invalid("descriptor with empty name"));
        }
        if self.labels.is_empty() {
            return Err(StanceError::invalid(format!("{}: empty label inventory", self.name)));
        }
        let mut seen = BTreeSet::new();
        for l in &self.labels {
            if !seen.insert(normalize_label(l)) {
                return Err(StanceError::DuplicateLabel {
                    dataset: self.name.clone(),
                    name: l.clone(),
                });
            }
        }
        Ok(())
    }

    /// The inventory spelling of `raw`, if it names one of this dataset's labels.
    ///
    /// Matching ignores case and treats `_` as a space, so `argument_for`
    /// resolves to `argument for`.
    pub fn resolve_label(&self, raw: &str) -> Option<&str> {
        let wanted = normalize_label(raw);
        self.labels
            .iter()
            .find(|l| normalize_label(l) == wanted)
            .map(String::as_str)
    }

    pub fn allows_empty_target(&self) -> bool {
        self.target_kind == TargetKind::None
    }
}

pub(crate) fn normalize_label(raw: &str) -> String {
    raw.trim().to_lowercase().replace('_', " ")
}

/// Per-split example counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitStats {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub total: usize,
}

impl SplitStats {
    pub fn new(train: usize, dev: usize, test: usize) -> Self {
        Self {
            train,
            dev,
            test,
            total: train + dev + test,
        }
    }

    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Dev => self.dev,
            Split::Test => self.test,
        }
    }
}

/// A dataset's descriptor together with its loaded examples.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub descriptor: DatasetDescriptor,
    pub examples: Vec<StanceExample>,
}

impl Dataset {
    pub fn new(descriptor: DatasetDescriptor, examples: Vec<StanceExample>) -> Self {
        Self { descriptor, examples }
    }

    pub fn name(&self) -> &str {
        &self.descriptor.name
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &StanceExample> {
        self.examples.iter().filter(move |e| e.split == split)
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Checks every record against the descriptor and split disjointness.
    pub fn validate(&self) -> Result<()> {
        self.descriptor.validate()?;
        let mut ids: HashMap<&str, Split> = HashMap::new();
        for e in &self.examples {
            let location = format!("{}/{} id={}", self.name(), e.split, e.id);
            check_record(&self.descriptor, e, &location)?;
            if let Some(prev) = ids.insert(e.id.as_str(), e.split) {
                let reason = if prev == e.split {
                    format!("duplicate id within split {}", e.split)
                } else {
                    format!("id appears in both {prev} and {}", e.split)
                };
                return Err(StanceError::schema(location, reason));
            }
        }
        Ok(())
    }
}

fn check_record(desc: &DatasetDescriptor, e: &StanceExample, location: &str) -> Result<()> {
    if e.dataset != desc.name {
        return Err(StanceError::schema(
            location,
            format!("record belongs to dataset `{}`", e.dataset),
        ));
    }
    if e.id.is_empty() {
        return Err(StanceError::schema(location, "empty id"));
    }
    if e.context.trim().is_empty() {
        return Err(StanceError::schema(location, "empty context"));
    }
    if e.target.trim().is_empty() && !desc.allows_empty_target() {
        return Err(StanceError::schema(location, "empty target"));
    }
    if desc.resolve_label(&e.label) != Some(e.label.as_str()) {
        return Err(StanceError::schema(
            location,
            format!("label `{}` is not in the inventory {:?}", e.label, desc.labels),
        ));
    }
    Ok(())
}

/// Loaded datasets, in request order. Immutable once built.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    datasets: Vec<Dataset>,
}

impl Corpus {
    pub fn new(datasets: Vec<Dataset>) -> Result<Self> {
        let mut names = BTreeSet::new();
        for d in &datasets {
            if !names.insert(d.name().to_string()) {
                return Err(StanceError::invalid(format!("dataset {} given twice", d.name())));
            }
            d.validate()?;
        }
        Ok(Self { datasets })
    }

    pub fn datasets(&self) -> &[Dataset] {
        &self.datasets
    }

    pub fn get(&self, name: &str) -> Option<&Dataset> {
        self.datasets.iter().find(|d| d.name() == name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.datasets.iter().map(Dataset::name).collect()
    }

    pub fn descriptors(&self) -> Vec<DatasetDescriptor> {
        self.datasets.iter().map(|d| d.descriptor.clone()).collect()
    }

    /// A corpus without the named dataset (leave-one-dataset-out).
    pub fn without(&self, held_out: &str) -> Result<Corpus> {
        if self.get(held_out).is_none() {
            return Err(StanceError::UnknownDataset(held_out.to_string()));
        }
        Ok(Corpus {
            datasets: self
                .datasets
                .iter()
                .filter(|d| d.name() != held_out)
                .cloned()
                .collect(),
        })
    }

    pub fn total_examples(&self) -> usize {
        self.datasets.iter().map(|d| d.examples.len()).sum()
    }
}

/// Reads the requested datasets from `root`.
///
/// Each dataset needs `train.jsonl`, `dev.jsonl` and `test.jsonl` under
/// `root/<name>/`; files may be empty. Records keep their file's split and
/// are not deduplicated.
pub fn load_corpus(root: &Path, datasets: &[&str], registry: &Registry) -> Result<Corpus> {
    let mut loaded = Vec::with_capacity(datasets.len());
    for name in datasets {
        let descriptor = registry
            .get(name)
            .ok_or_else(|| StanceError::UnknownDataset(name.to_string()))?
            .clone();
        loaded.push(load_dataset(root, descriptor)?);
    }
    Corpus::new(loaded)
}

pub fn load_dataset(root: &Path, descriptor: DatasetDescriptor) -> Result<Dataset> {
    descriptor.validate()?;
    let dir = root.join(&descriptor.name);
    let mut examples = Vec::new();
    for split in Split::ALL {
        let path = dir.join(format!("{split}.jsonl"));
        if !path.is_file() {
            return Err(StanceError::DatasetNotFound {
                dataset: descriptor.name.clone(),
                path,
            });
        }
        let reader = BufReader::new(File::open(&path)?);
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let location = format!("{}:{}", path.display(), lineno + 1);
            let mut example: StanceExample = serde_json::from_str(&line)
                .map_err(|e| StanceError::schema(&location, e.to_string()))?;
            if example.split != split {
                return Err(StanceError::schema(
                    &location,
                    format!("record marked `{}` inside {split}.jsonl", example.split),
                ));
            }
            let label = descriptor.resolve_label(&example.label).ok_or_else(|| {
                StanceError::schema(
                    format!("{location} id={}", example.id),
                    format!(
                        "label `{}` is not in the {} inventory {:?}",
                        example.label, descriptor.name, descriptor.labels
                    ),
                )
            })?;
            example.label = label.to_string();
            check_record(&descriptor, &example, &format!("{location} id={}", example.id))?;
            examples.push(example);
        }
    }
    let dataset = Dataset::new(descriptor, examples);
    dataset.validate()?;
    Ok(dataset)
}

/// Writes a dataset in the unified layout (one file per split).
pub fn write_dataset(root: &Path, dataset: &Dataset) -> Result<()> {
    let dir = root.join(dataset.name());
    std::fs::create_dir_all(&dir)?;
    for split in Split::ALL {
        let mut buf = Vec::new();
        for e in dataset.split(split) {
            serde_json::to_writer(&mut buf, e)?;
            buf.write_all(b"\n")?;
        }
        write_atomic(&dir.join(format!("{split}.jsonl")), &buf)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example(id: &str, split: Split, label: &str) -> StanceExample {
        StanceExample {
            id: id.into(),
            dataset: "perspectrum".into(),
            split,
            target: "claim".into(),
            context: "some perspective".into(),
            label: label.into(),
        }
    }

    fn perspectrum() -> DatasetDescriptor {
        Registry::builtin().get("perspectrum").unwrap().clone()
    }

    #[test]
    fn unknown_label_is_a_schema_violation() {
        let d = Dataset::new(perspectrum(), vec![example("1", Split::Train, "maybe")]);
        let err = d.validate().unwrap_err();
        assert!(matches!(err, StanceError::SchemaViolation { .. }), "{err}");
        assert!(err.to_string().contains("id=1"));
    }

    #[test]
    fn empty_context_rejected() {
        let mut e = example("1", Split::Train, "support");
        e.context = "  ".into();
        let d = Dataset::new(perspectrum(), vec![e]);
        assert!(d.validate().is_err());
    }

    #[test]
    fn empty_target_only_for_implicit_target_datasets() {
        let mut e = example("1", Split::Train, "support");
        e.target.clear();
        assert!(Dataset::new(perspectrum(), vec![e]).validate().is_err());

        let scd = Registry::builtin().get("scd").unwrap().clone();
        let e = StanceExample {
            id: "1".into(),
            dataset: "scd".into(),
            split: Split::Train,
            target: String::new(),
            context: "post".into(),
            label: "for".into(),
        };
        Dataset::new(scd, vec![e]).validate().unwrap();
    }

    #[test]
    fn split_disjointness_enforced() {
        let d = Dataset::new(
            perspectrum(),
            vec![example("1", Split::Train, "support"), example("1", Split::Test, "support")],
        );
        let err = d.validate().unwrap_err().to_string();
        assert!(err.contains("both train and test"), "{err}");
    }

    #[test]
    fn resolve_label_accepts_underscores() {
        let argmin = Registry::builtin().get("argmin").unwrap().clone();
        assert_eq!(argmin.resolve_label("argument_for"), Some("argument for"));
        assert_eq!(argmin.resolve_label("Argument Against"), Some("argument against"));
        assert_eq!(argmin.resolve_label("for"), None);
    }

    #[test]
    fn without_drops_dataset() {
        let corpus = Corpus::new(vec![
            Dataset::new(perspectrum(), vec![]),
            Dataset::new(Registry::builtin().get("scd").unwrap().clone(), vec![]),
        ])
        .unwrap();
        assert_eq!(corpus.without("scd").unwrap().names(), vec!["perspectrum"]);
        assert!(corpus.without("wtwt").is_err());
    }
}
