//! Global index over dataset-qualified labels, per-dataset output masks,
//! and the hand-built label groups with their neighbourhoods.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Corpus, Dataset, DatasetDescriptor, Registry, StanceExample};
use crate::error::{Result, StanceError};

/// Meta-group of a stance label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Positive,
    Negative,
    Discuss,
    Other,
    Neutral,
}

impl Group {
    pub const ALL: [Group; 5] = [
        Group::Positive,
        Group::Negative,
        Group::Discuss,
        Group::Other,
        Group::Neutral,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Group::Positive => "positive",
            Group::Negative => "negative",
            Group::Discuss => "discuss",
            Group::Other => "other",
            Group::Neutral => "neutral",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Group {
    type Err = StanceError;

    fn from_str(s: &str) -> Result<Self> {
        Group::ALL
            .into_iter()
            .find(|g| g.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| StanceError::UnknownGroup(s.to_string()))
    }
}

/// Which edition of the shipped group table to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableVariant {
    /// Exactly the published rows.
    Verbatim,
    /// Published rows plus the entries marked `repair` (labels the
    /// published table leaves without a group).
    #[default]
    Repaired,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum TableLine {
    Version {
        version: String,
    },
    Group {
        dataset: String,
        label: String,
        group: Group,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        repair: bool,
    },
    Neighborhood {
        group: Group,
        neighbors: Vec<Group>,
    },
}

const BUILTIN_TABLE: &str = include_str!("../data/label_groups.jsonl");

/// Label -> group assignments and the ordered neighbourhood of each group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HardGroupTable {
    version: String,
    variant: TableVariant,
    groups: BTreeMap<String, Group>,
    neighborhoods: BTreeMap<Group, Vec<Group>>,
}

fn table_key(dataset: &str, label: &str) -> String {
    format!("{dataset}__{label}")
}

impl HardGroupTable {
    pub fn builtin(variant: TableVariant) -> Self {
        Self::from_jsonl(BUILTIN_TABLE, variant).expect("shipped label table is valid")
    }

    pub fn from_file(path: &Path, variant: TableVariant) -> Result<Self> {
        Self::from_jsonl(&std::fs::read_to_string(path)?, variant)
    }

    /// Parses the JSON-lines table format (`version`, `group` and
    /// `neighborhood` records).
    pub fn from_jsonl(text: &str, variant: TableVariant) -> Result<Self> {
        let mut version = String::from("unversioned");
        let mut groups = BTreeMap::new();
        let mut neighborhoods = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: TableLine = serde_json::from_str(line)
                .map_err(|e| StanceError::schema(format!("label table line {}", i + 1), e.to_string()))?;
            match parsed {
                TableLine::Version { version: v } => version = v,
                TableLine::Group { repair: true, .. } if variant == TableVariant::Verbatim => {}
                TableLine::Group { dataset, label, group, .. } => {
                    let key = table_key(&dataset, &label);
                    if groups.insert(key.clone(), group).is_some() {
                        return Err(StanceError::schema(
                            format!("label table line {}", i + 1),
                            format!("{key} assigned twice"),
                        ));
                    }
                }
                TableLine::Neighborhood { group, neighbors } => {
                    neighborhoods.insert(group, neighbors);
                }
            }
        }
        let table = Self {
            version,
            variant,
            groups,
            neighborhoods,
        };
        table.validate()?;
        Ok(table)
    }

    /// Builds a table from explicit assignments, with the shipped neighbourhoods.
    pub fn with_assignments(version: impl Into<String>, entries: &[(&str, &str, Group)]) -> Result<Self> {
        let builtin = Self::builtin(TableVariant::Repaired);
        let mut groups = BTreeMap::new();
        for (dataset, label, group) in entries {
            groups.insert(table_key(dataset, label), *group);
        }
        let table = Self {
            version: version.into(),
            variant: TableVariant::Repaired,
            groups,
            neighborhoods: builtin.neighborhoods,
        };
        table.validate()?;
        Ok(table)
    }

    fn validate(&self) -> Result<()> {
        for (group, neighbors) in &self.neighborhoods {
            let mut seen: Vec<Group> = neighbors.clone();
            seen.push(*group);
            seen.sort();
            seen.dedup();
            if neighbors.contains(group) || seen.len() != Group::ALL.len() || neighbors.len() != Group::ALL.len() - 1 {
                return Err(StanceError::invalid(format!(
                    "neighbourhood of {group} must list every other group once, got {neighbors:?}"
                )));
            }
        }
        Ok(())
    }

    /// Serialises the table in the format read by [`HardGroupTable::from_jsonl`].
    pub fn to_jsonl(&self) -> String {
        let mut lines = vec![TableLine::Version {
            version: self.version.clone(),
        }];
        for (key, group) in &self.groups {
            let (dataset, label) = key.split_once("__").unwrap_or((key.as_str(), ""));
            lines.push(TableLine::Group {
                dataset: dataset.to_string(),
                label: label.to_string(),
                group: *group,
                repair: false,
            });
        }
        for (group, neighbors) in &self.neighborhoods {
            lines.push(TableLine::Neighborhood {
                group: *group,
                neighbors: neighbors.clone(),
            });
        }
        lines
            .iter()
            .map(|l| serde_json::to_string(l).expect("table lines serialise") + "\n")
            .collect()
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn variant(&self) -> TableVariant {
        self.variant
    }

    pub fn group_of(&self, dataset: &str, label: &str) -> Option<Group> {
        self.groups.get(&table_key(dataset, label)).copied()
    }

    pub fn neighborhood(&self, group: Group) -> Option<&[Group]> {
        self.neighborhoods.get(&group).map(Vec::as_slice)
    }

    /// All `(qualified label, group)` assignments.
    pub fn assignments(&self) -> impl Iterator<Item = (&str, Group)> {
        self.groups.iter().map(|(k, g)| (k.as_str(), *g))
    }
}

/// A dataset-qualified label with its position in the global index.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabelId {
    pub dataset: String,
    pub name: String,
    pub global_index: usize,
}

impl LabelId {
    /// `dataset__name`.
    pub fn qualified(&self) -> String {
        table_key(&self.dataset, &self.name)
    }
}

impl fmt::Display for LabelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}__{}", self.dataset, self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct DatasetRange {
    dataset: String,
    start: usize,
    end: usize,
}

/// Immutable global label index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSpace {
    labels: Vec<LabelId>,
    ranges: Vec<DatasetRange>,
    table: HardGroupTable,
}

/// Builds the global index. Datasets from the built-in registry come first
/// in registry order, other datasets follow in the order given; labels keep
/// descriptor order.
pub fn build_label_space(descriptors: &[DatasetDescriptor], table: HardGroupTable) -> Result<LabelSpace> {
    let registry = Registry::builtin();
    let mut ordered: Vec<&DatasetDescriptor> = descriptors.iter().collect();
    ordered.sort_by_key(|d| registry.position(&d.name).unwrap_or(usize::MAX));

    let mut labels = Vec::new();
    let mut ranges: Vec<DatasetRange> = Vec::new();
    for d in ordered {
        if ranges.iter().any(|r| r.dataset == d.name) {
            return Err(StanceError::DuplicateLabel {
                dataset: d.name.clone(),
                name: d.labels.first().cloned().unwrap_or_default(),
            });
        }
        d.validate()?;
        let start = labels.len();
        for name in &d.labels {
            labels.push(LabelId {
                dataset: d.name.clone(),
                name: name.clone(),
                global_index: labels.len(),
            });
        }
        ranges.push(DatasetRange {
            dataset: d.name.clone(),
            start,
            end: labels.len(),
        });
    }
    Ok(LabelSpace { labels, ranges, table })
}

impl LabelSpace {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[LabelId] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> &LabelId {
        &self.labels[index]
    }

    pub fn datasets(&self) -> Vec<&str> {
        self.ranges.iter().map(|r| r.dataset.as_str()).collect()
    }

    pub fn contains_dataset(&self, dataset: &str) -> bool {
        self.ranges.iter().any(|r| r.dataset == dataset)
    }

    pub fn table(&self) -> &HardGroupTable {
        &self.table
    }

    fn range(&self, dataset: &str) -> Result<&DatasetRange> {
        self.ranges
            .iter()
            .find(|r| r.dataset == dataset)
            .ok_or_else(|| StanceError::UnknownDataset(dataset.to_string()))
    }

    pub fn labels_of(&self, dataset: &str) -> Result<&[LabelId]> {
        let r = self.range(dataset)?;
        Ok(&self.labels[r.start..r.end])
    }

    pub fn find(&self, dataset: &str, name: &str) -> Result<&LabelId> {
        self.labels_of(dataset)?
            .iter()
            .find(|l| l.name == name)
            .ok_or_else(|| StanceError::invalid(format!("label {dataset}__{name} is not in the label space")))
    }

    /// True exactly at the labels of `dataset`.
    pub fn mask_for(&self, dataset: &str) -> Result<Vec<bool>> {
        let r = self.range(dataset)?;
        Ok((0..self.len()).map(|i| i >= r.start && i < r.end).collect())
    }

    /// Elementwise OR of the datasets' masks.
    pub fn union_mask(&self, datasets: &[&str]) -> Result<Vec<bool>> {
        let mut mask = vec![false; self.len()];
        for d in datasets {
            let r = self.range(d)?;
            mask[r.start..r.end].iter_mut().for_each(|m| *m = true);
        }
        Ok(mask)
    }

    pub fn hard_group_of(&self, label: &LabelId) -> Result<Group> {
        hard_group_of(&self.table, &label.dataset, &label.name)
    }

    pub fn neighborhood_of(&self, group: Group) -> Result<&[Group]> {
        self.table
            .neighborhood(group)
            .ok_or_else(|| StanceError::UnknownGroup(group.to_string()))
    }

    /// Content hash of the label order and group table; changes whenever a
    /// saved output layer would be misinterpreted.
    pub fn version(&self) -> String {
        let mut hasher = Sha256::new();
        for l in &self.labels {
            hasher.update(l.qualified().as_bytes());
            hasher.update(b"\n");
        }
        hasher.update(self.table.version.as_bytes());
        let digest = hasher.finalize();
        let hex: String = digest.iter().take(6).map(|b| format!("{b:02x}")).collect();
        format!("v1-{hex}")
    }
}

pub fn hard_group_of(table: &HardGroupTable, dataset: &str, label: &str) -> Result<Group> {
    table
        .group_of(dataset, label)
        .ok_or_else(|| StanceError::UnmappedLabel(table_key(dataset, label)))
}

/// Replaces each example's label by its group name.
pub fn meta_relabel(examples: &[StanceExample], table: &HardGroupTable) -> Result<Vec<StanceExample>> {
    examples
        .iter()
        .map(|e| {
            let group = hard_group_of(table, &e.dataset, &e.label)?;
            Ok(StanceExample {
                label: group.to_string(),
                ..e.clone()
            })
        })
        .collect()
}

/// Meta-relabels a whole corpus. Each dataset's inventory becomes the
/// groups its labels map to, in [`Group::ALL`] order.
pub fn meta_relabel_corpus(corpus: &Corpus, table: &HardGroupTable) -> Result<Corpus> {
    let mut datasets = Vec::new();
    for d in corpus.datasets() {
        let mut groups = Vec::new();
        for l in &d.descriptor.labels {
            groups.push(hard_group_of(table, d.name(), l)?);
        }
        let inventory: Vec<String> = Group::ALL
            .iter()
            .filter(|g| groups.contains(g))
            .map(|g| g.to_string())
            .collect();
        let descriptor = DatasetDescriptor {
            labels: inventory,
            ..d.descriptor.clone()
        };
        datasets.push(Dataset::new(descriptor, meta_relabel(&d.examples, table)?));
    }
    Corpus::new(datasets)
}
