use std::path::Path;

use super::{ContextKind, DatasetDescriptor, SourceGroup, SplitStats, TargetKind};
use crate::error::{Result, StanceError};

/// Dataset descriptors, looked up by name.
#[derive(Debug, Clone, PartialEq)]
pub struct Registry {
    descriptors: Vec<DatasetDescriptor>,
}

impl Registry {
    pub fn new(descriptors: Vec<DatasetDescriptor>) -> Result<Self> {
        let mut names = std::collections::BTreeSet::new();
        for d in &descriptors {
            d.validate()?;
            if !names.insert(d.name.clone()) {
                return Err(StanceError::invalid(format!("registry lists {} twice", d.name)));
            }
        }
        Ok(Self { descriptors })
    }

    /// The sixteen benchmark datasets, grouped by source and sorted
    /// alphabetically inside each group.
    pub fn builtin() -> Self {
        use ContextKind as C;
        use SourceGroup as G;
        use TargetKind as T;
        let d = |name: &str, g, t, c, labels: &[&str], sizes: (usize, usize, usize)| DatasetDescriptor {
            name: name.to_string(),
            source_group: g,
            target_kind: t,
            context_kind: c,
            labels: labels.iter().map(|s| s.to_string()).collect(),
            split_sizes: Some(SplitStats::new(sizes.0, sizes.1, sizes.2)),
        };
        let descriptors = vec![
            d("arc", G::Debates, T::Headline, C::Post, &["unrelated", "disagree", "agree", "discuss"], (12_382, 1_851, 3_559)),
            d("iac1", G::Debates, T::Topic, C::Thread, &["pro", "anti", "other"], (4_227, 454, 924)),
            d("perspectrum", G::Debates, T::Claim, C::Sentence, &["support", "undermine"], (6_978, 2_071, 2_773)),
            d("poldeb", G::Debates, T::Topic, C::Post, &["for", "against"], (4_753, 1_151, 1_230)),
            d("scd", G::Debates, T::None, C::Post, &["for", "against"], (3_251, 624, 964)),
            d("emergent", G::News, T::Headline, C::Article, &["for", "observing", "against"], (1_770, 301, 524)),
            d("fnc1", G::News, T::Headline, C::Article, &["unrelated", "discuss", "agree", "disagree"], (42_476, 7_496, 25_413)),
            d("snopes", G::News, T::Claim, C::Article, &["agree", "refute"], (14_416, 1_868, 3_154)),
            d("mtsd", G::SocialMedia, T::Person, C::Tweet, &["against", "favor", "none"], (3_718, 520, 1_092)),
            d("rumor", G::SocialMedia, T::Topic, C::Tweet, &["endorse", "deny", "unrelated", "question", "neutral"], (6_093, 678, 505)),
            d("semeval2016t6", G::SocialMedia, T::Topic, C::Tweet, &["against", "none", "favor"], (2_497, 417, 1_249)),
            d("semeval2019t7", G::SocialMedia, T::None, C::Tweet, &["comment", "support", "query", "deny"], (5_217, 1_485, 1_827)),
            d("wtwt", G::SocialMedia, T::Claim, C::Tweet, &["comment", "unrelated", "support", "refute"], (25_193, 7_897, 18_194)),
            d("argmin", G::Various, T::Topic, C::Sentence, &["argument against", "argument for"], (6_845, 1_568, 2_726)),
            d("ibmcs", G::Various, T::Topic, C::Claim, &["pro", "con"], (935, 104, 1_355)),
            d("vast", G::Various, T::Topic, C::Post, &["con", "pro", "neutral"], (13_477, 2_062, 3_006)),
        ];
        Self { descriptors }
    }

    /// Reads a JSON array of descriptors.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let descriptors: Vec<DatasetDescriptor> = serde_json::from_str(&text)?;
        Self::new(descriptors)
    }

    pub fn get(&self, name: &str) -> Option<&DatasetDescriptor> {
        self.descriptors.iter().find(|d| d.name == name)
    }

    pub fn descriptors(&self) -> &[DatasetDescriptor] {
        &self.descriptors
    }

    pub fn names(&self) -> Vec<&str> {
        self.descriptors.iter().map(|d| d.name.as_str()).collect()
    }

    /// Registry order position of `name`, used to sort reports.
    pub fn position(&self, name: &str) -> Option<usize> {
        self.descriptors.iter().position(|d| d.name == name)
    }
}

/// Published reference scores, used by the data-gated checks.
pub mod reference {
    /// Majority-class baseline macro-F1 per dataset on the published test splits.
    pub const MAJORITY_MACRO_F1: [(&str, f64); 16] = [
        ("arc", 21.45),
        ("iac1", 21.27),
        ("perspectrum", 34.66),
        ("poldeb", 39.38),
        ("scd", 35.30),
        ("emergent", 21.30),
        ("fnc1", 20.96),
        ("snopes", 43.98),
        ("mtsd", 19.49),
        ("rumor", 25.15),
        ("semeval2016t6", 24.27),
        ("semeval2019t7", 22.34),
        ("wtwt", 15.91),
        ("argmin", 33.83),
        ("ibmcs", 34.06),
        ("vast", 17.19),
    ];

    /// Per-dataset in-domain macro-F1 of the full MoLE model, and its reported average.
    pub const MOLE_IN_DOMAIN: [(&str, f64); 16] = [
        ("arc", 63.17),
        ("iac1", 38.50),
        ("perspectrum", 85.27),
        ("poldeb", 50.76),
        ("scd", 65.91),
        ("emergent", 83.74),
        ("fnc1", 75.82),
        ("snopes", 75.07),
        ("mtsd", 65.08),
        ("rumor", 67.24),
        ("semeval2016t6", 70.05),
        ("semeval2019t7", 57.78),
        ("wtwt", 68.37),
        ("argmin", 63.73),
        ("ibmcs", 79.38),
        ("vast", 38.92),
    ];
    pub const MOLE_IN_DOMAIN_AVERAGE: f64 = 65.55;

    /// Share of `vast` word types also present in `arc`.
    pub const VAST_IN_ARC_OVERLAP: f64 = 0.97;

    /// Unique case-preserved word types of `ibmcs`.
    pub const IBMCS_UNIQUE_WORDS: usize = 5_007;
}
