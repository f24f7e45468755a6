//! Small generated corpus with known structure, used for end-to-end checks
//! and benchmarks.
//!
//! Every label expresses one of six stance concepts. Each concept has its
//! own cue words, shared by all datasets, and one cue appears in every
//! context, so a bag of words separates the labels of any dataset. Targets
//! and filler words are specific to the source group. Two concepts share
//! the discuss group, which lets group-level mapping confuse them while
//! name similarity can still tell them apart.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{ContextKind, Corpus, Dataset, DatasetDescriptor, SourceGroup, Split, StanceExample, TargetKind};
use crate::embeddings::{EmbeddingKind, EmbeddingTable};
use crate::error::Result;
use crate::labelspace::{Group, HardGroupTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Concept {
    Approve,
    Oppose,
    Discuss,
    Query,
    Neutral,
    Unrelated,
}

impl Concept {
    const ALL: [Concept; 6] = [
        Concept::Approve,
        Concept::Oppose,
        Concept::Discuss,
        Concept::Query,
        Concept::Neutral,
        Concept::Unrelated,
    ];

    fn group(self) -> Group {
        match self {
            Concept::Approve => Group::Positive,
            Concept::Oppose => Group::Negative,
            Concept::Discuss | Concept::Query => Group::Discuss,
            Concept::Neutral => Group::Neutral,
            Concept::Unrelated => Group::Other,
        }
    }

    fn cues(self) -> &'static [&'static str] {
        match self {
            Concept::Approve => &["approves", "backs", "applauds"],
            Concept::Oppose => &["opposes", "rejects", "condemns"],
            Concept::Discuss => &["reports", "describes", "covers"],
            Concept::Query => &["asks", "wonders", "doubts"],
            Concept::Neutral => &["maybe", "perhaps", "unsure"],
            Concept::Unrelated => &["weather", "recipe", "football"],
        }
    }
}

use Concept as C;

/// Name, source, target and context kinds, and labels with their concepts.
type SyntheticSpec = (&'static str, SourceGroup, TargetKind, ContextKind, &'static [(&'static str, Concept)]);

const DATASETS: [SyntheticSpec; 8] = [
    ("syn_debate_a", SourceGroup::Debates, TargetKind::Topic, ContextKind::Post, &[("for", C::Approve), ("against", C::Oppose)]),
    (
        "syn_debate_b",
        SourceGroup::Debates,
        TargetKind::Claim,
        ContextKind::Sentence,
        &[("pro", C::Approve), ("anti", C::Oppose), ("neutral", C::Neutral)],
    ),
    (
        "syn_news_a",
        SourceGroup::News,
        TargetKind::Headline,
        ContextKind::Article,
        &[("agree", C::Approve), ("disagree", C::Oppose), ("discuss", C::Discuss), ("unrelated", C::Unrelated)],
    ),
    (
        "syn_news_b",
        SourceGroup::News,
        TargetKind::Claim,
        ContextKind::Article,
        &[("support", C::Approve), ("refute", C::Oppose), ("observing", C::Discuss), ("query", C::Query)],
    ),
    (
        "syn_social_a",
        SourceGroup::SocialMedia,
        TargetKind::Topic,
        ContextKind::Tweet,
        &[("favor", C::Approve), ("against", C::Oppose), ("none", C::Neutral)],
    ),
    (
        "syn_social_b",
        SourceGroup::SocialMedia,
        TargetKind::Topic,
        ContextKind::Tweet,
        &[("endorse", C::Approve), ("deny", C::Oppose), ("comment", C::Discuss), ("question", C::Query)],
    ),
    (
        "syn_various_a",
        SourceGroup::Various,
        TargetKind::Topic,
        ContextKind::Post,
        &[("pro", C::Approve), ("con", C::Oppose), ("neutral", C::Neutral)],
    ),
    (
        "syn_various_b",
        SourceGroup::Various,
        TargetKind::Topic,
        ContextKind::Sentence,
        &[("argument for", C::Approve), ("argument against", C::Oppose)],
    ),
];

/// Dataset left out in the out-of-domain setting: it has two labels in the
/// discuss group.
pub const HELD_OUT: &str = "syn_social_b";

fn domain_words(group: SourceGroup) -> (&'static [&'static str], &'static [&'static str]) {
    match group {
        SourceGroup::Debates => (
            &["school uniforms", "death penalty", "nuclear power", "animal testing"],
            &["motion", "house", "rebuttal", "speaker", "floor", "chair", "opening", "closing"],
        ),
        SourceGroup::News => (
            &["election fraud", "market crash", "vaccine trial", "border deal"],
            &["newspaper", "editor", "source", "official", "statement", "press", "agency", "headline"],
        ),
        SourceGroup::SocialMedia => (
            &["new phone", "celebrity wedding", "city marathon", "game launch"],
            &["lol", "tweet", "followers", "thread", "retweet", "omg", "hashtag", "timeline"],
        ),
        SourceGroup::Various => (
            &["minimum wage", "gun control", "online learning", "space travel"],
            &["essay", "author", "paragraph", "sentence", "argument", "premise", "reader", "text"],
        ),
    }
}

const SHARED_FILLER: [&str; 8] = ["the", "people", "really", "about", "this", "today", "many", "think"];

/// Sizes and seed of a generated suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub train_per_dataset: usize,
    pub dev_per_dataset: usize,
    pub test_per_dataset: usize,
    /// Filler words per context, in addition to the cue.
    pub filler_words: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            train_per_dataset: 120,
            dev_per_dataset: 40,
            test_per_dataset: 40,
            filler_words: 6,
            seed: 7,
        }
    }
}

/// Corpus, group table and label-name vectors of a generated suite.
#[derive(Debug, Clone)]
pub struct SyntheticSuite {
    pub corpus: Corpus,
    pub table: HardGroupTable,
    pub label_vectors: EmbeddingTable,
}

pub fn descriptors() -> Vec<DatasetDescriptor> {
    DATASETS
        .iter()
        .map(|(name, group, target, context, labels)| DatasetDescriptor {
            name: name.to_string(),
            source_group: *group,
            target_kind: *target,
            context_kind: *context,
            labels: labels.iter().map(|(l, _)| l.to_string()).collect(),
            split_sizes: None,
        })
        .collect()
}

/// Group of every synthetic label, with the shipped neighbourhoods.
pub fn group_table() -> Result<HardGroupTable> {
    let entries: Vec<(&str, &str, Group)> = DATASETS
        .iter()
        .flat_map(|(name, _, _, _, labels)| labels.iter().map(move |(l, c)| (*name, *l, c.group())))
        .collect();
    HardGroupTable::with_assignments("synthetic-v1", &entries)
}

/// Static vectors for every word of every synthetic label name. Words of one
/// concept sit close together, concepts of one group are nearer to each
/// other than to other groups, and the filler word "argument" is short so
/// that it barely moves an averaged name.
pub fn label_vectors(seed: u64) -> Result<EmbeddingTable> {
    const DIM: usize = 24;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_1abe);
    let mut unit = |scale: f64| -> Vec<f64> {
        let v: Vec<f64> = (0..DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| scale * x / n).collect()
    };
    let group_centres: Vec<Vec<f64>> = Group::ALL.iter().map(|_| unit(1.0)).collect();
    let concept_centres: Vec<Vec<f64>> = Concept::ALL
        .iter()
        .map(|c| {
            let g = &group_centres[Group::ALL.iter().position(|x| *x == c.group()).unwrap()];
            g.iter().zip(unit(0.6)).map(|(a, b)| a + b).collect()
        })
        .collect();
    let mut entries: Vec<(String, Vec<f64>)> = Vec::new();
    for (_, _, _, _, labels) in DATASETS {
        for (name, concept) in labels {
            let word = name.split_whitespace().last().unwrap();
            if entries.iter().any(|(w, _)| w == word) {
                continue;
            }
            let centre = &concept_centres[Concept::ALL.iter().position(|c| c == concept).unwrap()];
            let v = centre.iter().zip(unit(0.15)).map(|(a, b)| a + b).collect();
            entries.push((word.to_string(), v));
        }
    }
    entries.push(("argument".to_string(), unit(0.05)));
    EmbeddingTable::new(EmbeddingKind::StaticWord, entries)
}

fn generate_dataset(index: usize, config: &SyntheticConfig) -> Dataset {
    let (name, group, _, _, labels) = DATASETS[index];
    let descriptor = descriptors().swap_remove(index);
    let (topics, filler) = domain_words(group);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(index as u64));
    let mut examples = Vec::new();
    for (split, count) in [
        (Split::Train, config.train_per_dataset),
        (Split::Dev, config.dev_per_dataset),
        (Split::Test, config.test_per_dataset),
    ] {
        for i in 0..count {
            // cycle through the labels so every split is balanced
            let (label, concept) = labels[i % labels.len()];
            let mut words: Vec<&str> = (0..config.filler_words)
                .map(|_| {
                    if rng.random_bool(0.5) {
                        *filler.choose(&mut rng).unwrap()
                    } else {
                        *SHARED_FILLER.choose(&mut rng).unwrap()
                    }
                })
                .collect();
            let at = rng.random_range(0..=words.len());
            words.insert(at, concept.cues().choose(&mut rng).unwrap());
            examples.push(StanceExample {
                id: format!("{name}-{}-{i}", split.as_str()),
                dataset: name.to_string(),
                split,
                target: topics.choose(&mut rng).unwrap().to_string(),
                context: words.join(" "),
                label: label.to_string(),
            });
        }
    }
    Dataset::new(descriptor, examples)
}

/// Generates all eight datasets.
pub fn generate(config: &SyntheticConfig) -> Result<SyntheticSuite> {
    let datasets = (0..DATASETS.len()).map(|i| generate_dataset(i, config)).collect();
    Ok(SyntheticSuite {
        corpus: Corpus::new(datasets)?,
        table: group_table()?,
        label_vectors: label_vectors(config.seed)?,
    })
}
