//! Shared fixtures for the benchmarks.

use stance_core::corpus::{Dataset, Split};
use stance_core::labelspace::build_label_space;
use stance_core::model::{MoleModel, Vocabulary};
use stance_core::synthetic::{self, SyntheticConfig, SyntheticSuite, HELD_OUT};
use stance_core::trainer::TrainConfig;

pub struct Fixture {
    pub suite: SyntheticSuite,
    pub model: MoleModel,
    pub config: TrainConfig,
}

impl Fixture {
    /// Synthetic corpus and an untrained model over its training datasets.
    pub fn new() -> Self {
        let suite = synthetic::generate(&SyntheticConfig::default()).expect("synthetic corpus");
        let config = TrainConfig { held_out: Some(HELD_OUT.into()), ..TrainConfig::default() };
        let train: Vec<&Dataset> = suite.corpus.datasets().iter().filter(|d| d.name() != HELD_OUT).collect();
        let descriptors: Vec<_> = train.iter().map(|d| d.descriptor.clone()).collect();
        let space = build_label_space(&descriptors, suite.table.clone()).expect("label space");
        let encoder = config.encoder_config();
        let vocab = Vocabulary::build(
            train.iter().flat_map(|d| d.split(Split::Train)).flat_map(|e| [e.target.as_str(), e.context.as_str()]),
            encoder.vocab_min_count,
            encoder.vocab_max_size,
        );
        let model = MoleModel::new(encoder, vocab, space, &descriptors, config.seed).expect("model");
        Self { suite, model, config }
    }

    pub fn dataset(&self, name: &str) -> &Dataset {
        self.suite.corpus.get(name).expect("synthetic dataset")
    }
}

impl Default for Fixture {
    fn default() -> Self {
        Self::new()
    }
}
