//! Training of the mixture-of-label-experts model over single-dataset
//! batches with the combined mixture, own-expert and adversarial losses.

mod optim;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use optim::{AdamW, LinearSchedule};

use crate::autograd::{Gradients, Tape, Var};
use crate::corpus::{Dataset, DatasetDescriptor, Split, StanceExample};
use crate::error::{Result, StanceError};
use crate::eval::macro_f1;
use crate::io::{write_atomic, write_json_atomic};
use crate::labelspace::{build_label_space, HardGroupTable, TableVariant};
use crate::model::{EncoderConfig, ExpertSelection, MoleModel, Vocabulary};

/// How the dataset of the next batch is drawn.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BatchSampling {
    /// Uniformly among datasets that still have batches left.
    #[default]
    Uniform,
    /// Proportionally to the number of batches each dataset has left.
    Proportional,
}

/// Flat training configuration; every field has a default so partial
/// JSON documents are accepted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda: f64,
    pub gamma: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub max_length: usize,
    pub learning_rate: f64,
    pub warmup_fraction: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub held_out: Option<String>,
    pub batch_sampling: BatchSampling,
    /// Experts averaged when scoring the dev splits.
    pub eval_selection: ExpertSelection,
    pub encoder_id: String,
    pub hidden_size: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_size: usize,
    pub init_std: f64,
    pub vocab_min_count: usize,
    pub vocab_max_size: usize,
}

pub const DEFAULT_SEED: u64 = 42;

impl Default for TrainConfig {
    fn default() -> Self {
        let encoder = EncoderConfig::default();
        Self {
            lambda: 0.5,
            gamma: 0.01,
            epochs: 5,
            batch_size: 64,
            max_length: 100,
            learning_rate: 1e-5,
            warmup_fraction: 0.06,
            weight_decay: 1e-8,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: DEFAULT_SEED,
            held_out: None,
            batch_sampling: BatchSampling::Uniform,
            eval_selection: ExpertSelection::All,
            encoder_id: encoder.encoder_id,
            hidden_size: encoder.hidden_size,
            layers: encoder.layers,
            heads: encoder.heads,
            ff_size: encoder.ff_size,
            init_std: encoder.init_std,
            vocab_min_count: encoder.vocab_min_count,
            vocab_max_size: encoder.vocab_max_size,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(StanceError::invalid(msg.to_string()));
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda must lie in [0, 1]");
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be a finite non-negative number");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..=1.0).contains(&self.warmup_fraction) {
            return bad("warmup_fraction must lie in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 || self.weight_decay < 0.0 {
            return bad("epsilon must be positive and weight_decay non-negative");
        }
        self.encoder_config().validate()
    }

    pub fn encoder_config(&self) -> EncoderConfig {
        EncoderConfig {
            encoder_id: self.encoder_id.clone(),
            hidden_size: self.hidden_size,
            max_length: self.max_length,
            layers: self.layers,
            heads: self.heads,
            ff_size: self.ff_size,
            init_std: self.init_std,
            vocab_min_count: self.vocab_min_count,
            vocab_max_size: self.vocab_max_size,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| StanceError::schema(path.display().to_string(), e.to_string()))
    }

    /// Applies a `key=value` override; the value is read as JSON when it
    /// parses, otherwise as a plain string.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let mut doc = serde_json::to_value(&*self)?;
        let map = doc.as_object_mut().expect("config serialises to an object");
        if !map.contains_key(key) {
            return Err(StanceError::invalid(format!("unknown config key `{key}`")));
        }
        let value = serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
        map.insert(key.to_string(), value);
        *self = serde_json::from_value(doc).map_err(|e| StanceError::invalid(format!("{key}={raw}: {e}")))?;
        Ok(())
    }

    fn epoch_seed(&self, epoch: usize) -> u64 {
        self.seed ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
    }
}

/// Loss terms of one batch and their weighted sum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// NLL of the gold label under the averaged distribution.
    pub mixture: f64,
    /// NLL under the expert of the batch's own domain.
    pub own_expert: f64,
    /// Cross-entropy of the dataset classifier.
    pub adversarial: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn compose(mixture: f64, own_expert: f64, adversarial: f64, lambda: f64, gamma: f64) -> Self {
        Self {
            mixture,
            own_expert,
            adversarial,
            total: lambda * mixture + (1.0 - lambda) * own_expert + gamma * adversarial,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.mixture.is_finite() && self.own_expert.is_finite() && self.adversarial.is_finite() && self.total.is_finite()
    }
}

/// Examples of one dataset trained on in a single optimizer step.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<'a> {
    pub dataset: &'a str,
    pub examples: Vec<&'a StanceExample>,
}

/// Splits each dataset's training examples into shuffled batches and
/// interleaves them, drawing the dataset of every batch at random.
pub fn make_epoch_batches<'a>(
    datasets: &[&'a Dataset],
    batch_size: usize,
    seed: u64,
    sampling: BatchSampling,
) -> Result<Vec<Batch<'a>>> {
    if batch_size == 0 {
        return Err(StanceError::invalid("batch_size must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut queues: Vec<(&str, std::collections::VecDeque<Vec<&StanceExample>>)> = Vec::new();
    for d in datasets {
        let mut train: Vec<&StanceExample> = d.split(Split::Train).collect();
        if train.is_empty() {
            continue;
        }
        train.shuffle(&mut rng);
        let chunks = train.chunks(batch_size).map(<[_]>::to_vec).collect();
        queues.push((d.name(), chunks));
    }
    if queues.is_empty() {
        return Err(StanceError::invalid("no training examples"));
    }
    let mut batches = Vec::new();
    loop {
        let live: Vec<usize> = (0..queues.len()).filter(|&i| !queues[i].1.is_empty()).collect();
        if live.is_empty() {
            break;
        }
        let pick = match sampling {
            BatchSampling::Uniform => live[rng.random_range(0..live.len())],
            BatchSampling::Proportional => {
                let total: usize = live.iter().map(|&i| queues[i].1.len()).sum();
                let mut r = rng.random_range(0..total);
                let mut chosen = live[0];
                for &i in &live {
                    if r < queues[i].1.len() {
                        chosen = i;
                        break;
                    }
                    r -= queues[i].1.len();
                }
                chosen
            }
        };
        let (name, queue) = &mut queues[pick];
        batches.push(Batch {
            dataset: name,
            examples: queue.pop_front().unwrap(),
        });
    }
    Ok(batches)
}

struct ExampleTerms {
    mixture: Var,
    own_expert: Var,
    adversarial: Option<Var>,
}

fn example_terms(model: &MoleModel, tape: &mut Tape, example: &StanceExample, mask: &[bool]) -> Result<ExampleTerms> {
    let space = model.label_space();
    let gold = space.find(&example.dataset, &example.label)?.global_index;
    if !mask[gold] {
        return Err(StanceError::invalid(format!("gold label {} is outside the mask", example.label)));
    }
    let own = model.domain_of(&example.dataset).ok_or_else(|| StanceError::UnknownDataset(example.dataset.clone()))?;
    let ids = model.tokenize_pair(&example.context, &example.target)?;
    let f = model.forward_tape(tape, &ids, mask)?;

    let mut picked: Vec<Var> = f.expert_log_probs.iter().map(|lp| tape.pick(*lp, 0, gold)).collect();
    picked.push(tape.pick(f.global_log_probs, 0, gold));
    let count = picked.len() as f64;
    let stacked = tape.concat_cols(&picked);
    let log_sum = tape.logsumexp(stacked);
    // -log((1/n) * sum_k p_k[gold])
    let shifted = tape.scale(log_sum, -1.0);
    let offset = tape.constant(ndarray::arr2(&[[count.ln()]]));
    let mixture = tape.add(shifted, offset);

    let own_pick = tape.pick(f.expert_log_probs[own], 0, gold);
    let own_expert = tape.scale(own_pick, -1.0);

    let adversarial = match f.domain_logits {
        Some(logits) => {
            let class = model
                .adversary_classes()
                .iter()
                .position(|c| *c == example.dataset)
                .ok_or_else(|| StanceError::UnknownDataset(example.dataset.clone()))?;
            let all = vec![true; model.adversary_classes().len()];
            let lp = tape.masked_log_softmax(logits, &all);
            let p = tape.pick(lp, 0, class);
            Some(tape.scale(p, -1.0))
        }
        None => None,
    };
    Ok(ExampleTerms {
        mixture,
        own_expert,
        adversarial,
    })
}

fn batch_dataset<'a>(examples: &[&'a StanceExample]) -> Result<&'a str> {
    let first = examples.first().ok_or_else(|| StanceError::invalid("empty batch"))?;
    if let Some(other) = examples.iter().find(|e| e.dataset != first.dataset) {
        return Err(StanceError::invalid(format!(
            "batch mixes datasets {} and {}",
            first.dataset, other.dataset
        )));
    }
    Ok(&first.dataset)
}

fn effective_gamma(model: &MoleModel, gamma: f64) -> f64 {
    if model.adversary_classes().is_empty() {
        0.0
    } else {
        gamma
    }
}

/// Batch-mean loss terms and the gradient of the weighted total.
///
/// With `include_adversary` unset the dataset classifier is left off the
/// tape entirely, so its term is reported as zero.
pub fn loss_and_gradients(
    model: &MoleModel,
    examples: &[&StanceExample],
    lambda: f64,
    gamma: f64,
    include_adversary: bool,
) -> Result<(LossBreakdown, Gradients)> {
    let dataset = batch_dataset(examples)?;
    let mask = model.label_space().mask_for(dataset)?;
    let gamma = effective_gamma(model, gamma);
    let n = examples.len() as f64;
    let per_example: Vec<Result<([f64; 3], Gradients)>> = examples
        .par_iter()
        .map(|e| {
            let mut tape = Tape::new(model.params());
            let terms = example_terms(model, &mut tape, e, &mask)?;
            let a = tape.scale(terms.mixture, lambda / n);
            let b = tape.scale(terms.own_expert, (1.0 - lambda) / n);
            let mut root = tape.add(a, b);
            let mut adversarial = 0.0;
            if let (true, Some(ld)) = (include_adversary, terms.adversarial) {
                adversarial = tape.scalar(ld);
                let c = tape.scale(ld, gamma / n);
                root = tape.add(root, c);
            }
            let values = [tape.scalar(terms.mixture), tape.scalar(terms.own_expert), adversarial];
            Ok((values, tape.backward(root)))
        })
        .collect();
    let mut sums = [0.0; 3];
    let mut grads = Gradients::default();
    for r in per_example {
        let (values, g) = r?;
        for (s, v) in sums.iter_mut().zip(values) {
            *s += v;
        }
        grads.accumulate(&g, 1.0);
    }
    let losses = LossBreakdown::compose(sums[0] / n, sums[1] / n, sums[2] / n, lambda, gamma);
    Ok((losses, grads))
}

/// Batch-mean loss terms without gradients.
pub fn compute_losses(model: &MoleModel, examples: &[&StanceExample], config: &TrainConfig) -> Result<LossBreakdown> {
    Ok(loss_and_gradients(model, examples, config.lambda, config.gamma, true)?.0)
}

/// Argmax label names of the averaged distribution under `dataset`'s mask,
/// lower label index winning ties.
pub fn predict_labels(
    model: &MoleModel,
    dataset: &str,
    examples: &[&StanceExample],
    selection: ExpertSelection,
) -> Result<Vec<String>> {
    let space = model.label_space();
    let mask = space.mask_for(dataset)?;
    examples
        .par_iter()
        .map(|e| {
            let out = model.forward(&e.context, &e.target, &mask, selection, Some(dataset))?;
            let best = argmax(&out.combined, &mask).expect("mask has a visible label");
            Ok(space.label(best).name.clone())
        })
        .collect()
}

/// First index of the largest visible probability.
pub(crate) fn argmax(p: &[f64], mask: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, (v, m)) in p.iter().zip(mask).enumerate() {
        if *m && best.is_none_or(|b| *v > p[b]) {
            best = Some(i);
        }
    }
    best
}

/// Macro-F1 (percent) of the model on one split of `dataset`.
pub fn evaluate_split(model: &MoleModel, dataset: &Dataset, split: Split, selection: ExpertSelection) -> Result<Option<f64>> {
    let examples: Vec<&StanceExample> = dataset.split(split).collect();
    if examples.is_empty() {
        return Ok(None);
    }
    let preds = predict_labels(model, dataset.name(), &examples, selection)?;
    let golds: Vec<&str> = examples.iter().map(|e| e.label.as_str()).collect();
    macro_f1(&preds, &golds, &dataset.descriptor.labels).map(Some)
}

/// Metrics of one finished epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// One-based epoch number.
    pub epoch: usize,
    /// Optimizer steps taken so far.
    pub step: usize,
    pub train_loss: LossBreakdown,
    pub dev_f1: BTreeMap<String, f64>,
    pub average_dev_f1: f64,
}

/// Picks the epoch with the best average dev macro-F1; the earliest one
/// wins ties.
pub fn select_checkpoint(history: &[EpochRecord]) -> Result<&EpochRecord> {
    let mut best: Option<&EpochRecord> = None;
    for r in history {
        if best.is_none_or(|b| r.average_dev_f1 > b.average_dev_f1) {
            best = Some(r);
        }
    }
    best.ok_or_else(|| StanceError::invalid("no evaluated epoch to select from"))
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    /// Hard-group table attached to the label space.
    pub table: HardGroupTable,
    /// When set, every epoch is written to `<dir>/<run_id>/epoch-<n>/`.
    pub checkpoint_dir: Option<PathBuf>,
    pub run_id: String,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            table: HardGroupTable::builtin(TableVariant::Repaired),
            checkpoint_dir: None,
            run_id: "run".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Model restored to the selected epoch.
    pub model: MoleModel,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

/// Trains on every dataset of `datasets` except the configured held-out one.
pub fn train(datasets: &[&Dataset], config: &TrainConfig) -> Result<TrainOutcome> {
    train_with_options(datasets, config, &TrainOptions::default())
}

pub fn train_with_options(datasets: &[&Dataset], config: &TrainConfig, options: &TrainOptions) -> Result<TrainOutcome> {
    config.validate()?;
    if let Some(h) = &config.held_out {
        if !datasets.iter().any(|d| d.name() == h) {
            return Err(StanceError::UnknownDataset(h.clone()));
        }
    }
    let training: Vec<&Dataset> =
        datasets.iter().copied().filter(|d| config.held_out.as_deref() != Some(d.name())).collect();
    if training.is_empty() {
        return Err(StanceError::invalid("no dataset left to train on"));
    }
    let descriptors: Vec<DatasetDescriptor> = training.iter().map(|d| d.descriptor.clone()).collect();
    let space = build_label_space(&descriptors, options.table.clone())?;
    let encoder = config.encoder_config();
    let vocab = Vocabulary::build(
        training
            .iter()
            .flat_map(|d| d.split(Split::Train))
            .flat_map(|e| [e.target.as_str(), e.context.as_str()]),
        encoder.vocab_min_count,
        encoder.vocab_max_size,
    );
    let mut model = MoleModel::new(encoder, vocab, space, &descriptors, config.seed)?;
    let mut optimizer = AdamW::new(model.params(), config.beta1, config.beta2, config.epsilon, config.weight_decay);

    let batches_per_epoch: usize =
        training.iter().map(|d| d.split(Split::Train).count().div_ceil(config.batch_size)).sum();
    if batches_per_epoch == 0 {
        return Err(StanceError::invalid("no training examples"));
    }
    let schedule = LinearSchedule::new(config.learning_rate, config.warmup_fraction, config.epochs * batches_per_epoch);
    let run_dir = options.checkpoint_dir.as_ref().map(|d| d.join(&options.run_id));

    let mut history: Vec<EpochRecord> = Vec::new();
    let mut best: Option<(f64, crate::autograd::ParamStore)> = None;
    let mut step = 0usize;
    for epoch in 1..=config.epochs {
        let batches = make_epoch_batches(&training, config.batch_size, config.epoch_seed(epoch), config.batch_sampling)?;
        let mut totals = [0.0; 4];
        for batch in &batches {
            let (losses, grads) = loss_and_gradients(&model, &batch.examples, config.lambda, config.gamma, true)?;
            if !losses.is_finite() || !grads.is_finite() {
                return Err(StanceError::Diverged {
                    epoch,
                    step,
                    dataset: batch.dataset.to_string(),
                    detail: format!("{losses:?}"),
                });
            }
            optimizer.step(model.params_mut(), &grads, schedule.rate(step));
            step += 1;
            for (t, v) in totals.iter_mut().zip([losses.mixture, losses.own_expert, losses.adversarial, losses.total]) {
                *t += v;
            }
        }
        let nb = batches.len() as f64;
        let train_loss = LossBreakdown {
            mixture: totals[0] / nb,
            own_expert: totals[1] / nb,
            adversarial: totals[2] / nb,
            total: totals[3] / nb,
        };

        let (dev_f1, average_dev_f1) = dev_scores(&model, &training, config.eval_selection)?;
        log::info!(
            "epoch {epoch}: loss {:.4} (mixture {:.4}, own {:.4}, adversary {:.4}), dev macro-F1 {average_dev_f1:.2}",
            train_loss.total,
            train_loss.mixture,
            train_loss.own_expert,
            train_loss.adversarial
        );
        let record = EpochRecord {
            epoch,
            step,
            train_loss,
            dev_f1,
            average_dev_f1,
        };
        if let Some(dir) = &run_dir {
            let epoch_dir = dir.join(format!("epoch-{epoch}"));
            model.save(&epoch_dir.join("model.json"))?;
            write_json_atomic(&epoch_dir.join("metrics.json"), &record)?;
        }
        if best.as_ref().is_none_or(|(score, _)| average_dev_f1 > *score) {
            best = Some((average_dev_f1, model.params().clone()));
        }
        history.push(record);
    }

    let chosen = select_checkpoint(&history)?.epoch;
    let (_, params) = best.expect("at least one epoch ran");
    *model.params_mut() = params;
    if let Some(dir) = &run_dir {
        write_atomic(&dir.join("best"), format!("epoch-{chosen}\n").as_bytes())?;
    }
    Ok(TrainOutcome {
        model,
        history,
        best_epoch: chosen,
    })
}

/// Per-dataset dev macro-F1 and their mean. Datasets without a dev split
/// are scored on their training split instead.
fn dev_scores(model: &MoleModel, datasets: &[&Dataset], selection: ExpertSelection) -> Result<(BTreeMap<String, f64>, f64)> {
    let scores: Vec<Result<(String, f64)>> = datasets
        .par_iter()
        .map(|d| {
            let score = match evaluate_split(model, d, Split::Dev, selection)? {
                Some(s) => s,
                None => {
                    log::warn!("{} has no dev split; scoring its training split", d.name());
                    evaluate_split(model, d, Split::Train, selection)?.unwrap_or(0.0)
                }
            };
            Ok((d.name().to_string(), score))
        })
        .collect();
    let scores: BTreeMap<String, f64> = scores.into_iter().collect::<Result<_>>()?;
    let average = scores.values().sum::<f64>() / scores.len() as f64;
    Ok((scores, average))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ContextKind, SourceGroup, TargetKind};

    fn dataset(name: &str, group: SourceGroup, labels: &[&str], n_train: usize, n_dev: usize) -> Dataset {
        let descriptor = DatasetDescriptor {
            name: name.into(),
            source_group: group,
            target_kind: TargetKind::Topic,
            context_kind: ContextKind::Post,
            labels: labels.iter().map(|s| s.to_string()).collect(),
            split_sizes: None,
        };
        let mut examples = Vec::new();
        for (split, n) in [(Split::Train, n_train), (Split::Dev, n_dev)] {
            for i in 0..n {
                let label = labels[i % labels.len()];
                examples.push(StanceExample {
                    id: format!("{}-{i}", split.as_str()),
                    dataset: name.into(),
                    split,
                    target: format!("topic {name}"),
                    context: format!("cue{label} filler words {i}"),
                    label: label.into(),
                });
            }
        }
        Dataset::new(descriptor, examples)
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            hidden_size: 8,
            heads: 2,
            ff_size: 16,
            layers: 1,
            max_length: 16,
            batch_size: 8,
            learning_rate: 5e-3,
            warmup_fraction: 0.0,
            epochs: 2,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn loss_composition_example() {
        let l = LossBreakdown::compose(1.0, 0.6, 2.0, 0.5, 0.01);
        assert!((l.total - 0.82).abs() < 1e-15);
    }

    #[test]
    fn batches_are_pure_and_exhaustive() {
        let a = dataset("a", SourceGroup::News, &["x", "y"], 128, 0);
        let b = dataset("b", SourceGroup::News, &["x", "y"], 64, 0);
        let batches = make_epoch_batches(&[&a, &b], 64, 1, BatchSampling::Uniform).unwrap();
        let mut names: Vec<&str> = batches.iter().map(|b| b.dataset).collect();
        names.sort();
        assert_eq!(names, vec!["a", "a", "b"]);
        for batch in &batches {
            assert!(batch.examples.iter().all(|e| e.dataset == batch.dataset));
        }
        let single = make_epoch_batches(&[&b], 64, 1, BatchSampling::Uniform).unwrap();
        assert_eq!(single.len(), 1);
        let again = make_epoch_batches(&[&a, &b], 64, 1, BatchSampling::Uniform).unwrap();
        assert_eq!(batches, again);
        let empty = dataset("e", SourceGroup::News, &["x"], 0, 3);
        assert!(make_epoch_batches(&[&empty], 4, 0, BatchSampling::Uniform).is_err());
    }

    #[test]
    fn proportional_sampling_covers_everything() {
        let a = dataset("a", SourceGroup::News, &["x", "y"], 50, 0);
        let b = dataset("b", SourceGroup::Debates, &["x", "y"], 7, 0);
        let batches = make_epoch_batches(&[&a, &b], 4, 9, BatchSampling::Proportional).unwrap();
        let seen: usize = batches.iter().map(|b| b.examples.len()).sum();
        assert_eq!(seen, 57);
    }

    #[test]
    fn checkpoint_selection_rules() {
        let rec = |epoch, avg| EpochRecord {
            epoch,
            step: 0,
            train_loss: LossBreakdown::default(),
            dev_f1: BTreeMap::new(),
            average_dev_f1: avg,
        };
        assert_eq!(select_checkpoint(&[rec(1, 0.5), rec(2, 0.7), rec(3, 0.65)]).unwrap().epoch, 2);
        assert_eq!(select_checkpoint(&[rec(1, 0.5)]).unwrap().epoch, 1);
        assert_eq!(select_checkpoint(&[rec(1, 0.6), rec(2, 0.6)]).unwrap().epoch, 1);
        assert!(select_checkpoint(&[]).is_err());
    }

    #[test]
    fn config_overrides_and_validation() {
        let mut c = TrainConfig::default();
        c.set("gamma", "0").unwrap();
        c.set("held_out", "emergent").unwrap();
        c.set("batch_sampling", "proportional").unwrap();
        assert_eq!(c.gamma, 0.0);
        assert_eq!(c.held_out.as_deref(), Some("emergent"));
        assert_eq!(c.batch_sampling, BatchSampling::Proportional);
        assert!(c.set("nonsense", "1").is_err());
        assert!(c.set("epochs", "many").is_err());
        c.lambda = 1.5;
        assert!(c.validate().is_err());
        let partial: TrainConfig = serde_json::from_str(r#"{"epochs": 3}"#).unwrap();
        assert_eq!(partial.epochs, 3);
        assert_eq!(partial.lambda, 0.5);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"epoch": 3}"#).is_err());
    }

    fn untrained(datasets: &[&Dataset], config: &TrainConfig) -> MoleModel {
        let descriptors: Vec<DatasetDescriptor> = datasets.iter().map(|d| d.descriptor.clone()).collect();
        let space = build_label_space(&descriptors, HardGroupTable::builtin(TableVariant::Repaired)).unwrap();
        let vocab = Vocabulary::build(datasets.iter().flat_map(|d| d.examples.iter().map(|e| e.context.as_str())), 1, 1000);
        MoleModel::new(config.encoder_config(), vocab, space, &descriptors, 3).unwrap()
    }

    #[test]
    fn uniform_model_has_log_label_count_loss() {
        let d = dataset("four", SourceGroup::News, &["a", "b", "c", "d"], 8, 0);
        let other = dataset("two", SourceGroup::Debates, &["a", "b"], 8, 0);
        let config = small_config();
        let mut m = untrained(&[&d, &other], &config);
        let id = m.label_embedding_id();
        m.params_mut().get_mut(id).fill(0.0);
        let batch: Vec<&StanceExample> = d.examples.iter().collect();
        let l = compute_losses(&m, &batch, &config).unwrap();
        assert!((l.mixture - 4f64.ln()).abs() < 1e-12);
        assert!((l.own_expert - 4f64.ln()).abs() < 1e-12);
        assert!((l.total - (0.5 * l.mixture + 0.5 * l.own_expert + 0.01 * l.adversarial)).abs() < 1e-12);
    }

    #[test]
    fn mixed_or_foreign_batches_are_rejected() {
        let a = dataset("a", SourceGroup::News, &["x", "y"], 4, 0);
        let b = dataset("b", SourceGroup::Debates, &["x", "y"], 4, 0);
        let config = small_config();
        let m = untrained(&[&a, &b], &config);
        let mixed = vec![&a.examples[0], &b.examples[0]];
        assert!(compute_losses(&m, &mixed, &config).is_err());
        let mut wrong = a.examples[0].clone();
        wrong.label = "z".into();
        assert!(compute_losses(&m, &[&wrong], &config).is_err());
    }

    #[test]
    fn zero_gamma_matches_the_task_only_gradient() {
        let a = dataset("a", SourceGroup::News, &["x", "y"], 6, 0);
        let b = dataset("b", SourceGroup::Debates, &["x", "y"], 6, 0);
        let m = untrained(&[&a, &b], &small_config());
        let batch: Vec<&StanceExample> = a.examples.iter().collect();
        let (_, with) = loss_and_gradients(&m, &batch, 0.5, 0.0, true).unwrap();
        let (_, without) = loss_and_gradients(&m, &batch, 0.5, 0.0, false).unwrap();
        for id in m.params().ids() {
            let shape = m.params().get(id).dim();
            let (g1, g2) = (with.dense(id, shape), without.dense(id, shape));
            for (x, y) in g1.iter().zip(g2.iter()) {
                assert!((x - y).abs() < 1e-15, "{}", m.params().name(id));
            }
        }
    }

    #[test]
    fn task_gradient_matches_finite_differences() {
        let a = dataset("a", SourceGroup::News, &["x", "y", "z"], 3, 0);
        let b = dataset("b", SourceGroup::Debates, &["x", "y"], 3, 0);
        let m = untrained(&[&a, &b], &small_config());
        let batch: Vec<&StanceExample> = a.examples.iter().collect();
        let (_, grads) = loss_and_gradients(&m, &batch, 0.3, 0.0, false).unwrap();
        let loss_at = |model: &MoleModel| loss_and_gradients(model, &batch, 0.3, 0.0, false).unwrap().0.total;
        for name in ["label_embedding", "expert.news.ff_in.weight", "encoder.layer0.query.weight"] {
            let id = m.params().ids().find(|i| m.params().name(*i) == name).unwrap();
            let analytic = grads.dense(id, m.params().get(id).dim());
            let mut plus = m.clone();
            plus.params_mut().get_mut(id)[[0, 1]] += 1e-6;
            let mut minus = m.clone();
            minus.params_mut().get_mut(id)[[0, 1]] -= 1e-6;
            let numeric = (loss_at(&plus) - loss_at(&minus)) / 2e-6;
            assert!((numeric - analytic[[0, 1]]).abs() < 1e-6 * (1.0 + numeric.abs()), "{name}: {numeric} vs {}", analytic[[0, 1]]);
        }
    }

    #[test]
    fn single_dataset_training_disables_the_adversary_and_overfits() {
        let d = dataset("solo", SourceGroup::News, &["yes", "no"], 64, 8);
        let config = TrainConfig {
            lambda: 1.0,
            gamma: 0.0,
            epochs: 6,
            batch_size: 64,
            learning_rate: 1e-2,
            ..small_config()
        };
        let outcome = train(&[&d], &config).unwrap();
        assert!(outcome.model.adversary_classes().is_empty());
        let losses: Vec<f64> = outcome.history.iter().map(|r| r.train_loss.total).collect();
        for w in losses.windows(2) {
            assert!(w[1] < w[0], "{losses:?}");
        }
        assert_eq!(outcome.history.iter().map(|r| r.train_loss.adversarial).sum::<f64>(), 0.0);
    }

    #[test]
    fn held_out_dataset_is_never_trained_on() {
        let a = dataset("a", SourceGroup::News, &["x", "y"], 16, 4);
        let b = dataset("b", SourceGroup::Debates, &["x", "y"], 16, 4);
        let c = dataset("c", SourceGroup::Debates, &["u", "v"], 16, 4);
        let config = TrainConfig {
            held_out: Some("c".into()),
            ..small_config()
        };
        let outcome = train(&[&a, &b, &c], &config).unwrap();
        assert_eq!(outcome.model.adversary_classes(), &["a".to_string(), "b".to_string()]);
        assert!(!outcome.model.label_space().contains_dataset("c"));
        assert!(outcome.history.iter().all(|r| !r.dev_f1.contains_key("c")));
        let missing = TrainConfig {
            held_out: Some("zzz".into()),
            ..small_config()
        };
        assert!(train(&[&a, &b], &missing).is_err());
    }

    #[test]
    fn identical_seeds_give_identical_runs() {
        let a = dataset("a", SourceGroup::News, &["x", "y"], 24, 4);
        let b = dataset("b", SourceGroup::Debates, &["x", "y", "z"], 24, 4);
        let first = train(&[&a, &b], &small_config()).unwrap();
        let second = train(&[&a, &b], &small_config()).unwrap();
        assert_eq!(first.history, second.history);
        assert_eq!(first.model, second.model);
    }

    #[test]
    fn checkpoint_layout_on_disk() {
        let a = dataset("a", SourceGroup::News, &["x", "y"], 8, 2);
        let b = dataset("b", SourceGroup::Debates, &["x", "y"], 8, 2);
        let dir = tempfile::tempdir().unwrap();
        let options = TrainOptions {
            checkpoint_dir: Some(dir.path().to_path_buf()),
            run_id: "r1".into(),
            ..TrainOptions::default()
        };
        let outcome = train_with_options(&[&a, &b], &small_config(), &options).unwrap();
        let run = dir.path().join("r1");
        assert!(run.join("epoch-1/model.json").exists());
        assert!(run.join("epoch-2/metrics.json").exists());
        let marker = std::fs::read_to_string(run.join("best")).unwrap();
        assert_eq!(marker.trim(), format!("epoch-{}", outcome.best_epoch));
        let saved = MoleModel::load(&run.join(marker.trim()).join("model.json")).unwrap();
        assert_eq!(saved.params(), outcome.model.params());
    }
}
