//! Mixture-of-label-experts network: a shared encoder, one extra
//! transformer layer per source domain plus a global one, a shared
//! label-embedding output layer with per-dataset masking, and a dataset
//! classifier behind a gradient-reversal point.

mod encoder;
mod layers;

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use encoder::{
    pair_ids, truncate_pair, EncoderConfig, ToyEncoder, Vocabulary, CLS, SEP, SPECIAL_TOKENS_PER_PAIR, TOY_ENCODER, UNK,
};
pub use layers::{LayerNormParams, Linear, TransformerLayer};

use crate::autograd::{Matrix, ParamId, ParamStore, Tape, Var};
use crate::corpus::{DatasetDescriptor, SourceGroup};
use crate::error::{Result, StanceError};
use crate::io::write_json_atomic;
use crate::labelspace::LabelSpace;

const CHECKPOINT_FORMAT: &str = "mole-checkpoint-v1";

/// Which experts enter the averaged distribution at inference time.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpertSelection {
    /// Every domain expert plus the global layer.
    #[default]
    All,
    /// Only the expert of the example's own domain plus the global layer.
    OwnDomain,
}

impl std::str::FromStr for ExpertSelection {
    type Err = StanceError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Self::All),
            "own-domain" => Ok(Self::OwnDomain),
            other => Err(StanceError::invalid(format!("unknown expert selection `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expert {
    Domain(usize),
    Global,
}

/// Tape handles of one forward pass.
#[derive(Debug, Clone)]
pub struct TapeForward {
    pub tokens: Var,
    pub expert_pooled: Vec<Var>,
    pub global_pooled: Var,
    pub expert_log_probs: Vec<Var>,
    pub global_log_probs: Var,
    /// Dataset-classifier logits, fed through the gradient-reversal point.
    pub domain_logits: Option<Var>,
}

/// Plain values of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub expert_pooled: Vec<Vec<f64>>,
    pub global_pooled: Vec<f64>,
    pub expert_probs: Vec<Vec<f64>>,
    pub global_probs: Vec<f64>,
    pub combined: Vec<f64>,
    pub domain_logits: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoleModel {
    config: EncoderConfig,
    vocab: Vocabulary,
    space: LabelSpace,
    domains: Vec<SourceGroup>,
    dataset_domains: BTreeMap<String, usize>,
    adversary_classes: Vec<String>,
    encoder: ToyEncoder,
    experts: Vec<TransformerLayer>,
    global: TransformerLayer,
    label_embedding: ParamId,
    adversary: Option<Linear>,
    params: ParamStore,
}

impl MoleModel {
    /// Builds a freshly initialised model for `training` datasets.
    ///
    /// One expert is created per distinct source group among them; the
    /// dataset classifier has one class per training dataset and is left
    /// out when there is only one.
    pub fn new(
        config: EncoderConfig,
        vocab: Vocabulary,
        space: LabelSpace,
        training: &[DatasetDescriptor],
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if training.is_empty() {
            return Err(StanceError::invalid("model needs at least one training dataset"));
        }
        for d in training {
            if !space.contains_dataset(&d.name) {
                return Err(StanceError::UnknownDataset(d.name.clone()));
            }
        }
        let domains: Vec<SourceGroup> =
            SourceGroup::ALL.into_iter().filter(|g| training.iter().any(|d| d.source_group == *g)).collect();
        let dataset_domains = training
            .iter()
            .map(|d| (d.name.clone(), domains.iter().position(|g| *g == d.source_group).unwrap()))
            .collect();
        let adversary_classes: Vec<String> =
            if training.len() > 1 { training.iter().map(|d| d.name.clone()).collect() } else { Vec::new() };

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let d = config.hidden_size;
        let std = config.init_std;
        let encoder = ToyEncoder::new(&mut params, &config, vocab.len(), &mut rng);
        let experts = domains
            .iter()
            .map(|g| TransformerLayer::new(&mut params, &format!("expert.{}", g.as_str()), d, config.heads, config.ff_size, std, &mut rng))
            .collect();
        let global = TransformerLayer::new(&mut params, "expert.global", d, config.heads, config.ff_size, std, &mut rng);
        let label_embedding = params.add("label_embedding", layers::normal_matrix(&mut rng, space.len(), d, std));
        let adversary = (!adversary_classes.is_empty())
            .then(|| Linear::new(&mut params, "adversary", d, adversary_classes.len(), std, &mut rng));
        Ok(Self {
            config,
            vocab,
            space,
            domains,
            dataset_domains,
            adversary_classes,
            encoder,
            experts,
            global,
            label_embedding,
            adversary,
            params,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn label_space(&self) -> &LabelSpace {
        &self.space
    }

    pub fn domains(&self) -> &[SourceGroup] {
        &self.domains
    }

    pub fn domain_of(&self, dataset: &str) -> Option<usize> {
        self.dataset_domains.get(dataset).copied()
    }

    pub fn training_datasets(&self) -> impl Iterator<Item = &str> {
        self.dataset_domains.keys().map(String::as_str)
    }

    /// Classes of the dataset classifier; empty when it is disabled.
    pub fn adversary_classes(&self) -> &[String] {
        &self.adversary_classes
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn encoder(&self) -> &ToyEncoder {
        &self.encoder
    }

    pub fn expert_layers(&self) -> &[TransformerLayer] {
        &self.experts
    }

    pub fn global_layer(&self) -> &TransformerLayer {
        &self.global
    }

    pub fn label_embedding(&self) -> &Matrix {
        self.params.get(self.label_embedding)
    }

    pub fn label_embedding_id(&self) -> ParamId {
        self.label_embedding
    }

    /// Parameters added on top of the encoder: expert and global layers,
    /// the label embedding and the dataset classifier.
    pub fn added_parameter_count(&self) -> usize {
        let encoder: usize = self
            .params
            .ids()
            .filter(|id| self.params.name(*id).starts_with("encoder."))
            .map(|id| self.params.get(id).len())
            .sum();
        self.params.scalar_count() - encoder
    }

    pub fn tokenize_pair(&self, context: &str, target: &str) -> Result<Vec<usize>> {
        pair_ids(&self.vocab, context, target, self.config.max_length)
    }

    /// Token representations from the shared encoder.
    pub fn encode_pair(&self, tape: &mut Tape, ids: &[usize]) -> Var {
        self.encoder.forward(tape, ids)
    }

    /// Runs one added layer over all token representations and returns its
    /// output at the sequence-start position, `1 x hidden_size`.
    pub fn expert_forward(&self, tape: &mut Tape, tokens: Var, expert: Expert) -> Result<Var> {
        let layer = match expert {
            Expert::Global => &self.global,
            Expert::Domain(k) => self
                .experts
                .get(k)
                .ok_or_else(|| StanceError::invalid(format!("expert {k} out of range (K = {})", self.experts.len())))?,
        };
        let out = layer.forward(tape, tokens);
        Ok(tape.row(out, 0))
    }

    /// `L h` for a pooled representation, `1 x M`.
    pub fn label_logits(&self, tape: &mut Tape, pooled: Var) -> Var {
        let table = tape.param(self.label_embedding);
        let table_t = tape.transpose(table);
        tape.matmul(pooled, table_t)
    }

    /// Dataset-classifier logits of the global representation, with the
    /// gradient reversed on its way back into the network.
    pub fn domain_logits(&self, tape: &mut Tape, global_pooled: Var) -> Option<Var> {
        let head = self.adversary.as_ref()?;
        let reversed = tape.reverse_gradient(global_pooled);
        Some(head.forward(tape, reversed))
    }

    pub fn forward_tape(&self, tape: &mut Tape, ids: &[usize], mask: &[bool]) -> Result<TapeForward> {
        check_mask(mask, self.space.len())?;
        let tokens = self.encode_pair(tape, ids);
        let mut expert_pooled = Vec::with_capacity(self.experts.len());
        let mut expert_log_probs = Vec::with_capacity(self.experts.len());
        for k in 0..self.experts.len() {
            let h = self.expert_forward(tape, tokens, Expert::Domain(k))?;
            let logits = self.label_logits(tape, h);
            expert_log_probs.push(tape.masked_log_softmax(logits, mask));
            expert_pooled.push(h);
        }
        let global_pooled = self.expert_forward(tape, tokens, Expert::Global)?;
        let logits = self.label_logits(tape, global_pooled);
        let global_log_probs = tape.masked_log_softmax(logits, mask);
        let domain_logits = self.domain_logits(tape, global_pooled);
        Ok(TapeForward {
            tokens,
            expert_pooled,
            global_pooled,
            expert_log_probs,
            global_log_probs,
            domain_logits,
        })
    }

    /// Full forward pass of one (context, target) pair under `mask`.
    ///
    /// `dataset` names the example's dataset and is needed only for
    /// [`ExpertSelection::OwnDomain`].
    pub fn forward(
        &self,
        context: &str,
        target: &str,
        mask: &[bool],
        selection: ExpertSelection,
        dataset: Option<&str>,
    ) -> Result<ForwardOutput> {
        check_mask(mask, self.space.len())?;
        let ids = self.tokenize_pair(context, target)?;
        let mut tape = Tape::new(&self.params);
        let tokens = self.encode_pair(&mut tape, &ids);
        let mut expert_pooled = Vec::with_capacity(self.experts.len());
        for k in 0..self.experts.len() {
            let h = self.expert_forward(&mut tape, tokens, Expert::Domain(k))?;
            expert_pooled.push(tape.value(h).iter().copied().collect::<Vec<f64>>());
        }
        let hg = self.expert_forward(&mut tape, tokens, Expert::Global)?;
        let global_pooled: Vec<f64> = tape.value(hg).iter().copied().collect();

        let table = self.label_embedding();
        let expert_probs = expert_pooled
            .iter()
            .map(|h| label_distribution(h, table, mask))
            .collect::<Result<Vec<_>>>()?;
        let global_probs = label_distribution(&global_pooled, table, mask)?;
        let combined = match selection {
            ExpertSelection::All => combine_moe(&expert_probs, &global_probs)?,
            ExpertSelection::OwnDomain => {
                let name = dataset.ok_or_else(|| StanceError::invalid("own-domain selection needs the dataset name"))?;
                let k = self.domain_of(name).ok_or_else(|| StanceError::UnknownDataset(name.to_string()))?;
                combine_moe(std::slice::from_ref(&expert_probs[k]), &global_probs)?
            }
        };
        let domain_logits = self.adversary.as_ref().map(|head| {
            let w = self.params.get(head.weight);
            let b = self.params.get(head.bias);
            let h = Array2::from_shape_vec((1, global_pooled.len()), global_pooled.clone()).unwrap();
            (h.dot(w) + b).iter().copied().collect()
        });
        Ok(ForwardOutput {
            expert_pooled,
            global_pooled,
            expert_probs,
            global_probs,
            combined,
            domain_logits,
        })
    }

    /// Sequence-start representation of the shared encoder alone.
    pub fn pooled_encoding(&self, context: &str, target: &str) -> Result<Vec<f64>> {
        let ids = self.tokenize_pair(context, target)?;
        let mut tape = Tape::new(&self.params);
        let tokens = self.encode_pair(&mut tape, &ids);
        Ok(tape.value(tokens).row(0).to_vec())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json_atomic(
            path,
            &CheckpointFile {
                format: CHECKPOINT_FORMAT.into(),
                label_space_version: self.space.version(),
                model: self.clone(),
            },
        )
    }

    /// Loads a saved model, refusing files whose recorded label-space
    /// version does not match the label space they carry.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: CheckpointFile =
            serde_json::from_str(&text).map_err(|e| StanceError::schema(path.display().to_string(), e.to_string()))?;
        if file.format != CHECKPOINT_FORMAT {
            return Err(StanceError::schema(path.display().to_string(), format!("unknown format `{}`", file.format)));
        }
        let actual = file.model.space.version();
        if actual != file.label_space_version {
            return Err(StanceError::schema(
                path.display().to_string(),
                format!("label space version {actual} differs from recorded {}", file.label_space_version),
            ));
        }
        Ok(file.model)
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    label_space_version: String,
    model: MoleModel,
}

fn check_mask(mask: &[bool], len: usize) -> Result<()> {
    if mask.len() != len {
        return Err(StanceError::invalid(format!("mask has length {}, label space has {len}", mask.len())));
    }
    if !mask.iter().any(|m| *m) {
        return Err(StanceError::invalid("mask has no visible label"));
    }
    Ok(())
}

/// Softmax of `logits` over the visible entries; hidden entries are 0.
pub fn masked_softmax(logits: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    check_mask(mask, logits.len())?;
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, m)| **m)
        .map(|(v, _)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().zip(mask).map(|(v, m)| if *m { (v - max).exp() } else { 0.0 }).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= total);
    Ok(out)
}

/// `softmax(L h)` restricted to `mask`.
pub fn label_distribution(h: &[f64], label_embedding: &Matrix, mask: &[bool]) -> Result<Vec<f64>> {
    if label_embedding.ncols() != h.len() {
        return Err(StanceError::invalid(format!(
            "representation has size {}, label embedding expects {}",
            h.len(),
            label_embedding.ncols()
        )));
    }
    let logits: Vec<f64> = label_embedding.rows().into_iter().map(|row| row.iter().zip(h).map(|(a, b)| a * b).sum()).collect();
    masked_softmax(&logits, mask)
}

/// Mean of the expert distributions and the global one.
pub fn combine_moe(experts: &[Vec<f64>], global: &[f64]) -> Result<Vec<f64>> {
    if let Some(bad) = experts.iter().find(|p| p.len() != global.len()) {
        return Err(StanceError::invalid(format!(
            "expert distribution has {} entries, global has {}",
            bad.len(),
            global.len()
        )));
    }
    let n = (experts.len() + 1) as f64;
    Ok((0..global.len()).map(|i| (experts.iter().map(|p| p[i]).sum::<f64>() + global[i]) / n).collect())
}
