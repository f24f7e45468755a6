//! Predictions for a held-out dataset whose labels the model never saw:
//! in-domain prediction followed by hard, weak or soft label mapping.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{DatasetDescriptor, StanceExample};
use crate::embeddings::{nearest_label, LabelNameEmbedder, LabelVector};
use crate::error::{Result, StanceError};
use crate::labelspace::{Group, HardGroupTable, LabelId, LabelSpace};
use crate::model::{ExpertSelection, MoleModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MappingKind {
    Hard,
    Weak,
    Soft,
}

impl MappingKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MappingKind::Hard => "hard",
            MappingKind::Weak => "weak",
            MappingKind::Soft => "soft",
        }
    }

    pub fn needs_embeddings(self) -> bool {
        self != MappingKind::Hard
    }
}

impl fmt::Display for MappingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MappingKind {
    type Err = StanceError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hard" => Ok(MappingKind::Hard),
            "weak" => Ok(MappingKind::Weak),
            "soft" => Ok(MappingKind::Soft),
            other => Err(StanceError::invalid(format!("unknown mapping strategy `{other}`"))),
        }
    }
}

/// One line of the prediction file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodPrediction {
    pub id: String,
    /// Qualified training label, or a group name for hard mapping.
    pub in_domain_label: String,
    /// Label name from the held-out inventory.
    pub mapped_label: String,
    pub strategy: MappingKind,
    /// Cosine similarity of the chosen label; absent when no similarity was
    /// consulted.
    pub score: Option<f64>,
}

/// Outcome of mapping a single prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct Mapped {
    pub label: String,
    pub score: Option<f64>,
    /// Group whose held-out labels formed the candidate set.
    pub group: Option<Group>,
}

/// Mask over the training label space used for out-of-domain prediction:
/// every training label, or only those of `restrict_to`.
pub fn in_domain_mask(space: &LabelSpace, restrict_to: Option<&str>) -> Result<Vec<bool>> {
    match restrict_to {
        Some(d) => space.mask_for(d),
        None => Ok(vec![true; space.len()]),
    }
}

/// Most probable visible label; the lower global index wins ties.
pub fn argmax_label<'a>(space: &'a LabelSpace, probabilities: &[f64], mask: &[bool]) -> Result<&'a LabelId> {
    if probabilities.len() != space.len() || mask.len() != space.len() {
        return Err(StanceError::invalid("probabilities and mask must cover the label space"));
    }
    let best = crate::trainer::argmax(probabilities, mask).ok_or_else(|| StanceError::invalid("mask hides every label"))?;
    Ok(space.label(best))
}

/// In-domain label for each example, in input order.
pub fn predict_in_domain(model: &MoleModel, examples: &[&StanceExample], mask: &[bool]) -> Result<Vec<LabelId>> {
    let space = model.label_space();
    examples
        .par_iter()
        .map(|e| {
            let out = model.forward(&e.context, &e.target, mask, ExpertSelection::All, None)?;
            argmax_label(space, &out.combined, mask).cloned()
        })
        .collect()
}

/// Held-out labels of the first group, starting at `group` and then
/// following its neighbourhood, that has any.
fn reachable(group: Group, held_out: &DatasetDescriptor, table: &HardGroupTable) -> Result<(Group, Vec<String>)> {
    let neighbours = table.neighborhood(group).ok_or_else(|| StanceError::UnknownGroup(group.to_string()))?;
    for g in std::iter::once(&group).chain(neighbours) {
        let mut members = Vec::new();
        for l in &held_out.labels {
            let own = table
                .group_of(&held_out.name, l)
                .ok_or_else(|| StanceError::UnmappedLabel(format!("{}__{l}", held_out.name)))?;
            if own == *g {
                members.push(l.clone());
            }
        }
        if !members.is_empty() {
            return Ok((*g, members));
        }
    }
    Err(StanceError::NoReachableLabel(group.to_string()))
}

/// Held-out label in the predicted group, falling back along the group's
/// neighbourhood. Several labels in one group resolve to the first listed.
pub fn hard_map(group: Group, held_out: &DatasetDescriptor, table: &HardGroupTable) -> Result<Mapped> {
    let (g, members) = reachable(group, held_out, table)?;
    Ok(Mapped {
        label: members[0].clone(),
        score: None,
        group: Some(g),
    })
}

fn embed_candidates(names: &[String], dataset: &str, embedder: &dyn LabelNameEmbedder) -> Result<Vec<LabelVector>> {
    let mut out = Vec::new();
    for (i, name) in names.iter().enumerate() {
        match embedder.embed_name(name) {
            Ok(vector) => out.push(LabelVector {
                label: LabelId {
                    dataset: dataset.to_string(),
                    name: name.clone(),
                    global_index: i,
                },
                vector,
            }),
            Err(StanceError::OutOfVocabulary(_)) => log::warn!("label `{name}` has no embedding and cannot be chosen"),
            Err(e) => return Err(e),
        }
    }
    if out.is_empty() {
        return Err(StanceError::OutOfVocabulary(format!("every candidate label of {dataset}")));
    }
    Ok(out)
}

fn closest(predicted: &str, names: &[String], dataset: &str, embedder: &dyn LabelNameEmbedder) -> Result<(String, f64)> {
    let query = embedder.embed_name(predicted)?;
    let candidates = embed_candidates(names, dataset, embedder)?;
    let best = nearest_label(&query, &candidates)?;
    Ok((candidates[best.index].label.name.clone(), best.score))
}

/// Held-out label whose name embedding is closest to the predicted name.
pub fn soft_map(predicted: &LabelId, held_out: &DatasetDescriptor, embedder: &dyn LabelNameEmbedder) -> Result<Mapped> {
    if held_out.labels.len() == 1 {
        return Ok(Mapped {
            label: held_out.labels[0].clone(),
            score: None,
            group: None,
        });
    }
    let (label, score) = closest(&predicted.name, &held_out.labels, &held_out.name, embedder)?;
    Ok(Mapped {
        label,
        score: Some(score),
        group: None,
    })
}

/// Closest held-out label within the predicted label's group, or within
/// the first neighbouring group that has held-out labels.
pub fn weak_map(
    predicted: &LabelId,
    held_out: &DatasetDescriptor,
    embedder: &dyn LabelNameEmbedder,
    table: &HardGroupTable,
) -> Result<Mapped> {
    let group = table
        .group_of(&predicted.dataset, &predicted.name)
        .ok_or_else(|| StanceError::UnmappedLabel(predicted.qualified()))?;
    let (g, members) = reachable(group, held_out, table)?;
    if members.len() == 1 {
        return Ok(Mapped {
            label: members[0].clone(),
            score: None,
            group: Some(g),
        });
    }
    let (label, score) = closest(&predicted.name, &members, &held_out.name, embedder)?;
    Ok(Mapped {
        label,
        score: Some(score),
        group: Some(g),
    })
}

/// Maps one in-domain prediction. Hard mapping expects the label name to
/// be a group name, as produced by a model trained on group labels.
pub fn map_prediction(
    kind: MappingKind,
    predicted: &LabelId,
    held_out: &DatasetDescriptor,
    table: &HardGroupTable,
    embedder: Option<&dyn LabelNameEmbedder>,
) -> Result<Mapped> {
    let need = || embedder.ok_or_else(|| StanceError::invalid(format!("{kind} mapping needs an embedding table")));
    match kind {
        MappingKind::Hard => hard_map(predicted.name.parse()?, held_out, table),
        MappingKind::Soft => soft_map(predicted, held_out, need()?),
        MappingKind::Weak => weak_map(predicted, held_out, need()?, table),
    }
}

/// Runs prediction and mapping over `examples` of the held-out dataset.
pub fn predict_ood(
    model: &MoleModel,
    examples: &[&StanceExample],
    held_out: &DatasetDescriptor,
    kind: MappingKind,
    embedder: Option<&dyn LabelNameEmbedder>,
    restrict_to: Option<&str>,
) -> Result<Vec<OodPrediction>> {
    let space = model.label_space();
    let mask = in_domain_mask(space, restrict_to)?;
    let predicted = predict_in_domain(model, examples, &mask)?;
    examples
        .iter()
        .zip(predicted)
        .map(|(e, p)| {
            let mapped = map_prediction(kind, &p, held_out, space.table(), embedder)?;
            Ok(OodPrediction {
                id: e.id.clone(),
                in_domain_label: if kind == MappingKind::Hard { p.name.clone() } else { p.qualified() },
                mapped_label: mapped.label,
                strategy: kind,
                score: mapped.score,
            })
        })
        .collect()
}
