//! Hard-label voting over base learners.
//!
//! Every tie (between classes in a vote, or between logits inside one
//! member) goes to the lowest class index.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{read_file, write_file, Dataset};
use crate::error::{Error, Result};
use crate::models::{accuracy, cross_entropy, load_model, save_model, ArchKind, BaseLearner};
use crate::numerics::{argmax, Tensor};

pub const ENSEMBLE_FILE: &str = "ensemble.json";
pub const WEIGHT_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteMethod {
    /// Plain mode of member predictions.
    #[default]
    Vote,
    /// Class with the largest total member weight.
    WeightedVote,
}

/// Per-member voting weights: non-negative, finite, at least one positive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct VoteWeights(Vec<f64>);

impl VoteWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::arg(format!(
                "vote weights must be finite and >= 0: {w:?}"
            )));
        }
        if !w.iter().any(|&v| v > 0.0) {
            return Err(Error::arg("at least one vote weight must be positive"));
        }
        Ok(Self(w))
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0; k])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for VoteWeights {
    type Error = Error;

    fn try_from(w: Vec<f64>) -> Result<Self> {
        Self::new(w)
    }
}

impl From<VoteWeights> for Vec<f64> {
    fn from(w: VoteWeights) -> Self {
        w.0
    }
}

/// The most frequent class in `votes`, lowest index on ties.
pub fn majority_vote(votes: &[usize]) -> Result<usize> {
    let max = votes
        .iter()
        .copied()
        .max()
        .ok_or_else(|| Error::arg("majority vote over zero votes"))?;
    let mut counts = vec![0usize; max + 1];
    for &v in votes {
        counts[v] += 1;
    }
    let mut best = 0;
    for (class, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = class;
        }
    }
    Ok(best)
}

/// `argmax_i Σ_j w_j · [votes_j == i]`, lowest index on ties.
pub fn weighted_vote(votes: &[usize], weights: &VoteWeights) -> Result<usize> {
    if votes.len() != weights.len() {
        return Err(Error::arg(format!(
            "{} votes but {} weights",
            votes.len(),
            weights.len()
        )));
    }
    let max = votes
        .iter()
        .copied()
        .max()
        .ok_or_else(|| Error::arg("weighted vote over zero votes"))?;
    let mut scores = vec![0.0; max + 1];
    for (&v, &w) in votes.iter().zip(weights.as_slice()) {
        scores[v] += w;
    }
    Ok(argmax(&scores))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleModel {
    members: Vec<BaseLearner>,
    weights: VoteWeights,
    method: VoteMethod,
}

impl EnsembleModel {
    pub fn new(
        members: Vec<BaseLearner>,
        weights: VoteWeights,
        method: VoteMethod,
    ) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::arg("an ensemble needs at least one member"))?;
        if weights.len() != members.len() {
            return Err(Error::arg(format!(
                "{} members but {} weights",
                members.len(),
                weights.len()
            )));
        }
        for m in &members[1..] {
            if m.num_classes() != first.num_classes() {
                return Err(Error::incompatible(format!(
                    "ensemble members disagree on class count ({} vs {})",
                    first.num_classes(),
                    m.num_classes()
                )));
            }
            if m.architecture().input_len() != first.architecture().input_len() {
                return Err(Error::incompatible(format!(
                    "ensemble members disagree on input size ({} vs {})",
                    first.architecture().input_len(),
                    m.architecture().input_len()
                )));
            }
        }
        Ok(Self {
            members,
            weights,
            method,
        })
    }

    /// Uniformly weighted ensemble.
    pub fn uniform(members: Vec<BaseLearner>, method: VoteMethod) -> Result<Self> {
        let k = members.len();
        Self::new(members, VoteWeights::uniform(k), method)
    }

    pub fn members(&self) -> &[BaseLearner] {
        &self.members
    }

    pub fn weights(&self) -> &VoteWeights {
        &self.weights
    }

    pub fn method(&self) -> VoteMethod {
        self.method
    }

    pub fn num_classes(&self) -> usize {
        self.members[0].num_classes()
    }

    pub fn member(&self, kind: ArchKind) -> Option<&BaseLearner> {
        self.members.iter().find(|m| m.kind() == kind)
    }

    /// Predictions using the ensemble's own vote method.
    pub fn predict(&self, batch: &Tensor) -> Result<Vec<usize>> {
        ensemble_predict(self, batch, self.method)
    }

    /// Mean of the members' cross-entropies; hard votes carry no probability
    /// of their own.
    pub fn mean_member_loss(&self, d: &Dataset) -> Result<f64> {
        if d.is_empty() {
            return Ok(0.0);
        }
        let mut total = 0.0;
        for m in &self.members {
            total += cross_entropy(&m.forward(d.features())?, d.labels())?;
        }
        Ok(total / self.members.len() as f64)
    }
}

/// Each member's argmax class per sample, then one vote per sample.
pub fn ensemble_predict(
    e: &EnsembleModel,
    batch: &Tensor,
    method: VoteMethod,
) -> Result<Vec<usize>> {
    let n = e.num_classes();
    if let Some(m) = e.members.iter().find(|m| m.num_classes() != n) {
        return Err(Error::incompatible(format!(
            "{} member predicts {} classes, ensemble expects {n}",
            m.kind(),
            m.num_classes()
        )));
    }
    let per_member: Vec<Vec<usize>> = e
        .members
        .iter()
        .map(|m| m.predict(batch))
        .collect::<Result<_>>()?;
    let samples = per_member[0].len();
    let mut votes = vec![0; per_member.len()];
    (0..samples)
        .map(|i| {
            for (v, preds) in votes.iter_mut().zip(&per_member) {
                *v = preds[i];
            }
            match method {
                VoteMethod::Vote => majority_vote(&votes),
                VoteMethod::WeightedVote => weighted_vote(&votes, &e.weights),
            }
        })
        .collect()
}

/// Validation accuracy of each member, floored at `1e-6`.
pub fn weights_from_validation(members: &[BaseLearner], val: &Dataset) -> Result<VoteWeights> {
    if val.is_empty() {
        return Err(Error::arg("validation set is empty"));
    }
    let w = members
        .iter()
        .map(|m| accuracy(m, val).map(|a| a.max(WEIGHT_FLOOR)))
        .collect::<Result<Vec<_>>>()?;
    VoteWeights::new(w)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnsembleManifest {
    format_version: u32,
    members: Vec<MemberEntry>,
    weights: VoteWeights,
    method: VoteMethod,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MemberEntry {
    kind: ArchKind,
    dir: String,
}

/// One sub-directory per member checkpoint plus `ensemble.json`.
pub fn save_ensemble(e: &EnsembleModel, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|err| Error::io(dir, err))?;
    let mut entries = Vec::with_capacity(e.members.len());
    for (i, m) in e.members.iter().enumerate() {
        let name = format!("member-{i}-{}", m.kind().to_string().to_lowercase());
        save_model(m, &dir.join(&name))?;
        entries.push(MemberEntry {
            kind: m.kind(),
            dir: name,
        });
    }
    let manifest = EnsembleManifest {
        format_version: 1,
        members: entries,
        weights: e.weights.clone(),
        method: e.method,
    };
    write_file(
        &dir.join(ENSEMBLE_FILE),
        serde_json::to_string_pretty(&manifest)?.as_bytes(),
    )
}

pub fn load_ensemble(dir: &Path) -> Result<EnsembleModel> {
    let raw = read_file(&dir.join(ENSEMBLE_FILE))?;
    let manifest: EnsembleManifest =
        serde_json::from_slice(&raw).map_err(|e| Error::format(ENSEMBLE_FILE, e.to_string()))?;
    let mut members = Vec::with_capacity(manifest.members.len());
    for entry in &manifest.members {
        let m = load_model(&dir.join(&entry.dir))?;
        if m.kind() != entry.kind {
            return Err(Error::format(
                "members",
                format!(
                    "`{}` holds a {} model, manifest says {}",
                    entry.dir,
                    m.kind(),
                    entry.kind
                ),
            ));
        }
        members.push(m);
    }
    EnsembleModel::new(members, manifest.weights, manifest.method)
}
