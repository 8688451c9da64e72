//! Scoring of predicted parent sets, and the leave-intervention-out protocol for
//! real interventional data.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::{Dag, NodeId, Relation};
use crate::rng::rng_from_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    /// All parents of `Y`.
    Pa,
    /// Parents of `Y` that `E` reaches: `DE(E) ∩ PA(Y)`.
    SStar,
}

impl fmt::Display for ReferenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReferenceKind::Pa => "pa",
            ReferenceKind::SStar => "s_star",
        })
    }
}

impl FromStr for ReferenceKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pa" => Ok(ReferenceKind::Pa),
            "s_star" => Ok(ReferenceKind::SStar),
            other => Err(Error::arg(format!(
                "unknown reference `{other}` (expected pa or s_star)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub jaccard: f64,
    pub f1: f64,
    pub recall: f64,
    pub reference_kind: ReferenceKind,
    pub predicted: BTreeSet<NodeId>,
    pub reference: BTreeSet<NodeId>,
}

pub fn reference_set(dag: &Dag, kind: ReferenceKind) -> BTreeSet<NodeId> {
    let pa: BTreeSet<NodeId> = dag.parents(dag.target()).iter().copied().collect();
    match kind {
        ReferenceKind::Pa => pa,
        ReferenceKind::SStar => {
            let de = dag
                .relatives(dag.env(), Relation::Descendants)
                .expect("environment node exists");
            pa.intersection(&de).copied().collect()
        }
    }
}

/// Overlap metrics of two id sets. Each metric is 1 when its denominator is empty.
pub fn set_metrics(predicted: &BTreeSet<NodeId>, reference: &BTreeSet<NodeId>) -> (f64, f64, f64) {
    let inter = predicted.intersection(reference).count() as f64;
    let union = predicted.union(reference).count() as f64;
    let ratio = |num: f64, den: f64| if den == 0.0 { 1.0 } else { num / den };
    (
        ratio(inter, union),
        ratio(2.0 * inter, (predicted.len() + reference.len()) as f64),
        ratio(inter, reference.len() as f64),
    )
}

pub fn score(predicted: &BTreeSet<NodeId>, dag: &Dag, kind: ReferenceKind) -> ScoreReport {
    let reference = reference_set(dag, kind);
    let (jaccard, f1, recall) = set_metrics(predicted, &reference);
    ScoreReport {
        jaccard,
        f1,
        recall,
        reference_kind: kind,
        predicted: predicted.clone(),
        reference,
    }
}

/// Three-fold split of interventional samples for testing one candidate parent.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvPlan {
    pub folds: Vec<Vec<usize>>,
    pub held_out_target: NodeId,
    pub excluded_samples: Vec<usize>,
}

pub const CV_FOLDS: usize = 3;

impl CvPlan {
    /// `(inference, validation)` for fold `k`: validation is fold `k`, inference
    /// the other two.
    pub fn split(&self, k: usize) -> (Vec<usize>, Vec<usize>) {
        let inference = self
            .folds
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != k)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        (inference, self.folds[k].clone())
    }

    pub fn retained(&self) -> BTreeSet<usize> {
        self.folds.iter().flatten().copied().collect()
    }
}

/// Drops samples that intervene on `candidate` or on the target, then shuffles
/// the rest and cuts them into three contiguous folds.
pub fn build_cv_plan(
    intervened_on: &BTreeMap<usize, NodeId>,
    candidate: NodeId,
    target_interventions: &BTreeSet<usize>,
    seed: u64,
) -> Result<CvPlan> {
    let samples: BTreeSet<usize> = intervened_on.keys().chain(target_interventions).copied().collect();
    let (excluded, mut kept): (Vec<usize>, Vec<usize>) = samples
        .into_iter()
        .partition(|i| target_interventions.contains(i) || intervened_on.get(i) == Some(&candidate));
    if kept.len() < CV_FOLDS {
        return Err(Error::arg(format!(
            "only {} interventional samples remain after exclusions; need at least {CV_FOLDS}",
            kept.len()
        )));
    }
    kept.shuffle(&mut rng_from_seed(seed));
    let n = kept.len();
    let folds = (0..CV_FOLDS)
        .map(|k| kept[k * n / CV_FOLDS..(k + 1) * n / CV_FOLDS].to_vec())
        .collect();
    Ok(CvPlan {
        folds,
        held_out_target: candidate,
        excluded_samples: excluded,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub target: NodeId,
    pub candidate: NodeId,
    pub confidence: f64,
}

/// Most confident first; ties by `(target, candidate)`.
pub fn rank_predictions(mut predictions: Vec<Prediction>) -> Result<Vec<Prediction>> {
    if let Some(p) = predictions.iter().find(|p| !p.confidence.is_finite()) {
        return Err(Error::arg(format!(
            "confidence of ({}, {}) is not finite",
            p.target, p.candidate
        )));
    }
    predictions.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then((a.target, a.candidate).cmp(&(b.target, b.candidate)))
    });
    Ok(predictions)
}

/// Precision of the top `k` for `k = 1..=max_k` against known `(target, cause)` pairs.
pub fn precision_curve(ranked: &[Prediction], truth: &BTreeSet<(NodeId, NodeId)>, max_k: usize) -> Vec<f64> {
    let mut hits = 0usize;
    ranked
        .iter()
        .take(max_k)
        .enumerate()
        .map(|(i, p)| {
            if truth.contains(&(p.target, p.candidate)) {
                hits += 1;
            }
            hits as f64 / (i + 1) as f64
        })
        .collect()
}

/// `true` when `value` falls in the lower or upper `tail` fraction of the
/// reference sample.
pub fn in_tail(reference: &[f64], value: f64, tail: f64) -> Result<bool> {
    if reference.is_empty() || !(tail > 0.0 && tail < 0.5) {
        return Err(Error::arg(
            "tail labeling needs a non-empty reference and tail in (0, 0.5)",
        ));
    }
    let below = reference.iter().filter(|&&r| r < value).count() as f64;
    let above = reference.iter().filter(|&&r| r > value).count() as f64;
    let n = reference.len() as f64;
    Ok(below / n >= 1.0 - tail || above / n >= 1.0 - tail)
}

/// Cause/effect pairs `(effect, cause)` where intervening on `cause` moved
/// `effect` into the tails of its observational distribution.
///
/// `observational[j]` holds the observational samples of variable `j`;
/// each intervention is `(intervened variable, full sample row)`.
pub fn label_tail_effects(
    observational: &[Vec<f64>],
    interventions: &[(NodeId, Vec<f64>)],
    tail: f64,
) -> Result<BTreeSet<(NodeId, NodeId)>> {
    let mut out = BTreeSet::new();
    for (cause, row) in interventions {
        if row.len() != observational.len() {
            return Err(Error::arg("intervention rows must cover every variable"));
        }
        for (effect, (&v, reference)) in row.iter().zip(observational).enumerate() {
            if effect != *cause && in_tail(reference, v, tail)? {
                out.insert((effect, *cause));
            }
        }
    }
    Ok(out)
}
