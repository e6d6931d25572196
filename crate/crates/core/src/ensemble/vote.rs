//! Reference weights, vote regressors and instance selection.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::ridge::{RidgeAccumulator, RidgeModel};
use crate::corpus::DocId;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    /// Scales the expected number of instances of a label.
    pub prior_multiplier: f64,
    /// Instances beyond the initial set are added when their score exceeds
    /// this fraction of the initial set's mean score.
    pub vote_threshold_frac: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            prior_multiplier: 0.95,
            vote_threshold_frac: 0.5,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.prior_multiplier > 0.0 && self.vote_threshold_frac > 0.0 {
            Ok(())
        } else {
            Err(Error::Config("selection parameters must be positive".into()))
        }
    }
}

/// Fitness used for reference weights: F1 of the instance set plus a small
/// share of average precision of the ranked list.
pub const AP_EPSILON: f64 = 1e-3;
const ARGMAX_TOLERANCE: f64 = 1e-12;

fn dedup_ranked(list: &[(DocId, f64)]) -> Vec<DocId> {
    let mut seen = BTreeSet::new();
    list.iter().map(|&(d, _)| d).filter(|d| seen.insert(*d)).collect()
}

pub fn list_fitness(list: &[(DocId, f64)], gold: &BTreeSet<DocId>) -> f64 {
    if gold.is_empty() {
        return 0.0;
    }
    let ranked = dedup_ranked(list);
    let mut hits = 0usize;
    let mut ap = 0.0;
    for (k, d) in ranked.iter().enumerate() {
        if gold.contains(d) {
            hits += 1;
            ap += hits as f64 / (k + 1) as f64;
        }
    }
    let f1 = 2.0 * hits as f64 / (ranked.len() + gold.len()) as f64;
    f1 + AP_EPSILON * ap / gold.len() as f64
}

/// Distributes a weight of one uniformly over the classifiers with the best
/// fitness; uniform over all classifiers when none has positive fitness.
pub fn approximate_oracle_weights(lists: &[&[(DocId, f64)]], gold: &BTreeSet<DocId>) -> Vec<f64> {
    let m = lists.len();
    if m == 0 {
        return Vec::new();
    }
    let fit: Vec<f64> = lists.iter().map(|l| list_fitness(l, gold)).collect();
    let best = fit.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(best > 0.0) {
        return vec![1.0 / m as f64; m];
    }
    let winners: Vec<bool> = fit.iter().map(|&f| best - f <= ARGMAX_TOLERANCE).collect();
    let share = 1.0 / winners.iter().filter(|&&w| w).count() as f64;
    winners.into_iter().map(|w| if w { share } else { 0.0 }).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteModel {
    pub ridge_lambda: f64,
    pub regressors: Vec<RidgeModel>,
}

impl VoteModel {
    pub fn num_classifiers(&self) -> usize {
        self.regressors.len()
    }

    /// Predicted vote weights, clamped to be non-negative.
    pub fn predict_weights(&self, features: &[Vec<f64>]) -> Vec<f64> {
        self.regressors
            .iter()
            .zip(features)
            .map(|(r, x)| {
                let w = r.predict(x);
                if w > 0.0 {
                    w
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// Fits one ridge regressor per classifier from streamed samples. Each
/// sample is one label: per-classifier feature vectors and reference weights.
pub fn fit_vote_regressors<I>(samples: I, num_classifiers: usize, dim: usize, ridge_lambda: f64) -> Result<VoteModel>
where
    I: IntoIterator<Item = (Vec<Vec<f64>>, Vec<f64>)>,
{
    if !(ridge_lambda > 0.0 && ridge_lambda.is_finite()) {
        return Err(Error::Config(format!("ridge strength {ridge_lambda} must be positive")));
    }
    let mut accs = vec![RidgeAccumulator::new(dim); num_classifiers];
    for (features, targets) in samples {
        if features.len() != num_classifiers || targets.len() != num_classifiers {
            return Err(Error::InvalidInput("sample does not cover every classifier".into()));
        }
        for ((acc, x), &y) in accs.iter_mut().zip(&features).zip(&targets) {
            if x.len() != dim {
                return Err(Error::InvalidInput(format!(
                    "metafeature dimension {} differs from {dim}",
                    x.len()
                )));
            }
            acc.add(x, y);
        }
    }
    let regressors = accs
        .iter()
        .enumerate()
        .map(|(i, acc)| {
            if acc.len() < dim as u64 + 1 {
                return Err(Error::Degenerate {
                    classifier: i,
                    reason: format!("{} training labels for {} metafeatures", acc.len(), dim),
                });
            }
            acc.solve(ridge_lambda)
                .map_err(|reason| Error::Degenerate { classifier: i, reason })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VoteModel {
        ridge_lambda,
        regressors,
    })
}

const WEIGHT_GRID: f64 = 4_294_967_296.0;

/// Clamps weights at zero and rescales them to sum to one on a grid of
/// `2^-32`, so that proportional weight vectors vote identically. All-zero
/// weights become uniform.
pub fn normalize_vote_weights(weights: &[f64]) -> Vec<f64> {
    let clamped: Vec<f64> = weights
        .iter()
        .map(|&w| if w > 0.0 && w.is_finite() { w } else { 0.0 })
        .collect();
    let total: f64 = clamped.iter().sum();
    if !(total > 0.0) {
        let m = weights.len().max(1) as f64;
        return vec![1.0 / m; weights.len()];
    }
    clamped
        .iter()
        .map(|w| (w / total * WEIGHT_GRID).round() / WEIGHT_GRID)
        .collect()
}

/// Initial number of instances: `max(1, round(mult * freq * test / train))`.
pub fn initial_count(cfg: &SelectionConfig, label_freq: u64, test_size: usize, train_size: usize) -> usize {
    let ratio = if train_size == 0 {
        1.0
    } else {
        test_size as f64 / train_size as f64
    };
    ((cfg.prior_multiplier * label_freq as f64 * ratio).round() as usize).max(1)
}

/// Weighted voting followed by prior-based selection. Returns the selected
/// instances with their vote scores, best first.
pub fn vote_and_select(
    lists: &[&[(DocId, f64)]],
    weights: &[f64],
    label_freq: u64,
    cfg: &SelectionConfig,
    test_size: usize,
    train_size: usize,
) -> Vec<(DocId, f64)> {
    let weights = normalize_vote_weights(weights);
    let mut scores: BTreeMap<DocId, f64> = BTreeMap::new();
    for (list, &w) in lists.iter().zip(&weights) {
        if w <= 0.0 {
            continue;
        }
        let mut seen = BTreeSet::new();
        for &(d, s) in list.iter() {
            if seen.insert(d) {
                *scores.entry(d).or_default() += w * s;
            }
        }
    }
    let mut ranked: Vec<(DocId, f64)> = scores.into_iter().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let n0 = initial_count(cfg, label_freq, test_size, train_size).min(ranked.len());
    if n0 == 0 {
        return ranked;
    }
    let mean = ranked[..n0].iter().map(|x| x.1).sum::<f64>() / n0 as f64;
    let cut = cfg.vote_threshold_frac * mean;
    let extra = ranked[n0..].iter().take_while(|x| x.1 > cut).count();
    ranked.truncate(n0 + extra);
    ranked
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_weights_split_ties() {
        let gold: BTreeSet<DocId> = [1, 2].into();
        let good = [(1, 1.0), (2, 0.5)];
        let bad = [(7, 1.0)];
        let w = approximate_oracle_weights(&[&good, &good, &bad], &gold);
        assert_eq!(w, vec![0.5, 0.5, 0.0]);
        let w = approximate_oracle_weights(&[&bad, &good], &gold);
        assert_eq!(w, vec![0.0, 1.0]);
        let w = approximate_oracle_weights(&[&bad, &bad], &gold);
        assert_eq!(w, vec![0.5, 0.5]);
    }

    #[test]
    fn ranking_breaks_equal_f1() {
        let gold: BTreeSet<DocId> = [1].into();
        let first = [(1, 1.0), (2, 0.5)];
        let second = [(2, 1.0), (1, 0.5)];
        assert_eq!(approximate_oracle_weights(&[&second, &first], &gold), vec![0.0, 1.0]);
    }

    #[test]
    fn initial_count_example() {
        assert_eq!(initial_count(&SelectionConfig::default(), 40, 500, 1000), 19);
        assert_eq!(initial_count(&SelectionConfig::default(), 0, 500, 1000), 1);
    }

    #[test]
    fn single_classifier_selection() {
        let list: Vec<(DocId, f64)> = (0..10).map(|d| (d, 1.0 / (d + 1) as f64)).collect();
        let sel = vote_and_select(&[&list], &[1.0], 2, &SelectionConfig::default(), 100, 100);
        let ids: Vec<DocId> = sel.iter().map(|x| x.0).collect();
        // n0 = 2 and the cut is 0.5 * 0.75; doc 2 scores 1/3.
        assert_eq!(ids, vec![0, 1]);
        let sel = vote_and_select(
            &[&list],
            &[1.0],
            2,
            &SelectionConfig {
                vote_threshold_frac: 0.4,
                ..Default::default()
            },
            100,
            100,
        );
        assert_eq!(sel.len(), 3);
    }

    #[test]
    fn empty_votes_select_nothing() {
        let empty: Vec<(DocId, f64)> = Vec::new();
        assert!(vote_and_select(&[&empty], &[1.0], 5, &SelectionConfig::default(), 1, 1).is_empty());
    }
}
