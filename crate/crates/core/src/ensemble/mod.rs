//! Feature-weighted linear stacking over transposed base-classifier outputs.
//!
//! For every label, metafeatures describe the agreement between the base
//! classifiers' instance sets. A ridge regressor per classifier maps them to
//! a vote weight, trained against reference weights that favour the
//! classifiers closest to the gold instances. Weighted votes then select a
//! number of instances proportional to the label's training frequency.

mod metafeatures;
mod ridge;
mod vote;

pub use metafeatures::{
    compute_metafeatures, metafeature_dim, raw_metafeatures, ClassifierFeatures, RawMetafeatures, BASE_FEATURES,
    FREQUENT_LABEL_FREQ, RARE_LABEL_FREQ,
};
pub use ridge::{cholesky_solve, fit_ridge, RidgeAccumulator, RidgeModel, DEFAULT_RIDGE_LAMBDA};
pub use vote::{
    approximate_oracle_weights, fit_vote_regressors, initial_count, list_fitness, normalize_vote_weights,
    vote_and_select, SelectionConfig, VoteModel, AP_EPSILON,
};

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use log::{debug, warn};
use rand::seq::SliceRandom;

use crate::corpus::{DocId, LabelId, LabelStats};
use crate::error::{Error, Result};
use crate::inference::TransposedPrediction;
use crate::metrics::{macro_fscore, EvalPair, Labelsets};
use crate::parallel;
use crate::results::{self, Orientation, ResultLists};
use crate::rng;

/// Ranked instance lists per label for one base classifier.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClassifierOutput {
    pub id: usize,
    pub lists: BTreeMap<LabelId, Vec<(DocId, f64)>>,
}

impl ClassifierOutput {
    /// Builds from transposed result lists. Entries without a score get
    /// `1/r` for their position `r`; lists are re-sorted by score descending,
    /// then document id.
    pub fn from_lists(id: usize, lists: &ResultLists) -> Result<Self> {
        let mut out = BTreeMap::new();
        for (&label, entries) in lists {
            let label =
                LabelId::try_from(label).map_err(|_| Error::InvalidInput(format!("label id {label} out of range")))?;
            let mut list: Vec<(DocId, f64)> = entries
                .iter()
                .enumerate()
                .map(|(r, &(d, s))| (d, s.unwrap_or(1.0 / (r + 1) as f64)))
                .collect();
            list.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            out.insert(label, list);
        }
        Ok(Self { id, lists: out })
    }

    pub fn from_transposed(id: usize, tp: &TransposedPrediction) -> Self {
        let lists = tp
            .lists
            .iter()
            .map(|(&l, insts)| (l, insts.iter().map(|i| (i.doc_id, i.score)).collect()))
            .collect();
        Self { id, lists }
    }

    pub fn load(id: usize, path: impl AsRef<Path>) -> Result<Self> {
        Self::from_lists(id, &results::read_lists(path, Orientation::PerLabel)?)
    }

    pub fn list(&self, label: LabelId) -> &[(DocId, f64)] {
        self.lists.get(&label).map_or(&[], Vec::as_slice)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleConfig {
    pub ridge_lambda: f64,
    pub selection: SelectionConfig,
    /// Label folds for development runs.
    pub cv_folds: usize,
    pub seed: u64,
    pub workers: usize,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            ridge_lambda: DEFAULT_RIDGE_LAMBDA,
            selection: SelectionConfig::default(),
            cv_folds: 5,
            seed: 0,
            workers: 1,
        }
    }
}

/// Per-label selections, best instance first.
pub type Selection = BTreeMap<LabelId, Vec<(DocId, f64)>>;

/// Labels with at least one instance in any output, ascending.
pub fn active_labels(outputs: &[ClassifierOutput]) -> Vec<LabelId> {
    let set: BTreeSet<LabelId> = outputs.iter().flat_map(|o| o.lists.keys().copied()).collect();
    set.into_iter().collect()
}

fn label_lists(outputs: &[ClassifierOutput], label: LabelId) -> Vec<&[(DocId, f64)]> {
    outputs.iter().map(|o| o.list(label)).collect()
}

pub fn gold_by_label(gold: &Labelsets) -> BTreeMap<LabelId, BTreeSet<DocId>> {
    let mut out: BTreeMap<LabelId, BTreeSet<DocId>> = BTreeMap::new();
    for (&doc, labels) in gold {
        for &l in labels {
            out.entry(l).or_default().insert(doc);
        }
    }
    out
}

fn check_ids(outputs: &[ClassifierOutput]) -> Result<()> {
    if outputs.is_empty() {
        return Err(Error::InvalidInput("no classifier outputs".into()));
    }
    match outputs.iter().enumerate().find(|(i, o)| o.id != *i) {
        Some((i, o)) => Err(Error::InvalidInput(format!(
            "classifier at position {i} has id {}, expected contiguous ids",
            o.id
        ))),
        None => Ok(()),
    }
}

/// Fits the vote regressors on `labels`, computing each label's features and
/// reference weights on the fly.
pub fn fit_vote_model(
    outputs: &[ClassifierOutput],
    gold: &BTreeMap<LabelId, BTreeSet<DocId>>,
    labels: &[LabelId],
    stats: &LabelStats,
    ridge_lambda: f64,
) -> Result<VoteModel> {
    check_ids(outputs)?;
    let empty = BTreeSet::new();
    let samples = labels.iter().map(|&label| {
        let lists = label_lists(outputs, label);
        let features = compute_metafeatures(&lists, stats.freq(label));
        let targets = approximate_oracle_weights(&lists, gold.get(&label).unwrap_or(&empty));
        (features, targets)
    });
    fit_vote_regressors(samples, outputs.len(), metafeature_dim(outputs.len()), ridge_lambda)
}

/// Votes and selects instances for each of `labels` in parallel.
pub fn apply_vote_model(
    outputs: &[ClassifierOutput],
    model: &VoteModel,
    labels: &[LabelId],
    stats: &LabelStats,
    cfg: &EnsembleConfig,
    test_size: usize,
) -> Result<Selection> {
    check_ids(outputs)?;
    if model.num_classifiers() != outputs.len() {
        return Err(Error::InvalidInput(format!(
            "vote model covers {} classifiers, got {} outputs",
            model.num_classifiers(),
            outputs.len()
        )));
    }
    let train_size = stats.total_docs as usize;
    let selected = parallel::map_ordered(labels, cfg.workers, |&label| {
        let lists = label_lists(outputs, label);
        let freq = stats.freq(label);
        let weights = model.predict_weights(&compute_metafeatures(&lists, freq));
        vote_and_select(&lists, &weights, freq, &cfg.selection, test_size, train_size)
    });
    Ok(labels
        .iter()
        .copied()
        .zip(selected)
        .filter(|(_, s)| !s.is_empty())
        .collect())
}

/// Transposes selections into labelsets for every document in `doc_ids`.
pub fn selection_to_documents(selection: &Selection, doc_ids: impl IntoIterator<Item = DocId>) -> Labelsets {
    let mut out: Labelsets = doc_ids.into_iter().map(|d| (d, Vec::new())).collect();
    for (&label, list) in selection {
        for &(doc, _) in list {
            out.entry(doc).or_default().push(label);
        }
    }
    out
}

pub fn selection_to_lists(selection: &Selection) -> ResultLists {
    selection
        .iter()
        .map(|(&l, list)| (l as u64, list.iter().map(|&(d, s)| (d, Some(s))).collect()))
        .collect()
}

/// Trains on the ensemble-training outputs and combines the test outputs.
/// Classifiers listed in `removed` are dropped from both sides first.
pub fn combine(
    train_outputs: &[ClassifierOutput],
    gold: &Labelsets,
    test_outputs: &[ClassifierOutput],
    stats: &LabelStats,
    cfg: &EnsembleConfig,
    test_size: usize,
    removed: &[usize],
) -> Result<(VoteModel, Selection)> {
    cfg.selection.validate()?;
    let train = retain_classifiers(train_outputs, removed);
    let test = retain_classifiers(test_outputs, removed);
    if train.len() != test.len() {
        return Err(Error::InvalidInput(format!(
            "{} training outputs but {} test outputs",
            train.len(),
            test.len()
        )));
    }
    let labels = active_labels(&train);
    let model = fit_vote_model(&train, &gold_by_label(gold), &labels, stats, cfg.ridge_lambda)?;
    let selection = apply_vote_model(&test, &model, &active_labels(&test), stats, cfg, test_size)?;
    Ok((model, selection))
}

/// Keeps classifiers not in `removed`, renumbered contiguously.
pub fn retain_classifiers(outputs: &[ClassifierOutput], removed: &[usize]) -> Vec<ClassifierOutput> {
    outputs
        .iter()
        .filter(|o| !removed.contains(&o.id))
        .enumerate()
        .map(|(i, o)| ClassifierOutput {
            id: i,
            lists: o.lists.clone(),
        })
        .collect()
}

const CV_TAG: u64 = 0x4356_4c42;

/// Development run: labels are split into folds, each fold is combined by
/// regressors fitted on the other folds, and the pooled selections are
/// scored by macro Fscore against `gold`.
pub fn cross_validate(
    outputs: &[ClassifierOutput],
    gold: &Labelsets,
    stats: &LabelStats,
    cfg: &EnsembleConfig,
) -> Result<(f64, Selection)> {
    cfg.selection.validate()?;
    let folds = cfg.cv_folds.max(2);
    let mut labels = active_labels(outputs);
    labels.shuffle(&mut rng::derived_rng(cfg.seed, &[CV_TAG]));
    let by_label = gold_by_label(gold);
    let mut pooled = Selection::new();
    for k in 0..folds {
        let held: Vec<LabelId> = labels.iter().skip(k).step_by(folds).copied().collect();
        if held.is_empty() {
            continue;
        }
        let mut fit_labels: Vec<LabelId> = labels
            .iter()
            .enumerate()
            .filter(|(i, _)| i % folds != k)
            .map(|(_, &l)| l)
            .collect();
        fit_labels.sort_unstable();
        let model = fit_vote_model(outputs, &by_label, &fit_labels, stats, cfg.ridge_lambda)?;
        let mut held_sorted = held;
        held_sorted.sort_unstable();
        pooled.extend(apply_vote_model(outputs, &model, &held_sorted, stats, cfg, gold.len())?);
    }
    let preds = selection_to_documents(&pooled, gold.keys().copied());
    let score = macro_fscore(&EvalPair::new(preds, gold.clone()))?;
    Ok((score, pooled))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionOutcome {
    pub kept: Vec<usize>,
    pub removed: Vec<usize>,
    pub score: Option<f64>,
    pub evaluations: usize,
}

/// Hill-climbing over classifier subsets. Each step tries every single
/// removal, then every single re-addition, and applies the first move with
/// the largest strict improvement. A failing evaluation counts as `-inf`.
pub fn select_classifiers<F>(num_classifiers: usize, mut evaluate: F) -> Result<SelectionOutcome>
where
    F: FnMut(&[usize]) -> Result<f64>,
{
    let mut kept: Vec<usize> = (0..num_classifiers).collect();
    if num_classifiers <= 1 {
        return Ok(SelectionOutcome {
            kept,
            removed: Vec::new(),
            score: None,
            evaluations: 0,
        });
    }
    let mut best = evaluate(&kept)?;
    let mut evaluations = 1;
    loop {
        let mut candidates: Vec<Vec<usize>> = Vec::new();
        if kept.len() > 1 {
            for &c in &kept {
                candidates.push(kept.iter().copied().filter(|&k| k != c).collect());
            }
        }
        for c in (0..num_classifiers).filter(|c| !kept.contains(c)) {
            let mut next = kept.clone();
            next.push(c);
            next.sort_unstable();
            candidates.push(next);
        }
        let mut step: Option<(f64, Vec<usize>)> = None;
        for cand in candidates {
            evaluations += 1;
            let score = match evaluate(&cand) {
                Ok(s) if !s.is_nan() => s,
                Ok(_) => f64::NEG_INFINITY,
                Err(e) => {
                    warn!("subset {cand:?} failed: {e}");
                    f64::NEG_INFINITY
                }
            };
            if score > best && step.as_ref().is_none_or(|(s, _)| score > *s) {
                step = Some((score, cand));
            }
        }
        match step {
            Some((score, next)) => {
                debug!("classifier subset {next:?} scores {score:.6}");
                best = score;
                kept = next;
            }
            None => break,
        }
    }
    let removed = (0..num_classifiers).filter(|c| !kept.contains(c)).collect();
    Ok(SelectionOutcome {
        kept,
        removed,
        score: Some(best),
        evaluations,
    })
}

/// Classifier selection scored by label-fold development runs.
pub fn select_classifiers_cv(
    outputs: &[ClassifierOutput],
    gold: &Labelsets,
    stats: &LabelStats,
    cfg: &EnsembleConfig,
) -> Result<SelectionOutcome> {
    check_ids(outputs)?;
    select_classifiers(outputs.len(), |subset| {
        let removed: Vec<usize> = (0..outputs.len()).filter(|c| !subset.contains(c)).collect();
        let sub = retain_classifiers(outputs, &removed);
        cross_validate(&sub, gold, stats, cfg).map(|(s, _)| s)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_classifier_is_kept() {
        let out = select_classifiers(1, |_| unreachable!()).unwrap();
        assert_eq!(out.kept, vec![0]);
    }

    #[test]
    fn hill_climb_drops_harmful_member() {
        // Score improves by removing classifier 2 and nothing else.
        let out = select_classifiers(4, |s: &[usize]| {
            Ok(s.len() as f64 * 0.1 - if s.contains(&2) { 1.0 } else { 0.0 })
        })
        .unwrap();
        assert_eq!(out.kept, vec![0, 1, 3]);
        assert_eq!(out.removed, vec![2]);
    }

    #[test]
    fn identical_scores_terminate() {
        let out = select_classifiers(3, |_| Ok(0.5)).unwrap();
        assert_eq!(out.kept, vec![0, 1, 2]);
        assert_eq!(out.evaluations, 4);
    }

    #[test]
    fn output_from_lists_fills_rank_scores() {
        let lists = ResultLists::from([(7, vec![(3, None), (1, None)])]);
        let out = ClassifierOutput::from_lists(0, &lists).unwrap();
        assert_eq!(out.list(7), &[(3, 1.0), (1, 0.5)]);
        assert!(out.list(8).is_empty());
    }
}
