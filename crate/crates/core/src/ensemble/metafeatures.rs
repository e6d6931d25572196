//! Per-label metafeatures describing how the base classifiers' instance sets
//! relate to each other.
//!
//! For `M` classifiers each (label, classifier) pair gets `13 + (M - 1)`
//! values: shared label indicators and agreement counts, the classifier's own
//! set statistics, its overlap with the modal set and its maximum-normalized
//! precision against every other classifier.

use std::collections::{BTreeMap, BTreeSet};

use crate::corpus::DocId;

pub const BASE_FEATURES: usize = 13;

/// Labels seen in fewer training documents are flagged as rare.
pub const RARE_LABEL_FREQ: u64 = 10;
/// Labels seen in more training documents are flagged as frequent.
pub const FREQUENT_LABEL_FREQ: u64 = 50;

pub fn metafeature_dim(num_classifiers: usize) -> usize {
    BASE_FEATURES + num_classifiers.saturating_sub(1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierFeatures {
    pub min_inst_freq: usize,
    pub max_inst_freq: usize,
    /// Lowest summed list score of an instance of this classifier.
    pub min_inst_count: f64,
    pub inst_count: usize,
    pub empty_set: bool,
    pub set_count: usize,
    pub mode_prec: f64,
    pub mode_rec: f64,
    pub mode_jaccard: f64,
    /// Against every other classifier, in classifier order.
    pub max_prec: Vec<f64>,
}

/// Metafeatures for one label before normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct RawMetafeatures {
    pub label_prob: bool,
    pub label_prob2: bool,
    pub uniq_instancesets: usize,
    pub max_votes: usize,
    pub mode: Vec<DocId>,
    pub classifiers: Vec<ClassifierFeatures>,
}

fn intersection_size(a: &[DocId], b: &[DocId]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Computes the raw features of one label from each classifier's ranked
/// instance list.
pub fn raw_metafeatures(lists: &[&[(DocId, f64)]], label_freq: u64) -> RawMetafeatures {
    let sets: Vec<Vec<DocId>> = lists
        .iter()
        .map(|l| {
            let s: BTreeSet<DocId> = l.iter().map(|&(d, _)| d).collect();
            s.into_iter().collect()
        })
        .collect();

    let mut set_counts: BTreeMap<&[DocId], usize> = BTreeMap::new();
    for s in &sets {
        *set_counts.entry(s.as_slice()).or_default() += 1;
    }
    let mut mode: &[DocId] = &[];
    let mut max_votes = 0;
    for (&s, &c) in &set_counts {
        if c > max_votes {
            max_votes = c;
            mode = s;
        }
    }

    let mut votes: BTreeMap<DocId, (usize, f64)> = BTreeMap::new();
    for list in lists {
        let mut seen = BTreeSet::new();
        for &(d, s) in list.iter() {
            let e = votes.entry(d).or_default();
            if seen.insert(d) {
                e.0 += 1;
            }
            if s.is_finite() {
                e.1 += s;
            }
        }
    }

    let classifiers = sets
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let inst_votes = s.iter().map(|d| votes[d]);
            let min_inst_freq = inst_votes.clone().map(|v| v.0).min().unwrap_or(0);
            let max_inst_freq = inst_votes.clone().map(|v| v.0).max().unwrap_or(0);
            let min_inst_count = inst_votes.map(|v| v.1).reduce(f64::min).unwrap_or(0.0);
            let common = intersection_size(s, mode);
            let union = s.len() + mode.len() - common;
            let max_prec = sets
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, o)| ratio(intersection_size(s, o), s.len().max(o.len())))
                .collect();
            ClassifierFeatures {
                min_inst_freq,
                max_inst_freq,
                min_inst_count,
                inst_count: s.len(),
                empty_set: s.is_empty(),
                set_count: set_counts[s.as_slice()],
                mode_prec: ratio(common, s.len()),
                mode_rec: ratio(common, mode.len()),
                mode_jaccard: ratio(common, union),
                max_prec,
            }
        })
        .collect();

    RawMetafeatures {
        label_prob: label_freq < RARE_LABEL_FREQ,
        label_prob2: label_freq > FREQUENT_LABEL_FREQ,
        uniq_instancesets: set_counts.len(),
        max_votes,
        mode: mode.to_vec(),
        classifiers,
    }
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

impl RawMetafeatures {
    /// Feature vectors per classifier. Counts over classifiers are scaled as
    /// `log1p(x) / log1p(M)`, instance counts as `log1p(x) / log1p(n_max)`
    /// with `n_max` the longest list for the label; indicators and ratios
    /// are kept as they are.
    pub fn normalized(&self) -> Vec<Vec<f64>> {
        let m = self.classifiers.len();
        let by_m = |x: f64| x.max(0.0).ln_1p() / (m.max(1) as f64).ln_1p();
        let longest = self.classifiers.iter().map(|c| c.inst_count).max().unwrap_or(0).max(1);
        let by_len = |x: usize| (x as f64).ln_1p() / (longest as f64).ln_1p();
        self.classifiers
            .iter()
            .map(|c| {
                let mut v = Vec::with_capacity(metafeature_dim(m));
                v.extend([
                    indicator(self.label_prob),
                    indicator(self.label_prob2),
                    by_m(self.uniq_instancesets as f64),
                    by_m(self.max_votes as f64),
                    by_m(c.min_inst_freq as f64),
                    by_m(c.max_inst_freq as f64),
                    by_m(c.min_inst_count),
                    by_len(c.inst_count),
                    indicator(c.empty_set),
                    by_m(c.set_count as f64),
                    c.mode_prec,
                    c.mode_rec,
                    c.mode_jaccard,
                ]);
                v.extend(&c.max_prec);
                v
            })
            .collect()
    }
}

/// Normalized feature vectors, one per classifier.
pub fn compute_metafeatures(lists: &[&[(DocId, f64)]], label_freq: u64) -> Vec<Vec<f64>> {
    raw_metafeatures(lists, label_freq).normalized()
}
