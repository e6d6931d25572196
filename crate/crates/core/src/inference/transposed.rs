//! Transposed prediction: instead of choosing labels for each document, every
//! label keeps a bounded list of the documents that rank it highest.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};

use crate::corpus::{DocId, FeatureId, LabelId, LabelStats};
use crate::parallel;

use super::InvertedIndex;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstantiateConfig {
    /// Instances kept per training occurrence of a label.
    pub instantiate_weight: f64,
    /// Candidates with rank score `1/r` below this are dropped.
    pub instantiate_threshold: f64,
    pub top_k_labels_per_doc: usize,
}

impl Default for InstantiateConfig {
    fn default() -> Self {
        Self {
            instantiate_weight: 1.0,
            instantiate_threshold: 0.0,
            top_k_labels_per_doc: 20,
        }
    }
}

/// `max(1, ceil(iw * label_freq))`.
pub fn capacity(cfg: &InstantiateConfig, label_freq: u64) -> usize {
    ((cfg.instantiate_weight * label_freq as f64).ceil() as usize).max(1)
}

/// One retained (document, label) assignment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceScore {
    pub doc_id: DocId,
    /// `1/r` for the label's rank `r` within the document.
    pub score: f64,
    /// The underlying model score, used to order equal rank scores.
    pub tiebreak: f64,
}

impl Eq for InstanceScore {}

impl Ord for InstanceScore {
    /// Greater is better: higher score, then higher tiebreak, then lower doc id.
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then(self.tiebreak.total_cmp(&other.tiebreak))
            .then(other.doc_id.cmp(&self.doc_id))
    }
}

impl PartialOrd for InstanceScore {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Keeps the `capacity` greatest items; the root of the heap is the current
/// minimum so eviction is `O(log capacity)`.
#[derive(Debug, Clone)]
struct BoundedList {
    capacity: usize,
    heap: BinaryHeap<Reverse<InstanceScore>>,
}

impl BoundedList {
    fn new(capacity: usize) -> Self {
        Self {
            capacity,
            heap: BinaryHeap::with_capacity(capacity.min(1024) + 1),
        }
    }

    fn push(&mut self, item: InstanceScore) {
        if self.heap.len() < self.capacity {
            self.heap.push(Reverse(item));
        } else if let Some(Reverse(min)) = self.heap.peek() {
            if item > *min {
                self.heap.pop();
                self.heap.push(Reverse(item));
            }
        }
    }

    fn into_sorted(self) -> Vec<InstanceScore> {
        let mut v: Vec<InstanceScore> = self.heap.into_iter().map(|Reverse(x)| x).collect();
        v.sort_unstable_by(|a, b| b.cmp(a));
        v
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TransposedPrediction {
    /// Per label, retained instances best first.
    pub lists: BTreeMap<LabelId, Vec<InstanceScore>>,
}

impl TransposedPrediction {
    /// Transposes back to labelsets per document. Documents in `doc_ids`
    /// without any label get an empty set.
    pub fn to_documents(&self, doc_ids: impl IntoIterator<Item = DocId>) -> BTreeMap<DocId, Vec<LabelId>> {
        let mut out: BTreeMap<DocId, Vec<LabelId>> = doc_ids.into_iter().map(|d| (d, Vec::new())).collect();
        for (&label, list) in &self.lists {
            for inst in list {
                out.entry(inst.doc_id).or_default().push(label);
            }
        }
        out
    }

    pub fn num_assignments(&self) -> usize {
        self.lists.values().map(Vec::len).sum()
    }
}

fn collect_chunk(
    index: &InvertedIndex,
    docs: &[(DocId, Vec<(FeatureId, f64)>)],
    cfg: &InstantiateConfig,
    stats: &LabelStats,
) -> BTreeMap<LabelId, BoundedList> {
    let mut lists: BTreeMap<LabelId, BoundedList> = BTreeMap::new();
    for (doc_id, weighted) in docs {
        let pred = index.score_document(*doc_id, weighted, cfg.top_k_labels_per_doc);
        for (rank, (label, base)) in index.label_ranking(&pred).into_iter().enumerate() {
            let score = 1.0 / (rank + 1) as f64;
            if score < cfg.instantiate_threshold {
                break;
            }
            lists
                .entry(label)
                .or_insert_with(|| BoundedList::new(capacity(cfg, stats.freq(label))))
                .push(InstanceScore {
                    doc_id: *doc_id,
                    score,
                    tiebreak: base,
                });
        }
    }
    lists
}

/// Scores every document and keeps, for each label, its best instances.
///
/// Documents are split across `workers` threads with private bounded lists
/// that are merged afterwards; the result does not depend on the worker
/// count or on document order.
pub fn predict_transposed(
    index: &InvertedIndex,
    docs: &[(DocId, Vec<(FeatureId, f64)>)],
    cfg: &InstantiateConfig,
    stats: &LabelStats,
    workers: usize,
) -> TransposedPrediction {
    let partials = parallel::map_chunks(docs, workers, |chunk| collect_chunk(index, chunk, cfg, stats));
    let mut merged: BTreeMap<LabelId, BoundedList> = BTreeMap::new();
    for part in partials {
        for (label, list) in part {
            let target = merged.entry(label).or_insert_with(|| BoundedList::new(list.capacity));
            for Reverse(item) in list.heap {
                target.push(item);
            }
        }
    }
    TransposedPrediction {
        lists: merged.into_iter().map(|(l, list)| (l, list.into_sorted())).collect(),
    }
}
