//! Sparse inference through inverted indices.
//!
//! A smoothed Multinomial score decomposes into a part shared by all targets
//! and a sparse part that is non-zero only where a document feature overlaps
//! the target's support:
//!
//! ```text
//! score(t|d) = ps ln prior(t)                                  floor_term(t)
//!            + sum_{w in d} x_w ln(lambda p_bg(w))             shared
//!            + |x| mass(t)
//!            + sum_{w in d and t} x_w [ln p(w|t) - ln(lambda p_bg(w))]   postings
//! ```
//!
//! `mass(t)` is zero except for targets whose counts were pruned away
//! entirely. Kernel documents decompose the same way with
//! `mass(k) = ln(mu / (|d'| + mu))` and lifts `ln((c + mu p) / (mu p))`, so
//! scoring touches only the postings of the document's features plus one
//! constant per target.

mod transposed;

pub use transposed::{capacity, predict_transposed, InstanceScore, InstantiateConfig, TransposedPrediction};

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use crate::corpus::{DocId, FeatureId, LabelId, SparseDocument};
use crate::error::{Error, Result};
use crate::sgm::{PowersetMap, SgmModel};

/// Feature-keyed posting lists in compressed sparse row layout.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Postings {
    features: Vec<FeatureId>,
    offsets: Vec<usize>,
    entries: Vec<(u32, f64)>,
}

impl Postings {
    fn from_map(map: BTreeMap<FeatureId, Vec<(u32, f64)>>) -> Self {
        let mut p = Postings {
            features: Vec::with_capacity(map.len()),
            offsets: Vec::with_capacity(map.len() + 1),
            entries: Vec::new(),
        };
        p.offsets.push(0);
        for (f, mut list) in map {
            list.sort_unstable_by_key(|&(t, _)| t);
            p.features.push(f);
            p.entries.extend(list);
            p.offsets.push(p.entries.len());
        }
        p
    }

    /// Posting list of a feature, sorted by target id.
    pub fn get(&self, feature: FeatureId) -> &[(u32, f64)] {
        match self.features.binary_search(&feature) {
            Ok(i) => &self.entries[self.offsets[i]..self.offsets[i + 1]],
            Err(_) => &[],
        }
    }

    pub fn num_entries(&self) -> usize {
        self.entries.len()
    }

    pub fn num_features(&self) -> usize {
        self.features.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoringMode {
    Multinomial,
    /// Dirichlet kernels; `backoff` smooths them towards their label model.
    Kernel {
        backoff: bool,
    },
    /// Kernels scored by the dot product of BM25-weighted vectors.
    Bm25Kernel,
}

#[derive(Debug, Clone, PartialEq)]
struct KernelIndex {
    postings: Postings,
    kernel_target: Vec<u32>,
    kernel_mass: Vec<f64>,
    /// Kernel ids per target ordered by mass descending, then id.
    by_target: Vec<Vec<u32>>,
    top_k: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    mode: ScoringMode,
    targets: Vec<u32>,
    floor_term: Vec<f64>,
    mass: Vec<f64>,
    label_postings: Option<Postings>,
    kernels: Option<KernelIndex>,
    lambda: f64,
    bg_prob: Vec<(FeatureId, f64)>,
    bg_default: f64,
    powerset: Option<PowersetMap>,
}

pub fn build_inverted_index(model: &SgmModel) -> Result<InvertedIndex> {
    let flags = model.flags();
    let mode = match (flags.kd, flags.nobo, flags.bm25_kernel) {
        (false, _, _) => ScoringMode::Multinomial,
        (true, false, _) => ScoringMode::Kernel { backoff: true },
        (true, true, false) => ScoringMode::Kernel { backoff: false },
        (true, true, true) => ScoringMode::Bm25Kernel,
    };
    let smoothing = model.config().smoothing;
    let lambda = smoothing.jm_lambda;
    let needs_labels = matches!(mode, ScoringMode::Multinomial | ScoringMode::Kernel { backoff: true });
    if needs_labels && lambda <= 0.0 {
        return Err(Error::Config(
            "sparse scoring needs a positive Jelinek-Mercer lambda".into(),
        ));
    }

    let n = model.targets().len();
    let floor_term: Vec<f64> = (0..n).map(|t| model.log_prior_term(t)).collect();
    let mut mass = vec![0.0; n];

    let label_postings = needs_labels.then(|| {
        let mut map: BTreeMap<FeatureId, Vec<(u32, f64)>> = BTreeMap::new();
        for t in 0..n {
            if model.label_norm(t) <= 0.0 {
                // Fully pruned target: p(w|t) = p_bg(w) everywhere.
                mass[t] = -lambda.ln();
                continue;
            }
            let mut support: Vec<FeatureId> = model
                .cond_weights(t)
                .iter()
                .chain(model.parent_weights(t))
                .map(|&(f, _)| f)
                .collect();
            support.sort_unstable();
            support.dedup();
            for f in support {
                let lift = model.word_prob(t, f).ln() - (lambda * model.background_prob(f)).ln();
                map.entry(f).or_default().push((t as u32, lift));
            }
        }
        Postings::from_map(map)
    });

    let kernels = match (mode, model.kernels()) {
        (ScoringMode::Multinomial, _) => None,
        (_, None) => return Err(Error::Config("kernel model without kernel store".into())),
        (_, Some(ks)) => {
            let mu = smoothing.dirichlet_mu;
            let mut map: BTreeMap<FeatureId, Vec<(u32, f64)>> = BTreeMap::new();
            let mut kernel_mass = Vec::with_capacity(ks.len());
            let mut kernel_target = Vec::with_capacity(ks.len());
            let mut by_target: Vec<Vec<u32>> = vec![Vec::new(); n];
            for (ki, k) in ks.iter().enumerate() {
                kernel_target.push(k.target as u32);
                by_target[k.target].push(ki as u32);
                if mode == ScoringMode::Bm25Kernel {
                    kernel_mass.push(0.0);
                    for &(f, w) in &k.features {
                        map.entry(f).or_default().push((ki as u32, w));
                    }
                } else {
                    kernel_mass.push((mu / (k.length + mu)).ln());
                    for &(f, c) in &k.features {
                        let back = mu * model.kernel_backoff_prob(k.target, f);
                        map.entry(f).or_default().push((ki as u32, ((c + back) / back).ln()));
                    }
                }
            }
            for list in &mut by_target {
                list.sort_by(|&a, &b| {
                    kernel_mass[b as usize]
                        .total_cmp(&kernel_mass[a as usize])
                        .then(a.cmp(&b))
                });
            }
            Some(KernelIndex {
                postings: Postings::from_map(map),
                kernel_target,
                kernel_mass,
                by_target,
                top_k: model.config().kernel_top_k,
            })
        }
    };

    let bg_prob = model.vocab().iter().map(|&f| (f, model.background_prob(f))).collect();
    let bg_default = model.background_prob(FeatureId::MAX);

    Ok(InvertedIndex {
        mode,
        targets: model.targets().to_vec(),
        floor_term,
        mass,
        label_postings,
        kernels,
        lambda,
        bg_prob,
        bg_default,
        powerset: model.powerset().cloned(),
    })
}

/// Ranked targets for one document.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionList {
    pub doc_id: DocId,
    /// `(target, score)` by score descending, ties by ascending target.
    pub entries: Vec<(u32, f64)>,
}

/// Scores are rounded to multiples of this, so that targets with equal
/// scores in exact arithmetic tie exactly and fall back to id order.
pub const SCORE_GRID: f64 = 1.0 / 4_294_967_296.0;

pub fn snap_score(s: f64) -> f64 {
    (s / SCORE_GRID).round() * SCORE_GRID
}

fn rank_order(a: &(u32, f64), b: &(u32, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Natural log of the mean of `exp(v)` over `values`.
fn log_mean_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln() - (values.len() as f64).ln()
}

impl InvertedIndex {
    pub fn mode(&self) -> ScoringMode {
        self.mode
    }

    pub fn targets(&self) -> &[u32] {
        &self.targets
    }

    pub fn floor_term(&self, target_idx: usize) -> f64 {
        self.floor_term[target_idx]
    }

    pub fn label_postings(&self) -> Option<&Postings> {
        self.label_postings.as_ref()
    }

    pub fn kernel_postings(&self) -> Option<&Postings> {
        self.kernels.as_ref().map(|k| &k.postings)
    }

    pub fn powerset(&self) -> Option<&PowersetMap> {
        self.powerset.as_ref()
    }

    fn background(&self, feature: FeatureId) -> f64 {
        match self.bg_prob.binary_search_by_key(&feature, |&(f, _)| f) {
            Ok(i) => self.bg_prob[i].1,
            Err(_) => self.bg_default,
        }
    }

    /// Scores every target, rounded to [`SCORE_GRID`]. `doc` must already be
    /// weighted.
    pub fn score_all(&self, doc: &[(FeatureId, f64)]) -> Vec<f64> {
        let n = self.targets.len();
        let total: f64 = doc.iter().map(|&(_, x)| x).sum();
        let mut scores = self.floor_term.clone();

        let mut label_ll = vec![0.0; n];
        if let Some(postings) = &self.label_postings {
            let shared: f64 = doc
                .iter()
                .map(|&(f, x)| x * (self.lambda * self.background(f)).ln())
                .sum();
            for (ll, m) in label_ll.iter_mut().zip(&self.mass) {
                *ll = shared + total * m;
            }
            for &(f, x) in doc {
                for &(t, lift) in postings.get(f) {
                    label_ll[t as usize] += x * lift;
                }
            }
        }

        match self.mode {
            ScoringMode::Multinomial => {
                for (s, ll) in scores.iter_mut().zip(&label_ll) {
                    *s += ll;
                }
            }
            ScoringMode::Kernel { backoff } => {
                let ki = self.kernels.as_ref().expect("kernel index");
                let base: Vec<f64> = if backoff {
                    label_ll
                } else {
                    let shared: f64 = doc.iter().map(|&(f, x)| x * self.background(f).ln()).sum();
                    vec![shared; n]
                };
                let touched = self.kernel_lifts(ki, doc);
                for t in 0..n {
                    let residuals = self.top_kernel_residuals(ki, t, total, touched.get(&(t as u32)));
                    scores[t] += base[t] + log_mean_exp(&residuals);
                }
            }
            ScoringMode::Bm25Kernel => {
                let ki = self.kernels.as_ref().expect("kernel index");
                let touched = self.kernel_lifts(ki, doc);
                for (t, s) in scores.iter_mut().enumerate() {
                    let best = touched
                        .get(&(t as u32))
                        .map(|ks| ks.iter().map(|&(_, v)| v).fold(0.0, f64::max))
                        .unwrap_or(0.0);
                    *s += best;
                }
            }
        }
        for s in &mut scores {
            *s = snap_score(*s);
        }
        scores
    }

    /// Accumulated kernel lifts grouped by target.
    fn kernel_lifts(&self, ki: &KernelIndex, doc: &[(FeatureId, f64)]) -> HashMap<u32, Vec<(u32, f64)>> {
        let mut acc: HashMap<u32, f64> = HashMap::new();
        for &(f, x) in doc {
            for &(k, lift) in ki.postings.get(f) {
                *acc.entry(k).or_insert(0.0) += x * lift;
            }
        }
        let mut by_target: HashMap<u32, Vec<(u32, f64)>> = HashMap::new();
        for (k, v) in acc {
            by_target.entry(ki.kernel_target[k as usize]).or_default().push((k, v));
        }
        for list in by_target.values_mut() {
            list.sort_unstable_by_key(|&(k, _)| k);
        }
        by_target
    }

    /// Residual log-likelihoods `|x| mass(k) + lift(k)` of a target's best
    /// kernels, at most `top_k` of them.
    fn top_kernel_residuals(
        &self,
        ki: &KernelIndex,
        target: usize,
        total: f64,
        touched: Option<&Vec<(u32, f64)>>,
    ) -> Vec<f64> {
        let kernels = &ki.by_target[target];
        let k = ki.top_k.min(kernels.len());
        let mut cand: Vec<f64> = Vec::with_capacity(k + touched.map_or(0, Vec::len));
        let is_touched = |id: u32| touched.is_some_and(|t| t.binary_search_by_key(&id, |&(k, _)| k).is_ok());
        if let Some(t) = touched {
            cand.extend(t.iter().map(|&(kid, lift)| total * ki.kernel_mass[kid as usize] + lift));
        }
        cand.extend(
            kernels
                .iter()
                .filter(|&&kid| !is_touched(kid))
                .take(k)
                .map(|&kid| total * ki.kernel_mass[kid as usize]),
        );
        cand.sort_unstable_by(|a, b| b.total_cmp(a));
        cand.truncate(k);
        cand
    }

    pub fn score_document(&self, doc_id: DocId, weighted: &[(FeatureId, f64)], top_k: usize) -> PredictionList {
        let scores = self.score_all(weighted);
        let mut entries: Vec<(u32, f64)> = self.targets.iter().copied().zip(scores).collect();
        let k = top_k.max(1).min(entries.len());
        if k < entries.len() {
            entries.select_nth_unstable_by(k - 1, rank_order);
            entries.truncate(k);
        }
        entries.sort_unstable_by(rank_order);
        PredictionList { doc_id, entries }
    }

    /// Labels ranked for a document. Under the label powerset, meta-classes
    /// are expanded in rank order and each label keeps its best rank.
    pub fn label_ranking(&self, pred: &PredictionList) -> Vec<(LabelId, f64)> {
        match &self.powerset {
            None => pred.entries.clone(),
            Some(map) => {
                let mut seen = std::collections::BTreeSet::new();
                let mut out = Vec::new();
                for &(meta, score) in &pred.entries {
                    if let Ok(labels) = map.decode(meta) {
                        for &l in labels {
                            if seen.insert(l) {
                                out.push((l, score));
                            }
                        }
                    }
                }
                out
            }
        }
    }
}

pub fn score_document(
    index: &InvertedIndex,
    doc_id: DocId,
    weighted: &[(FeatureId, f64)],
    top_k: usize,
) -> PredictionList {
    index.score_document(doc_id, weighted, top_k)
}

/// Per-document decision rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionPolicy {
    /// Labels whose probability relative to the top label is at least this
    /// are predicted: `exp(s - s_top) >= relative_threshold`.
    pub relative_threshold: f64,
}

impl Default for DecisionPolicy {
    fn default() -> Self {
        Self {
            relative_threshold: 1.0,
        }
    }
}

/// Turns a ranked list into a labelset. Always returns at least one label
/// for a non-empty list.
pub fn predict_per_document(
    pred: &PredictionList,
    powerset: Option<&PowersetMap>,
    policy: &DecisionPolicy,
) -> Result<Vec<LabelId>> {
    let Some(&(top, top_score)) = pred.entries.first() else {
        return Ok(Vec::new());
    };
    if let Some(map) = powerset {
        return map.decode(top).map(<[LabelId]>::to_vec);
    }
    let mut labels: Vec<LabelId> = pred
        .entries
        .iter()
        .filter(|&&(_, s)| (s - top_score).exp() >= policy.relative_threshold)
        .map(|&(l, _)| l)
        .collect();
    if labels.is_empty() {
        labels.push(top);
    }
    Ok(labels)
}

/// Bundles a model with its index.
#[derive(Debug, Clone)]
pub struct Classifier {
    pub model: SgmModel,
    pub index: InvertedIndex,
}

impl Classifier {
    pub fn new(model: SgmModel) -> Result<Self> {
        let index = build_inverted_index(&model)?;
        Ok(Self { model, index })
    }

    pub fn rank(&self, doc: &SparseDocument, top_k: usize) -> Result<PredictionList> {
        let weighted = self.model.weight_document(doc)?;
        Ok(self.index.score_document(doc.doc_id, &weighted, top_k))
    }

    pub fn predict(&self, doc: &SparseDocument, top_k: usize, policy: &DecisionPolicy) -> Result<Vec<LabelId>> {
        let pred = self.rank(doc, top_k)?;
        predict_per_document(&pred, self.model.powerset(), policy)
    }

    pub fn weighted_documents(&self, docs: &[SparseDocument]) -> Result<Vec<(DocId, Vec<(FeatureId, f64)>)>> {
        docs.iter()
            .map(|d| Ok((d.doc_id, self.model.weight_document(d)?)))
            .collect()
    }
}
