//! Sparse generative models extending Multinomial Naive Bayes.
//!
//! A model holds one smoothed Multinomial per target (a label, or a labelset
//! meta-class under the label powerset transform). Targets may additionally
//! own kernel documents, one per training document, used as kernel densities
//! at classification time. Label models can be smoothed towards a randomly
//! chosen parent node of the label hierarchy.
//!
//! Word probabilities:
//!
//! ```text
//! p_bg(w)    = 1/V                                  (uniform)
//!            = (1 - beta)/V + beta cc(w)/sum cc     (uniform + collection)
//! p_node(w|t) = (1 - gamma) ML(w|t) + gamma ML(w|parent(t))
//! p(w|t)     = (1 - lambda) p_node(w|t) + lambda p_bg(w)
//! p(w|d')    = (c(w,d') + mu p_back(w)) / (|d'| + mu)
//! ```
//!
//! where `p_back` is `p_bg` for models without back-off (`nobo`) and the
//! owning target's `p(w|t)` otherwise.

mod powerset;

pub use powerset::{decode_label_powerset, encode_label_powerset, PowersetMap};

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{labelset_stats, Corpus, FeatureId, Hierarchy, LabelId, SparseDocument};
use crate::error::{Error, Result};
use crate::rng;
use crate::weighting::{collect_stats, weight_features, CollectionStats, WeightingConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Background {
    Uniform,
    UniformCollection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    pub jm_lambda: f64,
    pub dirichlet_mu: f64,
    pub background: Background,
    pub collection_mix: f64,
    pub hierarchy_mix: f64,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self {
            jm_lambda: 0.98,
            dirichlet_mu: 100.0,
            background: Background::Uniform,
            collection_mix: 0.5,
            hierarchy_mix: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PruningConfig {
    /// Features with raw collection count below this are dropped before
    /// estimation.
    pub min_count: f64,
    /// Targets seen in fewer training documents are dropped.
    pub min_label_count: u64,
    /// Stored entries with weighted count below this are dropped after
    /// estimation. Zero drops only zero entries.
    pub precomputed_prune: f64,
    /// Floor applied to a target's entries while counts are accumulated.
    pub online_prune: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelFlags {
    /// Keep one kernel document per training document.
    pub kd: bool,
    /// Kernels smooth towards the background instead of their label model.
    pub nobo: bool,
    /// Kernels score by BM25 dot product instead of likelihood.
    pub bm25_kernel: bool,
    /// Label powerset: targets are labelset meta-classes.
    pub lp: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub weighting: WeightingConfig,
    pub smoothing: SmoothingConfig,
    pub pruning: PruningConfig,
    pub flags: ModelFlags,
    /// Exponent on the label prior; scoring adds `prior_scale * ln prior`.
    pub prior_scale: f64,
    /// Kernels averaged per target under kernel-density scoring.
    pub kernel_top_k: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            weighting: WeightingConfig::default(),
            smoothing: SmoothingConfig::default(),
            pruning: PruningConfig::default(),
            flags: ModelFlags::default(),
            prior_scale: 1.0,
            kernel_top_k: 5,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.weighting.validate()?;
        let s = &self.smoothing;
        let cfg = |m: &str| Err(Error::Config(m.to_string()));
        if !(0.0..1.0).contains(&s.jm_lambda) {
            return cfg("Jelinek-Mercer lambda must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&s.collection_mix) {
            return cfg("collection mix must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&s.hierarchy_mix) {
            return cfg("hierarchy mix must lie in [0, 1]");
        }
        if self.flags.kd && !(s.dirichlet_mu > 0.0 && s.dirichlet_mu.is_finite()) {
            return cfg("Dirichlet prior mass must be positive");
        }
        if self.flags.nobo && !self.flags.kd {
            return cfg("nobo requires kernel densities");
        }
        if self.flags.bm25_kernel && !(self.flags.kd && self.flags.nobo) {
            return cfg("BM25 kernels require kd and nobo");
        }
        let p = &self.pruning;
        if !(p.min_count >= 0.0 && p.precomputed_prune >= 0.0 && p.online_prune >= 0.0) {
            return cfg("pruning thresholds must be >= 0");
        }
        if !self.prior_scale.is_finite() {
            return cfg("prior scale must be finite");
        }
        if self.kernel_top_k == 0 {
            return cfg("kernel top-k must be >= 1");
        }
        Ok(())
    }
}

/// One training document kept as a kernel density of its target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub target: usize,
    pub doc_id: u64,
    pub features: Vec<(FeatureId, f64)>,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NodeCounts {
    counts: Vec<(FeatureId, f64)>,
    norm: f64,
}

impl NodeCounts {
    fn ml(&self, feature: FeatureId) -> f64 {
        if self.norm <= 0.0 {
            return 0.0;
        }
        match self.counts.binary_search_by_key(&feature, |&(f, _)| f) {
            Ok(i) => self.counts[i].1 / self.norm,
            Err(_) => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgmModel {
    config: ModelConfig,
    stats: CollectionStats,
    vocab: Vec<FeatureId>,
    bg_counts: BTreeMap<FeatureId, f64>,
    bg_total: f64,
    /// Target ids, ascending. Labels, or meta-classes under lp.
    targets: Vec<u32>,
    target_docs: Vec<u64>,
    num_train_docs: u64,
    cond: Vec<NodeCounts>,
    kernels: Option<Vec<Kernel>>,
    parent_of: BTreeMap<u32, u32>,
    parent_nodes: BTreeMap<u32, NodeCounts>,
    powerset: Option<PowersetMap>,
    label_freq: BTreeMap<LabelId, u64>,
}

const HIERARCHY_TAG: u64 = 0x4849_4552;
const MODEL_FORMAT: &str = "xmlc-sgm";
const MODEL_VERSION: u32 = 1;

fn is_power_of_two_at_least_two(n: u64) -> bool {
    n >= 2 && n.is_power_of_two()
}

fn sorted_entries(map: HashMap<FeatureId, f64>) -> Vec<(FeatureId, f64)> {
    let mut v: Vec<_> = map.into_iter().collect();
    v.sort_unstable_by_key(|&(f, _)| f);
    v
}

/// Estimates a model in a single pass over the training documents.
pub fn train_model(train: &Corpus, config: &ModelConfig, hierarchy: Option<&Hierarchy>) -> Result<SgmModel> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidInput("training corpus is empty".into()));
    }
    if config.flags.lp && hierarchy.is_some() {
        return Err(Error::Config(
            "hierarchy smoothing is not defined for label powerset targets".into(),
        ));
    }

    let mut raw_cc: HashMap<FeatureId, f64> = HashMap::new();
    for doc in train.iter() {
        for &(f, c) in &doc.features {
            *raw_cc.entry(f).or_insert(0.0) += c;
        }
    }
    let min_count = config.pruning.min_count;
    let filtered = Corpus::new(
        train.source_name.clone(),
        train
            .iter()
            .map(|d| SparseDocument {
                doc_id: d.doc_id,
                features: d
                    .features
                    .iter()
                    .copied()
                    .filter(|&(f, _)| raw_cc[&f] >= min_count)
                    .collect(),
                labels: d.labels.clone(),
            })
            .collect(),
    );
    let stats = collect_stats(&filtered);
    let vocab: Vec<FeatureId> = stats.doc_freq.keys().copied().collect();
    if vocab.is_empty() {
        return Err(Error::InvalidInput("no features survive pruning".into()));
    }

    let mut powerset = None;
    let doc_targets: Vec<Vec<u32>> = if config.flags.lp {
        let mut map = PowersetMap::default();
        let mut out = Vec::with_capacity(filtered.len());
        for doc in filtered.iter() {
            if doc.labels.is_empty() {
                return Err(Error::InvalidInput(format!(
                    "label powerset needs labeled documents; document {} has none",
                    doc.doc_id
                )));
            }
            out.push(vec![map.encode(&doc.labels)]);
        }
        powerset = Some(map);
        out
    } else {
        filtered.iter().map(|d| d.labels.clone()).collect()
    };

    let mut freq: BTreeMap<u32, u64> = BTreeMap::new();
    for ts in &doc_targets {
        for &t in ts {
            *freq.entry(t).or_insert(0) += 1;
        }
    }
    let targets: Vec<u32> = freq
        .iter()
        .filter(|&(_, &n)| n >= config.pruning.min_label_count)
        .map(|(&t, _)| t)
        .collect();
    if targets.is_empty() {
        return Err(Error::InvalidInput("no labels survive pruning".into()));
    }
    let target_docs: Vec<u64> = targets.iter().map(|t| freq[t]).collect();

    let mut acc: Vec<HashMap<FeatureId, f64>> = vec![HashMap::new(); targets.len()];
    let mut seen = vec![0u64; targets.len()];
    let mut kernels = config.flags.kd.then(Vec::new);
    let mut bg_counts: BTreeMap<FeatureId, f64> = BTreeMap::new();
    let online = config.pruning.online_prune;

    for (doc, ts) in filtered.iter().zip(&doc_targets) {
        if doc.features.is_empty() {
            continue;
        }
        let weighted = weight_features(&doc.features, &config.weighting, &stats)?;
        for &(f, w) in &weighted {
            *bg_counts.entry(f).or_insert(0.0) += w;
        }
        let length: f64 = weighted.iter().map(|&(_, w)| w).sum();
        for t in ts {
            let Ok(ti) = targets.binary_search(t) else {
                continue;
            };
            let entries = &mut acc[ti];
            for &(f, w) in &weighted {
                *entries.entry(f).or_insert(0.0) += w;
            }
            seen[ti] += 1;
            if online > 0.0 && is_power_of_two_at_least_two(seen[ti]) {
                entries.retain(|_, w| *w >= online);
            }
            if let Some(k) = kernels.as_mut() {
                k.push(Kernel {
                    target: ti,
                    doc_id: doc.doc_id,
                    features: weighted.clone(),
                    length,
                });
            }
        }
    }

    let pct = config.pruning.precomputed_prune;
    let cond: Vec<NodeCounts> = acc
        .into_iter()
        .map(|entries| {
            let counts: Vec<_> = sorted_entries(entries)
                .into_iter()
                .filter(|&(_, w)| if pct > 0.0 { w >= pct } else { w > 0.0 })
                .collect();
            let norm = counts.iter().map(|&(_, w)| w).sum();
            NodeCounts { counts, norm }
        })
        .collect();
    let bg_total = bg_counts.values().sum();

    let mut model = SgmModel {
        config: *config,
        stats,
        vocab,
        bg_counts,
        bg_total,
        targets,
        target_docs,
        num_train_docs: train.len() as u64,
        cond,
        kernels,
        parent_of: BTreeMap::new(),
        parent_nodes: BTreeMap::new(),
        powerset,
        label_freq: labelset_stats(train).label_freq,
    };
    if let Some(h) = hierarchy {
        model.attach_hierarchy(h);
    }
    Ok(model)
}

impl SgmModel {
    fn attach_hierarchy(&mut self, hierarchy: &Hierarchy) {
        for &label in &self.targets {
            let parents = hierarchy.parents(label);
            let mut rng = rng::derived_rng(self.config.seed, &[HIERARCHY_TAG, label as u64]);
            if let Some(&p) = parents.choose(&mut rng) {
                self.parent_of.insert(label, p);
            }
        }
        let chosen: Vec<u32> = {
            let mut v: Vec<u32> = self.parent_of.values().copied().collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        for parent in chosen {
            let mut acc: HashMap<FeatureId, f64> = HashMap::new();
            for child in hierarchy.children(parent) {
                if let Ok(ci) = self.targets.binary_search(&child) {
                    for &(f, w) in &self.cond[ci].counts {
                        *acc.entry(f).or_insert(0.0) += w;
                    }
                }
            }
            let counts = sorted_entries(acc);
            let norm = counts.iter().map(|&(_, w)| w).sum();
            self.parent_nodes.insert(parent, NodeCounts { counts, norm });
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn flags(&self) -> ModelFlags {
        self.config.flags
    }

    pub fn collection_stats(&self) -> &CollectionStats {
        &self.stats
    }

    pub fn vocab(&self) -> &[FeatureId] {
        &self.vocab
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn targets(&self) -> &[u32] {
        &self.targets
    }

    pub fn target_index(&self, target: u32) -> Option<usize> {
        self.targets.binary_search(&target).ok()
    }

    pub fn num_train_docs(&self) -> u64 {
        self.num_train_docs
    }

    pub fn powerset(&self) -> Option<&PowersetMap> {
        self.powerset.as_ref()
    }

    /// Training document frequency of every original label.
    pub fn label_freq(&self) -> &BTreeMap<LabelId, u64> {
        &self.label_freq
    }

    pub fn kernels(&self) -> Option<&[Kernel]> {
        self.kernels.as_deref()
    }

    pub fn prior(&self, target_idx: usize) -> f64 {
        self.target_docs[target_idx] as f64 / self.num_train_docs as f64
    }

    /// `prior_scale * ln prior(t)`.
    pub fn log_prior_term(&self, target_idx: usize) -> f64 {
        if self.config.prior_scale == 0.0 {
            0.0
        } else {
            self.config.prior_scale * self.prior(target_idx).ln()
        }
    }

    /// Weighted `(feature, count)` entries of a target, ascending by feature.
    pub fn cond_weights(&self, target_idx: usize) -> &[(FeatureId, f64)] {
        &self.cond[target_idx].counts
    }

    pub fn label_norm(&self, target_idx: usize) -> f64 {
        self.cond[target_idx].norm
    }

    /// Parent node chosen for hierarchy smoothing of a target.
    pub fn parent_of(&self, target: u32) -> Option<u32> {
        self.parent_of.get(&target).copied()
    }

    /// Parent-node entries used by a target, or an empty slice when the
    /// target is not hierarchy smoothed.
    pub fn parent_weights(&self, target_idx: usize) -> &[(FeatureId, f64)] {
        match self.smoothing_parent(target_idx) {
            Some(node) => &node.counts,
            None => &[],
        }
    }

    fn smoothing_parent(&self, target_idx: usize) -> Option<&NodeCounts> {
        if self.config.smoothing.hierarchy_mix <= 0.0 {
            return None;
        }
        self.parent_of
            .get(&self.targets[target_idx])
            .and_then(|p| self.parent_nodes.get(p))
    }

    /// Clears all label-conditional counts. Only useful for checking that a
    /// scoring path never reads them.
    #[doc(hidden)]
    pub fn clear_label_conditionals(&mut self) {
        for node in &mut self.cond {
            node.counts.clear();
            node.norm = 0.0;
        }
        self.parent_nodes.clear();
    }

    pub fn background_prob(&self, feature: FeatureId) -> f64 {
        let v = self.vocab.len() as f64;
        match self.config.smoothing.background {
            Background::Uniform => 1.0 / v,
            Background::UniformCollection => {
                let beta = self.config.smoothing.collection_mix;
                let cc = self.bg_counts.get(&feature).copied().unwrap_or(0.0);
                let coll = if self.bg_total > 0.0 { cc / self.bg_total } else { 0.0 };
                (1.0 - beta) / v + beta * coll
            }
        }
    }

    /// Hierarchy-interpolated maximum-likelihood estimate. Falls back to the
    /// background when every entry of the target was pruned away.
    pub fn node_prob(&self, target_idx: usize, feature: FeatureId) -> f64 {
        let own = &self.cond[target_idx];
        if own.norm <= 0.0 {
            return self.background_prob(feature);
        }
        let ml = own.ml(feature);
        match self.smoothing_parent(target_idx) {
            Some(parent) => {
                let gamma = self.config.smoothing.hierarchy_mix;
                (1.0 - gamma) * ml + gamma * parent.ml(feature)
            }
            None => ml,
        }
    }

    /// Smoothed `p(w|t)` by target index.
    pub fn word_prob(&self, target_idx: usize, feature: FeatureId) -> f64 {
        let lambda = self.config.smoothing.jm_lambda;
        (1.0 - lambda) * self.node_prob(target_idx, feature) + lambda * self.background_prob(feature)
    }

    /// Smoothed `p(w|t)` by target id.
    pub fn label_word_prob(&self, label: u32, feature: FeatureId) -> Result<f64> {
        let idx = self.target_index(label).ok_or(Error::UnknownLabel(label))?;
        Ok(self.word_prob(idx, feature))
    }

    /// Distribution the kernels of `target_idx` are smoothed towards.
    pub fn kernel_backoff_prob(&self, target_idx: usize, feature: FeatureId) -> f64 {
        if self.config.flags.nobo {
            self.background_prob(feature)
        } else {
            self.word_prob(target_idx, feature)
        }
    }

    /// Dirichlet-smoothed kernel document probability `p(w|d')`.
    pub fn kernel_doc_prob(&self, kernel: &Kernel, feature: FeatureId) -> Result<f64> {
        if !self.config.flags.kd {
            return Err(Error::Config("model has no kernel densities".into()));
        }
        let mu = self.config.smoothing.dirichlet_mu;
        if !(mu > 0.0) {
            return Err(Error::Config("Dirichlet prior mass must be positive".into()));
        }
        let c = kernel
            .features
            .binary_search_by_key(&feature, |&(f, _)| f)
            .map(|i| kernel.features[i].1)
            .unwrap_or(0.0);
        Ok((c + mu * self.kernel_backoff_prob(kernel.target, feature)) / (kernel.length + mu))
    }

    /// Applies the model's feature weighting to a document.
    pub fn weight_document(&self, doc: &SparseDocument) -> Result<Vec<(FeatureId, f64)>> {
        if doc.features.is_empty() {
            return Ok(Vec::new());
        }
        weight_features(&doc.features, &self.config.weighting, &self.stats)
    }

    pub fn to_json(&self) -> Result<String> {
        let envelope = ModelEnvelope {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            model: self.clone(),
        };
        serde_json::to_string(&envelope).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let envelope: ModelEnvelope = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        if envelope.format != MODEL_FORMAT || envelope.version != MODEL_VERSION {
            return Err(Error::Format(format!(
                "unsupported model format {} v{}",
                envelope.format, envelope.version
            )));
        }
        Ok(envelope.model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelEnvelope {
    format: String,
    version: u32,
    model: SgmModel,
}
