//! Multi-label sparse datasets: parsing, serialization, segmentation into
//! training portions, fold construction and label statistics.
//!
//! Dataset lines follow the multi-label LibSVM layout:
//!
//! ```text
//! [@doc_id] label(,[ ]label)* feature:count feature:count ...
//! ```
//!
//! The label list may be omitted for unlabeled (test) data, in which case
//! the line starts directly with `feature:count` tokens. The optional
//! `@doc_id` prefix carries an explicit document id; without it a document
//! takes its zero-based record index as id.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;

pub type DocId = u64;
pub type FeatureId = u32;
pub type LabelId = u32;

/// One instance: a sparse count vector and its label set.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDocument {
    pub doc_id: DocId,
    /// Strictly increasing feature ids with positive counts.
    pub features: Vec<(FeatureId, f64)>,
    /// Sorted, deduplicated label ids. Empty for unlabeled data.
    pub labels: Vec<LabelId>,
}

impl SparseDocument {
    /// Builds a document, sorting labels and merging duplicate features.
    pub fn new(doc_id: DocId, mut features: Vec<(FeatureId, f64)>, mut labels: Vec<LabelId>) -> Result<Self> {
        if let Some((f, c)) = features.iter().find(|(_, c)| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::InvalidInput(format!(
                "document {doc_id}: feature {f} has non-positive count {c}"
            )));
        }
        features.sort_by_key(|&(f, _)| f);
        features.dedup_by(|next, kept| {
            if next.0 == kept.0 {
                kept.1 += next.1;
                true
            } else {
                false
            }
        });
        labels.sort_unstable();
        labels.dedup();
        Ok(Self {
            doc_id,
            features,
            labels,
        })
    }

    /// Sum of feature counts.
    pub fn length(&self) -> f64 {
        self.features.iter().map(|&(_, c)| c).sum()
    }

    pub fn has_label(&self, label: LabelId) -> bool {
        self.labels.binary_search(&label).is_ok()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    pub documents: Vec<SparseDocument>,
    pub source_name: String,
}

impl Corpus {
    pub fn new(source_name: impl Into<String>, documents: Vec<SparseDocument>) -> Self {
        Self {
            documents,
            source_name: source_name.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, SparseDocument> {
        self.documents.iter()
    }

    /// Gold labelsets keyed by document id.
    pub fn gold(&self) -> BTreeMap<DocId, Vec<LabelId>> {
        self.documents.iter().map(|d| (d.doc_id, d.labels.clone())).collect()
    }

    fn subset(&self, suffix: &str, indices: &[usize]) -> Corpus {
        Corpus {
            documents: indices.iter().map(|&i| self.documents[i].clone()).collect(),
            source_name: format!("{}#{}", self.source_name, suffix),
        }
    }
}

fn parse_doc_line(line: &str, record: usize) -> std::result::Result<SparseDocument, String> {
    let mut tokens: Vec<&str> = line.split_whitespace().collect();
    let mut doc_id = record as DocId;
    if let Some(first) = tokens.first() {
        if let Some(id) = first.strip_prefix('@') {
            doc_id = id.parse().map_err(|_| format!("invalid document id {first:?}"))?;
            tokens.remove(0);
        }
    }
    let split = tokens
        .iter()
        .position(|t| t.contains(':'))
        .ok_or_else(|| "line has no feature:count tokens".to_string())?;

    let mut labels = Vec::new();
    let label_tokens = &tokens[..split];
    for (i, tok) in label_tokens.iter().enumerate() {
        let last = i + 1 == label_tokens.len();
        let body = match (tok.strip_suffix(','), last) {
            (Some(_), true) => return Err(format!("dangling comma in label list at {tok:?}")),
            (None, false) => return Err(format!("labels must be comma-separated near {tok:?}")),
            (Some(b), false) => b,
            (None, true) => tok,
        };
        for piece in body.split(',') {
            labels.push(
                piece
                    .parse::<LabelId>()
                    .map_err(|_| format!("invalid label {piece:?}"))?,
            );
        }
    }

    let mut features = Vec::with_capacity(tokens.len() - split);
    for tok in &tokens[split..] {
        let (f, c) = tok
            .split_once(':')
            .ok_or_else(|| format!("expected feature:count, found {tok:?}"))?;
        let feature = f
            .parse::<FeatureId>()
            .map_err(|_| format!("invalid feature id in {tok:?}"))?;
        if c.starts_with('-') {
            return Err(format!("negative count in {tok:?}"));
        }
        let count = c.parse::<u64>().map_err(|_| format!("invalid count in {tok:?}"))?;
        if count == 0 {
            return Err(format!("zero count in {tok:?}"));
        }
        features.push((feature, count as f64));
    }
    SparseDocument::new(doc_id, features, labels).map_err(|e| e.to_string())
}

/// Parses dataset text. Blank lines are skipped and do not consume a record
/// index.
pub fn parse_dataset_str(text: &str, source_name: &str) -> Result<Corpus> {
    let mut documents = Vec::new();
    let mut seen = BTreeSet::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let doc = parse_doc_line(line, documents.len()).map_err(|m| Error::parse(source_name, lineno + 1, m))?;
        if !seen.insert(doc.doc_id) {
            return Err(Error::parse(
                source_name,
                lineno + 1,
                format!("duplicate document id {}", doc.doc_id),
            ));
        }
        documents.push(doc);
    }
    Ok(Corpus::new(source_name, documents))
}

pub fn parse_dataset(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset_str(&text, &path.display().to_string())
}

/// Serializes a corpus in the dataset grammar. Explicit `@id` prefixes are
/// written only for documents whose id differs from their position.
pub fn serialize_dataset(corpus: &Corpus) -> String {
    let mut out = String::new();
    for (i, doc) in corpus.documents.iter().enumerate() {
        if doc.doc_id != i as DocId {
            let _ = write!(out, "@{} ", doc.doc_id);
        }
        if !doc.labels.is_empty() {
            out.push_str(&canonical_key(&doc.labels));
            out.push(' ');
        }
        for (j, (f, c)) in doc.features.iter().enumerate() {
            if j > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{f}:{c}");
        }
        out.push('\n');
    }
    out
}

pub fn write_dataset(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, serialize_dataset(corpus)).map_err(|e| Error::io(path, e))
}

/// Comma-joined sorted label ids, e.g. `"1,2"`.
pub fn canonical_key(labels: &[LabelId]) -> String {
    let mut sorted = labels.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    sorted.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(",")
}

/// Returns a permuted copy of the corpus. Document contents are untouched.
pub fn shuffle(corpus: &Corpus, seed: u64) -> Corpus {
    let mut documents = corpus.documents.clone();
    documents.shuffle(&mut rng::rng_from_seed(seed));
    Corpus {
        documents,
        source_name: corpus.source_name.clone(),
    }
}

const SEGMENT_TAG: u64 = 0x5345_474d;
const FOLD_DEV_TAG: u64 = 0x4445_56;
const FOLD_SPLIT_TAG: u64 = 0x5350_4c54;
const FOLD_SHUFFLE_TAG: u64 = 0x5348_5546;

fn permutation(n: usize, seed: u64, tags: &[u64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::derived_rng(seed, tags));
    idx
}

/// Randomly samples (without replacement) a base-classifier training portion
/// and a disjoint ensemble training portion. Each portion keeps source order.
pub fn segment(corpus: &Corpus, base_size: usize, ensemble_size: usize, seed: u64) -> Result<(Corpus, Corpus)> {
    if base_size + ensemble_size > corpus.len() {
        return Err(Error::InvalidInput(format!(
            "cannot segment {} documents into {base_size} + {ensemble_size}",
            corpus.len()
        )));
    }
    let perm = permutation(corpus.len(), seed, &[SEGMENT_TAG]);
    let mut base = perm[..base_size].to_vec();
    let mut ens = perm[base_size..base_size + ensemble_size].to_vec();
    base.sort_unstable();
    ens.sort_unstable();
    Ok((corpus.subset("base", &base), corpus.subset("ensemble", &ens)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FoldScheme {
    /// Folds 0-2: disjoint dev samples, training on everything else.
    ExclusiveDev,
    /// Folds 3-5: shared dev sample, the rest split randomly into thirds.
    RandomThirds,
    /// Folds 6-9: shared dev sample, the rest split in source order into quarters.
    OrderedQuarters,
}

impl FoldScheme {
    pub fn for_fold(fold_index: usize) -> Option<Self> {
        match fold_index {
            0..=2 => Some(Self::ExclusiveDev),
            3..=5 => Some(Self::RandomThirds),
            6..=9 => Some(Self::OrderedQuarters),
            _ => None,
        }
    }

    fn tag(self) -> u64 {
        match self {
            Self::ExclusiveDev => 1,
            Self::RandomThirds => 2,
            Self::OrderedQuarters => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FoldSpec {
    pub scheme: FoldScheme,
    pub fold_index: usize,
    pub dev_size: usize,
    pub seed: u64,
}

impl FoldSpec {
    pub fn new(fold_index: usize, dev_size: usize, seed: u64) -> Result<Self> {
        let scheme = FoldScheme::for_fold(fold_index)
            .ok_or_else(|| Error::Config(format!("fold index {fold_index} not in 0..=9")))?;
        Ok(Self {
            scheme,
            fold_index,
            dev_size,
            seed,
        })
    }
}

fn split_contiguous(items: &[usize], parts: usize, which: usize) -> Vec<usize> {
    let n = items.len();
    let (base, extra) = (n / parts, n % parts);
    let start = which * base + which.min(extra);
    let len = base + usize::from(which < extra);
    items[start..start + len].to_vec()
}

/// Builds the (training, development) pair for one fold.
pub fn make_fold(base_train: &Corpus, spec: &FoldSpec) -> Result<(Corpus, Corpus)> {
    if FoldScheme::for_fold(spec.fold_index) != Some(spec.scheme) {
        return Err(Error::Config(format!(
            "fold index {} does not belong to scheme {:?}",
            spec.fold_index, spec.scheme
        )));
    }
    let n = base_train.len();
    if spec.dev_size >= n {
        return Err(Error::InvalidInput(format!(
            "dev size {} must be smaller than the {n} available documents",
            spec.dev_size
        )));
    }
    let dev_perm = permutation(n, spec.seed, &[FOLD_DEV_TAG, spec.scheme.tag(), spec.dev_size as u64]);

    let (mut dev, mut train) = match spec.scheme {
        FoldScheme::ExclusiveDev => {
            let start = spec.fold_index * spec.dev_size;
            let end = start + spec.dev_size;
            if end >= n {
                return Err(Error::InvalidInput(format!(
                    "fold {} needs {end} documents for disjoint dev samples but only {n} exist",
                    spec.fold_index
                )));
            }
            let dev = dev_perm[start..end].to_vec();
            let taken: BTreeSet<usize> = dev.iter().copied().collect();
            let train = (0..n).filter(|i| !taken.contains(i)).collect::<Vec<_>>();
            (dev, train)
        }
        FoldScheme::RandomThirds | FoldScheme::OrderedQuarters => {
            let dev = dev_perm[..spec.dev_size].to_vec();
            let taken: BTreeSet<usize> = dev.iter().copied().collect();
            let mut rest: Vec<usize> = (0..n).filter(|i| !taken.contains(i)).collect();
            let train = if spec.scheme == FoldScheme::RandomThirds {
                rest.shuffle(&mut rng::derived_rng(
                    spec.seed,
                    &[FOLD_SPLIT_TAG, spec.scheme.tag(), spec.dev_size as u64],
                ));
                split_contiguous(&rest, 3, spec.fold_index - 3)
            } else {
                split_contiguous(&rest, 4, spec.fold_index - 6)
            };
            (dev, train)
        }
    };
    dev.sort_unstable();
    train.shuffle(&mut rng::derived_rng(
        spec.seed,
        &[FOLD_SHUFFLE_TAG, spec.fold_index as u64],
    ));
    Ok((
        base_train.subset(&format!("s{}-train", spec.fold_index), &train),
        base_train.subset(&format!("s{}-dev", spec.fold_index), &dev),
    ))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelStats {
    pub label_freq: BTreeMap<LabelId, u64>,
    /// Keyed by the sorted labelset. Unlabeled documents count under the
    /// empty set.
    pub labelset_freq: BTreeMap<Vec<LabelId>, u64>,
    pub total_docs: u64,
}

impl LabelStats {
    pub fn freq(&self, label: LabelId) -> u64 {
        self.label_freq.get(&label).copied().unwrap_or(0)
    }
}

pub fn labelset_stats(corpus: &Corpus) -> LabelStats {
    let mut stats = LabelStats::default();
    for doc in &corpus.documents {
        stats.total_docs += 1;
        for &l in &doc.labels {
            *stats.label_freq.entry(l).or_insert(0) += 1;
        }
        *stats.labelset_freq.entry(doc.labels.clone()).or_insert(0) += 1;
    }
    stats
}

/// Parent/child relations of the label taxonomy.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Hierarchy {
    pub edges: BTreeSet<(LabelId, LabelId)>,
    pub parents_of: BTreeMap<LabelId, Vec<LabelId>>,
}

impl Hierarchy {
    pub fn from_edges(edges: impl IntoIterator<Item = (LabelId, LabelId)>) -> Result<Self> {
        let mut h = Hierarchy::default();
        for (parent, child) in edges {
            if parent == child {
                return Err(Error::InvalidInput(format!("self edge on label {parent}")));
            }
            if h.edges.insert((parent, child)) {
                h.parents_of.entry(child).or_default().push(parent);
            }
        }
        for parents in h.parents_of.values_mut() {
            parents.sort_unstable();
        }
        Ok(h)
    }

    pub fn parents(&self, label: LabelId) -> &[LabelId] {
        self.parents_of.get(&label).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Children of `parent` in ascending order.
    pub fn children(&self, parent: LabelId) -> impl Iterator<Item = LabelId> + '_ {
        self.edges
            .range((parent, LabelId::MIN)..=(parent, LabelId::MAX))
            .map(|&(_, c)| c)
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

pub fn parse_hierarchy_str(text: &str, source_name: &str) -> Result<Hierarchy> {
    let mut edges = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        let err = |m: String| Error::parse(source_name, lineno + 1, m);
        if toks.len() != 2 {
            return Err(err(format!("expected \"parent child\", found {line:?}")));
        }
        let parent = toks[0]
            .parse::<LabelId>()
            .map_err(|_| err(format!("invalid parent {:?}", toks[0])))?;
        let child = toks[1]
            .parse::<LabelId>()
            .map_err(|_| err(format!("invalid child {:?}", toks[1])))?;
        if parent == child {
            return Err(err(format!("self edge on label {parent}")));
        }
        edges.push((parent, child));
    }
    Hierarchy::from_edges(edges)
}

pub fn parse_hierarchy(path: impl AsRef<Path>) -> Result<Hierarchy> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_hierarchy_str(&text, &path.display().to_string())
}
