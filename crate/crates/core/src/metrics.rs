//! Multi-label evaluation measures.
//!
//! Macro-averaged Fscore is computed over the labels occurring in the gold
//! set. A gold label that is never predicted contributes an Fscore of zero,
//! while false positives on labels without gold instances ("missing labels")
//! leave the macro average untouched; the surrogate measures penalize those.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::corpus::{DocId, LabelId};
use crate::error::{Error, Result};

pub type Labelsets = BTreeMap<DocId, Vec<LabelId>>;

/// Predictions and gold labelsets. Evaluation covers the documents in `gold`;
/// a gold document without a prediction counts as predicting nothing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalPair {
    pub predictions: Labelsets,
    pub gold: Labelsets,
}

impl EvalPair {
    pub fn new(predictions: Labelsets, gold: Labelsets) -> Self {
        Self { predictions, gold }
    }

    fn docs(&self) -> impl Iterator<Item = (BTreeSet<LabelId>, BTreeSet<LabelId>)> + '_ {
        self.gold.iter().map(|(doc, g)| {
            let p = self
                .predictions
                .get(doc)
                .map(|p| p.iter().copied().collect())
                .unwrap_or_default();
            (p, g.iter().copied().collect())
        })
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Confusion {
    tp: u64,
    fp: u64,
    fn_: u64,
}

impl Confusion {
    fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            0.0
        } else {
            (2 * self.tp) as f64 / denom as f64
        }
    }
}

fn per_label_confusion(pair: &EvalPair) -> BTreeMap<LabelId, Confusion> {
    let mut table: BTreeMap<LabelId, Confusion> = BTreeMap::new();
    for (p, g) in pair.docs() {
        for &l in &g {
            let c = table.entry(l).or_default();
            if p.contains(&l) {
                c.tp += 1;
            } else {
                c.fn_ += 1;
            }
        }
        for &l in p.difference(&g) {
            table.entry(l).or_default().fp += 1;
        }
    }
    table
}

fn gold_labels(pair: &EvalPair) -> BTreeSet<LabelId> {
    pair.gold.values().flatten().copied().collect()
}

/// Per-label Fscores of the gold labels.
pub fn label_fscores(pair: &EvalPair) -> BTreeMap<LabelId, f64> {
    let gold = gold_labels(pair);
    per_label_confusion(pair)
        .into_iter()
        .filter(|(l, _)| gold.contains(l))
        .map(|(l, c)| (l, c.f1()))
        .collect()
}

pub fn macro_fscore(pair: &EvalPair) -> Result<f64> {
    if pair.gold.is_empty() {
        return Err(Error::InvalidInput("macro Fscore needs gold labels".into()));
    }
    let scores = label_fscores(pair);
    if scores.is_empty() {
        return Err(Error::InvalidInput("gold documents carry no labels".into()));
    }
    Ok(scores.values().sum::<f64>() / scores.len() as f64)
}

pub fn micro_fscore(pair: &EvalPair) -> Result<f64> {
    if pair.gold.is_empty() {
        return Err(Error::InvalidInput("micro Fscore needs gold labels".into()));
    }
    let mut pooled = Confusion::default();
    for (p, g) in pair.docs() {
        let tp = p.intersection(&g).count() as u64;
        pooled.tp += tp;
        pooled.fp += p.len() as u64 - tp;
        pooled.fn_ += g.len() as u64 - tp;
    }
    Ok(pooled.f1())
}

pub fn mean_jaccard(pair: &EvalPair) -> f64 {
    let mut total = 0.0;
    let mut n = 0usize;
    for (p, g) in pair.docs() {
        let union = p.union(&g).count();
        total += if union == 0 {
            1.0
        } else {
            p.intersection(&g).count() as f64 / union as f64
        };
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        total / n as f64
    }
}

/// Mean NDCG@5 with binary relevance over documents with non-empty gold.
pub fn ndcg_at_5(ranked: &Labelsets, gold: &Labelsets) -> f64 {
    let mut total = 0.0;
    let mut n = 0usize;
    for (doc, g) in gold {
        if g.is_empty() {
            continue;
        }
        let relevant: BTreeSet<LabelId> = g.iter().copied().collect();
        let mut seen = BTreeSet::new();
        let dcg: f64 = ranked
            .get(doc)
            .map(|r| {
                r.iter()
                    .filter(|l| seen.insert(**l))
                    .take(5)
                    .enumerate()
                    .filter(|(_, l)| relevant.contains(l))
                    .map(|(i, _)| 1.0 / ((i + 2) as f64).log2())
                    .sum()
            })
            .unwrap_or(0.0);
        let ideal: f64 = (0..relevant.len().min(5)).map(|i| 1.0 / ((i + 2) as f64).log2()).sum();
        total += dcg / ideal;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        total / n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Surrogate {
    Mafs,
    Mafs2,
    Mafs3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateConfig {
    pub variant: Surrogate,
    pub missing_label_penalty: f64,
}

impl SurrogateConfig {
    pub fn preset(variant: Surrogate) -> Self {
        let missing_label_penalty = match variant {
            Surrogate::Mafs => 0.0,
            Surrogate::Mafs2 => 0.5,
            Surrogate::Mafs3 => 1.0,
        };
        Self {
            variant,
            missing_label_penalty,
        }
    }
}

/// Number of predictions on labels that have no gold instance.
pub fn missing_label_false_positives(pair: &EvalPair) -> u64 {
    let gold = gold_labels(pair);
    pair.docs()
        .map(|(p, _)| p.iter().filter(|l| !gold.contains(l)).count() as u64)
        .sum()
}

/// Macro Fscore minus `rho * fp_missing / |universe|`, clamped to [0, 1].
pub fn surrogate_mafs(pair: &EvalPair, universe: &BTreeSet<LabelId>, cfg: &SurrogateConfig) -> Result<f64> {
    let maf = macro_fscore(pair)?;
    if cfg.variant == Surrogate::Mafs || cfg.missing_label_penalty == 0.0 {
        return Ok(maf);
    }
    let size = universe.len().max(1) as f64;
    let penalty = cfg.missing_label_penalty * missing_label_false_positives(pair) as f64 / size;
    Ok((maf - penalty).clamp(0.0, 1.0))
}

/// Optimization measures selectable from template names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Measure {
    Mafs,
    Mafs2,
    Mafs3,
    Mifs,
    Mjac,
    Ndcg5,
}

impl Measure {
    pub const ALL: [Measure; 6] = [
        Measure::Mafs,
        Measure::Mafs2,
        Measure::Mafs3,
        Measure::Mifs,
        Measure::Mjac,
        Measure::Ndcg5,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Measure::Mafs => "mafs",
            Measure::Mafs2 => "mafs2",
            Measure::Mafs3 => "mafs3",
            Measure::Mifs => "mifs",
            Measure::Mjac => "mjac",
            Measure::Ndcg5 => "ndcg5",
        }
    }

    /// Evaluates ranked predictions. Set-based measures use the labels as a
    /// set; NDCG uses their order.
    pub fn evaluate(self, ranked: &Labelsets, gold: &Labelsets, universe: &BTreeSet<LabelId>) -> Result<f64> {
        let pair = || EvalPair::new(ranked.clone(), gold.clone());
        match self {
            Measure::Mafs => macro_fscore(&pair()),
            Measure::Mafs2 => surrogate_mafs(&pair(), universe, &SurrogateConfig::preset(Surrogate::Mafs2)),
            Measure::Mafs3 => surrogate_mafs(&pair(), universe, &SurrogateConfig::preset(Surrogate::Mafs3)),
            Measure::Mifs => micro_fscore(&pair()),
            Measure::Mjac => Ok(mean_jaccard(&pair())),
            Measure::Ndcg5 => Ok(ndcg_at_5(ranked, gold)),
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Measure::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown measure {s:?}")))
    }
}
