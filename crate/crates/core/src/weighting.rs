//! TF-IDF and BM25 feature weighting.
//!
//! All three schemes share `idf(w) = ln((N + 1) / (df(w) + 0.5))`, which stays
//! positive for unseen features (`df = 0`):
//!
//! * `Tix`: `(c / len^b)^p * idf^a`
//! * `Bm25c`: `(k1 + 1) c / (k1 ((1 - b) + b len / avg_len) + c) * idf`
//! * `Bm18ti`: `(k1 + 1) c / (k1 ((1 - b) + b (len / avg_len)^e) + c) * idf^a`
//!
//! `Bm18ti` keeps the BM25 count saturation but takes the length exponent and
//! the idf exponent from the parameterized TF-IDF form.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, FeatureId, SparseDocument};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CollectionStats {
    pub num_docs: u64,
    pub doc_freq: BTreeMap<FeatureId, u64>,
    pub collection_count: BTreeMap<FeatureId, f64>,
    pub avg_doc_len: f64,
    pub vocab_size: usize,
}

impl CollectionStats {
    pub fn df(&self, feature: FeatureId) -> u64 {
        self.doc_freq.get(&feature).copied().unwrap_or(0)
    }

    pub fn idf(&self, feature: FeatureId) -> f64 {
        ((self.num_docs as f64 + 1.0) / (self.df(feature) as f64 + 0.5)).ln()
    }
}

pub fn collect_stats(corpus: &Corpus) -> CollectionStats {
    let mut stats = CollectionStats::default();
    let mut total_len = 0.0;
    for doc in corpus.iter() {
        stats.num_docs += 1;
        for &(f, c) in &doc.features {
            *stats.doc_freq.entry(f).or_insert(0) += 1;
            *stats.collection_count.entry(f).or_insert(0.0) += c;
            total_len += c;
        }
    }
    stats.vocab_size = stats.doc_freq.len();
    if stats.num_docs > 0 {
        stats.avg_doc_len = total_len / stats.num_docs as f64;
    }
    stats
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightingScheme {
    Tix,
    Bm25c,
    Bm18ti,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightingConfig {
    pub scheme: WeightingScheme,
    pub k1: f64,
    pub b: f64,
    pub idf_exponent: f64,
    pub length_exponent: f64,
    pub tf_exponent: f64,
}

impl WeightingConfig {
    /// Raw counts.
    pub fn identity() -> Self {
        Self::tix(1.0, 0.0, 0.0)
    }

    pub fn tix(tf_exponent: f64, idf_exponent: f64, b: f64) -> Self {
        Self {
            scheme: WeightingScheme::Tix,
            k1: 1.2,
            b,
            idf_exponent,
            length_exponent: 1.0,
            tf_exponent,
        }
    }

    pub fn bm25c(k1: f64, b: f64) -> Self {
        Self {
            scheme: WeightingScheme::Bm25c,
            k1,
            b,
            idf_exponent: 1.0,
            length_exponent: 1.0,
            tf_exponent: 1.0,
        }
    }

    pub fn bm18ti(k1: f64, b: f64, idf_exponent: f64, length_exponent: f64) -> Self {
        Self {
            scheme: WeightingScheme::Bm18ti,
            k1,
            b,
            idf_exponent,
            length_exponent,
            tf_exponent: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("{:?} weighting: {m}", self.scheme)));
        match self.scheme {
            WeightingScheme::Tix => {
                if !(self.tf_exponent > 0.0 && self.tf_exponent <= 1.0) {
                    return bad("tf exponent must lie in (0, 1]");
                }
                if !(self.idf_exponent >= 0.0) {
                    return bad("idf exponent must be >= 0");
                }
                if !(self.b >= 0.0) {
                    return bad("length exponent b must be >= 0");
                }
            }
            WeightingScheme::Bm25c | WeightingScheme::Bm18ti => {
                if !(self.k1 > 0.0 && self.k1.is_finite()) {
                    return bad("k1 must be positive");
                }
                if !(0.0..=1.0).contains(&self.b) {
                    return bad("b must lie in [0, 1]");
                }
                if self.scheme == WeightingScheme::Bm18ti && !(self.idf_exponent >= 0.0 && self.length_exponent >= 0.0)
                {
                    return bad("exponents must be >= 0");
                }
            }
        }
        Ok(())
    }
}

impl Default for WeightingConfig {
    fn default() -> Self {
        Self::bm18ti(1.2, 0.5, 1.0, 1.0)
    }
}

/// Weights a sparse count vector. Output keeps the input feature order.
pub fn weight_features(
    features: &[(FeatureId, f64)],
    cfg: &WeightingConfig,
    stats: &CollectionStats,
) -> Result<Vec<(FeatureId, f64)>> {
    if stats.num_docs == 0 {
        return Err(Error::InvalidInput(
            "weighting needs statistics from at least one document".into(),
        ));
    }
    let len: f64 = features.iter().map(|&(_, c)| c).sum();
    let rel_len = if stats.avg_doc_len > 0.0 {
        len / stats.avg_doc_len
    } else {
        1.0
    };
    let out = features
        .iter()
        .map(|&(f, c)| {
            let idf = stats.idf(f);
            let w = match cfg.scheme {
                WeightingScheme::Tix => (c / len.powf(cfg.b)).powf(cfg.tf_exponent) * idf.powf(cfg.idf_exponent),
                WeightingScheme::Bm25c => {
                    let norm = cfg.k1 * ((1.0 - cfg.b) + cfg.b * rel_len);
                    (cfg.k1 + 1.0) * c / (norm + c) * idf
                }
                WeightingScheme::Bm18ti => {
                    let norm = cfg.k1 * ((1.0 - cfg.b) + cfg.b * rel_len.powf(cfg.length_exponent));
                    (cfg.k1 + 1.0) * c / (norm + c) * idf.powf(cfg.idf_exponent)
                }
            };
            (f, w)
        })
        .collect();
    Ok(out)
}

pub fn apply_weighting(
    doc: &SparseDocument,
    cfg: &WeightingConfig,
    stats: &CollectionStats,
) -> Result<Vec<(FeatureId, f64)>> {
    if doc.features.is_empty() {
        return Err(Error::InvalidInput(format!("document {} has no features", doc.doc_id)));
    }
    weight_features(&doc.features, cfg, stats)
}
