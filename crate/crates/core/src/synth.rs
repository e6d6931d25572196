//! Synthetic multi-label corpora with Zipf-distributed label frequencies.
//!
//! Every label owns a small set of signature words. A document draws one to
//! a few labels by label rank, then fills its length with signature words of
//! its labels mixed with Zipf-distributed background words. With the default
//! sizes the label tail holds labels seen in only one to three documents.

use std::collections::{BTreeMap, BTreeSet};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::IndexedRandom;
use rand::Rng;

use crate::corpus::{Corpus, FeatureId, LabelId, SparseDocument};
use crate::error::{Error, Result};
use crate::rng::{self, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub num_docs: usize,
    pub num_labels: usize,
    pub vocab_size: usize,
    /// Exponent of the label-rank distribution.
    pub label_zipf: f64,
    /// Exponent of the background word distribution.
    pub word_zipf: f64,
    pub signature_size: usize,
    /// Probability that a token comes from the document's labels.
    pub signature_share: f64,
    /// Probability of each additional label, up to `max_labels`.
    pub extra_label_prob: f64,
    pub max_labels: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_docs: 2000,
            num_labels: 300,
            vocab_size: 3000,
            label_zipf: 1.0,
            word_zipf: 1.0,
            signature_size: 12,
            signature_share: 0.35,
            extra_label_prob: 0.7,
            max_labels: 5,
            min_len: 30,
            max_len: 90,
            seed: 0,
        }
    }
}

fn zipf_weights(n: usize, s: f64) -> Vec<f64> {
    (1..=n).map(|r| (r as f64).powf(-s)).collect()
}

pub fn generate_corpus(cfg: &SynthConfig) -> Result<Corpus> {
    if cfg.num_labels == 0 || cfg.vocab_size == 0 || cfg.signature_size == 0 {
        return Err(Error::Config(
            "synthetic corpus needs labels, words and signatures".into(),
        ));
    }
    if cfg.min_len == 0 || cfg.min_len > cfg.max_len || cfg.max_labels == 0 {
        return Err(Error::Config("invalid synthetic document length or label range".into()));
    }
    if !(0.0..=1.0).contains(&cfg.signature_share) || !(0.0..=1.0).contains(&cfg.extra_label_prob) {
        return Err(Error::Config("synthetic probabilities must lie in [0, 1]".into()));
    }
    let mut rng: SeededRng = rng::rng_from_seed(cfg.seed);
    let words: Vec<FeatureId> = (0..cfg.vocab_size as FeatureId).collect();
    let signatures: Vec<Vec<FeatureId>> = (0..cfg.num_labels)
        .map(|_| {
            words
                .choose_multiple(&mut rng, cfg.signature_size.min(cfg.vocab_size))
                .copied()
                .collect()
        })
        .collect();
    let label_dist =
        WeightedIndex::new(zipf_weights(cfg.num_labels, cfg.label_zipf)).map_err(|e| Error::Config(e.to_string()))?;
    let word_dist =
        WeightedIndex::new(zipf_weights(cfg.vocab_size, cfg.word_zipf)).map_err(|e| Error::Config(e.to_string()))?;

    let mut documents = Vec::with_capacity(cfg.num_docs);
    for doc_id in 0..cfg.num_docs {
        let mut labels = BTreeSet::from([label_dist.sample(&mut rng) as LabelId]);
        while labels.len() < cfg.max_labels && rng.random_bool(cfg.extra_label_prob) {
            labels.insert(label_dist.sample(&mut rng) as LabelId);
        }
        let labels: Vec<LabelId> = labels.into_iter().collect();
        let len = rng.random_range(cfg.min_len..=cfg.max_len);
        let mut counts: BTreeMap<FeatureId, f64> = BTreeMap::new();
        for _ in 0..len {
            let w = if rng.random_bool(cfg.signature_share) {
                let l = labels[rng.random_range(0..labels.len())];
                signatures[l as usize][rng.random_range(0..cfg.signature_size.min(cfg.vocab_size))]
            } else {
                word_dist.sample(&mut rng) as FeatureId
            };
            *counts.entry(w).or_default() += 1.0;
        }
        documents.push(SparseDocument::new(
            doc_id as u64,
            counts.into_iter().collect(),
            labels,
        )?);
    }
    Ok(Corpus::new("synthetic", documents))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::labelset_stats;

    #[test]
    fn default_corpus_has_head_and_tail() {
        let c = generate_corpus(&SynthConfig::default()).unwrap();
        assert_eq!(c.len(), 2000);
        let stats = labelset_stats(&c);
        let freqs: Vec<u64> = stats.label_freq.values().copied().collect();
        assert!(freqs.iter().any(|&f| f > 100));
        assert!(freqs.iter().filter(|&&f| (1..=3).contains(&f)).count() > 20);
    }

    #[test]
    fn same_seed_same_corpus() {
        let cfg = SynthConfig {
            num_docs: 50,
            ..Default::default()
        };
        assert_eq!(
            generate_corpus(&cfg).unwrap().documents,
            generate_corpus(&cfg).unwrap().documents
        );
    }
}
