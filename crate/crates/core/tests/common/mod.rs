//! Fixtures and independent oracles shared by the integration tests.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use xmlc::corpus::{
    labelset_stats, make_fold, segment, Corpus, DocId, FeatureId, FoldSpec, LabelId, LabelStats, SparseDocument,
};
use xmlc::ensemble::{combine, ClassifierOutput, EnsembleConfig};
use xmlc::inference::{predict_transposed, Classifier, DecisionPolicy, InstantiateConfig};
use xmlc::metrics::{macro_fscore, EvalPair, Labelsets};
use xmlc::sgm::{train_model, Background, ModelConfig, SgmModel};
use xmlc::synth::{generate_corpus, SynthConfig};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Small random labeled corpus over features `0..vocab` and labels `0..labels`.
pub fn random_corpus(rng: &mut impl Rng, docs: usize, vocab: u32, labels: u32) -> Corpus {
    let documents = (0..docs)
        .map(|i| {
            let n_feats = rng.random_range(1..=vocab.min(12)) as usize;
            let mut feats: BTreeMap<FeatureId, f64> = BTreeMap::new();
            while feats.len() < n_feats {
                feats.insert(rng.random_range(0..vocab), f64::from(rng.random_range(1..=4u32)));
            }
            let n_labels = rng.random_range(1..=3usize);
            let labels: BTreeSet<LabelId> = (0..n_labels).map(|_| rng.random_range(0..labels)).collect();
            SparseDocument::new(i as u64, feats.into_iter().collect(), labels.into_iter().collect()).unwrap()
        })
        .collect();
    Corpus::new("random", documents)
}

/// Random query document; some features may lie outside the training vocabulary.
pub fn random_query(rng: &mut impl Rng, vocab: u32) -> Vec<(FeatureId, f64)> {
    let n = rng.random_range(1..=10usize);
    let mut feats: BTreeMap<FeatureId, f64> = BTreeMap::new();
    while feats.len() < n {
        feats.insert(rng.random_range(0..vocab + 5), rng.random_range(0.5..3.0));
    }
    feats.into_iter().collect()
}

/// Raw-count statistics of a training corpus, recomputed from scratch.
pub struct RawCounts {
    pub vocab: BTreeSet<FeatureId>,
    pub label_counts: BTreeMap<LabelId, BTreeMap<FeatureId, f64>>,
    pub label_docs: BTreeMap<LabelId, u64>,
    pub collection: BTreeMap<FeatureId, f64>,
    pub kernels: Vec<(LabelId, BTreeMap<FeatureId, f64>)>,
    pub num_docs: u64,
}

pub fn raw_counts(corpus: &Corpus) -> RawCounts {
    let mut out = RawCounts {
        vocab: BTreeSet::new(),
        label_counts: BTreeMap::new(),
        label_docs: BTreeMap::new(),
        collection: BTreeMap::new(),
        kernels: Vec::new(),
        num_docs: corpus.len() as u64,
    };
    for doc in corpus.iter() {
        let counts: BTreeMap<FeatureId, f64> = doc.features.iter().copied().collect();
        for (&f, &c) in &counts {
            out.vocab.insert(f);
            *out.collection.entry(f).or_default() += c;
        }
        for &l in &doc.labels {
            *out.label_docs.entry(l).or_default() += 1;
            let lc = out.label_counts.entry(l).or_default();
            for (&f, &c) in &counts {
                *lc.entry(f).or_default() += c;
            }
            out.kernels.push((l, counts.clone()));
        }
    }
    out
}

/// Dense enumeration of every label's score for raw-count models: the full
/// smoothed likelihood of every query feature under every label, computed
/// from the raw counts alone.
pub fn dense_scores(
    raw: &RawCounts,
    smoothing: &xmlc::sgm::SmoothingConfig,
    kd: Option<(bool, usize)>,
    prior_scale: f64,
    query: &[(FeatureId, f64)],
) -> BTreeMap<LabelId, f64> {
    let v = raw.vocab.len() as f64;
    let coll_total: f64 = raw.collection.values().sum();
    let p_bg = |f: FeatureId| -> f64 {
        match smoothing.background {
            Background::Uniform => 1.0 / v,
            Background::UniformCollection => {
                let cc = raw.collection.get(&f).copied().unwrap_or(0.0);
                (1.0 - smoothing.collection_mix) / v + smoothing.collection_mix * cc / coll_total
            }
        }
    };
    let lambda = smoothing.jm_lambda;
    let p_label = |l: LabelId, f: FeatureId| -> f64 {
        let counts = &raw.label_counts[&l];
        let total: f64 = counts.values().sum();
        let ml = counts.get(&f).copied().unwrap_or(0.0) / total;
        (1.0 - lambda) * ml + lambda * p_bg(f)
    };
    let mut out = BTreeMap::new();
    for (&l, &docs) in &raw.label_docs {
        let prior = prior_scale * (docs as f64 / raw.num_docs as f64).ln();
        let ll = match kd {
            None => query.iter().map(|&(f, x)| x * p_label(l, f).ln()).sum::<f64>(),
            Some((nobo, top_k)) => {
                let mu = smoothing.dirichlet_mu;
                let mut lls: Vec<f64> = raw
                    .kernels
                    .iter()
                    .filter(|(kl, _)| *kl == l)
                    .map(|(_, counts)| {
                        let len: f64 = counts.values().sum();
                        query
                            .iter()
                            .map(|&(f, x)| {
                                let back = if nobo { p_bg(f) } else { p_label(l, f) };
                                let c = counts.get(&f).copied().unwrap_or(0.0);
                                x * ((c + mu * back) / (len + mu)).ln()
                            })
                            .sum::<f64>()
                    })
                    .collect();
                lls.sort_by(|a, b| b.total_cmp(a));
                lls.truncate(top_k.max(1));
                let max = lls[0];
                let mean: f64 = lls.iter().map(|x| (x - max).exp()).sum::<f64>() / lls.len() as f64;
                max + mean.ln()
            }
        };
        out.insert(l, prior + ll);
    }
    out
}

/// Dense enumeration through the model's own probability functions, for
/// weighting schemes other than raw counts.
pub fn dense_model_scores(model: &SgmModel, query: &[(FeatureId, f64)]) -> Vec<f64> {
    (0..model.targets().len())
        .map(|t| model.log_prior_term(t) + query.iter().map(|&(f, x)| x * model.word_prob(t, f).ln()).sum::<f64>())
        .collect()
}

/// Labels sorted by descending score, ties by ascending id.
pub fn ranking(scores: &[(u32, f64)]) -> Vec<u32> {
    let mut v = scores.to_vec();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    v.into_iter().map(|(l, _)| l).collect()
}

// ---- metrics oracles over exact rationals ----

fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Non-negative rational `num / den` kept in lowest terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ratio {
    pub num: u128,
    pub den: u128,
}

impl Ratio {
    pub fn new(num: u128, den: u128) -> Self {
        assert!(den > 0);
        let g = gcd(num, den).max(1);
        Ratio {
            num: num / g,
            den: den / g,
        }
    }

    pub fn add(self, other: Ratio) -> Ratio {
        Ratio::new(self.num * other.den + other.num * self.den, self.den * other.den)
    }

    pub fn div_int(self, n: u128) -> Ratio {
        Ratio::new(self.num, self.den * n)
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

fn as_set(v: Option<&Vec<LabelId>>) -> BTreeSet<LabelId> {
    v.map(|v| v.iter().copied().collect()).unwrap_or_default()
}

/// Per-label F1 over the gold labels, counting documents one by one.
pub fn oracle_macro_f(pred: &Labelsets, gold: &Labelsets) -> Ratio {
    let labels: BTreeSet<LabelId> = gold.values().flatten().copied().collect();
    let mut sum = Ratio::new(0, 1);
    for &l in &labels {
        let (mut tp, mut fp, mut fn_) = (0u128, 0u128, 0u128);
        for (doc, g) in gold {
            let in_pred = as_set(pred.get(doc)).contains(&l);
            let in_gold = g.contains(&l);
            match (in_pred, in_gold) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        if tp > 0 {
            sum = sum.add(Ratio::new(2 * tp, 2 * tp + fp + fn_));
        }
    }
    sum.div_int(labels.len() as u128)
}

pub fn oracle_micro_f(pred: &Labelsets, gold: &Labelsets) -> Ratio {
    let (mut tp, mut fp, mut fn_) = (0u128, 0u128, 0u128);
    for (doc, g) in gold {
        let p = as_set(pred.get(doc));
        let g = as_set(Some(g));
        for l in p.union(&g) {
            match (p.contains(l), g.contains(l)) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                _ => fn_ += 1,
            }
        }
    }
    if tp == 0 {
        Ratio::new(0, 1)
    } else {
        Ratio::new(2 * tp, 2 * tp + fp + fn_)
    }
}

pub fn oracle_jaccard(pred: &Labelsets, gold: &Labelsets) -> Ratio {
    let mut sum = Ratio::new(0, 1);
    for (doc, g) in gold {
        let p = as_set(pred.get(doc));
        let g = as_set(Some(g));
        let union = p.union(&g).count() as u128;
        let inter = p.intersection(&g).count() as u128;
        sum = sum.add(if union == 0 {
            Ratio::new(1, 1)
        } else {
            Ratio::new(inter, union)
        });
    }
    sum.div_int(gold.len() as u128)
}

/// NDCG@5 with binary gains from the textbook definition.
pub fn oracle_ndcg5(ranked: &Labelsets, gold: &Labelsets) -> f64 {
    let mut total = 0.0;
    let mut n = 0;
    for (doc, g) in gold {
        let g = as_set(Some(g));
        if g.is_empty() {
            continue;
        }
        let mut distinct: Vec<LabelId> = Vec::new();
        for &l in ranked.get(doc).map(Vec::as_slice).unwrap_or(&[]) {
            if !distinct.contains(&l) {
                distinct.push(l);
            }
        }
        let mut dcg = 0.0;
        for (pos, l) in distinct.iter().take(5).enumerate() {
            if g.contains(l) {
                dcg += 1.0 / (pos as f64 + 2.0).log2();
            }
        }
        let mut idcg = 0.0;
        for pos in 0..g.len().min(5) {
            idcg += 1.0 / (pos as f64 + 2.0).log2();
        }
        total += dcg / idcg;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        total / n as f64
    }
}

/// Random prediction/gold pair over a few documents and labels.
pub fn random_eval_pair(rng: &mut impl Rng) -> (Labelsets, Labelsets) {
    let docs = rng.random_range(1..=12u64);
    let labels = rng.random_range(1..=8u32);
    let draw = |rng: &mut ChaCha8Rng, max: usize| -> Vec<LabelId> {
        let n = rng.random_range(0..=max);
        let mut v: Vec<LabelId> = (0..n).map(|_| rng.random_range(0..labels)).collect();
        v.dedup();
        v
    };
    let mut local = ChaCha8Rng::seed_from_u64(rng.random());
    let mut gold = Labelsets::new();
    let mut pred = Labelsets::new();
    for d in 0..docs {
        let mut g = draw(&mut local, 3);
        if g.is_empty() {
            g.push(local.random_range(0..labels));
        }
        gold.insert(d, g);
        if local.random_bool(0.9) {
            pred.insert(d, draw(&mut local, 6));
        }
    }
    (pred, gold)
}

// ---- transposed prediction experiment ----

pub struct TransposedOutcome {
    pub argmax_maf: f64,
    pub transposed_maf: f64,
    pub tail_labels: usize,
}

/// Trains one model on 1,500 synthetic documents and predicts 500 held-out
/// ones per document (argmax) and per label (transposed).
pub fn transposed_experiment(seed: u64) -> TransposedOutcome {
    let corpus = generate_corpus(&SynthConfig {
        seed,
        ..SynthConfig::default()
    })
    .unwrap();
    let tail_labels = labelset_stats(&corpus)
        .label_freq
        .values()
        .filter(|&&f| (1..=3).contains(&f))
        .count();
    let (train, test) = segment(&corpus, 1500, 500, seed).unwrap();
    let clf = Classifier::new(train_model(&train, &ModelConfig::default(), None).unwrap()).unwrap();
    let gold = test.gold();
    let argmax: Labelsets = test
        .iter()
        .map(|d| (d.doc_id, clf.predict(d, 20, &DecisionPolicy::default()).unwrap()))
        .collect();
    let weighted = clf.weighted_documents(&test.documents).unwrap();
    let cfg = InstantiateConfig {
        instantiate_weight: test.len() as f64 / train.len() as f64,
        ..InstantiateConfig::default()
    };
    let tp = predict_transposed(&clf.index, &weighted, &cfg, &labelset_stats(&train), 4);
    let transposed = tp.to_documents(gold.keys().copied());
    TransposedOutcome {
        argmax_maf: macro_fscore(&EvalPair::new(argmax, gold.clone())).unwrap(),
        transposed_maf: macro_fscore(&EvalPair::new(transposed, gold)).unwrap(),
        tail_labels,
    }
}

// ---- complementary base classifiers ----

pub const ENSEMBLE_DOCS: u64 = 4000;

/// Label frequency, gold documents and four classifier lists for one label.
/// Classifier `label % 4` recovers the gold set up to one swapped document.
/// The other three share one list of mostly wrong documents, as if they
/// made the same systematic mistake.
fn complementary_label(rng: &mut ChaCha8Rng, label: LabelId) -> (BTreeSet<DocId>, [Vec<(DocId, f64)>; 4]) {
    let size = rng.random_range(2..=24usize);
    let all: Vec<DocId> = (0..ENSEMBLE_DOCS).collect();
    let gold: BTreeSet<DocId> = all.choose_multiple(rng, size).copied().collect();
    let gold_vec: Vec<DocId> = gold.iter().copied().collect();

    let mut accurate: Vec<DocId> = gold_vec.clone();
    if size > 3 {
        let i = rng.random_range(0..size);
        accurate[i] = rng.random_range(0..ENSEMBLE_DOCS);
    }
    let keep = size / 4;
    let mut decoy: Vec<DocId> = gold_vec.choose_multiple(rng, keep).copied().collect();
    while decoy.len() < size {
        decoy.push(rng.random_range(0..ENSEMBLE_DOCS));
    }
    let scored = |docs: &[DocId]| -> Vec<(DocId, f64)> {
        let mut seen = BTreeSet::new();
        docs.iter()
            .filter(|d| seen.insert(**d))
            .enumerate()
            .map(|(r, &d)| (d, 1.0 / (r as f64 + 1.0)))
            .collect()
    };
    let stratum = (label % 4) as usize;
    let lists = std::array::from_fn(|j| {
        if j == stratum {
            scored(&accurate)
        } else {
            scored(&decoy)
        }
    });
    (gold, lists)
}

pub struct ComplementaryData {
    pub outputs: Vec<ClassifierOutput>,
    pub gold: Labelsets,
    pub stats: LabelStats,
}

fn complementary_data(rng: &mut ChaCha8Rng, labels: std::ops::Range<LabelId>) -> ComplementaryData {
    let mut outputs: Vec<ClassifierOutput> = (0..4)
        .map(|id| ClassifierOutput {
            id,
            lists: BTreeMap::new(),
        })
        .collect();
    let mut gold: Labelsets = (0..ENSEMBLE_DOCS).map(|d| (d, Vec::new())).collect();
    let mut stats = LabelStats {
        total_docs: ENSEMBLE_DOCS,
        ..LabelStats::default()
    };
    for label in labels {
        let (g, lists) = complementary_label(rng, label);
        stats.label_freq.insert(label, g.len() as u64);
        for &d in &g {
            gold.get_mut(&d).unwrap().push(label);
        }
        for (out, list) in outputs.iter_mut().zip(lists) {
            out.lists.insert(label, list);
        }
    }
    gold.retain(|_, v| !v.is_empty());
    ComplementaryData { outputs, gold, stats }
}

pub struct EnsembleOutcome {
    pub ensemble_maf: f64,
    pub single_mafs: Vec<f64>,
}

fn lists_to_docs(lists: &BTreeMap<LabelId, Vec<(DocId, f64)>>, gold: &Labelsets) -> Labelsets {
    let mut out: Labelsets = gold.keys().map(|&d| (d, Vec::new())).collect();
    for (&l, list) in lists {
        for &(d, _) in list {
            out.entry(d).or_default().push(l);
        }
    }
    out
}

/// Fits the ensemble on 20,000 labels and scores it on 2,000 unseen labels.
pub fn ensemble_experiment(seed: u64) -> EnsembleOutcome {
    let mut rng = rng(seed);
    let train = complementary_data(&mut rng, 0..20_000);
    let test = complementary_data(&mut rng, 20_000..22_000);
    let mut stats = train.stats.clone();
    stats
        .label_freq
        .extend(test.stats.label_freq.iter().map(|(&l, &f)| (l, f)));
    let cfg = EnsembleConfig {
        workers: 4,
        seed,
        ..EnsembleConfig::default()
    };
    let (_, selection) = combine(
        &train.outputs,
        &train.gold,
        &test.outputs,
        &stats,
        &cfg,
        ENSEMBLE_DOCS as usize,
        &[],
    )
    .unwrap();
    let combined = xmlc::ensemble::selection_to_documents(&selection, test.gold.keys().copied());
    let ensemble_maf = macro_fscore(&EvalPair::new(combined, test.gold.clone())).unwrap();
    let single_mafs = test
        .outputs
        .iter()
        .map(|o| macro_fscore(&EvalPair::new(lists_to_docs(&o.lists, &test.gold), test.gold.clone())).unwrap())
        .collect();
    EnsembleOutcome {
        ensemble_maf,
        single_mafs,
    }
}

// ---- fold contracts ----

pub fn ids(c: &Corpus) -> BTreeSet<u64> {
    c.iter().map(|d| d.doc_id).collect()
}

pub fn fold_corpus(seed: u64) -> Corpus {
    random_corpus(&mut rng(seed), 103, 30, 10)
}

/// Checks the partition contracts for one seed and returns the first error.
pub fn check_fold_contracts(base: &Corpus, seed: u64) -> Result<(), String> {
    let all = ids(base);
    let dev_size = 17;

    let mut devs: Vec<BTreeSet<u64>> = Vec::new();
    for fold in 0..3 {
        let (train, dev) = make_fold(base, &FoldSpec::new(fold, dev_size, seed).unwrap()).unwrap();
        let (t, d) = (ids(&train), ids(&dev));
        if d.len() != dev_size || !t.is_disjoint(&d) || t.union(&d).count() != all.len() {
            return Err(format!(
                "seed {seed} fold {fold}: train and dev do not partition the corpus"
            ));
        }
        if devs.iter().any(|prev| !prev.is_disjoint(&d)) {
            return Err(format!("seed {seed} fold {fold}: dev overlaps an earlier fold"));
        }
        devs.push(d);
    }

    for folds in [3..6, 6..10] {
        let mut shared: Option<BTreeSet<u64>> = None;
        let mut covered: BTreeSet<u64> = BTreeSet::new();
        let mut total = 0;
        for fold in folds.clone() {
            let (train, dev) = make_fold(base, &FoldSpec::new(fold, dev_size, seed).unwrap()).unwrap();
            let d = ids(&dev);
            if shared.get_or_insert_with(|| d.clone()) != &d {
                return Err(format!("seed {seed} fold {fold}: dev set differs within the scheme"));
            }
            let t = ids(&train);
            if !t.is_disjoint(&d) {
                return Err(format!("seed {seed} fold {fold}: train overlaps dev"));
            }
            total += t.len();
            covered.extend(t);
        }
        let dev = shared.unwrap();
        let rest: BTreeSet<u64> = all.difference(&dev).copied().collect();
        if covered != rest || total != rest.len() {
            return Err(format!(
                "seed {seed} folds {folds:?}: training parts are not an exact partition"
            ));
        }
    }
    Ok(())
}

// ---- configuration names from the published base-classifier table ----

/// `(id, name)` for all 54 rows.
pub const TABLE_CONFIGS: [(u32, &str); 54] = [
    (7, "mafs3_s1_uc1_jm3_bm18ti_pci7_pct0_psX_fb_iw2"),
    (9, "mafs3_s1_uc1_jm3_bm18ti_pci7_pct0_psX_iw2"),
    (11, "mafs3_s2_uc1_jm2_bm18tid_pci7_pct0_ps8_iw1"),
    (13, "mafs3_s3_kd_u_jm3_kdp5_bm18ti_pct0_ps7_iw2"),
    (17, "mafs3_s4_kd_u_jm3_kdp5_bm18ti_pct0_ps7_iw2"),
    (8, "mafs3_s1_uc1_jm3_bm18ti_pci7_pct0_psX_iw1"),
    (10, "mafs3_s2_u_lp_jm2_bm18tib_pct0_ps7_iw0"),
    (20, "mafs3_s5_kd_u_jm3_kdp5_bm18ti_pct0_ps7_iw0"),
    (12, "mafs3_s3_kd_u_jm3_kdp5_bm18ti_pct0_ps7_iw0"),
    (6, "mafs3_s1_u_jm3_bm18ti_pct0_ps7_iw0"),
    (16, "mafs3_s4_kd_u_jm3_kdp5_bm18ti_pct0_ps7_iw0"),
    (14, "mafs3_s3_kd_uc1_jm2_kdp5_bm18tid_pct0_ps8_iw1"),
    (5, "mafs3_s0_kd_nobo_bm25c2_mi2_ps2_iw0"),
    (19, "mafs3_s4_u_jm2_bm18tib_pci6_pct0_ps7_cs0_iw2"),
    (18, "mafs3_s4_u_jm2_bm18tib_mc0_pci6_pct0_ps7_cs0_iw0"),
    (21, "mafs3_s5_u_jm2_bm18tib_mc0_pci6_pct0_ps7_cs0_iw0"),
    (15, "mafs3_s3_u_jm2_bm18tib_mc0_pci6_pct0_ps7_cs0_iw0"),
    (33, "mafs_s2_lp_u_jm5_pd2_bm16ti_mc0_pct0_ps0"),
    (50, "mjac_s2_kd_nobo_bm25c2_mc0_mlc0_ps2_lt5_mr0_tk1"),
    (0, "mafs2_s2_lp_u_jm2_bm18tib_mc0_pct0_ps5"),
    (28, "mafs_s1_kd_nobo_bm25c2_mc0_mlc0_ps2_lt5_mr0_tk2"),
    (32, "mafs_s2_lp_u_jm4_bm20ti_mc0_pct0_ps2"),
    (27, "mafs_s0_lp_u_jm2_bm18tic_fb3_mc0_pct0_ps6"),
    (44, "mjac_s0_lp_u_jm2_pd2_tXiX3_fb2_mc0_pci1_pct0_ps0"),
    (52, "ndcg5b_s4_kd_u_jm2_kdp5_bm18tib_mc0_pci0_pct0_mlc0_ps6_tk0"),
    (51, "ndcg5b_s3_kd_u_jm2_kdp5_bm18tib_mc0_pci0_pct0_mlc0_ps6_tk0"),
    (53, "ndcg5b_s5_kd_u_jm2_kdp5_bm18tib_mc0_pci0_pct0_mlc0_ps6_tk0"),
    (30, "mafs_s1_lp_u_jm6_tiX5_mc0_pct0_ps0"),
    (29, "mafs_s1_lp_u_jm4_pd2_tXiX2_fb2_mc0_pct0_ps0"),
    (45, "mjac_s0_lp_u_jm2_tiX3_mc0_pct0_ps0"),
    (31, "mafs_s2_lp_u_jm4_bm18ti_mc0_pct0_ps2"),
    (23, "mafs3_s7_kd_uc1_jm2_kdp5_bm18tid_mc0_pci1_pct0_ps8_iw1_ch80"),
    (42, "mifs_s2_lp_u_jm2_bm18tib_fb3_mc0_pct0_ps5"),
    (46, "mjac_s0_lp_u_jm4_bm15ti_mc0_pct0_ps0"),
    (22, "mafs3_s6_kd_uc1_jm2_kdp5_bm18tid_mc0_pci1_pct0_ps8_iw1_ch80"),
    (35, "mafs_s4_kd_u_jm3_kdp5_tXiX2_mc0_pci0_pct0_mlc0_ps5_lt5_mr0_tk2"),
    (34, "mafs_s3_kd_u_jm3_kdp5_tXiX2_mc0_pci0_pct0_mlc0_ps5_lt5_mr0_tk2"),
    (36, "mafs_s5_kd_u_jm3_kdp5_tXiX2_mc0_pci0_pct0_mlc0_ps5_lt5_mr0_tk2"),
    (49, "mjac_s1_u_jm3_tiX1_mc0_pci1_pct0_mlc0_ps1_lt1_mr0"),
    (48, "mjac_s1_u_jm2_tiX1_mc0_pct0_mlc0_ps2_lt2_mr0_tk0"),
    (24, "mafs3_s8_kd_uc1_jm2_kdp5_bm18tid_mc0_pci1_pct0_ps8_iw1_ch80"),
    (26, "mafs_s0_lp_u_jm2_bm18tib_mc0_pct0_ps5"),
    (41, "mifs_s1_lp_u_jm2_bm18tib_mc0_pct0_ps5"),
    (25, "mafs3_s9_kd_uc1_jm2_kdp5_bm18tid_mc0_pci1_pct0_ps8_iw1_ch80"),
    (47, "mjac_s0_u_jm3_bm18ti_pct0_ps5_je"),
    (43, "mjac_s0_lp_bm25c1_mc0_mlc0_ps3"),
    (38, "mafs_s7_kd_u_jm3_kdp1_bm18ti_mc0_pci1_pct0_ps5_lt5_mr1_tk2_ch80"),
    (39, "mafs_s8_kd_u_jm3_kdp1_bm18ti_mc0_pci1_pct0_ps5_lt5_mr1_tk2_ch80"),
    (2, "mafs2_s7_lp_u_jm2_bm18ti_pct0_ps5"),
    (1, "mafs2_s6_lp_u_jm2_bm18ti_pct0_ps5"),
    (3, "mafs2_s8_lp_u_jm2_bm18ti_pct0_ps5"),
    (37, "mafs_s6_kd_u_jm3_kdp1_bm18ti_mc0_pci1_pct0_ps5_lt5_mr1_tk2_ch80"),
    (40, "mafs_s9_kd_u_jm3_kdp1_bm18ti_mc0_pci1_pct0_ps5_lt5_mr1_tk2_ch80"),
    (4, "mafs2_s9_lp_u_jm2_bm18ti_pct0_ps5"),
];

// ---- random search on a known optimum ----

pub fn quadratic_spec() -> xmlc::metaopt::ParamSpec {
    use xmlc::metaopt::{ParamDef, ParamSpec, Transform};
    ParamSpec::new(vec![ParamDef::new("x", 0.0, 10.0, Transform::Linear, 8.0, 1.0)]).unwrap()
}

/// Maximizes `-(x - 3)^2` on `[0, 10]` with 40 rounds of 8 proposals.
pub fn quadratic_search(seed: u64, workers: usize) -> xmlc::metaopt::SearchState {
    use xmlc::metaopt::{run_search, SearchConfig};
    let cfg = SearchConfig {
        outer_iterations: 40,
        batch_size: 8,
        seed,
        workers,
    };
    run_search(
        |p: &[f64]| Ok::<f64, std::convert::Infallible>(-(p[0] - 3.0).powi(2)),
        &quadratic_spec(),
        &cfg,
    )
    .unwrap()
}

pub fn is_monotone(trace: &[f64]) -> bool {
    trace.windows(2).all(|w| w[1] >= w[0])
}

// ---- selection under scaled weights ----

/// Random classifier lists for one label, scores in (0, 1].
pub fn random_label_lists(rng: &mut impl Rng, classifiers: usize) -> Vec<Vec<(DocId, f64)>> {
    (0..classifiers)
        .map(|_| {
            let n = rng.random_range(0..30usize);
            let mut seen = BTreeSet::new();
            let mut list: Vec<(DocId, f64)> = (0..n)
                .map(|_| (rng.random_range(0..200u64), rng.random_range(0.001..=1.0)))
                .filter(|(d, _)| seen.insert(*d))
                .collect();
            list.sort_by(|a, b| b.1.total_cmp(&a.1));
            list
        })
        .collect()
}

/// Number of labels, out of `labels` random ones, whose selected instances
/// change when the vote weights are multiplied by any of `factors`.
pub fn scaled_selection_mismatches(seed: u64, labels: usize, factors: &[f64]) -> usize {
    use xmlc::ensemble::{vote_and_select, SelectionConfig};
    let mut rng = rng(seed);
    let cfg = SelectionConfig::default();
    let mut mismatches = 0;
    for _ in 0..labels {
        let m = rng.random_range(1..=6usize);
        let lists = random_label_lists(&mut rng, m);
        let refs: Vec<&[(DocId, f64)]> = lists.iter().map(Vec::as_slice).collect();
        let weights: Vec<f64> = (0..m).map(|_| rng.random_range(-0.2..1.5)).collect();
        let freq = rng.random_range(0..40u64);
        let base: Vec<DocId> = vote_and_select(&refs, &weights, freq, &cfg, 500, 1000)
            .into_iter()
            .map(|(d, _)| d)
            .collect();
        let differs = factors.iter().any(|&c| {
            let scaled: Vec<f64> = weights.iter().map(|w| w * c).collect();
            let sel: Vec<DocId> = vote_and_select(&refs, &scaled, freq, &cfg, 500, 1000)
                .into_iter()
                .map(|(d, _)| d)
                .collect();
            sel != base
        });
        mismatches += usize::from(differs);
    }
    mismatches
}

// ---- end-to-end pipeline ----

/// Runs the synthetic pipeline in a fresh directory and returns every output
/// file by name.
pub fn pipeline_outputs(seed: u64, workers: usize) -> BTreeMap<String, Vec<u8>> {
    let dir = tempfile::tempdir().unwrap();
    let files = xmlc::pipeline::run_synthetic_pipeline(dir.path(), seed, workers).unwrap();
    files
        .iter()
        .map(|p| {
            let name = p.strip_prefix(dir.path()).unwrap().display().to_string();
            (name, std::fs::read(p).unwrap())
        })
        .collect()
}

// ---- ridge regression against the normal equations ----

pub const ROWS: usize = 200;
pub const COLS: usize = 20;

pub fn random_system(seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = rng(seed);
    let offsets: Vec<f64> = (0..COLS).map(|_| rng.random_range(-3.0..3.0)).collect();
    let scales: Vec<f64> = (0..COLS).map(|_| rng.random_range(0.2..4.0)).collect();
    let truth: Vec<f64> = (0..COLS).map(|_| rng.random_range(-2.0..2.0)).collect();
    let noise = Normal::new(0.0, 0.5).unwrap();
    let std = Normal::new(0.0, 1.0).unwrap();
    let xs: Vec<Vec<f64>> = (0..ROWS)
        .map(|_| {
            (0..COLS)
                .map(|j| offsets[j] + scales[j] * std.sample(&mut rng))
                .collect()
        })
        .collect();
    let ys = xs
        .iter()
        .map(|x| 1.5 + x.iter().zip(&truth).map(|(a, b)| a * b).sum::<f64>() + noise.sample(&mut rng))
        .collect();
    (xs, ys)
}

/// `[intercept, beta]` from the uncentered normal equations with an
/// unpenalized intercept column.
pub fn normal_equations(xs: &[Vec<f64>], ys: &[f64], lambda: f64) -> DVector<f64> {
    let x = DMatrix::from_fn(xs.len(), COLS + 1, |i, j| if j == 0 { 1.0 } else { xs[i][j - 1] });
    let y = DVector::from_column_slice(ys);
    let mut penalty = DMatrix::identity(COLS + 1, COLS + 1) * lambda;
    penalty[(0, 0)] = 0.0;
    let lhs = x.transpose() * &x + penalty;
    let rhs = x.transpose() * y;
    lhs.lu().solve(&rhs).expect("oracle system is regular")
}
