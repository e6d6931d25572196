//! File-level pipeline stages shared by the command-line tool and tests.
//!
//! Each stage reads its inputs from paths, writes its declared outputs and
//! logs one line. Identical inputs and seeds give byte-identical outputs for
//! any worker count.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use log::info;

use crate::corpus::{
    labelset_stats, make_fold, parse_dataset, parse_hierarchy, segment, write_dataset, Corpus, DocId, FoldSpec,
    Hierarchy, LabelId, LabelStats,
};
use crate::ensemble::{self, ClassifierOutput, EnsembleConfig, SelectionOutcome};
use crate::error::{Error, Result};
use crate::inference::{predict_per_document, predict_transposed, Classifier, DecisionPolicy, InstantiateConfig};
use crate::metaopt::{run_search, ParamSpec, SearchConfig, SearchState};
use crate::metrics::{Labelsets, Measure};
use crate::parallel;
use crate::results::{self, Direction, Orientation, ResultLists};
use crate::sgm::{train_model, ModelConfig, SgmModel};
use crate::synth::{generate_corpus, SynthConfig};
use crate::template::{apply_params, parse_template_name, TemplateConfig};

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn segment_files(
    input: &Path,
    base_out: &Path,
    ensemble_out: &Path,
    base_size: usize,
    ensemble_size: usize,
    seed: u64,
) -> Result<(usize, usize)> {
    let corpus = parse_dataset(input)?;
    let (base, ens) = segment(&corpus, base_size, ensemble_size, seed)?;
    write_dataset(&base, base_out)?;
    write_dataset(&ens, ensemble_out)?;
    info!(
        "segment: {} documents -> {} base, {} ensemble",
        corpus.len(),
        base.len(),
        ens.len()
    );
    Ok((base.len(), ens.len()))
}

pub fn fold_files(
    input: &Path,
    train_out: &Path,
    dev_out: &Path,
    fold_index: usize,
    dev_size: usize,
    seed: u64,
) -> Result<(usize, usize)> {
    let corpus = parse_dataset(input)?;
    let (train, dev) = make_fold(&corpus, &FoldSpec::new(fold_index, dev_size, seed)?)?;
    write_dataset(&train, train_out)?;
    write_dataset(&dev, dev_out)?;
    info!("fold s{fold_index}: {} train, {} dev", train.len(), dev.len());
    Ok((train.len(), dev.len()))
}

/// Model and instantiation settings from a template name, optionally
/// overridden by a parameter file whose initial values are applied.
pub fn resolve_config(
    template: &TemplateConfig,
    params: Option<&ParamSpec>,
    seed: u64,
) -> Result<(ModelConfig, Option<InstantiateConfig>)> {
    let mut model = template.model_config(seed)?;
    let mut inst = template.instantiate_config();
    if let Some(spec) = params {
        apply_params(spec, &spec.initial(), &mut model, inst.as_mut())?;
    }
    Ok((model, inst))
}

pub fn load_hierarchy(path: Option<&Path>) -> Result<Option<Hierarchy>> {
    path.map(parse_hierarchy).transpose()
}

pub fn train_file(train: &Path, config: &ModelConfig, hierarchy: Option<&Path>, model_out: &Path) -> Result<SgmModel> {
    let corpus = parse_dataset(train)?;
    let hierarchy = load_hierarchy(hierarchy)?;
    let model = train_model(&corpus, config, hierarchy.as_ref())?;
    model.save(model_out)?;
    info!(
        "train: {} documents, {} targets, {} features",
        corpus.len(),
        model.targets().len(),
        model.vocab_size()
    );
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifyOptions {
    pub top_k: usize,
    /// Per-label output when set.
    pub transposed: Option<InstantiateConfig>,
    pub policy: DecisionPolicy,
    /// Write the full top-k ranking per document instead of the decision.
    pub ranked: bool,
    pub workers: usize,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self {
            top_k: 20,
            transposed: None,
            policy: DecisionPolicy::default(),
            ranked: false,
            workers: 1,
        }
    }
}

/// Label statistics of a model's training data.
pub fn model_label_stats(model: &SgmModel) -> LabelStats {
    LabelStats {
        label_freq: model.label_freq().clone(),
        labelset_freq: BTreeMap::new(),
        total_docs: model.num_train_docs(),
    }
}

/// Classifies a corpus. Per-document results are keyed by document id;
/// transposed results by label id.
pub fn classify_corpus(clf: &Classifier, corpus: &Corpus, opts: &ClassifyOptions) -> Result<ResultLists> {
    let weighted = clf.weighted_documents(&corpus.documents)?;
    if let Some(icfg) = &opts.transposed {
        let icfg = InstantiateConfig {
            top_k_labels_per_doc: opts.top_k,
            ..*icfg
        };
        let tp = predict_transposed(
            &clf.index,
            &weighted,
            &icfg,
            &model_label_stats(&clf.model),
            opts.workers,
        );
        return Ok(results::transposed_to_lists(&tp));
    }
    let rows = parallel::map_ordered(&weighted, opts.workers, |(doc, w)| {
        let pred = clf.index.score_document(*doc, w, opts.top_k);
        let ranking = clf.index.label_ranking(&pred);
        if opts.ranked {
            return Ok(ranking);
        }
        let chosen: BTreeSet<LabelId> = predict_per_document(&pred, clf.model.powerset(), &opts.policy)?
            .into_iter()
            .collect();
        Ok(ranking.into_iter().filter(|(l, _)| chosen.contains(l)).collect())
    });
    weighted
        .iter()
        .zip(rows)
        .map(|((doc, _), row)| {
            let row: Vec<(LabelId, f64)> = row?;
            Ok((*doc, row.into_iter().map(|(l, s)| (u64::from(l), Some(s))).collect()))
        })
        .collect()
}

pub fn classify_file(model: &Path, input: &Path, output: &Path, opts: &ClassifyOptions) -> Result<usize> {
    let clf = Classifier::new(SgmModel::load(model)?)?;
    let corpus = parse_dataset(input)?;
    let lists = classify_corpus(&clf, &corpus, opts)?;
    let orientation = if opts.transposed.is_some() {
        Orientation::PerLabel
    } else {
        Orientation::PerDocument
    };
    results::write_text(output, &results::format_lists(&lists, orientation))?;
    info!(
        "classify: {} documents, {} {} lines",
        corpus.len(),
        lists.len(),
        if opts.transposed.is_some() { "label" } else { "document" }
    );
    Ok(lists.len())
}

pub fn transpose_file(input: &Path, output: &Path, direction: Direction) -> Result<()> {
    let text = read_to_string(input)?;
    let out = results::transpose_results(&text, direction, &input.display().to_string())?;
    results::write_text(output, &out)?;
    info!("transpose: {} -> {}", input.display(), output.display());
    Ok(())
}

/// Evaluates a per-document result file against the labels of a dataset.
pub fn evaluate_files(pred: &Path, gold: &Path, measures: &[Measure]) -> Result<Vec<(Measure, f64)>> {
    let lists = results::read_lists(pred, Orientation::PerDocument)?;
    let ranked = results::lists_to_rankings(&lists)?;
    let gold = parse_dataset(gold)?.gold();
    let universe: BTreeSet<LabelId> = gold.values().chain(ranked.values()).flatten().copied().collect();
    measures
        .iter()
        .map(|&m| Ok((m, m.evaluate(&ranked, &gold, &universe)?)))
        .collect()
}

/// Predicted labelsets for scoring a configuration on a development set.
pub fn predict_labelsets(
    clf: &Classifier,
    corpus: &Corpus,
    measure: Measure,
    transposed: Option<&InstantiateConfig>,
    workers: usize,
) -> Result<Labelsets> {
    let opts = ClassifyOptions {
        transposed: transposed.copied(),
        ranked: transposed.is_none() && measure == Measure::Ndcg5,
        workers,
        ..ClassifyOptions::default()
    };
    let lists = classify_corpus(clf, corpus, &opts)?;
    if transposed.is_none() {
        return results::lists_to_rankings(&lists);
    }
    let mut by_doc: BTreeMap<DocId, Vec<(LabelId, f64)>> =
        corpus.documents.iter().map(|d| (d.doc_id, Vec::new())).collect();
    for (&label, entries) in &lists {
        for &(doc, score) in entries {
            by_doc
                .entry(doc)
                .or_default()
                .push((label as LabelId, score.unwrap_or(0.0)));
        }
    }
    Ok(by_doc
        .into_iter()
        .map(|(d, mut v)| {
            v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            (d, v.into_iter().map(|x| x.0).collect())
        })
        .collect())
}

/// Scores one configuration: trains on `train`, classifies `dev`.
pub fn score_configuration(
    train: &Corpus,
    dev: &Corpus,
    model_cfg: &ModelConfig,
    inst: Option<&InstantiateConfig>,
    measure: Measure,
    hierarchy: Option<&Hierarchy>,
) -> Result<f64> {
    let clf = Classifier::new(train_model(train, model_cfg, hierarchy)?)?;
    let inst = inst.map(|i| InstantiateConfig {
        instantiate_weight: i.instantiate_weight * dev.len() as f64 / train.len().max(1) as f64,
        ..*i
    });
    let predicted = predict_labelsets(&clf, dev, measure, inst.as_ref(), 1)?;
    let gold = dev.gold();
    let universe: BTreeSet<LabelId> = gold.values().chain(predicted.values()).flatten().copied().collect();
    measure.evaluate(&predicted, &gold, &universe)
}

/// Random search for a template's parameters on a (train, dev) fold.
pub fn optimize(
    template: &TemplateConfig,
    spec: &ParamSpec,
    train: &Corpus,
    dev: &Corpus,
    hierarchy: Option<&Hierarchy>,
    search: &SearchConfig,
    seed: u64,
) -> Result<SearchState> {
    let base = template.model_config(seed)?;
    let base_inst = template.instantiate_config();
    let measure = template.measure();
    let state = run_search(
        |values: &[f64]| -> Result<f64> {
            let mut cfg = base;
            let mut inst = base_inst;
            apply_params(spec, values, &mut cfg, inst.as_mut())?;
            score_configuration(train, dev, &cfg, inst.as_ref(), measure, hierarchy)
        },
        spec,
        search,
    )?;
    for (round, best) in state.best_trace.iter().enumerate() {
        info!("optimize round {round}: best {} {best:.6}", measure.name());
    }
    Ok(state)
}

/// Paths of the initial and final parameter files for a run named `name`.
pub fn param_file_names(dir: &Path, name: &str, outer_iterations: usize) -> (PathBuf, PathBuf) {
    let first = dir.join(format!("{name}_params.txt"));
    let last = dir.join(format!("{name}_params.txt_{}_0", outer_iterations.saturating_sub(1)));
    (first, last)
}

#[derive(Debug, Clone)]
pub struct OptimizeOutput {
    pub state: SearchState,
    pub initial_file: PathBuf,
    pub final_file: PathBuf,
}

#[allow(clippy::too_many_arguments)]
pub fn optimize_files(
    template: &TemplateConfig,
    params: Option<&Path>,
    train: &Path,
    dev: &Path,
    hierarchy: Option<&Path>,
    out_dir: &Path,
    search: &SearchConfig,
    seed: u64,
) -> Result<OptimizeOutput> {
    let spec = match params {
        Some(p) => ParamSpec::load(p)?,
        None => template.param_spec(seed)?,
    };
    let train = parse_dataset(train)?;
    let dev = parse_dataset(dev)?;
    let hierarchy = load_hierarchy(hierarchy)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let (initial_file, final_file) = param_file_names(out_dir, &template.to_name(), search.outer_iterations);
    results::write_text(&initial_file, &spec.to_text())?;
    let state = optimize(template, &spec, &train, &dev, hierarchy.as_ref(), search, seed)?;
    results::write_text(&final_file, &spec.with_values(&state.best_params).to_text())?;
    Ok(OptimizeOutput {
        state,
        initial_file,
        final_file,
    })
}

pub fn load_outputs(paths: &[PathBuf]) -> Result<Vec<ClassifierOutput>> {
    paths
        .iter()
        .enumerate()
        .map(|(i, p)| ClassifierOutput::load(i, p))
        .collect()
}

pub struct CombineInputs<'a> {
    pub train_outputs: &'a [PathBuf],
    /// Dataset with the ensemble-training labels.
    pub gold: &'a Path,
    pub test_outputs: &'a [PathBuf],
    /// Dataset the base classifiers were trained on.
    pub base_train: &'a Path,
    /// Dataset whose documents are combined; every document gets a line in
    /// the submission.
    pub test: &'a Path,
    pub removed: &'a [usize],
}

pub fn combine_files(
    inputs: &CombineInputs<'_>,
    cfg: &EnsembleConfig,
    transposed_out: &Path,
    submission_out: &Path,
) -> Result<usize> {
    let train = load_outputs(inputs.train_outputs)?;
    let test = load_outputs(inputs.test_outputs)?;
    let gold = parse_dataset(inputs.gold)?.gold();
    let stats = labelset_stats(&parse_dataset(inputs.base_train)?);
    let test_docs: Vec<DocId> = parse_dataset(inputs.test)?.iter().map(|d| d.doc_id).collect();
    let (_, selection) = ensemble::combine(&train, &gold, &test, &stats, cfg, test_docs.len(), inputs.removed)?;
    results::write_text(
        transposed_out,
        &results::format_lists(&ensemble::selection_to_lists(&selection), Orientation::PerLabel),
    )?;
    let docs = ensemble::selection_to_documents(&selection, test_docs);
    results::write_text(submission_out, &results::format_submission(&docs))?;
    let assigned: usize = selection.values().map(Vec::len).sum();
    info!(
        "combine: {} classifiers, {} labels, {assigned} assignments",
        train.len() - inputs.removed.iter().filter(|&&r| r < train.len()).count(),
        selection.len()
    );
    Ok(assigned)
}

pub fn select_files(
    outputs: &[PathBuf],
    gold: &Path,
    base_train: &Path,
    cfg: &EnsembleConfig,
) -> Result<SelectionOutcome> {
    let outputs = load_outputs(outputs)?;
    let gold = parse_dataset(gold)?.gold();
    let stats = labelset_stats(&parse_dataset(base_train)?);
    let outcome = ensemble::select_classifiers_cv(&outputs, &gold, &stats, cfg)?;
    info!(
        "select-classifiers: kept {:?}, removed {:?} after {} evaluations",
        outcome.kept, outcome.removed, outcome.evaluations
    );
    Ok(outcome)
}

/// Template names used by the synthetic end-to-end run.
pub const SYNTHETIC_TEMPLATES: [&str; 4] = [
    "mafs_s0_u_jm2_bm18ti_pct0_ps4_iw0",
    "mafs_s0_uc1_jm3_tiX2_pct0_ps4_iw0",
    "mafs_s0_kd_u_jm2_kdp3_bm18tib_pct0_ps4_iw0",
    "mafs_s0_lp_u_jm2_bm18ti_pct0_ps4_iw0",
];

/// Runs every stage on a generated corpus inside `dir` and returns the
/// written files in creation order.
pub fn run_synthetic_pipeline(dir: &Path, seed: u64, workers: usize) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut note = |p: PathBuf| {
        written.push(p.clone());
        p
    };
    let corpus_path = note(dir.join("corpus.txt"));
    write_dataset(
        &generate_corpus(&SynthConfig {
            seed,
            ..SynthConfig::default()
        })?,
        &corpus_path,
    )?;

    let base = note(dir.join("base.txt"));
    let rest = note(dir.join("rest.txt"));
    segment_files(&corpus_path, &base, &rest, 1400, 600, seed)?;
    let ens = note(dir.join("ensemble.txt"));
    let test = note(dir.join("test.txt"));
    segment_files(&rest, &ens, &test, 300, 300, seed)?;
    let fold_train = note(dir.join("fold_train.txt"));
    let fold_dev = note(dir.join("fold_dev.txt"));
    fold_files(&base, &fold_train, &fold_dev, 0, 300, seed)?;

    let search = SearchConfig {
        outer_iterations: 2,
        batch_size: 4,
        seed,
        workers,
    };
    let first = parse_template_name(SYNTHETIC_TEMPLATES[0])?;
    let opt = optimize_files(&first, None, &fold_train, &fold_dev, None, dir, &search, seed)?;
    note(opt.initial_file.clone());
    let tuned = note(opt.final_file.clone());
    info!("optimize: best {} {:.6}", first.measure().name(), opt.state.best_score);

    let base_len = parse_dataset(&base)?.len() as f64;
    let mut ens_outputs = Vec::new();
    let mut test_outputs = Vec::new();
    for (i, name) in SYNTHETIC_TEMPLATES.iter().enumerate() {
        let template = parse_template_name(name)?;
        let params = if i == 0 { Some(ParamSpec::load(&tuned)?) } else { None };
        let (model_cfg, inst) = resolve_config(&template, params.as_ref(), seed)?;
        let model_path = note(dir.join(format!("model{i}.json")));
        train_file(&base, &model_cfg, None, &model_path)?;
        for (input, outs, tag) in [(&ens, &mut ens_outputs, "ens"), (&test, &mut test_outputs, "test")] {
            let n = parse_dataset(input)?.len() as f64;
            let inst = inst.unwrap_or_default();
            let opts = ClassifyOptions {
                transposed: Some(InstantiateConfig {
                    instantiate_weight: inst.instantiate_weight * n / base_len,
                    ..inst
                }),
                workers,
                ..ClassifyOptions::default()
            };
            let out = note(dir.join(format!("{tag}{i}.txt")));
            classify_file(&model_path, input, &out, &opts)?;
            outs.push(out);
        }
    }

    let per_doc = note(dir.join("test0_docs.txt"));
    transpose_file(&test_outputs[0], &per_doc, Direction::LabelToDoc)?;

    let cfg = EnsembleConfig {
        seed,
        workers,
        ..EnsembleConfig::default()
    };
    let selection = select_files(&ens_outputs, &ens, &base, &cfg)?;
    let selection_path = note(dir.join("selection.txt"));
    results::write_text(&selection_path, &format_selection(&selection))?;

    let combined = note(dir.join("combined_transposed.txt"));
    let submission = note(dir.join("submission.txt"));
    combine_files(
        &CombineInputs {
            train_outputs: &ens_outputs,
            gold: &ens,
            test_outputs: &test_outputs,
            base_train: &base,
            test: &test,
            removed: &selection.removed,
        },
        &cfg,
        &combined,
        &submission,
    )?;

    let metrics_path = note(dir.join("metrics.txt"));
    let mut text = String::new();
    for (label, file) in [("single0", &per_doc), ("ensemble", &submission)] {
        for (m, v) in evaluate_files(file, &test, &Measure::ALL)? {
            text.push_str(&format!("{label} {} {}\n", m.name(), results::format_score(v)));
        }
    }
    results::write_text(&metrics_path, &text)?;
    Ok(written)
}

pub fn format_selection(outcome: &SelectionOutcome) -> String {
    let ids = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
    let mut out = format!("kept {}\nremoved {}\n", ids(&outcome.kept), ids(&outcome.removed));
    if let Some(s) = outcome.score {
        out.push_str(&format!("score {}\n", results::format_score(s)));
    }
    out
}
