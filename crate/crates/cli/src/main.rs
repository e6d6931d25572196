use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use xmlc::corpus::write_dataset;
use xmlc::ensemble::{EnsembleConfig, SelectionConfig, DEFAULT_RIDGE_LAMBDA};
use xmlc::inference::{DecisionPolicy, InstantiateConfig};
use xmlc::metaopt::{ParamSpec, SearchConfig};
use xmlc::metrics::Measure;
use xmlc::pipeline::{self, ClassifyOptions, CombineInputs};
use xmlc::results::{self, Direction};
use xmlc::synth::{generate_corpus, SynthConfig};
use xmlc::template::{parse_template_name, TemplateConfig};

#[derive(Parser)]
#[command(name = "xmlc", version, about = "Extreme multi-label text classification pipeline")]
struct Cli {
    /// Seed for every randomized stage.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads; defaults to the template's thr token, else 1.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Parameter file (`name lo hi transform init sigma frozen` per line).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Log only warnings and errors.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample base-classifier and ensemble training portions.
    Segment {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        base_out: PathBuf,
        #[arg(long)]
        ensemble_out: PathBuf,
        #[arg(long)]
        base_size: usize,
        #[arg(long)]
        ensemble_size: usize,
    },
    /// Write the training and development portions of a fold (0-9).
    Fold {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        train_out: PathBuf,
        #[arg(long)]
        dev_out: PathBuf,
        #[arg(long)]
        fold: usize,
        #[arg(long)]
        dev_size: usize,
    },
    /// Train a model described by a template name.
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        template: String,
        #[arg(long)]
        hierarchy: Option<PathBuf>,
        #[arg(long)]
        model_out: PathBuf,
    },
    /// Classify a dataset per document or, with --transposed, per label.
    Classify(ClassifyArgs),
    /// Random search over a template's parameters on a fold.
    Optimize {
        #[arg(long)]
        template: String,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: PathBuf,
        #[arg(long)]
        hierarchy: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 40)]
        outer: usize,
        #[arg(long, default_value_t = 8)]
        batch: usize,
    },
    /// Swap the orientation of a result file.
    Transpose {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value_t = DirectionArg::DocToLabel)]
        direction: DirectionArg,
    },
    /// Combine transposed base-classifier outputs with the stacking ensemble.
    Combine {
        /// Transposed outputs on the ensemble-training documents.
        #[arg(long, num_args = 1.., value_delimiter = ',', required = true)]
        train_outputs: Vec<PathBuf>,
        /// Dataset holding the ensemble-training labels.
        #[arg(long)]
        gold: PathBuf,
        /// Transposed outputs on the documents to combine, in the same order.
        #[arg(long, num_args = 1.., value_delimiter = ',', required = true)]
        test_outputs: Vec<PathBuf>,
        /// Dataset the base classifiers were trained on.
        #[arg(long)]
        base_train: PathBuf,
        /// Dataset of the documents to combine.
        #[arg(long)]
        test: PathBuf,
        /// Classifier ids to leave out.
        #[arg(long, value_delimiter = ',')]
        remove: Vec<usize>,
        #[arg(long)]
        out_transposed: PathBuf,
        #[arg(long)]
        out_submission: PathBuf,
        #[command(flatten)]
        ensemble: EnsembleArgs,
    },
    /// Hill-climbing selection of base classifiers by development runs.
    SelectClassifiers {
        #[arg(long, num_args = 1.., value_delimiter = ',', required = true)]
        outputs: Vec<PathBuf>,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        base_train: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        ensemble: EnsembleArgs,
    },
    /// Score a per-document result file against a labeled dataset.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        /// Measures to print; all when omitted.
        #[arg(long = "metric", value_delimiter = ',')]
        metrics: Vec<String>,
    },
    /// Generate a synthetic Zipf-labelled dataset.
    Synth {
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 2000)]
        docs: usize,
        #[arg(long, default_value_t = 300)]
        labels: usize,
        #[arg(long, default_value_t = 3000)]
        vocab: usize,
    },
    /// Show how a template name is interpreted.
    Template { name: String },
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Template whose iw and thr tokens supply defaults.
    #[arg(long)]
    template: Option<String>,
    #[arg(long)]
    transposed: bool,
    #[arg(long)]
    instantiate_weight: Option<f64>,
    #[arg(long)]
    instantiate_threshold: Option<f64>,
    #[arg(long, default_value_t = 20)]
    top_k: usize,
    /// Write the top-k ranking per document instead of the decision.
    #[arg(long)]
    ranked: bool,
    /// Keep labels with exp(score - top score) at least this.
    #[arg(long, default_value_t = 1.0)]
    relative_threshold: f64,
}

#[derive(Args)]
struct EnsembleArgs {
    #[arg(long, default_value_t = DEFAULT_RIDGE_LAMBDA)]
    ridge_lambda: f64,
    #[arg(long, default_value_t = 0.95)]
    prior_multiplier: f64,
    #[arg(long, default_value_t = 0.5)]
    vote_threshold_frac: f64,
    /// Label folds for development runs.
    #[arg(long, default_value_t = 5)]
    folds: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum DirectionArg {
    DocToLabel,
    LabelToDoc,
}

impl EnsembleArgs {
    fn config(&self, seed: u64, workers: usize) -> EnsembleConfig {
        EnsembleConfig {
            ridge_lambda: self.ridge_lambda,
            selection: SelectionConfig {
                prior_multiplier: self.prior_multiplier,
                vote_threshold_frac: self.vote_threshold_frac,
            },
            cv_folds: self.folds,
            seed,
            workers,
        }
    }
}

fn template(name: &str) -> Result<TemplateConfig> {
    let t = parse_template_name(name).with_context(|| format!("template {name:?}"))?;
    let inactive = t.inactive_tokens();
    if !inactive.is_empty() {
        log::warn!("template tokens without behavior: {}", inactive.join(" "));
    }
    Ok(t)
}

fn load_params(path: Option<&Path>) -> Result<Option<ParamSpec>> {
    Ok(path.map(ParamSpec::load).transpose()?)
}

fn workers(cli: Option<usize>, template: Option<&TemplateConfig>) -> usize {
    cli.or_else(|| template.and_then(TemplateConfig::workers))
        .unwrap_or(1)
        .max(1)
}

fn run(cli: Cli) -> Result<String> {
    let seed = cli.seed;
    let config = cli.config.as_deref();
    match cli.command {
        Command::Segment {
            input,
            base_out,
            ensemble_out,
            base_size,
            ensemble_size,
        } => {
            let (b, e) = pipeline::segment_files(&input, &base_out, &ensemble_out, base_size, ensemble_size, seed)?;
            Ok(format!("segment done: {b} base, {e} ensemble"))
        }
        Command::Fold {
            input,
            train_out,
            dev_out,
            fold,
            dev_size,
        } => {
            let (t, d) = pipeline::fold_files(&input, &train_out, &dev_out, fold, dev_size, seed)?;
            Ok(format!("fold done: {t} train, {d} dev"))
        }
        Command::Train {
            train,
            template: name,
            hierarchy,
            model_out,
        } => {
            let t = template(&name)?;
            let params = load_params(config)?;
            let (model_cfg, _) = pipeline::resolve_config(&t, params.as_ref(), seed)?;
            let model = pipeline::train_file(&train, &model_cfg, hierarchy.as_deref(), &model_out)?;
            Ok(format!(
                "train done: {} targets -> {}",
                model.targets().len(),
                model_out.display()
            ))
        }
        Command::Classify(args) => {
            let t = args.template.as_deref().map(template).transpose()?;
            let transposed = args.transposed.then(|| {
                let base = t
                    .as_ref()
                    .and_then(TemplateConfig::instantiate_config)
                    .unwrap_or_default();
                InstantiateConfig {
                    instantiate_weight: args.instantiate_weight.unwrap_or(base.instantiate_weight),
                    instantiate_threshold: args.instantiate_threshold.unwrap_or(base.instantiate_threshold),
                    ..base
                }
            });
            if !args.transposed && (args.instantiate_weight.is_some() || args.instantiate_threshold.is_some()) {
                bail!("--instantiate-weight and --instantiate-threshold need --transposed");
            }
            let opts = ClassifyOptions {
                top_k: args.top_k.max(1),
                transposed,
                policy: DecisionPolicy {
                    relative_threshold: args.relative_threshold,
                },
                ranked: args.ranked,
                workers: workers(cli.workers, t.as_ref()),
            };
            let lines = pipeline::classify_file(&args.model, &args.input, &args.output, &opts)?;
            Ok(format!("classify done: {lines} lines -> {}", args.output.display()))
        }
        Command::Optimize {
            template: name,
            train,
            dev,
            hierarchy,
            out_dir,
            outer,
            batch,
        } => {
            let t = template(&name)?;
            let search = SearchConfig {
                outer_iterations: outer,
                batch_size: batch,
                seed,
                workers: workers(cli.workers, Some(&t)),
            };
            let out =
                pipeline::optimize_files(&t, config, &train, &dev, hierarchy.as_deref(), &out_dir, &search, seed)?;
            Ok(format!(
                "optimize done: best {} {} -> {}",
                t.measure().name(),
                results::format_score(out.state.best_score),
                out.final_file.display()
            ))
        }
        Command::Transpose {
            input,
            output,
            direction,
        } => {
            let dir = match direction {
                DirectionArg::DocToLabel => Direction::DocToLabel,
                DirectionArg::LabelToDoc => Direction::LabelToDoc,
            };
            pipeline::transpose_file(&input, &output, dir)?;
            Ok(format!("transpose done -> {}", output.display()))
        }
        Command::Combine {
            train_outputs,
            gold,
            test_outputs,
            base_train,
            test,
            remove,
            out_transposed,
            out_submission,
            ensemble,
        } => {
            let cfg = ensemble.config(seed, workers(cli.workers, None));
            let inputs = CombineInputs {
                train_outputs: &train_outputs,
                gold: &gold,
                test_outputs: &test_outputs,
                base_train: &base_train,
                test: &test,
                removed: &remove,
            };
            let n = pipeline::combine_files(&inputs, &cfg, &out_transposed, &out_submission)?;
            Ok(format!("combine done: {n} assignments -> {}", out_submission.display()))
        }
        Command::SelectClassifiers {
            outputs,
            gold,
            base_train,
            out,
            ensemble,
        } => {
            let cfg = ensemble.config(seed, workers(cli.workers, None));
            let outcome = pipeline::select_files(&outputs, &gold, &base_train, &cfg)?;
            results::write_text(&out, &pipeline::format_selection(&outcome))?;
            Ok(format!(
                "select-classifiers done: kept {}, removed {}",
                outcome.kept.len(),
                outcome.removed.len()
            ))
        }
        Command::Evaluate { pred, gold, metrics } => {
            let measures: Vec<Measure> = if metrics.is_empty() {
                Measure::ALL.to_vec()
            } else {
                metrics.iter().map(|m| m.parse::<Measure>()).collect::<Result<_, _>>()?
            };
            let scores = pipeline::evaluate_files(&pred, &gold, &measures)?;
            for (m, v) in &scores {
                println!("{} {}", m.name(), results::format_score(*v));
            }
            Ok(format!("evaluate done: {} measures", scores.len()))
        }
        Command::Synth {
            output,
            docs,
            labels,
            vocab,
        } => {
            let cfg = SynthConfig {
                num_docs: docs,
                num_labels: labels,
                vocab_size: vocab,
                seed,
                ..SynthConfig::default()
            };
            write_dataset(&generate_corpus(&cfg)?, &output)?;
            Ok(format!("synth done: {docs} documents -> {}", output.display()))
        }
        Command::Template { name } => {
            let t = parse_template_name(&name)?;
            println!("name {}", t.to_name());
            println!("measure {}{}", t.measure().name(), t.measure_variant);
            if let Some(f) = t.fold {
                println!("fold {f}");
            }
            let cfg = t.model_config(seed)?;
            println!("model {cfg:?}");
            if let Some(i) = t.instantiate_config() {
                println!("transposed {i:?}");
            }
            if let Some(w) = t.workers() {
                println!("workers {w}");
            }
            println!("inactive {}", t.inactive_tokens().join(" "));
            Ok("template done".into())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(summary) => {
            info!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(2)
        }
    }
}
