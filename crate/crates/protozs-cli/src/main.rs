//! Command-line front end for the zero-shot relation classification
//! pipeline.
//!
//! Configuration is layered: built-in defaults, then a JSON config file
//! (`--config` flag or the `PROTOZS_CONFIG` environment variable), then
//! individual flag overrides. `protozs config` prints the effective
//! configuration after layering, which is handy for debugging precedence.
//!
//! Exit codes: 1 for configuration problems, 2 for data problems
//! (unreadable or malformed inputs), 3 for numerical failures such as
//! diverged training.

use std::collections::BTreeSet;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use protozs::corpus::{read_catalog, read_corpus, write_corpus};
use protozs::embeddings::VectorStore;
use protozs::encoder::{load_checkpoint, save_checkpoint, config_digest, ModelParams};
use protozs::error::Error;
use protozs::eval::{default_tau_grid, make_split, render_sweep_csv, sweep_grid, ZeroShotSplit};
use protozs::kglabel::{write_labels, KGraph};
use protozs::pipeline::{
    compute_labels, run_on_split, run_sweep, run_with_params, write_predictions, RunConfig,
};
use protozs::prompt::PromptMode;
use protozs::proto::train;
use protozs::synth::{generate, SynthSpec};

#[derive(Parser)]
#[command(
    name = "protozs",
    about = "Zero-shot relation classification from knowledge-derived prompts",
    version
)]
struct Cli {
    /// JSON config file; defaults to $PROTOZS_CONFIG when set.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

/// Flag overrides applied on top of the config file. Defaults (when
/// neither flag nor file sets a value): tau 0.6, top-n 5, k-hops 1,
/// hidden-dim 300, window 3, max-len 128, learning-rate 0.01, epochs 20,
/// batch-size 4, support-per-class 5, augment-per-unseen 20, m-unseen 5,
/// seed 0, mode full.
#[derive(Args)]
struct Overrides {
    /// Cosine threshold for virtual-label candidate words.
    #[arg(long, global = true)]
    tau: Option<f64>,
    /// Words kept per virtual label.
    #[arg(long, global = true)]
    top_n: Option<usize>,
    /// Graph neighbourhood radius for hop features.
    #[arg(long, global = true)]
    k_hops: Option<usize>,
    /// Convolution output channels.
    #[arg(long, global = true)]
    hidden_dim: Option<usize>,
    /// Convolution window (odd).
    #[arg(long, global = true)]
    window: Option<usize>,
    /// Maximum sentence length in tokens.
    #[arg(long, global = true)]
    max_len: Option<usize>,
    #[arg(long, global = true)]
    learning_rate: Option<f64>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    batch_size: Option<usize>,
    /// Support instances per relation per episode (0 = full batch).
    #[arg(long, global = true)]
    support_per_class: Option<usize>,
    /// Augmented sentences generated per unseen relation.
    #[arg(long, global = true)]
    augment_per_unseen: Option<usize>,
    /// Number of relations withheld as unseen.
    #[arg(long, global = true)]
    m_unseen: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Prompt mode: full prompts or the zeroed ablation.
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    /// Smoothing constant in the analogy score denominator.
    #[arg(long, global = true)]
    epsilon: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Full,
    Ablated,
}

impl From<ModeArg> for PromptMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Full => PromptMode::Full,
            ModeArg::Ablated => PromptMode::Ablated,
        }
    }
}

impl Overrides {
    fn apply(&self, config: &mut RunConfig) {
        macro_rules! set {
            ($field:ident) => {
                if let Some(v) = self.$field {
                    config.$field = v;
                }
            };
        }
        set!(tau);
        set!(top_n);
        set!(k_hops);
        set!(hidden_dim);
        set!(window);
        set!(max_len);
        set!(learning_rate);
        set!(epochs);
        set!(batch_size);
        set!(support_per_class);
        set!(augment_per_unseen);
        set!(m_unseen);
        set!(seed);
        set!(epsilon);
        if let Some(mode) = self.mode {
            config.mode = mode.into();
        }
    }
}

/// Input files shared by the pipeline subcommands.
#[derive(Args)]
struct WorldArgs {
    /// Tagged-sentence corpus (JSON lines).
    #[arg(long, value_name = "FILE")]
    corpus: PathBuf,
    /// Relation catalog (JSON array).
    #[arg(long, value_name = "FILE")]
    catalog: PathBuf,
    /// Word vectors (text, one word per line).
    #[arg(long, value_name = "FILE")]
    vectors: PathBuf,
    /// Knowledge graph edges (CSV: source,relation_type,target).
    #[arg(long, value_name = "FILE")]
    graph: PathBuf,
}

impl WorldArgs {
    fn load(
        &self,
    ) -> anyhow::Result<(
        Vec<protozs::corpus::TaggedSentence>,
        Vec<protozs::corpus::RelationMeta>,
        VectorStore,
        KGraph,
    )> {
        let corpus = read_corpus(&self.corpus)?;
        let catalog = read_catalog(&self.catalog)?;
        let (store, report) = VectorStore::load(&self.vectors, None)?;
        let skipped = report.skipped_malformed + report.skipped_zero + report.skipped_duplicate;
        if skipped > 0 {
            log::warn!("skipped {skipped} unusable vector rows");
        }
        let (graph, skipped) = KGraph::load(&self.graph)?;
        if skipped > 0 {
            log::warn!("skipped {skipped} malformed graph rows");
        }
        Ok((corpus, catalog, store, graph))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print the effective configuration after file and flag layering.
    Config,
    /// Generate the synthetic benchmark into a directory.
    Synth {
        /// Number of relations (at least 4).
        #[arg(long, default_value_t = 10)]
        relations: usize,
        /// Instances per relation.
        #[arg(long, default_value_t = 50)]
        instances: usize,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Split a corpus into train/test with unseen relations withheld.
    Split {
        #[arg(long, value_name = "FILE")]
        corpus: PathBuf,
        #[arg(long, value_name = "FILE")]
        catalog: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Build virtual labels for every catalog relation.
    VirtualLabels {
        #[arg(long, value_name = "FILE")]
        catalog: PathBuf,
        #[arg(long, value_name = "FILE")]
        vectors: PathBuf,
        #[arg(long, value_name = "FILE")]
        graph: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Translate seen sentences into augmented instances for unseen
    /// relations.
    Augment {
        #[arg(long, value_name = "FILE")]
        corpus: PathBuf,
        #[arg(long, value_name = "FILE")]
        catalog: PathBuf,
        #[arg(long, value_name = "FILE")]
        vectors: PathBuf,
        /// Comma-separated unseen relation names.
        #[arg(long, value_delimiter = ',', required = true)]
        unseen: Vec<String>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Train the encoder on a training corpus and write a checkpoint.
    Train {
        #[command(flatten)]
        world: WorldArgs,
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
    },
    /// Classify a saved split's test pool with a trained checkpoint.
    Predict {
        /// Directory written by `protozs split`.
        #[arg(long, value_name = "DIR")]
        split: PathBuf,
        #[arg(long, value_name = "FILE")]
        catalog: PathBuf,
        #[arg(long, value_name = "FILE")]
        vectors: PathBuf,
        #[arg(long, value_name = "FILE")]
        graph: PathBuf,
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        /// Output predictions (JSON lines).
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Also write a metrics CSV.
        #[arg(long, value_name = "FILE")]
        metrics: Option<PathBuf>,
    },
    /// Run the full pipeline (split, train, classify, score) in one go.
    Eval {
        #[command(flatten)]
        world: WorldArgs,
        /// Output metrics CSV.
        #[arg(long, value_name = "FILE")]
        out_metrics: PathBuf,
        /// Output predictions (JSON lines).
        #[arg(long, value_name = "FILE")]
        out_predictions: Option<PathBuf>,
    },
    /// Run a hyperparameter sweep and write one CSV row per grid point.
    Sweep {
        #[command(flatten)]
        world: WorldArgs,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Comma-separated threshold values (default: the configured tau).
        #[arg(long, value_delimiter = ',')]
        taus: Vec<f64>,
        /// Use the canonical 0.0..1.0 threshold grid (11 values).
        #[arg(long, conflicts_with = "taus")]
        tau_grid: bool,
        /// Comma-separated label sizes (default: the configured top-n).
        #[arg(long, value_delimiter = ',')]
        top_ns: Vec<usize>,
        /// Comma-separated learning rates (default: the configured rate).
        #[arg(long, value_delimiter = ',')]
        learning_rates: Vec<f64>,
        /// Comma-separated unseen counts (default: the configured m).
        #[arg(long, value_delimiter = ',')]
        ms: Vec<usize>,
    },
}

fn load_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let path = cli.config.clone().or_else(|| {
        std::env::var_os("PROTOZS_CONFIG").map(PathBuf::from)
    });
    let mut config = match path {
        Some(p) => {
            let text = fs::read_to_string(&p)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("config {}: {e}", p.display())))?
        }
        None => RunConfig::default(),
    };
    cli.overrides.apply(&mut config);
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let config = load_config(&cli)?;
    match cli.command {
        Command::Config => {
            println!("{}", serde_json::to_string_pretty(&config)?);
        }
        Command::Synth {
            relations,
            instances,
            out,
        } => {
            let world = generate(&SynthSpec {
                relations,
                instances,
                seed: config.seed,
            })?;
            world.write_dir(&out)?;
            println!(
                "wrote {} sentences, {} relations to {}",
                world.corpus.len(),
                world.catalog.len(),
                out.display()
            );
        }
        Command::Split {
            corpus,
            catalog,
            out,
        } => {
            let corpus = read_corpus(&corpus)?;
            let catalog = read_catalog(&catalog)?;
            let split = make_split(&corpus, &catalog, config.m_unseen, config.seed)?;
            split.save(&out)?;
            println!(
                "wrote split to {}: {} train, {} test, unseen {:?}",
                out.display(),
                split.train.len(),
                split.test.len(),
                split.unseen
            );
        }
        Command::VirtualLabels {
            catalog,
            vectors,
            graph,
            out,
        } => {
            let catalog = read_catalog(&catalog)?;
            let (store, _) = VectorStore::load(&vectors, None)?;
            let (graph, _) = KGraph::load(&graph)?;
            let relations: BTreeSet<String> =
                catalog.iter().map(|m| m.name.clone()).collect();
            let labels = compute_labels(
                &relations,
                &catalog,
                &store,
                &graph,
                config.tau,
                config.k_hops,
                config.top_n,
            )?;
            write_labels(&out, &labels)?;
            println!("wrote {} virtual labels to {}", labels.len(), out.display());
        }
        Command::Augment {
            corpus,
            catalog,
            vectors,
            unseen,
            out,
        } => {
            let corpus = read_corpus(&corpus)?;
            let catalog = read_catalog(&catalog)?;
            let (store, _) = VectorStore::load(&vectors, None)?;
            let unseen: BTreeSet<String> = unseen.into_iter().collect();
            let outcome = protozs::augment::build_augmented_set(
                &corpus,
                &catalog,
                &unseen,
                config.augment_per_unseen,
                config.seed,
                config.epsilon,
                &store,
            )?;
            if !outcome.uncoverable.is_empty() {
                log::warn!("uncoverable unseen relations: {:?}", outcome.uncoverable);
            }
            write_corpus(&out, &outcome.sentences)?;
            println!(
                "wrote {} augmented sentences to {} ({} tokens translated, {} skipped)",
                outcome.sentences.len(),
                out.display(),
                outcome.stats.translated,
                outcome.stats.skipped_missing + outcome.stats.skipped_no_candidate
            );
        }
        Command::Train { world, checkpoint } => {
            let (corpus, catalog, store, graph) = world.load()?;
            let relations: BTreeSet<String> =
                corpus.iter().map(|s| s.relation.clone()).collect();
            let labels = if config.mode.is_ablated() {
                Vec::new()
            } else {
                compute_labels(
                    &relations,
                    &catalog,
                    &store,
                    &graph,
                    config.tau,
                    config.k_hops,
                    config.top_n,
                )?
            };
            let init =
                ModelParams::init(config.hidden_dim, store.dim(), config.window, config.seed)?;
            let outcome = train(
                &corpus,
                &catalog,
                &labels,
                init,
                &store,
                &config.train_config(),
                config.max_len,
                config.mode,
            )?;
            for (epoch, loss) in outcome.loss_trace.iter().enumerate() {
                log::info!("epoch {}: mean loss {loss:.6}", epoch + 1);
            }
            save_checkpoint(&checkpoint, &outcome.params, &config.digest_tag())?;
            println!(
                "wrote checkpoint to {} (final loss {:.6})",
                checkpoint.display(),
                outcome.loss_trace.last().copied().unwrap_or(f64::NAN)
            );
        }
        Command::Predict {
            split,
            catalog,
            vectors,
            graph,
            checkpoint,
            out,
            metrics,
        } => {
            let split = ZeroShotSplit::load(&split)?;
            let catalog = read_catalog(&catalog)?;
            let (store, _) = VectorStore::load(&vectors, None)?;
            let (graph, _) = KGraph::load(&graph)?;
            let (params, digest) = load_checkpoint(&checkpoint)?;
            if digest != config_digest(&config.digest_tag()) {
                log::warn!(
                    "checkpoint was trained under a different configuration; \
                     continuing with the current one"
                );
            }
            let artifacts = run_with_params(split, &catalog, &store, &graph, params, &config)?;
            write_predictions(&out, &artifacts.predictions)?;
            if let Some(metrics_path) = metrics {
                artifacts.report.write_csv(&metrics_path)?;
            }
            println!(
                "wrote {} predictions to {} (macro F1 {:.6})",
                artifacts.predictions.len(),
                out.display(),
                artifacts.report.macro_avg.f1
            );
        }
        Command::Eval {
            world,
            out_metrics,
            out_predictions,
        } => {
            let (corpus, catalog, store, graph) = world.load()?;
            let split = make_split(&corpus, &catalog, config.m_unseen, config.seed)?;
            let artifacts = run_on_split(split, &catalog, &store, &graph, &config)?;
            artifacts.report.write_csv(&out_metrics)?;
            if let Some(pred_path) = out_predictions {
                write_predictions(&pred_path, &artifacts.predictions)?;
            }
            let unseen_f1 = artifacts
                .report
                .subset_macro
                .as_ref()
                .map(|s| s.f1)
                .unwrap_or(0.0);
            println!(
                "macro F1 {:.6} (unseen {:.6}); metrics written to {}",
                artifacts.report.macro_avg.f1,
                unseen_f1,
                out_metrics.display()
            );
        }
        Command::Sweep {
            world,
            out,
            taus,
            tau_grid,
            top_ns,
            learning_rates,
            ms,
        } => {
            let (corpus, catalog, store, graph) = world.load()?;
            let taus = if tau_grid {
                default_tau_grid()
            } else if taus.is_empty() {
                vec![config.tau]
            } else {
                taus
            };
            let top_ns = if top_ns.is_empty() {
                vec![config.top_n]
            } else {
                top_ns
            };
            let lrs = if learning_rates.is_empty() {
                vec![config.learning_rate]
            } else {
                learning_rates
            };
            let ms = if ms.is_empty() { vec![config.m_unseen] } else { ms };
            let grid = sweep_grid(&taus, &top_ns, &lrs, &ms);
            let rows = run_sweep(&corpus, &catalog, &store, &graph, &config, &grid)?;
            fs::write(&out, render_sweep_csv(&rows))
                .map_err(|e| Error::io(&out, e))?;
            let best = rows.iter().find(|r| r.best).expect("non-empty sweep");
            println!(
                "wrote {} sweep rows to {}; best tau={} n={} lr={} m={} (macro F1 {:.6})",
                rows.len(),
                out.display(),
                best.point.tau,
                best.point.top_n,
                best.point.learning_rate,
                best.point.m,
                best.macro_f1
            );
        }
    }
    Ok(())
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(e) => e.exit_code() as u8,
        // Unclassified failures count as data problems.
        None => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
