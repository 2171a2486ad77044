//! End-to-end zero-shot runs and hyperparameter sweeps.
//!
//! A run wires the stages together: split the corpus, build virtual labels
//! from the knowledge graph, translate seen sentences into augmented
//! instances for the unseen relations, train the encoder episodically on
//! the seen relations, build prototypes for seen (training instances) and
//! unseen (augmented instances) relations, then classify the held-out test
//! pool against all prototypes at once and score macro metrics.
//!
//! Test queries use the query prompt of their gold relation (entity
//! super-classes are given side information; the virtual-label block is
//! zeroed because the label is what's being predicted). The ablated mode
//! replaces every prompt with zeros end to end, isolating the contribution
//! of knowledge-derived prompts.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::augment::build_augmented_set;
use crate::corpus::{meta_for, RelationMeta, TaggedSentence};
use crate::embeddings::{VectorStore, DEFAULT_EPSILON};
use crate::encoder::{encode_batch, ModelParams};
use crate::error::{Error, Result};
use crate::eval::{
    flag_best, make_split, metrics, GridPoint, MetricsReport, SweepRow, ZeroShotSplit,
};
use crate::kglabel::{virtual_label, KGraph, VirtualLabel};
use crate::prompt::{PromptMode, PromptTable};
use crate::proto::{
    classify, relation_prototypes, train, unseen_prototypes, Prototype, TrainConfig, TrainOutcome,
};

/// One run's worth of knobs. Defaults follow the reference configuration:
/// 300 hidden units, window 3, max length 128, batch 4, learning rate
/// 0.01, one graph hop, threshold 0.6, five label words.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Cosine threshold for virtual-label candidate words.
    pub tau: f64,
    /// Words kept per virtual label.
    pub top_n: usize,
    /// Graph neighbourhood radius for hop features.
    pub k_hops: usize,
    pub hidden_dim: usize,
    pub window: usize,
    pub max_len: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Support instances sampled per relation per episode; 0 switches to
    /// deterministic full-batch training.
    pub support_per_class: usize,
    /// Augmented sentences generated per unseen relation.
    pub augment_per_unseen: usize,
    /// Number of relations withheld as unseen.
    pub m_unseen: usize,
    pub seed: u64,
    pub mode: PromptMode,
    /// Smoothing constant in the analogy score denominator.
    pub epsilon: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            tau: 0.6,
            top_n: 5,
            k_hops: 1,
            hidden_dim: 300,
            window: 3,
            max_len: 128,
            learning_rate: 0.01,
            epochs: 20,
            batch_size: 4,
            support_per_class: 5,
            augment_per_unseen: 20,
            m_unseen: 5,
            seed: 0,
            mode: PromptMode::Full,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Config(format!("tau must be in [0, 1], got {}", self.tau)));
        }
        if self.top_n == 0 || self.k_hops == 0 {
            return Err(Error::Config("top_n and k_hops must be ≥ 1".into()));
        }
        if self.hidden_dim == 0 || self.max_len == 0 {
            return Err(Error::Config("hidden_dim and max_len must be ≥ 1".into()));
        }
        if self.window == 0 || self.window % 2 == 0 {
            return Err(Error::Config(format!(
                "window must be odd and ≥ 1, got {}",
                self.window
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be ≥ 1".into()));
        }
        if self.augment_per_unseen == 0 {
            return Err(Error::Config("augment_per_unseen must be ≥ 1".into()));
        }
        if self.m_unseen == 0 {
            return Err(Error::Config("m_unseen must be ≥ 1".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!(
                "epsilon must be positive and finite, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            support_per_class: self.support_per_class,
            ..TrainConfig::default()
        }
    }

    /// Canonical JSON used to fingerprint checkpoints.
    pub fn digest_tag(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    fn with_point(&self, point: &GridPoint) -> RunConfig {
        RunConfig {
            tau: point.tau,
            top_n: point.top_n,
            learning_rate: point.learning_rate,
            m_unseen: point.m,
            ..self.clone()
        }
    }
}

/// One scored test instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Position in the test pool.
    pub id: usize,
    pub gold: String,
    pub pred: String,
    /// Probability per prototype relation, in sorted relation order.
    pub probs: Vec<(String, f64)>,
}

/// Everything a run produces, for callers that want more than the report.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub split: ZeroShotSplit,
    pub labels: Vec<VirtualLabel>,
    pub augmented: Vec<TaggedSentence>,
    pub outcome: TrainOutcome,
    pub prototypes: Vec<Prototype>,
    pub predictions: Vec<Prediction>,
    pub report: MetricsReport,
}

/// Builds virtual labels for every relation in `relations`.
pub fn compute_labels(
    relations: &BTreeSet<String>,
    catalog: &[RelationMeta],
    store: &VectorStore,
    graph: &KGraph,
    tau: f64,
    k_hops: usize,
    top_n: usize,
) -> Result<Vec<VirtualLabel>> {
    relations
        .iter()
        .map(|r| {
            let meta = meta_for(catalog, r)
                .ok_or_else(|| Error::Data(format!("relation {r:?} missing from catalog")))?;
            virtual_label(meta, store, graph, tau, k_hops, top_n)
        })
        .collect()
}

/// Splits the corpus with the configured seed and runs the pipeline.
pub fn run_zero_shot(
    corpus: &[TaggedSentence],
    catalog: &[RelationMeta],
    store: &VectorStore,
    graph: &KGraph,
    config: &RunConfig,
) -> Result<RunArtifacts> {
    config.validate()?;
    let split = make_split(corpus, catalog, config.m_unseen, config.seed)?;
    run_on_split(split, catalog, store, graph, config)
}

/// Runs the pipeline on an existing split.
pub fn run_on_split(
    split: ZeroShotSplit,
    catalog: &[RelationMeta],
    store: &VectorStore,
    graph: &KGraph,
    config: &RunConfig,
) -> Result<RunArtifacts> {
    config.validate()?;
    let (labels, augmented) = side_information(&split, catalog, store, graph, config)?;
    let init = ModelParams::init(config.hidden_dim, store.dim(), config.window, config.seed)?;
    let outcome = train(
        &split.train,
        catalog,
        &labels,
        init,
        store,
        &config.train_config(),
        config.max_len,
        config.mode,
    )?;
    finish_run(split, catalog, store, config, labels, augmented, outcome)
}

/// Runs the post-training stages with already-trained parameters, e.g.
/// from a checkpoint. The loss trace in the artifacts is empty.
pub fn run_with_params(
    split: ZeroShotSplit,
    catalog: &[RelationMeta],
    store: &VectorStore,
    graph: &KGraph,
    params: ModelParams,
    config: &RunConfig,
) -> Result<RunArtifacts> {
    config.validate()?;
    params.validate()?;
    let (labels, augmented) = side_information(&split, catalog, store, graph, config)?;
    let outcome = TrainOutcome {
        params,
        loss_trace: Vec::new(),
    };
    finish_run(split, catalog, store, config, labels, augmented, outcome)
}

/// Virtual labels plus the augmented sentences for the unseen relations.
fn side_information(
    split: &ZeroShotSplit,
    catalog: &[RelationMeta],
    store: &VectorStore,
    graph: &KGraph,
    config: &RunConfig,
) -> Result<(Vec<VirtualLabel>, Vec<TaggedSentence>)> {
    let relations: BTreeSet<String> = split
        .train
        .iter()
        .chain(&split.test)
        .map(|s| s.relation.clone())
        .collect();
    // The ablated mode never touches the graph or labels.
    let labels = if config.mode.is_ablated() {
        Vec::new()
    } else {
        compute_labels(
            &relations,
            catalog,
            store,
            graph,
            config.tau,
            config.k_hops,
            config.top_n,
        )?
    };

    let augmented = build_augmented_set(
        &split.train,
        catalog,
        &split.unseen,
        config.augment_per_unseen,
        config.seed,
        config.epsilon,
        store,
    )?;
    if !augmented.uncoverable.is_empty() {
        log::warn!(
            "no augmentation source for unseen relations: {:?}",
            augmented.uncoverable
        );
    }
    Ok((labels, augmented.sentences))
}

fn finish_run(
    split: ZeroShotSplit,
    catalog: &[RelationMeta],
    store: &VectorStore,
    config: &RunConfig,
    labels: Vec<VirtualLabel>,
    augmented: Vec<TaggedSentence>,
    outcome: TrainOutcome,
) -> Result<RunArtifacts> {
    let relations: BTreeSet<String> = split
        .train
        .iter()
        .chain(&split.test)
        .map(|s| s.relation.clone())
        .collect();
    let mut prototypes = relation_prototypes(
        &split.train,
        catalog,
        &labels,
        &outcome.params,
        store,
        config.max_len,
        config.mode,
    )?;
    prototypes.extend(unseen_prototypes(
        &augmented,
        &split.unseen,
        catalog,
        &labels,
        &outcome.params,
        store,
        config.max_len,
        config.mode,
    )?);
    prototypes.sort_by(|a, b| a.relation.cmp(&b.relation));

    let table = PromptTable::build(&relations, catalog, &labels, store, config.mode)?;
    let pairs: Vec<(&TaggedSentence, &[f64])> = split
        .test
        .iter()
        .map(|s| Ok((s, table.query(&s.relation)?)))
        .collect::<Result<_>>()?;
    let embedded = encode_batch(&pairs, &outcome.params, store, config.max_len)?;

    let mut predictions = Vec::with_capacity(embedded.len());
    for (id, (sentence, emb)) in split.test.iter().zip(&embedded).enumerate() {
        let probs = classify(emb, &prototypes)?;
        let pred = probs
            .iter()
            .fold(None::<&(String, f64)>, |best, row| match best {
                Some(b) if b.1 >= row.1 => Some(b),
                _ => Some(row),
            })
            .expect("classify returns at least one prototype")
            .0
            .clone();
        predictions.push(Prediction {
            id,
            gold: sentence.relation.clone(),
            pred,
            probs,
        });
    }

    let preds: Vec<String> = predictions.iter().map(|p| p.pred.clone()).collect();
    let golds: Vec<String> = predictions.iter().map(|p| p.gold.clone()).collect();
    let report = metrics(&preds, &golds, &split.unseen)?;

    Ok(RunArtifacts {
        split,
        labels,
        augmented,
        outcome,
        prototypes,
        predictions,
        report,
    })
}

/// Renders predictions as JSON lines.
pub fn render_predictions(predictions: &[Prediction]) -> String {
    let mut out = String::new();
    for p in predictions {
        out.push_str(&serde_json::to_string(p).expect("prediction serializes"));
        out.push('\n');
    }
    out
}

pub fn write_predictions(path: &Path, predictions: &[Prediction]) -> Result<()> {
    fs::write(path, render_predictions(predictions)).map_err(|e| Error::io(path, e))
}

/// Runs every grid point with `base` supplying the fixed knobs, then flags
/// the best row by macro-F1.
pub fn run_sweep(
    corpus: &[TaggedSentence],
    catalog: &[RelationMeta],
    store: &VectorStore,
    graph: &KGraph,
    base: &RunConfig,
    grid: &[GridPoint],
) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    let mut rows = Vec::with_capacity(grid.len());
    for point in grid {
        let config = base.with_point(point);
        let start = Instant::now();
        let artifacts = run_zero_shot(corpus, catalog, store, graph, &config)?;
        let unseen_f1 = artifacts
            .report
            .subset_macro
            .as_ref()
            .map(|s| s.f1)
            .unwrap_or(0.0);
        rows.push(SweepRow {
            point: point.clone(),
            seed: config.seed,
            macro_p: artifacts.report.macro_avg.precision,
            macro_r: artifacts.report.macro_avg.recall,
            macro_f1: artifacts.report.macro_avg.f1,
            unseen_f1,
            wall_time_s: start.elapsed().as_secs_f64(),
            best: false,
        });
    }
    flag_best(&mut rows);
    if let Some(best) = rows.iter().find(|r| r.best) {
        log::info!(
            "best grid point: tau={} n={} lr={} m={} (macro F1 {:.6})",
            best.point.tau,
            best.point.top_n,
            best.point.learning_rate,
            best.point.m,
            best.macro_f1
        );
    }
    Ok(rows)
}
