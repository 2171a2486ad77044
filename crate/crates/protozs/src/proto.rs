//! Prototypical classification and training.
//!
//! A relation's prototype is the arithmetic mean of its member instance
//! embeddings; queries are classified by a softmax over negative Euclidean
//! distances to the prototypes. Training is episodic: each batch samples a
//! per-relation support set disjoint from the query instances, rebuilds
//! prototypes from it at the current parameters, and takes one SGD step on
//! the cross-entropy of the gold relation. Setting `support_per_class` to
//! 0 switches to full-batch mode: prototypes come from every training
//! instance and queries walk the corpus in order with no randomness, which
//! makes runs exactly reproducible arithmetic, not just seeded.
//!
//! Means and gradient reductions use exactly rounded summation, so
//! prototypes are bit-identical under member reordering or duplication.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{RelationMeta, TaggedSentence};
use crate::embeddings::VectorStore;
use crate::encoder::{self, InstanceEmbedding, ModelParams};
use crate::error::{Error, Result};
use crate::kglabel::VirtualLabel;
use crate::numerics::Fsum;
use crate::par;
use crate::prompt::{PromptMode, PromptTable};

/// Mean embedding of one relation's instances.
#[derive(Debug, Clone, PartialEq)]
pub struct Prototype {
    pub relation: String,
    pub vector: Vec<f64>,
    pub support_count: usize,
}

/// Training hyperparameters. `support_per_class` > 0 selects episodic
/// training with that many support instances per relation; 0 selects
/// full-batch mode (see module docs). `lr_grid` is the learning-rate grid
/// used by sweeps, not by a single `train` call.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub support_per_class: usize,
    pub lr_grid: Vec<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            epochs: 20,
            batch_size: 4,
            seed: 0,
            support_per_class: 5,
            lr_grid: vec![1e-1, 1e-2, 1e-3, 1e-4],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be ≥ 1".into()));
        }
        if self.lr_grid.iter().any(|&lr| !(lr > 0.0 && lr.is_finite())) {
            return Err(Error::Config("lr_grid entries must be positive".into()));
        }
        Ok(())
    }
}

fn mean_of(embs: &[InstanceEmbedding], width: usize) -> Vec<f64> {
    let mut acc = Fsum::new();
    let n = embs.len() as f64;
    (0..width)
        .map(|k| {
            acc.reset();
            for e in embs {
                acc.add(e.vector[k]);
            }
            acc.value() / n
        })
        .collect()
}

/// One prototype per relation: the exact mean of each group, in relation
/// name order. Groups must be non-empty and width-consistent.
pub fn prototypes(
    groups: &BTreeMap<String, Vec<InstanceEmbedding>>,
) -> Result<Vec<Prototype>> {
    if groups.is_empty() {
        return Err(Error::Data("no instance groups to build prototypes from".into()));
    }
    let width = groups
        .values()
        .flat_map(|g| g.first())
        .map(|e| e.width())
        .next()
        .ok_or_else(|| Error::Data("empty prototype group".into()))?;
    let mut protos = Vec::with_capacity(groups.len());
    for (relation, members) in groups {
        if members.is_empty() {
            return Err(Error::Data(format!("relation {relation:?} has no instances")));
        }
        if let Some(bad) = members.iter().find(|e| e.width() != width) {
            return Err(Error::DimensionMismatch {
                expected: width,
                actual: bad.width(),
            });
        }
        protos.push(Prototype {
            relation: relation.clone(),
            vector: mean_of(members, width),
            support_count: members.len(),
        });
    }
    Ok(protos)
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Distances from a query to each prototype, softmaxed with negative sign:
/// `p(r_i) = exp(-d_i) / Σ_j exp(-d_j)`, computed with log-sum-exp
/// stabilization. Returns `(relation, probability)` in prototype order.
pub fn classify(
    query: &InstanceEmbedding,
    protos: &[Prototype],
) -> Result<Vec<(String, f64)>> {
    if protos.is_empty() {
        return Err(Error::Data("cannot classify against zero prototypes".into()));
    }
    for p in protos {
        if p.vector.len() != query.width() {
            return Err(Error::DimensionMismatch {
                expected: query.width(),
                actual: p.vector.len(),
            });
        }
    }
    let dists: Vec<f64> = protos
        .iter()
        .map(|p| euclidean(&query.vector, &p.vector))
        .collect();
    let probs = softmax_neg_dist(&dists);
    Ok(protos
        .iter()
        .zip(probs)
        .map(|(p, prob)| (p.relation.clone(), prob))
        .collect())
}

/// Stabilized softmax of `-d`: shifts by the minimum distance so the
/// largest exponent is exactly zero.
fn softmax_neg_dist(dists: &[f64]) -> Vec<f64> {
    let m = dists.iter().copied().fold(f64::INFINITY, f64::min);
    let exps: Vec<f64> = dists.iter().map(|&d| (m - d).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / total).collect()
}

/// Trained parameters plus the mean batch loss per epoch.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub loss_trace: Vec<f64>,
}

/// Trains the encoder on a corpus of tagged sentences (seen relations,
/// possibly plus augmented instances). Prototype members carry full
/// prompts; query instances carry query prompts for their gold relation.
/// Deterministic given (corpus order, seed, config).
#[allow(clippy::too_many_arguments)]
pub fn train(
    corpus: &[TaggedSentence],
    catalog: &[RelationMeta],
    labels: &[VirtualLabel],
    params: ModelParams,
    store: &VectorStore,
    config: &TrainConfig,
    max_len: usize,
    mode: PromptMode,
) -> Result<TrainOutcome> {
    if config.batch_size == 0 {
        return Err(Error::Config("batch_size must be ≥ 1".into()));
    }
    if !config.learning_rate.is_finite() || config.learning_rate < 0.0 {
        return Err(Error::Config(format!(
            "learning_rate must be finite and non-negative, got {}",
            config.learning_rate
        )));
    }
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, s) in corpus.iter().enumerate() {
        groups.entry(s.relation.clone()).or_default().push(i);
    }
    if groups.len() < 2 {
        return Err(Error::Data(format!(
            "training needs at least 2 relations, found {}",
            groups.len()
        )));
    }
    let rels: Vec<&String> = groups.keys().collect();
    let rel_index: BTreeMap<&str, usize> = rels
        .iter()
        .enumerate()
        .map(|(i, r)| (r.as_str(), i))
        .collect();
    let rel_set: BTreeSet<String> = groups.keys().cloned().collect();
    let table = PromptTable::build(&rel_set, catalog, labels, store, mode)?;
    let full_prompts: Vec<&[f64]> = rels
        .iter()
        .map(|r| table.full(r.as_str()))
        .collect::<Result<_>>()?;
    let query_prompts: Vec<&[f64]> = rels
        .iter()
        .map(|r| table.query(r.as_str()))
        .collect::<Result<_>>()?;
    let gold_of: Vec<usize> = corpus
        .iter()
        .map(|s| rel_index[s.relation.as_str()])
        .collect();

    let episodic = config.support_per_class > 0;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = params;
    let width = params.instance_width();
    let mut loss_trace = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..corpus.len()).collect();

    for epoch in 0..config.epochs {
        if episodic {
            order.shuffle(&mut rng);
        }
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let support_sets: Vec<Vec<usize>> = if episodic {
                let in_chunk: HashSet<usize> = chunk.iter().copied().collect();
                rels.iter()
                    .map(|r| {
                        let pool = &groups[*r];
                        let available: Vec<usize> = pool
                            .iter()
                            .copied()
                            .filter(|i| !in_chunk.contains(i))
                            .collect();
                        let s = config.support_per_class;
                        if available.len() >= s {
                            let mut picks: Vec<usize> =
                                rand::seq::index::sample(&mut rng, available.len(), s)
                                    .iter()
                                    .map(|k| available[k])
                                    .collect();
                            picks.sort_unstable();
                            picks
                        } else if !available.is_empty() {
                            available
                        } else {
                            log::warn!(
                                "relation {r:?}: every instance is in the query batch, \
                                 using them as support too"
                            );
                            pool.clone()
                        }
                    })
                    .collect()
            } else {
                rels.iter().map(|r| groups[*r].clone()).collect()
            };

            let mut batch: Vec<(&TaggedSentence, &[f64])> = Vec::new();
            let mut ranges: Vec<(usize, usize)> = Vec::with_capacity(rels.len());
            for (ri, set) in support_sets.iter().enumerate() {
                ranges.push((batch.len(), set.len()));
                for &i in set {
                    batch.push((&corpus[i], full_prompts[ri]));
                }
            }
            let q_start = batch.len();
            let query_golds: Vec<usize> = chunk.iter().map(|&i| gold_of[i]).collect();
            for &i in chunk {
                batch.push((&corpus[i], query_prompts[gold_of[i]]));
            }

            let loss_fn = |embs: &[InstanceEmbedding]| -> (f64, Vec<Vec<f64>>) {
                episode_loss(embs, &ranges, q_start, &query_golds, width)
            };
            let (batch_loss, grads) =
                encoder::gradients(&batch, &params, store, max_len, loss_fn)?;
            params.step(&grads, config.learning_rate);
            epoch_loss += batch_loss;
            batches += 1;
        }
        loss_trace.push(epoch_loss / batches.max(1) as f64);
        if let Err(e) = params.validate() {
            return Err(Error::Numerical(format!(
                "training diverged after epoch {}: {e}",
                epoch + 1
            )));
        }
    }
    Ok(TrainOutcome { params, loss_trace })
}

/// Episode loss and per-instance vector gradients: prototypes from the
/// support ranges, mean cross-entropy over the queries.
fn episode_loss(
    embs: &[InstanceEmbedding],
    ranges: &[(usize, usize)],
    q_start: usize,
    query_golds: &[usize],
    width: usize,
) -> (f64, Vec<Vec<f64>>) {
    let protos: Vec<Vec<f64>> = ranges
        .iter()
        .map(|&(start, len)| mean_of(&embs[start..start + len], width))
        .collect();
    let q_count = query_golds.len() as f64;
    let mut dvecs = vec![vec![0.0; width]; embs.len()];
    let mut dproto = vec![vec![0.0; width]; protos.len()];
    let mut total_loss = 0.0;
    for (qi, &gold) in query_golds.iter().enumerate() {
        let q = &embs[q_start + qi].vector;
        let dists: Vec<f64> = protos.iter().map(|c| euclidean(q, c)).collect();
        let m = dists.iter().copied().fold(f64::INFINITY, f64::min);
        let sumexp: f64 = dists.iter().map(|&d| (m - d).exp()).sum();
        total_loss += dists[gold] - m + sumexp.ln();
        for (ri, c) in protos.iter().enumerate() {
            let d = dists[ri];
            if d == 0.0 {
                continue; // query coincides with the prototype
            }
            let p = (m - d).exp() / sumexp;
            let delta = if ri == gold { 1.0 } else { 0.0 };
            let coef = (delta - p) / (q_count * d);
            let dq = &mut dvecs[q_start + qi];
            for k in 0..width {
                dq[k] += coef * (q[k] - c[k]);
            }
            let dp = &mut dproto[ri];
            for k in 0..width {
                dp[k] += coef * (c[k] - q[k]);
            }
        }
    }
    for (ri, &(start, len)) in ranges.iter().enumerate() {
        let n = len as f64;
        for pos in start..start + len {
            let dv = &mut dvecs[pos];
            for k in 0..width {
                dv[k] += dproto[ri][k] / n;
            }
        }
    }
    (total_loss / q_count, dvecs)
}

fn build_prototypes(
    instances: &[&TaggedSentence],
    catalog: &[RelationMeta],
    labels: &[VirtualLabel],
    params: &ModelParams,
    store: &VectorStore,
    max_len: usize,
    mode: PromptMode,
) -> Result<Vec<Prototype>> {
    if instances.is_empty() {
        return Err(Error::Data("no instances to build prototypes from".into()));
    }
    let mut groups: BTreeMap<&str, Vec<&TaggedSentence>> = BTreeMap::new();
    for s in instances {
        groups.entry(s.relation.as_str()).or_default().push(s);
    }
    let rel_set: BTreeSet<String> = groups.keys().map(|r| r.to_string()).collect();
    let table = PromptTable::build(&rel_set, catalog, labels, store, mode)?;
    let width = params.instance_width();
    let mut protos = Vec::with_capacity(groups.len());
    for (relation, members) in &groups {
        let prompt = table.full(relation)?;
        let embs: Vec<Result<InstanceEmbedding>> = par::map_ordered(members, |s| {
            encoder::encode_instance(s, prompt, params, store, max_len)
        });
        let embs: Vec<InstanceEmbedding> = embs.into_iter().collect::<Result<_>>()?;
        protos.push(Prototype {
            relation: relation.to_string(),
            vector: mean_of(&embs, width),
            support_count: embs.len(),
        });
    }
    Ok(protos)
}

/// Prototypes for every relation present in `corpus`, built from all of
/// its instances with full prompts at the given parameters.
pub fn relation_prototypes(
    corpus: &[TaggedSentence],
    catalog: &[RelationMeta],
    labels: &[VirtualLabel],
    params: &ModelParams,
    store: &VectorStore,
    max_len: usize,
    mode: PromptMode,
) -> Result<Vec<Prototype>> {
    let refs: Vec<&TaggedSentence> = corpus.iter().collect();
    build_prototypes(&refs, catalog, labels, params, store, max_len, mode)
}

/// Prototypes for unseen relations from their augmented instances. Every
/// relation in `unseen` must be covered by `augmented`; instances of other
/// relations are ignored.
#[allow(clippy::too_many_arguments)]
pub fn unseen_prototypes(
    augmented: &[TaggedSentence],
    unseen: &BTreeSet<String>,
    catalog: &[RelationMeta],
    labels: &[VirtualLabel],
    params: &ModelParams,
    store: &VectorStore,
    max_len: usize,
    mode: PromptMode,
) -> Result<Vec<Prototype>> {
    let covered: BTreeSet<&str> = augmented.iter().map(|s| s.relation.as_str()).collect();
    let missing: Vec<&String> = unseen
        .iter()
        .filter(|r| !covered.contains(r.as_str()))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Data(format!(
            "augmented corpus covers no instances for unseen relations {missing:?}"
        )));
    }
    let refs: Vec<&TaggedSentence> = augmented
        .iter()
        .filter(|s| unseen.contains(&s.relation))
        .collect();
    build_prototypes(&refs, catalog, labels, params, store, max_len, mode)
}
