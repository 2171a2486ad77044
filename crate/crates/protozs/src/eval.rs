//! Zero-shot split construction, macro precision/recall/F1, and the sweep
//! table.
//!
//! A split removes `m` relations from training entirely; the test pool is
//! one fifth of every seen relation's instances plus every instance of the
//! unseen relations, so evaluation covers seen and unseen labels together.
//! Metrics are macro-averaged (unweighted over relations present in the
//! gold labels), with a second macro restricted to the unseen subset.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::superclass_match;
use crate::corpus::{meta_for, read_corpus, write_corpus, RelationMeta, TaggedSentence};
use crate::error::{Error, Result};

/// Train/test partition with the removed relation names.
#[derive(Debug, Clone)]
pub struct ZeroShotSplit {
    pub train: Vec<TaggedSentence>,
    pub test: Vec<TaggedSentence>,
    pub unseen: BTreeSet<String>,
    pub seed: u64,
}

const SPLIT_ATTEMPTS: usize = 1000;

/// Samples `m` unseen relations and partitions the corpus. Selections
/// where some unseen relation has no super-class-matched seen relation
/// (which would make augmentation impossible) are re-sampled, up to a cap;
/// hitting the cap is an explicit error.
pub fn make_split(
    corpus: &[TaggedSentence],
    catalog: &[RelationMeta],
    m: usize,
    seed: u64,
) -> Result<ZeroShotSplit> {
    let relations: Vec<String> = corpus
        .iter()
        .map(|s| s.relation.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if m == 0 {
        return Err(Error::Config("m must be ≥ 1".into()));
    }
    if m >= relations.len() {
        return Err(Error::Config(format!(
            "m = {m} must be smaller than the number of relations ({})",
            relations.len()
        )));
    }
    let metas: BTreeMap<&str, &RelationMeta> = relations
        .iter()
        .map(|r| {
            meta_for(catalog, r)
                .map(|meta| (r.as_str(), meta))
                .ok_or_else(|| Error::Data(format!("relation {r:?} missing from catalog")))
        })
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rejected = 0usize;
    let unseen: BTreeSet<String> = loop {
        if rejected >= SPLIT_ATTEMPTS {
            return Err(Error::Data(format!(
                "no choice of {m} unseen relations leaves every one of them a \
                 super-class-matched seen relation (gave up after {SPLIT_ATTEMPTS} attempts)"
            )));
        }
        let picks = rand::seq::index::sample(&mut rng, relations.len(), m);
        let candidate: BTreeSet<String> =
            picks.iter().map(|i| relations[i].clone()).collect();
        let ok = candidate.iter().all(|u| {
            relations.iter().any(|s| {
                !candidate.contains(s) && superclass_match(metas[s.as_str()], metas[u.as_str()])
            })
        });
        if ok {
            if rejected > 0 {
                log::info!("re-sampled the unseen relation set {rejected} times");
            }
            break candidate;
        }
        rejected += 1;
    };

    // Hold out a fifth of every seen relation's instances for testing.
    let mut held: HashSet<usize> = HashSet::new();
    let mut by_rel: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in corpus.iter().enumerate() {
        by_rel.entry(s.relation.as_str()).or_default().push(i);
    }
    for (rel, indices) in &by_rel {
        if unseen.contains(*rel) {
            continue;
        }
        let k = indices.len() / 5;
        if k == 0 {
            continue;
        }
        for pos in rand::seq::index::sample(&mut rng, indices.len(), k) {
            held.insert(indices[pos]);
        }
    }

    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, s) in corpus.iter().enumerate() {
        if unseen.contains(&s.relation) || held.contains(&i) {
            test.push(s.clone());
        } else {
            train.push(s.clone());
        }
    }
    Ok(ZeroShotSplit {
        train,
        test,
        unseen,
        seed,
    })
}

#[derive(Serialize, Deserialize)]
struct SplitManifest {
    unseen: Vec<String>,
    seed: u64,
}

impl ZeroShotSplit {
    /// Writes `train.jsonl`, `test.jsonl`, and `split.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_corpus(&dir.join("train.jsonl"), &self.train)?;
        write_corpus(&dir.join("test.jsonl"), &self.test)?;
        let manifest = SplitManifest {
            unseen: self.unseen.iter().cloned().collect(),
            seed: self.seed,
        };
        let path = dir.join("split.json");
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::Data(format!("serializing split manifest: {e}")))?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    /// Reads a split written by [`ZeroShotSplit::save`].
    pub fn load(dir: &Path) -> Result<Self> {
        let train = read_corpus(&dir.join("train.jsonl"))?;
        let test = read_corpus(&dir.join("test.jsonl"))?;
        let path = dir.join("split.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: SplitManifest = serde_json::from_str(&text)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        Ok(ZeroShotSplit {
            train,
            test,
            unseen: manifest.unseen.into_iter().collect(),
            seed: manifest.seed,
        })
    }
}

/// Per-relation precision/recall/F1 with its gold support count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Unweighted averages over a set of relations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Full evaluation report: per-relation scores, their macro average, and
/// the macro average restricted to unseen relations (when any appear in
/// the gold labels).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_relation: BTreeMap<String, RelationMetrics>,
    pub macro_avg: MacroScores,
    pub subset_macro: Option<MacroScores>,
}

fn f1_of(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn macro_over<'a, I: Iterator<Item = &'a RelationMetrics>>(rows: I) -> Option<MacroScores> {
    let mut n = 0usize;
    let (mut p, mut r, mut f) = (0.0, 0.0, 0.0);
    for row in rows {
        n += 1;
        p += row.precision;
        r += row.recall;
        f += row.f1;
    }
    (n > 0).then(|| MacroScores {
        precision: p / n as f64,
        recall: r / n as f64,
        f1: f / n as f64,
    })
}

/// Precision/recall/F1 per relation present in `gold`, macro-averaged.
/// `unseen` selects the subset for the second macro; pass an empty set if
/// there is none.
pub fn metrics(
    pred: &[String],
    gold: &[String],
    unseen: &BTreeSet<String>,
) -> Result<MetricsReport> {
    if pred.len() != gold.len() {
        return Err(Error::Data(format!(
            "prediction and gold lengths differ: {} vs {}",
            pred.len(),
            gold.len()
        )));
    }
    if gold.is_empty() {
        return Err(Error::Data("cannot score an empty prediction list".into()));
    }
    let gold_rels: BTreeSet<&String> = gold.iter().collect();
    let mut per_relation = BTreeMap::new();
    for rel in gold_rels {
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut fn_ = 0usize;
        for (p, g) in pred.iter().zip(gold) {
            match (p == rel, g == rel) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        let precision = if tp + fp == 0 {
            0.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let recall = if tp + fn_ == 0 {
            0.0
        } else {
            tp as f64 / (tp + fn_) as f64
        };
        per_relation.insert(
            rel.clone(),
            RelationMetrics {
                precision,
                recall,
                f1: f1_of(precision, recall),
                support: tp + fn_,
            },
        );
    }
    let macro_avg = macro_over(per_relation.values()).expect("gold is non-empty");
    let subset_macro = macro_over(
        per_relation
            .iter()
            .filter(|(rel, _)| unseen.contains(*rel))
            .map(|(_, row)| row),
    );
    Ok(MetricsReport {
        per_relation,
        macro_avg,
        subset_macro,
    })
}

impl MetricsReport {
    /// Deterministic CSV rendering: one row per relation (sorted), then
    /// the macro row, then the unseen macro row when present. No
    /// timestamps or timing, so identical runs render identical bytes.
    pub fn render_csv(&self) -> String {
        let mut out = String::from("relation,precision,recall,f1,support\n");
        let mut total_support = 0usize;
        for (rel, row) in &self.per_relation {
            total_support += row.support;
            out.push_str(&format!(
                "{rel},{:.6},{:.6},{:.6},{}\n",
                row.precision, row.recall, row.f1, row.support
            ));
        }
        out.push_str(&format!(
            "macro,{:.6},{:.6},{:.6},{total_support}\n",
            self.macro_avg.precision, self.macro_avg.recall, self.macro_avg.f1
        ));
        if let Some(sub) = &self.subset_macro {
            out.push_str(&format!(
                "unseen_macro,{:.6},{:.6},{:.6},\n",
                sub.precision, sub.recall, sub.f1
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.render_csv()).map_err(|e| Error::io(path, e))
    }
}

/// One hyperparameter combination of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub tau: f64,
    pub top_n: usize,
    pub learning_rate: f64,
    pub m: usize,
}

/// Cartesian product in (tau, n, lr, m) nesting order, so output order is
/// reproducible.
pub fn sweep_grid(
    taus: &[f64],
    top_ns: &[usize],
    learning_rates: &[f64],
    ms: &[usize],
) -> Vec<GridPoint> {
    let mut grid = Vec::new();
    for &tau in taus {
        for &top_n in top_ns {
            for &learning_rate in learning_rates {
                for &m in ms {
                    grid.push(GridPoint {
                        tau,
                        top_n,
                        learning_rate,
                        m,
                    });
                }
            }
        }
    }
    grid
}

/// The canonical threshold grid: 0.0 to 1.0 in steps of 0.1 (11 values).
pub fn default_tau_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

/// The canonical learning-rate grid.
pub fn default_lr_grid() -> Vec<f64> {
    vec![1e-1, 1e-2, 1e-3, 1e-4]
}

/// One sweep result row. `best` flags the highest macro-F1 (first in grid
/// order on ties).
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub point: GridPoint,
    pub seed: u64,
    pub macro_p: f64,
    pub macro_r: f64,
    pub macro_f1: f64,
    pub unseen_f1: f64,
    pub wall_time_s: f64,
    pub best: bool,
}

/// Marks the best row by macro-F1 (ties keep the earliest row).
pub fn flag_best(rows: &mut [SweepRow]) {
    let mut best: Option<usize> = None;
    for (i, row) in rows.iter().enumerate() {
        if best.is_none_or(|b| row.macro_f1 > rows[b].macro_f1) {
            best = Some(i);
        }
    }
    for (i, row) in rows.iter_mut().enumerate() {
        row.best = Some(i) == best;
    }
}

/// CSV with one row per grid point. Wall time is measured, so this file is
/// not byte-stable across runs; the metrics files are.
pub fn render_sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("tau,n,lr,m,seed,macro_p,macro_r,macro_f1,unseen_f1,wall_time_s\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.3}\n",
            row.point.tau,
            row.point.top_n,
            row.point.learning_rate,
            row.point.m,
            row.seed,
            row.macro_p,
            row.macro_r,
            row.macro_f1,
            row.unseen_f1,
            row.wall_time_s
        ));
    }
    out
}
