//! Synthetic benchmark generator.
//!
//! Builds a self-consistent world (corpus, relation catalog, embeddings,
//! knowledge graph) whose difficulty is structural rather than statistical.
//! Relations come in super-class groups of two, and the two members of a
//! group sit on opposite "sides". Every relation gets its own content-token
//! cluster, but the cluster vectors encode the side strongly and the group
//! only weakly: same-side clusters from different groups are nearly
//! parallel, while the two clusters inside a group are far apart. Sentence
//! content therefore pins down the side easily but the group only
//! marginally; the entity super-classes carried by the prompt pin down the
//! group exactly and say nothing about the side. A classifier needs both
//! signals to tell all relations apart, and the more relations are unseen,
//! the more a prompt-free model must separate near-parallel clusters it was
//! never trained on, which is exactly the degradation the prompt ablation
//! is supposed to show.
//!
//! Everything is generated from one seeded stream, and vector components
//! are rounded to six decimals before use, so the in-memory world and the
//! files written by [`SynthWorld::write_dir`] describe bit-identical data.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{write_catalog, write_corpus, Pos, RelationMeta, TaggedSentence};
use crate::embeddings::VectorStore;
use crate::error::{Error, Result};
use crate::kglabel::KGraph;

/// Entity super-classes cycled across relation groups.
const SUPER_POOL: [&str; 5] = ["person", "organization", "location", "event", "work"];
const TOKENS_PER_CLUSTER: usize = 12;
const LINKED_PER_CLUSTER: usize = 5;
const ENTITY_POOL: usize = 16;
const FILLER_POOL: usize = 8;
/// Weight of the shared global axis in every vector; keeps all pairwise
/// cosines positive without letting unrelated words pass the candidate
/// threshold.
const GLOBAL_WEIGHT: f64 = 0.5;
/// Weight of the group axis inside a content cluster, relative to the side
/// axis at 1.0. Small enough that same-side clusters are nearly parallel,
/// large enough that they stay separable in principle.
const GROUP_WEIGHT: f64 = 0.35;
const NOISE_SCALE: f64 = 0.05;

/// Generation parameters.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    /// Number of relations; must be at least 4 so a split always has both
    /// seen and unseen relations with matched peers.
    pub relations: usize,
    /// Instances generated per relation.
    pub instances: usize,
    pub seed: u64,
}

/// A generated world plus the raw edge rows for serialization.
#[derive(Debug, Clone)]
pub struct SynthWorld {
    pub corpus: Vec<TaggedSentence>,
    pub catalog: Vec<RelationMeta>,
    pub store: VectorStore,
    pub graph: KGraph,
    edges: Vec<(String, String)>,
    vector_rows: Vec<(String, Vec<f64>)>,
}

fn relation_name(i: usize) -> String {
    format!("rel{i:02}")
}

/// Each relation owns one content cluster.
fn cluster_token(relation: usize, p: usize) -> String {
    format!("t{relation:02}{p:02}")
}

/// Group index: pairs (0,1), (2,3), …; with an odd count the last group
/// absorbs the leftover relation so nobody is left without a peer.
fn group_of(i: usize, relations: usize) -> usize {
    (i / 2).min(relations / 2 - 1)
}

/// Position within the group: 0 or 1, plus 2 for the leftover member of an
/// odd count's last group. Same-side relations from different groups have
/// nearly parallel content clusters.
fn side_of(i: usize, relations: usize) -> usize {
    i - 2 * group_of(i, relations)
}

fn round6(v: f64) -> f64 {
    format!("{v:.6}").parse().expect("formatted float reparses")
}

/// Generates the world for `spec`. Deterministic in the seed.
pub fn generate(spec: &SynthSpec) -> Result<SynthWorld> {
    if spec.relations < 4 {
        return Err(Error::Config(format!(
            "synthetic benchmark needs at least 4 relations, got {}",
            spec.relations
        )));
    }
    if spec.instances == 0 {
        return Err(Error::Config("instances per relation must be ≥ 1".into()));
    }
    let r = spec.relations;
    let n_groups = r / 2;
    let n_sides = if r % 2 == 0 { 2 } else { 3 };
    // Axis layout: the side axes, then one axis per group, the five supers,
    // one shared entity axis, one filler axis, and one global axis mixed
    // into everything. Content words combine their side axis (strong) with
    // their group axis (weak); every other word owns a single primary axis.
    let dim = n_sides + n_groups + SUPER_POOL.len() + 3;
    let group_axis = |g: usize| n_sides + g;
    let super_axis = |s: usize| n_sides + n_groups + s;
    let entity_axis = n_sides + n_groups + SUPER_POOL.len();
    let filler_axis = entity_axis + 1;
    let global_axis = filler_axis + 1;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut vector_rows: Vec<(String, Vec<f64>)> = Vec::new();
    let mut push_word = |word: String, axes: &[(usize, f64)], rng: &mut ChaCha8Rng| {
        let mut v = vec![0.0; dim];
        for &(axis, weight) in axes {
            v[axis] += weight;
        }
        v[global_axis] += GLOBAL_WEIGHT;
        for x in v.iter_mut() {
            *x += NOISE_SCALE * rng.random_range(-1.0..=1.0);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let rounded: Vec<f64> = v.iter().map(|x| round6(x / norm)).collect();
        vector_rows.push((word, rounded));
    };
    let content_axes = |i: usize| {
        [
            (side_of(i, r), 1.0),
            (group_axis(group_of(i, r)), GROUP_WEIGHT),
        ]
    };

    // Vocabulary, in a fixed order so the noise stream is reproducible.
    for (s, name) in SUPER_POOL.iter().enumerate() {
        push_word(name.to_string(), &[(super_axis(s), 1.0)], &mut rng);
    }
    for i in 0..r {
        for p in 0..TOKENS_PER_CLUSTER {
            push_word(cluster_token(i, p), &content_axes(i), &mut rng);
        }
    }
    for n in 0..ENTITY_POOL {
        push_word(format!("ent{n:02}"), &[(entity_axis, 1.0)], &mut rng);
    }
    for n in 0..FILLER_POOL {
        push_word(format!("fill{n:02}"), &[(filler_axis, 1.0)], &mut rng);
    }
    for i in 0..r {
        push_word(relation_name(i), &content_axes(i), &mut rng);
    }
    let store = VectorStore::from_entries(vector_rows.clone())?;

    // Catalog and knowledge graph.
    let mut catalog = Vec::new();
    let mut edges: Vec<(String, String)> = Vec::new();
    for i in 0..r {
        let g = group_of(i, r);
        let name = relation_name(i);
        let head_super = SUPER_POOL[g % SUPER_POOL.len()];
        let tail_super = SUPER_POOL[(g + 2) % SUPER_POOL.len()];
        catalog.push(RelationMeta {
            name: name.clone(),
            super_class: format!("cat{g:02}"),
            description: ["relation", "between", head_super, "and", tail_super]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            head_super: head_super.to_string(),
            tail_super: tail_super.to_string(),
        });
        edges.push((name.clone(), format!("cat{g:02}")));
        edges.push((name.clone(), head_super.to_string()));
        edges.push((name.clone(), tail_super.to_string()));
        for p in 0..LINKED_PER_CLUSTER {
            edges.push((name.clone(), cluster_token(i, p)));
        }
    }
    let graph = KGraph::from_edges(edges.iter().map(|(a, b)| (a.as_str(), b.as_str())));

    // Sentences: [entity, filler, noun, verb, adjective, filler, entity]
    // with the three middle content slots drawn from the relation's
    // cluster. Entities and fillers are shared pools, so they carry no
    // relation signal.
    let mut corpus = Vec::new();
    for i in 0..r {
        let name = relation_name(i);
        for _ in 0..spec.instances {
            let ents = rand::seq::index::sample(&mut rng, ENTITY_POOL, 2);
            let fills = rand::seq::index::sample(&mut rng, FILLER_POOL, 2);
            let words = rand::seq::index::sample(&mut rng, TOKENS_PER_CLUSTER, 3);
            let tokens = vec![
                format!("ent{:02}", ents.index(0)),
                format!("fill{:02}", fills.index(0)),
                cluster_token(i, words.index(0)),
                cluster_token(i, words.index(1)),
                cluster_token(i, words.index(2)),
                format!("fill{:02}", fills.index(1)),
                format!("ent{:02}", ents.index(1)),
            ];
            corpus.push(TaggedSentence {
                tokens,
                pos: vec![
                    Pos::Noun,
                    Pos::Other,
                    Pos::Noun,
                    Pos::Verb,
                    Pos::Adj,
                    Pos::Other,
                    Pos::Noun,
                ],
                head: [0, 1],
                tail: [6, 7],
                relation: name.clone(),
            });
        }
    }

    Ok(SynthWorld {
        corpus,
        catalog,
        store,
        graph,
        edges,
        vector_rows,
    })
}

impl SynthWorld {
    /// Writes `corpus.jsonl`, `catalog.json`, `vectors.txt`, and
    /// `graph.csv` into `dir`. Output is byte-deterministic: the same spec
    /// always produces identical files.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_corpus(&dir.join("corpus.jsonl"), &self.corpus)?;
        write_catalog(&dir.join("catalog.json"), &self.catalog)?;

        let mut vectors = String::new();
        for (word, vec) in &self.vector_rows {
            vectors.push_str(word);
            for v in vec {
                write!(vectors, " {v:.6}").expect("string write");
            }
            vectors.push('\n');
        }
        let vec_path = dir.join("vectors.txt");
        fs::write(&vec_path, vectors).map_err(|e| Error::io(&vec_path, e))?;

        let mut rows = String::from("source,relation_type,target\n");
        for (a, b) in &self.edges {
            let _ = writeln!(rows, "{a},related_to,{b}");
        }
        let graph_path = dir.join("graph.csv");
        fs::write(&graph_path, rows).map_err(|e| Error::io(&graph_path, e))
    }
}
