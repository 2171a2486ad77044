//! Virtual label construction: relation embeddings assembled from
//! knowledge-graph evidence.
//!
//! A relation's candidate words are the vocabulary entries whose cosine to
//! the relation-name embedding clears a threshold `tau` (the denoising
//! step); each candidate is then weighted by how strongly it connects, via
//! graph hops, to five node sets drawn from the relation's metadata: name
//! tokens, relation super-class, description content words, and the two
//! entity super-classes. The label vector is the weight-averaged candidate
//! embedding, unit-normalized.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{is_closed_class, RelationMeta};
use crate::embeddings::{name_tokens, VectorStore};
use crate::error::{Error, Result};
use crate::par;

/// Undirected adjacency over normalized graph terms.
#[derive(Debug, Clone, Default)]
pub struct KGraph {
    adjacency: BTreeMap<String, BTreeSet<String>>,
    edge_count: usize,
}

/// Lowercases a term and joins internal whitespace runs with underscores.
pub fn normalize_term(term: &str) -> String {
    term.trim()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join("_")
        .to_lowercase()
}

impl KGraph {
    /// Builds a graph from (source, target) pairs. Terms are normalized,
    /// edges are undirected and deduplicated, self-loops are dropped.
    pub fn from_edges<I, S>(edges: I) -> Self
    where
        I: IntoIterator<Item = (S, S)>,
        S: AsRef<str>,
    {
        let mut graph = KGraph::default();
        for (a, b) in edges {
            graph.insert_edge(a.as_ref(), b.as_ref());
        }
        graph
    }

    fn insert_edge(&mut self, a: &str, b: &str) {
        let a = normalize_term(a);
        let b = normalize_term(b);
        if a.is_empty() || b.is_empty() || a == b {
            return;
        }
        let fresh = self.adjacency.entry(a.clone()).or_default().insert(b.clone());
        self.adjacency.entry(b).or_default().insert(a);
        if fresh {
            self.edge_count += 1;
        }
    }

    /// Loads a CSV edge dump with rows "source,relation_type,target". The
    /// relation type column is ignored; malformed rows are skipped and
    /// counted. A literal header row is tolerated.
    pub fn load(path: &Path) -> Result<(Self, usize)> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let reader = BufReader::new(file);
        let mut graph = KGraph::default();
        let mut skipped = 0usize;
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if lineno == 0
                && fields.len() == 3
                && fields[0].trim().eq_ignore_ascii_case("source")
                && fields[2].trim().eq_ignore_ascii_case("target")
            {
                continue;
            }
            if fields.len() != 3 || fields[0].trim().is_empty() || fields[2].trim().is_empty() {
                skipped += 1;
                continue;
            }
            graph.insert_edge(fields[0], fields[2]);
        }
        if skipped > 0 {
            log::warn!("{}: skipped {skipped} malformed edge rows", path.display());
        }
        Ok((graph, skipped))
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn contains(&self, term: &str) -> bool {
        self.adjacency.contains_key(term)
    }

    pub fn neighbors(&self, term: &str) -> Option<&BTreeSet<String>> {
        self.adjacency.get(term)
    }

    /// Terms reachable from `term` within `max_hops`, mapped to their hop
    /// distance (1-based; `term` itself is excluded).
    fn reach(&self, term: &str, max_hops: usize) -> BTreeMap<String, usize> {
        let mut dist: BTreeMap<String, usize> = BTreeMap::new();
        if !self.contains(term) {
            return dist;
        }
        let mut frontier: Vec<String> = vec![term.to_string()];
        for hop in 1..=max_hops {
            let mut next = Vec::new();
            for node in &frontier {
                if let Some(nbrs) = self.neighbors(node) {
                    for nbr in nbrs {
                        if nbr != term && !dist.contains_key(nbr) {
                            dist.insert(nbr.clone(), hop);
                            next.push(nbr.clone());
                        }
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }
        dist
    }
}

/// The five node sets a relation contributes to graph scoring, plus their
/// union, all as normalized graph terms.
#[derive(Debug, Clone)]
pub struct RelationSets {
    pub name_tokens: BTreeSet<String>,
    pub super_class: BTreeSet<String>,
    pub description: BTreeSet<String>,
    pub head_super: BTreeSet<String>,
    pub tail_super: BTreeSet<String>,
    union: BTreeSet<String>,
}

impl RelationSets {
    pub fn from_meta(meta: &RelationMeta) -> Self {
        let name_set: BTreeSet<String> = name_tokens(&meta.name)
            .into_iter()
            .map(|t| normalize_term(&t))
            .collect();
        let super_class: BTreeSet<String> = [normalize_term(&meta.super_class)]
            .into_iter()
            .filter(|t| !t.is_empty())
            .collect();
        // Description phrases are split into unigrams; function words carry
        // no graph signal and are dropped.
        let description: BTreeSet<String> = meta
            .description
            .iter()
            .flat_map(|phrase| name_tokens(phrase))
            .filter(|t| !t.is_empty() && !is_closed_class(t))
            .map(|t| normalize_term(&t))
            .collect();
        let head_super: BTreeSet<String> = [normalize_term(&meta.head_super)]
            .into_iter()
            .filter(|t| !t.is_empty())
            .collect();
        let tail_super: BTreeSet<String> = [normalize_term(&meta.tail_super)]
            .into_iter()
            .filter(|t| !t.is_empty())
            .collect();
        let mut union = BTreeSet::new();
        for set in [&name_set, &super_class, &description, &head_super, &tail_super] {
            union.extend(set.iter().cloned());
        }
        RelationSets {
            name_tokens: name_set,
            super_class,
            description,
            head_super,
            tail_super,
            union,
        }
    }

    pub fn union(&self) -> &BTreeSet<String> {
        &self.union
    }
}

/// Graph-connectivity features of one word against a relation's node sets.
#[derive(Debug, Clone, PartialEq)]
pub struct HopFeatures {
    /// 1.0 iff the word is a graph node that itself belongs to the sets.
    pub node_flag: f64,
    /// Per hop depth k: 1.0 iff any set member lies within k hops.
    pub neighbor_flags: Vec<f64>,
    /// Per hop depth k: number of set members within k hops.
    pub neighbor_counts: Vec<f64>,
    /// Per hop depth k: fraction of the ≤k-hop neighborhood inside the sets.
    pub neighbor_means: Vec<f64>,
}

impl HopFeatures {
    fn zeros(k_hops: usize) -> Self {
        HopFeatures {
            node_flag: 0.0,
            neighbor_flags: vec![0.0; k_hops],
            neighbor_counts: vec![0.0; k_hops],
            neighbor_means: vec![0.0; k_hops],
        }
    }
}

/// Computes hop features for `word` against the union of the relation's
/// node sets, over neighborhoods of depth 1..=k_hops. Counts are cumulative
/// in depth, so adding edges never lowers them. A word absent from the
/// graph gets all-zero features.
pub fn hop_features(
    word: &str,
    sets: &RelationSets,
    graph: &KGraph,
    k_hops: usize,
) -> HopFeatures {
    debug_assert!(k_hops >= 1);
    let term = normalize_term(word);
    if !graph.contains(&term) {
        return HopFeatures::zeros(k_hops);
    }
    let union = sets.union();
    let mut features = HopFeatures::zeros(k_hops);
    features.node_flag = if union.contains(&term) { 1.0 } else { 0.0 };

    let reach = graph.reach(&term, k_hops);
    for k in 1..=k_hops {
        let mut size = 0usize;
        let mut hits = 0usize;
        for (node, &d) in &reach {
            if d <= k {
                size += 1;
                if union.contains(node) {
                    hits += 1;
                }
            }
        }
        features.neighbor_counts[k - 1] = hits as f64;
        features.neighbor_flags[k - 1] = if hits > 0 { 1.0 } else { 0.0 };
        features.neighbor_means[k - 1] = if size > 0 { hits as f64 / size as f64 } else { 0.0 };
    }
    features
}

/// Weight of one word: the mean of its flattened feature vector
/// `[node_flag, flags…, counts/count_max…, means…]`. Counts are divided by
/// the per-hop maximum over the candidate pool (`count_max`), since raw
/// neighbor counts are unbounded.
pub fn word_weight(features: &HopFeatures, count_max: &[f64]) -> f64 {
    let k = features.neighbor_flags.len();
    debug_assert_eq!(count_max.len(), k);
    let mut sum = features.node_flag;
    for v in &features.neighbor_flags {
        sum += v;
    }
    for (c, &m) in features.neighbor_counts.iter().zip(count_max) {
        if m > 0.0 {
            sum += c / m;
        }
    }
    for v in &features.neighbor_means {
        sum += v;
    }
    sum / (1 + 3 * k) as f64
}

/// Weights for a whole candidate pool: per-hop count maxima are taken over
/// the pool, then each word is scored with [`word_weight`].
pub fn word_weights(pool: &[HopFeatures]) -> Vec<f64> {
    let k = pool.first().map(|f| f.neighbor_flags.len()).unwrap_or(0);
    let mut count_max = vec![0.0f64; k];
    for f in pool {
        for (m, &c) in count_max.iter_mut().zip(&f.neighbor_counts) {
            if c > *m {
                *m = c;
            }
        }
    }
    pool.iter().map(|f| word_weight(f, &count_max)).collect()
}

/// Vocabulary words whose cosine to the relation-name embedding is at least
/// `tau`; the relation's own in-vocabulary name forms are always included.
/// Returned sorted and deduplicated.
pub fn candidate_words(
    meta: &RelationMeta,
    store: &VectorStore,
    tau: f64,
) -> Result<Vec<String>> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Config(format!("tau must be in [0, 1], got {tau}")));
    }
    let rc = store.resolve(&meta.name)?;
    let hits: Vec<Option<&String>> = par::map_indices(store.len(), |i| {
        let word = &store.words()[i];
        let v = store.get(word).expect("indexed word");
        let cos: f64 = v.iter().zip(&rc).map(|(a, b)| a * b).sum();
        (cos >= tau).then_some(word)
    });
    let mut set: BTreeSet<String> = hits.into_iter().flatten().cloned().collect();
    if store.contains(&meta.name) {
        set.insert(meta.name.clone());
    }
    for tok in name_tokens(&meta.name) {
        if store.contains(&tok) {
            set.insert(tok);
        }
    }
    Ok(set.into_iter().collect())
}

/// A relation's label embedding with the ranked words that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualLabel {
    pub relation: String,
    /// Unit-normalized weighted average of the component embeddings.
    pub vector: Vec<f64>,
    /// (word, weight) pairs, weight descending, ties by word.
    pub components: Vec<(String, f64)>,
}

/// Builds the virtual label for one relation: threshold the vocabulary at
/// `tau`, score candidates by graph hop features, keep the `top_n` by
/// weight, and average their embeddings weighted by those scores.
///
/// If every candidate scores zero (no graph support at all), the label
/// falls back to the relation-name embedding with a warning.
pub fn virtual_label(
    meta: &RelationMeta,
    store: &VectorStore,
    graph: &KGraph,
    tau: f64,
    k_hops: usize,
    top_n: usize,
) -> Result<VirtualLabel> {
    if k_hops == 0 {
        return Err(Error::Config("k_hops must be ≥ 1".into()));
    }
    if top_n == 0 {
        return Err(Error::Config("top_n must be ≥ 1".into()));
    }
    let candidates = candidate_words(meta, store, tau)?;
    if candidates.is_empty() {
        return Err(Error::Data(format!(
            "relation {:?} has no label candidates at tau {tau}",
            meta.name
        )));
    }
    let sets = RelationSets::from_meta(meta);
    let features: Vec<HopFeatures> =
        par::map_ordered(&candidates, |w| hop_features(w, &sets, graph, k_hops));
    let weights = word_weights(&features);

    if weights.iter().all(|&w| w == 0.0) {
        log::warn!(
            "relation {:?}: no candidate has graph support, falling back to the name embedding",
            meta.name
        );
        return Ok(VirtualLabel {
            relation: meta.name.clone(),
            vector: store.resolve(&meta.name)?,
            components: vec![(meta.name.clone(), 1.0)],
        });
    }

    let mut ranked: Vec<(usize, f64)> = weights.iter().copied().enumerate().collect();
    ranked.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| candidates[a.0].cmp(&candidates[b.0]))
    });
    ranked.truncate(top_n);
    ranked.retain(|(_, w)| *w > 0.0);

    let dim = store.dim();
    let mut sum = vec![0.0; dim];
    let mut total = 0.0;
    let mut components = Vec::with_capacity(ranked.len());
    for (i, weight) in ranked {
        let word = &candidates[i];
        let emb = store.get(word).expect("candidates are vocabulary words");
        for (s, x) in sum.iter_mut().zip(emb) {
            *s += weight * x;
        }
        total += weight;
        components.push((word.clone(), weight));
    }
    let mut vector: Vec<f64> = sum.iter().map(|s| s / total).collect();
    let norm = vector.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < 1e-12 {
        return Err(Error::Numerical(format!(
            "virtual label of {:?} cancels to zero",
            meta.name
        )));
    }
    for x in &mut vector {
        *x /= norm;
    }
    Ok(VirtualLabel {
        relation: meta.name.clone(),
        vector,
        components,
    })
}

/// Writes virtual labels as JSON: relation name → {vector, components}.
pub fn write_labels(path: &Path, labels: &[VirtualLabel]) -> Result<()> {
    #[derive(Serialize)]
    struct Entry<'a> {
        vector: &'a [f64],
        components: &'a [(String, f64)],
    }
    let map: BTreeMap<&str, Entry> = labels
        .iter()
        .map(|l| {
            (
                l.relation.as_str(),
                Entry {
                    vector: &l.vector,
                    components: &l.components,
                },
            )
        })
        .collect();
    let text = serde_json::to_string_pretty(&map)
        .map_err(|e| Error::Data(format!("serializing labels: {e}")))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Reads virtual labels written by [`write_labels`].
pub fn read_labels(path: &Path) -> Result<Vec<VirtualLabel>> {
    #[derive(Deserialize)]
    struct Entry {
        vector: Vec<f64>,
        components: Vec<(String, f64)>,
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let map: BTreeMap<String, Entry> = serde_json::from_str(&text)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    Ok(map
        .into_iter()
        .map(|(relation, e)| VirtualLabel {
            relation,
            vector: e.vector,
            components: e.components,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn meta(name: &str) -> RelationMeta {
        RelationMeta {
            name: name.into(),
            super_class: "location".into(),
            description: vec!["place".into(), "of".into(), "birth".into()],
            head_super: "person".into(),
            tail_super: "location".into(),
        }
    }

    #[test]
    fn graph_from_rows_builds_symmetric_adjacency() {
        let g = KGraph::from_edges([("a", "b"), ("b", "c")]);
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edge_count(), 2);
        let n = |t: &str| -> Vec<&str> {
            g.neighbors(t).unwrap().iter().map(|s| s.as_str()).collect()
        };
        assert_eq!(n("a"), vec!["b"]);
        assert_eq!(n("b"), vec!["a", "c"]);
        assert_eq!(n("c"), vec!["b"]);
    }

    #[test]
    fn graph_dedups_edges_and_drops_self_loops() {
        let g = KGraph::from_edges([("a", "b"), ("a", "b"), ("b", "a"), ("a", "a")]);
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.node_count(), 2);
        assert!(!g.contains("a") || !g.neighbors("a").unwrap().contains("a"));
    }

    #[test]
    fn graph_load_normalizes_and_counts_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("edges.csv");
        std::fs::write(
            &path,
            "source,relation_type,target\nNew York,RelatedTo,city\nbroken row\ncity,IsA,place\n",
        )
        .unwrap();
        let (g, skipped) = KGraph::load(&path).unwrap();
        assert_eq!(skipped, 1);
        assert!(g.contains("new_york"));
        assert!(g.neighbors("city").unwrap().contains("new_york"));
        assert!(g.neighbors("city").unwrap().contains("place"));
    }

    fn axis_store() -> VectorStore {
        VectorStore::from_entries(vec![
            ("birth".into(), vec![1.0, 0.0, 0.0]),
            ("near".into(), vec![0.9, 0.435889894354067, 0.0]),
            ("mid".into(), vec![0.5, 0.8660254037844386, 0.0]),
            ("far".into(), vec![0.1, 0.99498743710662, 0.0]),
        ])
        .unwrap()
    }

    #[test]
    fn candidates_threshold_floor_keeps_everything() {
        let store = axis_store();
        let m = RelationMeta {
            name: "birth".into(),
            ..meta("birth")
        };
        let c = candidate_words(&m, &store, 0.0).unwrap();
        assert_eq!(c, vec!["birth", "far", "mid", "near"]);
    }

    #[test]
    fn candidates_threshold_ceiling_keeps_only_name() {
        let store = axis_store();
        let m = meta("birth");
        let c = candidate_words(&m, &store, 1.0).unwrap();
        assert_eq!(c, vec!["birth"]);
    }

    #[test]
    fn candidates_cut_at_hand_computed_cosines() {
        // Cosines to "birth" are 0.9, 0.5, 0.1 by construction.
        let store = axis_store();
        let m = meta("birth");
        let c = candidate_words(&m, &store, 0.6).unwrap();
        assert_eq!(c, vec!["birth", "near"]);
    }

    #[test]
    fn hop_features_zero_for_words_outside_graph() {
        let g = KGraph::from_edges([("a", "b")]);
        let sets = RelationSets::from_meta(&meta("birth"));
        let f = hop_features("ghost", &sets, &g, 2);
        assert_eq!(f, HopFeatures::zeros(2));
    }

    #[test]
    fn hop_features_on_hand_enumerated_three_node_graph() {
        // Path graph birth - person - place; sets contain person and place.
        let g = KGraph::from_edges([("birth", "person"), ("person", "place")]);
        let sets = RelationSets::from_meta(&meta("birth"));
        let f = hop_features("birth", &sets, &g, 1);
        assert_eq!(f.node_flag, 1.0); // "birth" is a name token and a node
        assert_eq!(f.neighbor_flags, vec![1.0]);
        assert_eq!(f.neighbor_counts, vec![1.0]);
        assert_eq!(f.neighbor_means, vec![1.0]);

        let f2 = hop_features("birth", &sets, &g, 2);
        assert_eq!(f2.neighbor_counts, vec![1.0, 2.0]); // place joins at hop 2
        assert_eq!(f2.neighbor_means, vec![1.0, 1.0]);
    }

    #[test]
    fn hop_features_star_center() {
        let g = KGraph::from_edges([
            ("hub", "person"),
            ("hub", "place"),
            ("hub", "location"),
            ("hub", "birth"),
        ]);
        let sets = RelationSets::from_meta(&meta("birth"));
        let f = hop_features("hub", &sets, &g, 1);
        assert_eq!(f.node_flag, 0.0);
        assert_eq!(f.neighbor_counts, vec![4.0]);
        assert_eq!(f.neighbor_means, vec![1.0]);
    }

    #[test]
    fn weight_of_all_zero_features_is_zero() {
        assert_eq!(word_weight(&HopFeatures::zeros(3), &[0.0, 0.0, 0.0]), 0.0);
    }

    #[test]
    fn weight_of_maximal_features_is_one() {
        let f = HopFeatures {
            node_flag: 1.0,
            neighbor_flags: vec![1.0],
            neighbor_counts: vec![4.0],
            neighbor_means: vec![1.0],
        };
        assert_eq!(word_weight(&f, &[4.0]), 1.0);
    }

    #[test]
    fn weight_averages_flat_feature_vector() {
        // (1 + 1 + 0.5 + 0.5) / 4 = 0.75
        let f = HopFeatures {
            node_flag: 1.0,
            neighbor_flags: vec![1.0],
            neighbor_counts: vec![2.0],
            neighbor_means: vec![0.5],
        };
        assert_relative_eq!(word_weight(&f, &[4.0]), 0.75);
    }

    #[test]
    fn label_degenerates_to_name_embedding_for_single_candidate() {
        let store = VectorStore::from_entries(vec![
            ("birth".into(), vec![1.0, 0.0]),
            ("other".into(), vec![-1.0, 0.0]),
        ])
        .unwrap();
        let g = KGraph::from_edges([("birth", "person")]);
        let m = meta("birth");
        let label = virtual_label(&m, &store, &g, 0.9, 1, 1).unwrap();
        let cos: f64 = label
            .vector
            .iter()
            .zip(store.get("birth").unwrap())
            .map(|(a, b)| a * b)
            .sum();
        assert_relative_eq!(cos, 1.0, max_relative = 1e-9);
        assert_eq!(label.components.len(), 1);
    }

    #[test]
    fn label_of_two_equal_weight_orthogonal_words() {
        let store = VectorStore::from_entries(vec![
            ("birth".into(), vec![1.0, 0.0]),
            ("place".into(), vec![0.0, 1.0]),
        ])
        .unwrap();
        // Both words are nodes with one in-set neighbor each, symmetric.
        let g = KGraph::from_edges([("birth", "person"), ("place", "person")]);
        let m = RelationMeta {
            name: "birth".into(),
            super_class: "location".into(),
            description: vec!["place".into()],
            head_super: "person".into(),
            tail_super: "location".into(),
        };
        let label = virtual_label(&m, &store, &g, 0.0, 1, 5).unwrap();
        assert_eq!(label.components.len(), 2);
        assert_relative_eq!(label.components[0].1, label.components[1].1);
        // Normalized mean of two orthogonal units: cosine 1/sqrt(2) to each.
        for w in ["birth", "place"] {
            let cos: f64 = label
                .vector
                .iter()
                .zip(store.get(w).unwrap())
                .map(|(a, b)| a * b)
                .sum();
            assert!((cos - 0.7071).abs() < 1e-4, "{w}: {cos}");
        }
    }

    #[test]
    fn label_reproduces_weighted_average_identity() {
        let store = VectorStore::from_entries(vec![
            ("birth".into(), vec![1.0, 0.0, 0.1]),
            ("born".into(), vec![0.9, 0.1, 0.1]),
            ("cradle".into(), vec![0.8, 0.2, 0.1]),
            ("noise".into(), vec![0.0, 1.0, 0.0]),
        ])
        .unwrap();
        let g = KGraph::from_edges([
            ("birth", "person"),
            ("born", "person"),
            ("born", "location"),
            ("cradle", "birth"),
        ]);
        let m = meta("birth");
        let label = virtual_label(&m, &store, &g, 0.5, 1, 3).unwrap();
        assert!(!label.components.is_empty());
        let dim = store.dim();
        let mut sum = vec![0.0; dim];
        let mut total = 0.0;
        for (word, w) in &label.components {
            for (s, x) in sum.iter_mut().zip(store.get(word).unwrap()) {
                *s += w * x;
            }
            total += w;
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / total).collect();
        let norm: f64 = mean.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (got, want) in label.vector.iter().zip(mean.iter().map(|x| x / norm)) {
            assert!((got - want).abs() < 1e-6);
        }
    }

    #[test]
    fn thresholding_removes_noise_words_from_label() {
        // "noise" words sit far from the relation axis; at tau 0.6 they can
        // never enter the candidate pool even though the graph links them.
        let store = VectorStore::from_entries(vec![
            ("religion".into(), vec![1.0, 0.0]),
            ("faith".into(), vec![0.95, 0.312249899919920]),
            ("the".into(), vec![0.1, 0.99498743710662]),
            ("of".into(), vec![0.0, 1.0]),
        ])
        .unwrap();
        let g = KGraph::from_edges([
            ("religion", "person"),
            ("faith", "religion"),
            ("the", "religion"),
            ("of", "religion"),
        ]);
        let m = RelationMeta {
            name: "religion".into(),
            super_class: "ideology".into(),
            description: vec!["faith".into()],
            head_super: "person".into(),
            tail_super: "ideology".into(),
        };
        let label = virtual_label(&m, &store, &g, 0.6, 1, 10).unwrap();
        let words: Vec<&str> = label.components.iter().map(|(w, _)| w.as_str()).collect();
        assert!(words.contains(&"religion"));
        assert!(words.contains(&"faith"));
        assert!(!words.contains(&"the"));
        assert!(!words.contains(&"of"));
    }

    #[test]
    fn label_falls_back_to_name_when_graph_is_silent() {
        let store = VectorStore::from_entries(vec![
            ("birth".into(), vec![1.0, 0.0]),
            ("born".into(), vec![0.9, 0.43588989435406705]),
        ])
        .unwrap();
        let g = KGraph::from_edges([("unrelated", "terms")]);
        let m = meta("birth");
        let label = virtual_label(&m, &store, &g, 0.5, 1, 5).unwrap();
        assert_eq!(label.components, vec![("birth".to_string(), 1.0)]);
        let cos: f64 = label
            .vector
            .iter()
            .zip(store.get("birth").unwrap())
            .map(|(a, b)| a * b)
            .sum();
        assert_relative_eq!(cos, 1.0, max_relative = 1e-9);
    }

    #[test]
    fn label_invariant_to_edge_insertion_order() {
        let store = VectorStore::from_entries(vec![
            ("birth".into(), vec![1.0, 0.0, 0.1]),
            ("born".into(), vec![0.9, 0.1, 0.1]),
            ("cradle".into(), vec![0.8, 0.2, 0.1]),
        ])
        .unwrap();
        let edges = [
            ("birth", "person"),
            ("born", "person"),
            ("cradle", "location"),
            ("born", "place"),
        ];
        let g1 = KGraph::from_edges(edges);
        let mut rev = edges;
        rev.reverse();
        let g2 = KGraph::from_edges(rev);
        let m = meta("birth");
        let l1 = virtual_label(&m, &store, &g1, 0.0, 1, 3).unwrap();
        let l2 = virtual_label(&m, &store, &g2, 0.0, 1, 3).unwrap();
        assert_eq!(l1, l2);
    }

    #[test]
    fn labels_roundtrip_through_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.json");
        let labels = vec![VirtualLabel {
            relation: "birth".into(),
            vector: vec![0.6, 0.8],
            components: vec![("born".into(), 0.75), ("cradle".into(), 0.25)],
        }];
        write_labels(&path, &labels).unwrap();
        let back = read_labels(&path).unwrap();
        assert_eq!(labels, back);
    }

    proptest! {
        #[test]
        fn raising_tau_never_enlarges_candidates(
            seed in 0u64..200,
            t1 in 0.0f64..1.0,
            t2 in 0.0f64..1.0,
        ) {
            use rand::{Rng, SeedableRng};
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let count = rng.random_range(4..25);
            let dim = rng.random_range(2..6);
            let entries: Vec<(String, Vec<f64>)> = (0..count)
                .map(|i| {
                    let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0f64)).collect();
                    let v = if v.iter().map(|x| x * x).sum::<f64>() < 1e-6 {
                        vec![1.0; dim]
                    } else {
                        v
                    };
                    (format!("w{i:02}"), v)
                })
                .collect();
            let name = entries[0].0.clone();
            let store = VectorStore::from_entries(entries).unwrap();
            let m = RelationMeta {
                name,
                super_class: "s".into(),
                description: vec![],
                head_super: "h".into(),
                tail_super: "t".into(),
            };
            let wide: BTreeSet<String> = candidate_words(&m, &store, lo).unwrap().into_iter().collect();
            let narrow: BTreeSet<String> = candidate_words(&m, &store, hi).unwrap().into_iter().collect();
            prop_assert!(narrow.is_subset(&wide));
        }

        #[test]
        fn adding_an_edge_never_lowers_counts(seed in 0u64..200) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let nodes: Vec<String> = (0..8).map(|i| format!("n{i}")).collect();
            let mut edges: Vec<(String, String)> = Vec::new();
            for _ in 0..rng.random_range(3..10) {
                let a = nodes[rng.random_range(0..nodes.len())].clone();
                let b = nodes[rng.random_range(0..nodes.len())].clone();
                edges.push((a, b));
            }
            let g1 = KGraph::from_edges(edges.iter().map(|(a, b)| (a.as_str(), b.as_str())));
            let extra = (
                nodes[rng.random_range(0..nodes.len())].clone(),
                nodes[rng.random_range(0..nodes.len())].clone(),
            );
            let mut more = edges.clone();
            more.push(extra);
            let g2 = KGraph::from_edges(more.iter().map(|(a, b)| (a.as_str(), b.as_str())));

            let m = RelationMeta {
                name: "n0_n1".into(),
                super_class: "n2".into(),
                description: vec!["n3".into(), "n4".into()],
                head_super: "n5".into(),
                tail_super: "n6".into(),
            };
            let sets = RelationSets::from_meta(&m);
            for k in 1..=3usize {
                for w in &nodes {
                    let f1 = hop_features(w, &sets, &g1, k);
                    let f2 = hop_features(w, &sets, &g2, k);
                    for (a, b) in f1.neighbor_counts.iter().zip(&f2.neighbor_counts) {
                        prop_assert!(b >= a, "edge addition lowered a count for {w} at k={k}");
                    }
                }
            }
        }
    }
}
