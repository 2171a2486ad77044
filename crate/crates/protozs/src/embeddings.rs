//! Static word vectors: loading, cosine similarity, and the multiplicative
//! analogy scorer used to carry words from a seen relation to an unseen one.
//!
//! Vectors are L2-normalized once at load, so cosine between stored entries
//! reduces to a dot product. Multi-word names ("place_of_birth") resolve to
//! the re-normalized mean of their in-vocabulary token vectors.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};
use crate::par;

/// Denominator guard for [`three_cos_mul`]; keeps the ratio finite when the
/// candidate is nearly orthogonal to the source relation.
pub const DEFAULT_EPSILON: f64 = 0.001;

/// Immutable vocabulary of unit-norm word vectors.
///
/// Words are kept sorted so iteration order, and therefore every ranking
/// produced from a scan, is deterministic.
#[derive(Debug, Clone)]
pub struct VectorStore {
    dim: usize,
    words: Vec<String>,
    vecs: Vec<f64>,
    index: HashMap<String, usize>,
}

/// Row-level outcome counts from [`VectorStore::load`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VectorLoadReport {
    pub loaded: usize,
    pub skipped_malformed: usize,
    pub skipped_zero: usize,
    pub skipped_duplicate: usize,
}

impl VectorStore {
    /// Builds a store from (word, vector) pairs, normalizing each vector.
    /// Rejects duplicates, zero vectors, and mixed dimensionalities.
    pub fn from_entries(entries: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let mut sorted = entries;
        sorted.sort_by(|a, b| a.0.cmp(&b.0));
        let dim = match sorted.first() {
            Some((_, v)) => v.len(),
            None => return Err(Error::Data("vector store has no entries".into())),
        };
        let mut words = Vec::with_capacity(sorted.len());
        let mut vecs = Vec::with_capacity(sorted.len() * dim);
        let mut index = HashMap::with_capacity(sorted.len());
        for (word, mut vec) in sorted {
            if vec.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: vec.len(),
                });
            }
            if index.contains_key(&word) {
                return Err(Error::Data(format!("duplicate word {word:?}")));
            }
            let norm = l2_norm(&vec);
            if norm < 1e-12 {
                return Err(Error::Data(format!("zero vector for word {word:?}")));
            }
            for x in &mut vec {
                *x /= norm;
            }
            index.insert(word.clone(), words.len());
            words.push(word);
            vecs.extend_from_slice(&vec);
        }
        Ok(VectorStore {
            dim,
            words,
            vecs,
            index,
        })
    }

    /// Loads a word2vec-style text file: optional "count dim" header, then
    /// one "word v1 … vd" row per line. Malformed rows, zero vectors, and
    /// duplicate words are skipped and counted; a parseable row whose arity
    /// disagrees with the established dimension is a hard error.
    pub fn load(path: &Path, expected_dim: Option<usize>) -> Result<(Self, VectorLoadReport)> {
        if let Some(d) = expected_dim {
            if d == 0 {
                return Err(Error::Config("expected_dim must be positive".into()));
            }
        }
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let reader = BufReader::new(file);
        let mut report = VectorLoadReport::default();
        let mut dim = expected_dim;
        let mut entries: Vec<(String, Vec<f64>)> = Vec::new();
        let mut seen: BTreeSet<String> = BTreeSet::new();

        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if lineno == 0 && fields.len() == 2 && fields.iter().all(|f| f.parse::<f64>().is_ok())
            {
                // Header "count dim": the dim column seeds the expected
                // dimensionality unless the caller already fixed it.
                if dim.is_none() {
                    dim = fields[1].parse::<usize>().ok().filter(|d| *d > 0);
                }
                continue;
            }
            let word = fields[0].to_string();
            let values: Option<Vec<f64>> =
                fields[1..].iter().map(|f| f.parse::<f64>().ok()).collect();
            let Some(vec) = values else {
                report.skipped_malformed += 1;
                continue;
            };
            if vec.is_empty() {
                report.skipped_malformed += 1;
                continue;
            }
            match dim {
                None => dim = Some(vec.len()),
                Some(d) if d != vec.len() => {
                    return Err(Error::Data(format!(
                        "{}:{}: inconsistent dimensions: expected {d}, got {}",
                        path.display(),
                        lineno + 1,
                        vec.len()
                    )));
                }
                Some(_) => {}
            }
            if l2_norm(&vec) < 1e-12 {
                log::warn!("{}:{}: zero vector for {word:?}, skipped", path.display(), lineno + 1);
                report.skipped_zero += 1;
                continue;
            }
            if !seen.insert(word.clone()) {
                log::warn!("{}:{}: duplicate word {word:?}, skipped", path.display(), lineno + 1);
                report.skipped_duplicate += 1;
                continue;
            }
            entries.push((word, vec));
        }

        if entries.is_empty() {
            return Err(Error::Data(format!(
                "{}: no usable vector rows",
                path.display()
            )));
        }
        report.loaded = entries.len();
        if report.skipped_malformed > 0 {
            log::warn!(
                "{}: skipped {} malformed rows",
                path.display(),
                report.skipped_malformed
            );
        }
        let store = Self::from_entries(entries)?;
        Ok((store, report))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Vocabulary in sorted order.
    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Exact-key lookup; a miss is `None`, never a zero vector.
    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.index
            .get(word)
            .map(|&i| &self.vecs[i * self.dim..(i + 1) * self.dim])
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.vecs[i * self.dim..(i + 1) * self.dim]
    }

    /// Resolves a word or multi-word name to a unit vector: exact entry if
    /// present, otherwise the re-normalized mean of its in-vocabulary token
    /// vectors (tokens split on `_` and whitespace, lowercased).
    pub fn resolve(&self, name: &str) -> Result<Vec<f64>> {
        if let Some(v) = self.get(name) {
            return Ok(v.to_vec());
        }
        let tokens = name_tokens(name);
        let mut sum = vec![0.0; self.dim];
        let mut hits = 0usize;
        for tok in &tokens {
            if let Some(v) = self.get(tok) {
                for (s, x) in sum.iter_mut().zip(v) {
                    *s += x;
                }
                hits += 1;
            }
        }
        if hits == 0 {
            return Err(Error::MissingWord(name.to_string()));
        }
        let norm = l2_norm(&sum);
        if norm < 1e-12 {
            return Err(Error::Numerical(format!(
                "token vectors of {name:?} cancel to zero"
            )));
        }
        for x in &mut sum {
            *x /= norm;
        }
        Ok(sum)
    }
}

/// Splits a name on underscores and whitespace, lowercased.
pub fn name_tokens(name: &str) -> Vec<String> {
    name.split(|c: char| c == '_' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// Cosine similarity of two equal-length nonzero vectors.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            actual: v.len(),
        });
    }
    let nu = l2_norm(u);
    let nv = l2_norm(v);
    if nu < 1e-12 || nv < 1e-12 {
        return Err(Error::Numerical("cosine of zero-norm vector".into()));
    }
    Ok(dot(u, v) / (nu * nv))
}

/// Multiplicative analogy scorer: ranks every vocabulary word `x` by
/// `cos(x, r_u) · cos(x, w_s) / (cos(x, r_s) + epsilon)` and returns the top
/// `k` as (word, score), score descending, ties broken by word.
///
/// The query word, both relation names, their tokens, and any caller
/// exclusions are removed from the candidate pool.
pub fn three_cos_mul(
    store: &VectorStore,
    w_s: &str,
    r_s: &str,
    r_u: &str,
    k: usize,
    exclusions: &BTreeSet<String>,
    epsilon: f64,
) -> Result<Vec<(String, f64)>> {
    if k == 0 {
        return Err(Error::Config("k must be ≥ 1".into()));
    }
    if epsilon <= 0.0 {
        return Err(Error::Config("epsilon must be strictly positive".into()));
    }
    let ws_vec = store.resolve(w_s)?;
    let rs_vec = store.resolve(r_s)?;
    let ru_vec = store.resolve(r_u)?;

    let mut excluded: BTreeSet<String> = exclusions.clone();
    excluded.insert(w_s.to_string());
    for name in [r_s, r_u] {
        excluded.insert(name.to_string());
        excluded.insert(name.to_lowercase());
        for tok in name_tokens(name) {
            excluded.insert(tok);
        }
    }

    let scored: Vec<Option<(usize, f64)>> = par::map_indices(store.len(), |i| {
        let word = &store.words()[i];
        if excluded.contains(word) {
            return None;
        }
        let x = store.row(i);
        let score = dot(x, &ru_vec) * dot(x, &ws_vec) / (dot(x, &rs_vec) + epsilon);
        Some((i, score))
    });

    let mut ranked: Vec<(usize, f64)> = scored.into_iter().flatten().collect();
    if ranked.is_empty() {
        return Err(Error::Data(format!(
            "no analogy candidates remain for query {w_s:?} ({r_s:?} → {r_u:?})"
        )));
    }
    ranked.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| store.words()[a.0].cmp(&store.words()[b.0]))
    });
    ranked.truncate(k);
    Ok(ranked
        .into_iter()
        .map(|(i, s)| (store.words()[i].clone(), s))
        .collect())
}
