//! Trainable sentence encoder: token embeddings through a single
//! convolution, ReLU, and max-over-positions pooling, concatenated with a
//! prompt embedding to form the instance representation.
//!
//! The window is centered and odd; boundaries are zero-padded by
//! `(window − 1) / 2` on each side. There are no position embeddings.
//! Gradients are analytic: the loss callback returns the derivative of the
//! loss with respect to each instance vector, and backpropagation routes
//! the pooled block through the achieving max position (ties to the lowest
//! index) and the ReLU gate into filter and bias gradients.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::TaggedSentence;
use crate::embeddings::VectorStore;
use crate::error::{Error, Result};
use crate::numerics::Fsum;
use crate::par;

/// Literal padding token; trailing runs of it are ignored by the encoder.
pub const PAD_TOKEN: &str = "<pad>";

/// Convolution parameters. `filters` is row-major: channel, then window
/// offset, then embedding dimension, so row `c` spans
/// `filters[c * window * embed_dim ..][.. window * embed_dim]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub window: usize,
    pub filters: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ModelParams {
    /// Uniform initialization in `[-a, a]` with
    /// `a = sqrt(6 / (fan_in + fan_out))`, `fan_in = window * embed_dim`,
    /// `fan_out = hidden_dim`. Draw order is fixed: filters row-major,
    /// then bias, so a seed pins every parameter.
    pub fn init(hidden_dim: usize, embed_dim: usize, window: usize, seed: u64) -> Result<Self> {
        validate_shape(hidden_dim, embed_dim, window)?;
        let fan_in = (window * embed_dim) as f64;
        let fan_out = hidden_dim as f64;
        let a = (6.0 / (fan_in + fan_out)).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let filters = (0..hidden_dim * window * embed_dim)
            .map(|_| rng.random_range(-a..=a))
            .collect();
        let bias = (0..hidden_dim).map(|_| rng.random_range(-a..=a)).collect();
        Ok(ModelParams {
            hidden_dim,
            embed_dim,
            window,
            filters,
            bias,
        })
    }

    pub fn validate(&self) -> Result<()> {
        validate_shape(self.hidden_dim, self.embed_dim, self.window)?;
        if self.filters.len() != self.hidden_dim * self.window * self.embed_dim {
            return Err(Error::DimensionMismatch {
                expected: self.hidden_dim * self.window * self.embed_dim,
                actual: self.filters.len(),
            });
        }
        if self.bias.len() != self.hidden_dim {
            return Err(Error::DimensionMismatch {
                expected: self.hidden_dim,
                actual: self.bias.len(),
            });
        }
        if !self.filters.iter().chain(&self.bias).all(|v| v.is_finite()) {
            return Err(Error::Numerical("non-finite model parameter".into()));
        }
        Ok(())
    }

    fn filter_row(&self, channel: usize) -> &[f64] {
        let w = self.window * self.embed_dim;
        &self.filters[channel * w..(channel + 1) * w]
    }

    /// One SGD step: `p -= learning_rate * g`.
    pub fn step(&mut self, grads: &ParamGrads, learning_rate: f64) {
        for (p, g) in self.filters.iter_mut().zip(&grads.filters) {
            *p -= learning_rate * g;
        }
        for (p, g) in self.bias.iter_mut().zip(&grads.bias) {
            *p -= learning_rate * g;
        }
    }

    /// Width of the instance vectors this model produces.
    pub fn instance_width(&self) -> usize {
        self.hidden_dim + 3 * self.embed_dim
    }
}

fn validate_shape(hidden_dim: usize, embed_dim: usize, window: usize) -> Result<()> {
    if hidden_dim == 0 || embed_dim == 0 {
        return Err(Error::Config("hidden_dim and embed_dim must be ≥ 1".into()));
    }
    if window == 0 || window % 2 == 0 {
        return Err(Error::Config(format!(
            "window must be odd and positive, got {window}"
        )));
    }
    Ok(())
}

/// Gradients with the same shapes as [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub filters: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ParamGrads {
    pub fn zeros(params: &ModelParams) -> Self {
        ParamGrads {
            filters: vec![0.0; params.filters.len()],
            bias: vec![0.0; params.bias.len()],
        }
    }
}

/// Sentence representation concatenated with its prompt:
/// `[h_i | prompt]`, width `hidden_dim + 3 * embed_dim`. The `h_i` block
/// is elementwise non-negative (post-ReLU, post-max-pool).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceEmbedding {
    pub vector: Vec<f64>,
}

impl InstanceEmbedding {
    pub fn width(&self) -> usize {
        self.vector.len()
    }
}

/// Reduces a token to a lookup form: lowercase plus suffix stripping for
/// plain plurals, -ing, and -ed, with an exceptions list for irregular or
/// deceptive forms.
pub fn lemmatize(token: &str) -> String {
    let w = token.to_lowercase();
    for (from, to) in LEMMA_EXCEPTIONS {
        if w == *from {
            return (*to).to_string();
        }
    }
    let b = w.as_bytes();
    let n = b.len();
    if n > 3 && w.ends_with("ies") {
        return format!("{}y", &w[..n - 3]);
    }
    if n > 4 && (w.ends_with("sses") || w.ends_with("xes") || w.ends_with("zes")) {
        return w[..n - 2].to_string();
    }
    if n > 4 && (w.ends_with("ches") || w.ends_with("shes")) {
        return w[..n - 2].to_string();
    }
    if n > 3
        && w.ends_with('s')
        && !w.ends_with("ss")
        && !w.ends_with("us")
        && !w.ends_with("is")
    {
        return w[..n - 1].to_string();
    }
    if n > 5 && w.ends_with("ing") {
        return undouble(&w[..n - 3]);
    }
    if n > 4 && w.ends_with("ed") {
        return undouble(&w[..n - 2]);
    }
    w
}

/// After stripping a suffix, collapse a doubled final consonant
/// ("stopp" → "stop").
fn undouble(stem: &str) -> String {
    let b = stem.as_bytes();
    let n = b.len();
    if n >= 3 && b[n - 1] == b[n - 2] && !b"aeiou".contains(&b[n - 1]) {
        return stem[..n - 1].to_string();
    }
    stem.to_string()
}

/// Irregular forms and words the suffix rules would mangle.
const LEMMA_EXCEPTIONS: &[(&str, &str)] = &[
    ("as", "as"),
    ("being", "be"),
    ("children", "child"),
    ("coming", "come"),
    ("during", "during"),
    ("feet", "foot"),
    ("giving", "give"),
    ("has", "have"),
    ("having", "have"),
    ("his", "his"),
    ("is", "be"),
    ("its", "its"),
    ("king", "king"),
    ("living", "live"),
    ("making", "make"),
    ("men", "man"),
    ("news", "news"),
    ("nothing", "nothing"),
    ("ring", "ring"),
    ("series", "series"),
    ("sing", "sing"),
    ("something", "something"),
    ("species", "species"),
    ("spring", "spring"),
    ("string", "string"),
    ("taking", "take"),
    ("thing", "thing"),
    ("this", "this"),
    ("thus", "thus"),
    ("using", "use"),
    ("was", "be"),
    ("were", "be"),
    ("women", "woman"),
    ("writing", "write"),
];

/// Token rows for a sentence: trailing padding trimmed, truncated to
/// `max_len`, each token lemmatized and looked up (falling back to the
/// plain lowercase form, then to a zero row for out-of-vocabulary tokens).
fn token_rows(
    x: &TaggedSentence,
    store: &VectorStore,
    max_len: usize,
) -> Result<Vec<Vec<f64>>> {
    if max_len == 0 {
        return Err(Error::Config("max_len must be ≥ 1".into()));
    }
    let mut end = x.tokens.len();
    while end > 0 && x.tokens[end - 1] == PAD_TOKEN {
        end -= 1;
    }
    if end == 0 {
        return Err(Error::Data("cannot encode an empty sentence".into()));
    }
    let end = end.min(max_len);
    let rows = x.tokens[..end]
        .iter()
        .map(|tok| {
            let lemma = lemmatize(tok);
            if let Some(v) = store.get(&lemma) {
                return v.to_vec();
            }
            let lower = tok.to_lowercase();
            if let Some(v) = store.get(&lower) {
                return v.to_vec();
            }
            vec![0.0; store.dim()]
        })
        .collect();
    Ok(rows)
}

/// Convolution + ReLU + max-pool with the per-channel achieving position
/// and its pre-ReLU value, which is all backpropagation needs.
struct PoolTrace {
    /// Per channel: (achieving position, pre-ReLU value there).
    best: Vec<(usize, f64)>,
    pooled: Vec<f64>,
}

fn conv_pool(rows: &[Vec<f64>], params: &ModelParams) -> PoolTrace {
    let len = rows.len();
    let dim = params.embed_dim;
    let half = (params.window - 1) / 2;
    let mut best = Vec::with_capacity(params.hidden_dim);
    let mut pooled = Vec::with_capacity(params.hidden_dim);
    for c in 0..params.hidden_dim {
        let row = params.filter_row(c);
        let mut best_pos = 0usize;
        let mut best_z = f64::NEG_INFINITY;
        let mut best_a = f64::NEG_INFINITY;
        for i in 0..len {
            let mut z = params.bias[c];
            for j in 0..params.window {
                let src = i as isize + j as isize - half as isize;
                if src < 0 || src >= len as isize {
                    continue; // zero padding contributes nothing
                }
                let x = &rows[src as usize];
                let f = &row[j * dim..(j + 1) * dim];
                for d in 0..dim {
                    z += f[d] * x[d];
                }
            }
            let a = if z > 0.0 { z } else { 0.0 };
            if a > best_a {
                best_a = a;
                best_z = z;
                best_pos = i;
            }
        }
        best.push((best_pos, best_z));
        pooled.push(best_a);
    }
    PoolTrace { best, pooled }
}

/// Encodes one sentence to its pooled hidden vector `h_i`.
pub fn encode(
    x: &TaggedSentence,
    params: &ModelParams,
    store: &VectorStore,
    max_len: usize,
) -> Result<Vec<f64>> {
    params.validate()?;
    if store.dim() != params.embed_dim {
        return Err(Error::DimensionMismatch {
            expected: params.embed_dim,
            actual: store.dim(),
        });
    }
    let rows = token_rows(x, store, max_len)?;
    Ok(conv_pool(&rows, params).pooled)
}

/// Encodes one sentence and appends its prompt:
/// `[h_i | prompt]`. The prompt must be three embedding-width blocks.
pub fn encode_instance(
    x: &TaggedSentence,
    prompt: &[f64],
    params: &ModelParams,
    store: &VectorStore,
    max_len: usize,
) -> Result<InstanceEmbedding> {
    if prompt.len() != 3 * params.embed_dim {
        return Err(Error::DimensionMismatch {
            expected: 3 * params.embed_dim,
            actual: prompt.len(),
        });
    }
    let mut vector = encode(x, params, store, max_len)?;
    vector.extend_from_slice(prompt);
    Ok(InstanceEmbedding { vector })
}

/// Encodes a batch in input order (parallel when built with the
/// `parallel` feature).
pub fn encode_batch(
    batch: &[(&TaggedSentence, &[f64])],
    params: &ModelParams,
    store: &VectorStore,
    max_len: usize,
) -> Result<Vec<InstanceEmbedding>> {
    params.validate()?;
    let results = par::map_ordered(batch, |(x, prompt)| {
        encode_instance(x, prompt, params, store, max_len)
    });
    results.into_iter().collect()
}

/// Runs `loss_fn` on the batch's instance embeddings and backpropagates
/// its per-instance vector derivatives into filter and bias gradients.
///
/// `loss_fn` receives the instance embeddings in batch order and returns
/// the scalar loss plus one derivative vector per instance (full instance
/// width; only the `h_i` block reaches the parameters, since prompts are
/// not parameterized). Per-instance contributions are reduced with an
/// exactly rounded sum, so gradients are bit-deterministic and independent
/// of batch order. Memory scales with batch size times parameter count.
pub fn gradients<F>(
    batch: &[(&TaggedSentence, &[f64])],
    params: &ModelParams,
    store: &VectorStore,
    max_len: usize,
    loss_fn: F,
) -> Result<(f64, ParamGrads)>
where
    F: Fn(&[InstanceEmbedding]) -> (f64, Vec<Vec<f64>>),
{
    params.validate()?;
    if store.dim() != params.embed_dim {
        return Err(Error::DimensionMismatch {
            expected: params.embed_dim,
            actual: store.dim(),
        });
    }
    let traces: Vec<Result<(Vec<Vec<f64>>, PoolTrace)>> = par::map_ordered(batch, |(x, _)| {
        let rows = token_rows(x, store, max_len)?;
        let trace = conv_pool(&rows, params);
        Ok((rows, trace))
    });
    let mut rows_all = Vec::with_capacity(batch.len());
    let mut traces_all = Vec::with_capacity(batch.len());
    let mut embeddings = Vec::with_capacity(batch.len());
    for (res, (_, prompt)) in traces.into_iter().zip(batch) {
        let (rows, trace) = res?;
        if prompt.len() != 3 * params.embed_dim {
            return Err(Error::DimensionMismatch {
                expected: 3 * params.embed_dim,
                actual: prompt.len(),
            });
        }
        let mut vector = trace.pooled.clone();
        vector.extend_from_slice(prompt);
        embeddings.push(InstanceEmbedding { vector });
        rows_all.push(rows);
        traces_all.push(trace);
    }

    let (loss, dvecs) = loss_fn(&embeddings);
    if !loss.is_finite() {
        return Err(Error::Numerical(format!("non-finite loss: {loss}")));
    }
    if dvecs.len() != batch.len() {
        return Err(Error::DimensionMismatch {
            expected: batch.len(),
            actual: dvecs.len(),
        });
    }

    let dim = params.embed_dim;
    let half = (params.window - 1) / 2;
    let mut contribs: Vec<ParamGrads> = Vec::with_capacity(batch.len());
    for (i, dvec) in dvecs.iter().enumerate() {
        if dvec.len() != params.instance_width() {
            return Err(Error::DimensionMismatch {
                expected: params.instance_width(),
                actual: dvec.len(),
            });
        }
        let mut contrib = ParamGrads::zeros(params);
        let rows = &rows_all[i];
        let len = rows.len();
        for c in 0..params.hidden_dim {
            let g = dvec[c];
            if g == 0.0 {
                continue;
            }
            let (pos, z) = traces_all[i].best[c];
            if z <= 0.0 {
                continue; // ReLU gate closed at the pooled position
            }
            contrib.bias[c] = g;
            let base = c * params.window * dim;
            for j in 0..params.window {
                let src = pos as isize + j as isize - half as isize;
                if src < 0 || src >= len as isize {
                    continue;
                }
                let x = &rows[src as usize];
                let off = base + j * dim;
                for d in 0..dim {
                    contrib.filters[off + d] = g * x[d];
                }
            }
        }
        contribs.push(contrib);
    }
    let mut grads = ParamGrads::zeros(params);
    let mut acc = Fsum::new();
    for idx in 0..grads.filters.len() {
        acc.reset();
        for c in &contribs {
            acc.add(c.filters[idx]);
        }
        grads.filters[idx] = acc.value();
    }
    for idx in 0..grads.bias.len() {
        acc.reset();
        for c in &contribs {
            acc.add(c.bias[idx]);
        }
        grads.bias[idx] = acc.value();
    }
    Ok((loss, grads))
}

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    config_sha256: String,
    params: ModelParams,
}

/// Hex SHA-256 of a configuration tag, stored in checkpoints so a loaded
/// model can be checked against the run configuration that produced it.
pub fn config_digest(tag: &str) -> String {
    let hash = Sha256::digest(tag.as_bytes());
    hash.iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes a versioned JSON checkpoint of the parameters plus the digest of
/// `config_tag`. JSON float serialization round-trips `f64` exactly.
pub fn save_checkpoint(path: &Path, params: &ModelParams, config_tag: &str) -> Result<()> {
    params.validate()?;
    let ckpt = Checkpoint {
        version: CHECKPOINT_VERSION,
        config_sha256: config_digest(config_tag),
        params: params.clone(),
    };
    let text = serde_json::to_string(&ckpt)
        .map_err(|e| Error::Data(format!("serializing checkpoint: {e}")))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Loads a checkpoint, validating version and parameter shapes. Returns
/// the parameters and the stored config digest.
pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, String)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ckpt: Checkpoint = serde_json::from_str(&text)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    if ckpt.version != CHECKPOINT_VERSION {
        return Err(Error::Data(format!(
            "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
            ckpt.version
        )));
    }
    ckpt.params.validate()?;
    Ok((ckpt.params, ckpt.config_sha256))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Pos;

    fn sentence(tokens: &[&str]) -> TaggedSentence {
        TaggedSentence {
            tokens: tokens.iter().map(|t| t.to_string()).collect(),
            pos: vec![Pos::Noun; tokens.len()],
            head: [0, 1],
            tail: [tokens.len() - 1, tokens.len()],
            relation: "r".into(),
        }
    }

    fn toy_store() -> VectorStore {
        VectorStore::from_entries(vec![
            ("dog".into(), vec![0.6, 0.8]),
            ("cat".into(), vec![0.8, 0.6]),
            ("the".into(), vec![1.0, 0.0]),
        ])
        .unwrap()
    }

    fn zero_params(hidden: usize, embed: usize, window: usize) -> ModelParams {
        ModelParams {
            hidden_dim: hidden,
            embed_dim: embed,
            window,
            filters: vec![0.0; hidden * window * embed],
            bias: vec![0.0; hidden],
        }
    }

    #[test]
    fn zero_parameters_encode_to_zero() {
        let h = encode(&sentence(&["the", "dog"]), &zero_params(4, 2, 3), &toy_store(), 128)
            .unwrap();
        assert_eq!(h, vec![0.0; 4]);
    }

    #[test]
    fn single_token_window_three_matches_hand_computation() {
        // One token w: windows see [0 | E(w) | 0]. Channel 0 reads the
        // center block's first coordinate, channel 1 its negated second:
        // h = [ReLU(0.6), ReLU(-0.8)] = [0.6, 0].
        let mut params = zero_params(2, 2, 3);
        params.filters[2] = 1.0; // c0, center offset, d0
        params.filters[1 * 6 + 3] = -1.0; // c1, center offset, d1
        let h = encode(&sentence(&["dog"]), &params, &toy_store(), 128).unwrap();
        assert!((h[0] - 0.6).abs() < 1e-12);
        assert_eq!(h[1], 0.0);
    }

    #[test]
    fn encoding_is_per_instance_pure() {
        let params = ModelParams::init(3, 2, 3, 11).unwrap();
        let store = toy_store();
        let a = sentence(&["the", "dog"]);
        let b = sentence(&["cat"]);
        let ha1 = encode(&a, &params, &store, 128).unwrap();
        let hb1 = encode(&b, &params, &store, 128).unwrap();
        let hb2 = encode(&b, &params, &store, 128).unwrap();
        let ha2 = encode(&a, &params, &store, 128).unwrap();
        assert_eq!(ha1, ha2);
        assert_eq!(hb1, hb2);
    }

    #[test]
    fn trailing_padding_does_not_change_encoding() {
        let params = ModelParams::init(3, 2, 3, 5).unwrap();
        let store = toy_store();
        let plain = sentence(&["the", "dog"]);
        let padded = sentence(&["the", "dog", PAD_TOKEN, PAD_TOKEN]);
        assert_eq!(
            encode(&plain, &params, &store, 128).unwrap(),
            encode(&padded, &params, &store, 128).unwrap()
        );
    }

    #[test]
    fn truncation_matches_prefix_encoding() {
        let params = ModelParams::init(3, 2, 3, 5).unwrap();
        let store = toy_store();
        let long = sentence(&["the", "dog", "cat", "dog"]);
        let prefix = sentence(&["the", "dog"]);
        assert_eq!(
            encode(&long, &params, &store, 2).unwrap(),
            encode(&prefix, &params, &store, 128).unwrap()
        );
    }

    #[test]
    fn empty_and_all_padding_sentences_are_errors() {
        let params = zero_params(2, 2, 3);
        let store = toy_store();
        let mut empty = sentence(&["x"]);
        empty.tokens.clear();
        empty.pos.clear();
        assert!(encode(&empty, &params, &store, 128).is_err());
        let pads = sentence(&[PAD_TOKEN, PAD_TOKEN]);
        assert!(encode(&pads, &params, &store, 128).is_err());
    }

    #[test]
    fn instance_width_adds_hidden_and_prompt_blocks() {
        let params = ModelParams::init(8, 4, 3, 1).unwrap();
        let store = VectorStore::from_entries(vec![
            ("dog".into(), vec![0.5, 0.5, 0.5, 0.5]),
        ])
        .unwrap();
        let prompt = vec![0.25; 12];
        let inst =
            encode_instance(&sentence(&["dog"]), &prompt, &params, &store, 128).unwrap();
        assert_eq!(inst.width(), 20);
        assert!(inst.vector[..8].iter().all(|&v| v >= 0.0));
        assert_eq!(&inst.vector[8..], &prompt[..]);
    }

    #[test]
    fn hidden_block_independent_of_prompt() {
        let params = ModelParams::init(4, 2, 3, 9).unwrap();
        let store = toy_store();
        let x = sentence(&["the", "dog"]);
        let a = encode_instance(&x, &[1.0; 6], &params, &store, 128).unwrap();
        let b = encode_instance(&x, &[-2.0; 6], &params, &store, 128).unwrap();
        assert_eq!(&a.vector[..4], &b.vector[..4]);
    }

    #[test]
    fn prompt_width_is_enforced() {
        let params = ModelParams::init(4, 2, 3, 9).unwrap();
        let err = encode_instance(&sentence(&["dog"]), &[0.0; 5], &params, &toy_store(), 128)
            .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn constant_loss_yields_zero_gradients() {
        let params = ModelParams::init(3, 2, 3, 2).unwrap();
        let store = toy_store();
        let x = sentence(&["the", "dog"]);
        let prompt = vec![0.0; 6];
        let batch = [(&x, prompt.as_slice())];
        let (loss, grads) = gradients(&batch, &params, &store, 128, |embs| {
            (7.5, embs.iter().map(|e| vec![0.0; e.width()]).collect())
        })
        .unwrap();
        assert_eq!(loss, 7.5);
        assert!(grads.filters.iter().all(|&g| g == 0.0));
        assert!(grads.bias.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn one_channel_one_token_matches_hand_chain_rule() {
        // h = ReLU(f*x + b), x = 1, f = 0.5, b = 0.1, loss = h^2.
        // dL/df = 2h * x = 1.2; dL/db = 2h = 1.2.
        let params = ModelParams {
            hidden_dim: 1,
            embed_dim: 1,
            window: 1,
            filters: vec![0.5],
            bias: vec![0.1],
        };
        let store = VectorStore::from_entries(vec![("one".into(), vec![1.0])]).unwrap();
        let x = sentence(&["one"]);
        let prompt = vec![0.0; 3];
        let batch = [(&x, prompt.as_slice())];
        let (loss, grads) = gradients(&batch, &params, &store, 128, |embs| {
            let h = embs[0].vector[0];
            (h * h, vec![vec![2.0 * h, 0.0, 0.0, 0.0]])
        })
        .unwrap();
        assert!((loss - 0.36).abs() < 1e-12);
        assert!((grads.filters[0] - 1.2).abs() < 1e-12);
        assert!((grads.bias[0] - 1.2).abs() < 1e-12);
    }

    #[test]
    fn non_finite_loss_is_rejected() {
        let params = ModelParams::init(2, 2, 3, 3).unwrap();
        let store = toy_store();
        let x = sentence(&["dog"]);
        let prompt = vec![0.0; 6];
        let batch = [(&x, prompt.as_slice())];
        let err = gradients(&batch, &params, &store, 128, |embs| {
            (f64::NAN, embs.iter().map(|e| vec![0.0; e.width()]).collect())
        })
        .unwrap_err();
        assert!(matches!(err, Error::Numerical(_)));
    }

    /// Central finite differences over every parameter; shared with the
    /// acceptance suite via identical logic there.
    fn fd_check(seed: u64) -> f64 {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hidden = rng.random_range(1..5usize);
        let embed = rng.random_range(1..5usize);
        let window = [1usize, 3, 5][rng.random_range(0..3usize)];
        let params = ModelParams::init(hidden, embed, window, seed ^ 0xabcd).unwrap();

        let vocab: Vec<(String, Vec<f64>)> = (0..6)
            .map(|i| {
                (
                    format!("w{i}"),
                    (0..embed).map(|_| rng.random_range(-1.0..1.0f64)).collect(),
                )
            })
            .collect();
        let store = VectorStore::from_entries(vocab).unwrap();

        let len = rng.random_range(1..=6usize);
        let tokens: Vec<String> = (0..len)
            .map(|_| format!("w{}", rng.random_range(0..6)))
            .collect();
        let x = TaggedSentence {
            pos: vec![Pos::Noun; tokens.len()],
            head: [0, 1],
            tail: [tokens.len() - 1, tokens.len()],
            tokens,
            relation: "r".into(),
        };
        let prompt: Vec<f64> = (0..3 * embed).map(|_| rng.random_range(-1.0..1.0)).collect();
        let width = hidden + 3 * embed;
        let targets: Vec<f64> = (0..width).map(|_| rng.random_range(-1.0..1.0)).collect();

        let loss_fn = |embs: &[InstanceEmbedding]| {
            let mut loss = 0.0;
            let mut dvecs = Vec::with_capacity(embs.len());
            for e in embs {
                let mut d = Vec::with_capacity(e.width());
                for (v, t) in e.vector.iter().zip(&targets) {
                    loss += (v - t) * (v - t);
                    d.push(2.0 * (v - t));
                }
                dvecs.push(d);
            }
            (loss, dvecs)
        };

        let batch = [(&x, prompt.as_slice())];
        let (_, grads) = gradients(&batch, &params, &store, 128, loss_fn).unwrap();

        let eval = |p: &ModelParams| -> f64 {
            let inst = encode_instance(&x, &prompt, p, &store, 128).unwrap();
            inst.vector
                .iter()
                .zip(&targets)
                .map(|(v, t)| (v - t) * (v - t))
                .sum()
        };
        let eps = 1e-5;
        let mut worst = 0.0f64;
        let n_f = params.filters.len();
        for idx in 0..n_f + params.bias.len() {
            let mut hi = params.clone();
            let mut lo = params.clone();
            if idx < n_f {
                hi.filters[idx] += eps;
                lo.filters[idx] -= eps;
            } else {
                hi.bias[idx - n_f] += eps;
                lo.bias[idx - n_f] -= eps;
            }
            let fd = (eval(&hi) - eval(&lo)) / (2.0 * eps);
            let an = if idx < n_f {
                grads.filters[idx]
            } else {
                grads.bias[idx - n_f]
            };
            let rel = (fd - an).abs() / (fd.abs() + an.abs()).max(1e-8);
            if rel > worst {
                worst = rel;
            }
        }
        worst
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in [1u64, 2, 3, 4, 5] {
            let worst = fd_check(seed);
            assert!(worst <= 1e-4, "seed {seed}: relative error {worst}");
        }
    }

    #[test]
    fn lemmatizer_pins() {
        for (word, lemma) in [
            ("Cities", "city"),
            ("dogs", "dog"),
            ("boxes", "box"),
            ("churches", "church"),
            ("classes", "class"),
            ("running", "run"),
            ("stopped", "stop"),
            ("working", "work"),
            ("making", "make"),
            ("news", "news"),
            ("his", "his"),
            ("was", "be"),
            ("children", "child"),
            ("glass", "glass"),
            ("dog", "dog"),
        ] {
            assert_eq!(lemmatize(word), lemma, "{word}");
        }
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = ModelParams::init(4, 3, 3, 42).unwrap();
        let b = ModelParams::init(4, 3, 3, 42).unwrap();
        let c = ModelParams::init(4, 3, 3, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let bound = (6.0 / ((3 * 3) as f64 + 4.0)).sqrt();
        assert!(a.filters.iter().chain(&a.bias).all(|v| v.abs() <= bound));
    }

    #[test]
    fn even_window_is_rejected() {
        assert!(ModelParams::init(2, 2, 2, 0).is_err());
        assert!(ModelParams::init(0, 2, 3, 0).is_err());
    }

    #[test]
    fn checkpoint_roundtrips_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let params = ModelParams::init(3, 2, 3, 777).unwrap();
        save_checkpoint(&path, &params, "config-tag-1").unwrap();
        let (back, digest) = load_checkpoint(&path).unwrap();
        assert_eq!(params, back);
        assert_eq!(digest, config_digest("config-tag-1"));
        assert_ne!(digest, config_digest("config-tag-2"));
    }

    #[test]
    fn checkpoint_version_is_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let params = ModelParams::init(1, 1, 1, 0).unwrap();
        save_checkpoint(&path, &params, "t").unwrap();
        let text = std::fs::read_to_string(&path)
            .unwrap()
            .replace("\"version\":1", "\"version\":9");
        std::fs::write(&path, text).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
