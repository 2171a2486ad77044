//! Training-data augmentation for unseen relations: sentences of a
//! super-class-matched seen relation are carried over word by word with the
//! multiplicative analogy scorer, keeping sentence structure intact.
//!
//! Only nouns, verbs, adjectives, and adverbs are rewritten. Entity spans
//! and POS tags keep their positions; the relation label becomes the target
//! relation. Token replacement is pure, so batches parallelize per sentence;
//! sampling happens afterwards on a single seeded RNG.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{RelationMeta, TaggedSentence};
use crate::embeddings::{three_cos_mul, VectorStore};
use crate::error::{Error, Result};
use crate::par;

/// True iff the relation super-class and both entity super-classes match,
/// case-insensitively.
pub fn superclass_match(source: &RelationMeta, target: &RelationMeta) -> bool {
    let eq = |a: &str, b: &str| a.eq_ignore_ascii_case(b);
    eq(&source.super_class, &target.super_class)
        && eq(&source.head_super, &target.head_super)
        && eq(&source.tail_super, &target.tail_super)
}

/// Per-translation token counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TranslationStats {
    /// Content tokens replaced by an analogy candidate.
    pub translated: usize,
    /// Content tokens absent from the vector store, copied verbatim.
    pub skipped_missing: usize,
    /// Content tokens whose candidate pool was empty, copied verbatim.
    pub skipped_no_candidate: usize,
}

impl TranslationStats {
    fn absorb(&mut self, other: TranslationStats) {
        self.translated += other.translated;
        self.skipped_missing += other.skipped_missing;
        self.skipped_no_candidate += other.skipped_no_candidate;
    }
}

/// Rewrites one sentence of `source` into a sentence of `target`.
///
/// Every NOUN/VERB/ADJ/ADV token found in the store is replaced by the top
/// analogy candidate for (token, source.name → target.name); all other
/// tokens are copied verbatim. Length, spans, and POS tags are preserved.
pub fn translate_sentence(
    x: &TaggedSentence,
    source: &RelationMeta,
    target: &RelationMeta,
    store: &VectorStore,
    epsilon: f64,
) -> Result<(TaggedSentence, TranslationStats)> {
    if !superclass_match(source, target) {
        return Err(Error::Data(format!(
            "super-classes of {:?} and {:?} do not match",
            source.name, target.name
        )));
    }
    x.validate()?;

    let mut stats = TranslationStats::default();
    let mut tokens = Vec::with_capacity(x.tokens.len());
    for (token, pos) in x.tokens.iter().zip(&x.pos) {
        if !pos.is_content() {
            tokens.push(token.clone());
            continue;
        }
        let key = if store.contains(token) {
            Some(token.clone())
        } else {
            let lower = token.to_lowercase();
            store.contains(&lower).then_some(lower)
        };
        let Some(key) = key else {
            stats.skipped_missing += 1;
            tokens.push(token.clone());
            continue;
        };
        match three_cos_mul(
            store,
            &key,
            &source.name,
            &target.name,
            1,
            &BTreeSet::new(),
            epsilon,
        ) {
            Ok(ranked) => {
                stats.translated += 1;
                tokens.push(ranked[0].0.clone());
            }
            Err(Error::Data(_)) => {
                stats.skipped_no_candidate += 1;
                tokens.push(token.clone());
            }
            Err(e) => return Err(e),
        }
    }

    Ok((
        TaggedSentence {
            tokens,
            pos: x.pos.clone(),
            head: x.head,
            tail: x.tail,
            relation: target.name.clone(),
        },
        stats,
    ))
}

/// Result of [`build_augmented_set`].
#[derive(Debug, Clone, Default)]
pub struct AugmentOutcome {
    pub sentences: Vec<TaggedSentence>,
    /// Unseen relations with no super-class-matched seen source.
    pub uncoverable: Vec<String>,
    pub stats: TranslationStats,
    /// (relation, duplicate fraction) for relations whose candidate pool was
    /// smaller than the requested count and was sampled with replacement.
    pub duplication: Vec<(String, f64)>,
}

/// Generates `per_relation_count` augmented sentences for every unseen
/// relation, translating all sentences of every matching seen relation and
/// then sampling deterministically from the pool.
///
/// Pools at least as large as the count are sampled without replacement;
/// smaller non-empty pools are sampled with replacement so the output stays
/// balanced, with the duplicate fraction reported. Unseen relations without
/// any matching source are listed as uncoverable rather than dropped
/// silently.
pub fn build_augmented_set(
    corpus: &[TaggedSentence],
    catalog: &[RelationMeta],
    unseen: &BTreeSet<String>,
    per_relation_count: usize,
    seed: u64,
    epsilon: f64,
    store: &VectorStore,
) -> Result<AugmentOutcome> {
    if per_relation_count == 0 {
        return Err(Error::Config("per_relation_count must be ≥ 1".into()));
    }
    let meta_of = |name: &str| catalog.iter().find(|m| m.name == name);

    let mut outcome = AugmentOutcome::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for target_name in unseen {
        let target = meta_of(target_name).ok_or_else(|| {
            Error::Data(format!("unseen relation {target_name:?} not in catalog"))
        })?;

        // Source sentences: every corpus instance of a seen relation whose
        // super-classes match the target, in corpus order.
        let sources: Vec<&TaggedSentence> = corpus
            .iter()
            .filter(|s| {
                if unseen.contains(&s.relation) || s.relation == *target_name {
                    return false;
                }
                meta_of(&s.relation)
                    .map(|m| superclass_match(m, target))
                    .unwrap_or(false)
            })
            .collect();

        if sources.is_empty() {
            outcome.uncoverable.push(target_name.clone());
            continue;
        }

        let translated: Vec<Result<(TaggedSentence, TranslationStats)>> =
            par::map_ordered(&sources, |s| {
                let meta = meta_of(&s.relation).expect("filtered above");
                translate_sentence(s, meta, target, store, epsilon)
            });
        let mut pool = Vec::with_capacity(translated.len());
        for item in translated {
            let (sentence, stats) = item?;
            outcome.stats.absorb(stats);
            pool.push(sentence);
        }

        if pool.len() >= per_relation_count {
            let mut picks: Vec<usize> =
                rand::seq::index::sample(&mut rng, pool.len(), per_relation_count).into_vec();
            picks.sort_unstable();
            for i in picks {
                outcome.sentences.push(pool[i].clone());
            }
        } else {
            let picks: Vec<usize> = (0..per_relation_count)
                .map(|_| rng.random_range(0..pool.len()))
                .collect();
            let distinct: BTreeSet<usize> = picks.iter().copied().collect();
            let dup_rate = 1.0 - distinct.len() as f64 / per_relation_count as f64;
            log::warn!(
                "relation {target_name:?}: {} candidates for {} slots, sampled with replacement (duplicate fraction {dup_rate:.3})",
                pool.len(),
                per_relation_count
            );
            outcome.duplication.push((target_name.clone(), dup_rate));
            for i in picks {
                outcome.sentences.push(pool[i].clone());
            }
        }
    }

    Ok(outcome)
}
