//! Prompt embeddings: fixed-width side-information blocks attached to
//! every instance representation.
//!
//! A prompt is the concatenation of three equal-width blocks: the head
//! entity super-class embedding, a relation vector, and the tail entity
//! super-class embedding. Prototypes are built from prompts whose middle
//! block is the relation's virtual label; queries do not know their
//! relation, so their middle block is zeroed while the entity super-class
//! blocks stay, since entity types are given side information.

use std::collections::{BTreeMap, BTreeSet};

use crate::corpus::RelationMeta;
use crate::embeddings::VectorStore;
use crate::error::{Error, Result};
use crate::kglabel::VirtualLabel;

/// Whether prompts carry information or are blanked out entirely.
///
/// `Ablated` replaces every prompt with zeros of the same width, leaving
/// the rest of the pipeline untouched; it exists to measure how much the
/// prompt blocks contribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptMode {
    Full,
    Ablated,
}

impl PromptMode {
    pub fn is_ablated(self) -> bool {
        self == PromptMode::Ablated
    }
}

/// Concatenates `[head_super | relation | tail_super]`. All three blocks
/// must share one width; the middle block is copied bit-for-bit.
pub fn prompt_embedding(
    head_super: &[f64],
    relation: &[f64],
    tail_super: &[f64],
) -> Result<Vec<f64>> {
    if head_super.len() != relation.len() || tail_super.len() != relation.len() {
        return Err(Error::DimensionMismatch {
            expected: relation.len(),
            actual: if head_super.len() != relation.len() {
                head_super.len()
            } else {
                tail_super.len()
            },
        });
    }
    let mut out = Vec::with_capacity(3 * relation.len());
    out.extend_from_slice(head_super);
    out.extend_from_slice(relation);
    out.extend_from_slice(tail_super);
    Ok(out)
}

/// Full prompt for a relation: entity super-class embeddings around the
/// relation vector (a virtual label, usually).
pub fn relation_prompt(
    meta: &RelationMeta,
    relation_vec: &[f64],
    store: &VectorStore,
) -> Result<Vec<f64>> {
    let head = store.resolve(&meta.head_super)?;
    let tail = store.resolve(&meta.tail_super)?;
    prompt_embedding(&head, relation_vec, &tail)
}

/// Query-side prompt: entity super-class embeddings around a zero middle
/// block, because the relation identity is what is being predicted.
pub fn query_prompt(meta: &RelationMeta, store: &VectorStore) -> Result<Vec<f64>> {
    let head = store.resolve(&meta.head_super)?;
    let tail = store.resolve(&meta.tail_super)?;
    let zeros = vec![0.0; store.dim()];
    prompt_embedding(&head, &zeros, &tail)
}

/// An all-zero prompt of the width produced for `dim`-wide blocks.
pub fn zero_prompt(dim: usize) -> Vec<f64> {
    vec![0.0; 3 * dim]
}

/// Precomputed prompts for a set of relations: the full prompt (virtual
/// label in the middle) used for prototype members, and the query prompt
/// (zeroed middle) used for instances whose relation is being predicted.
/// In [`PromptMode::Ablated`] every lookup returns the same all-zero
/// prompt and no metadata or labels are required.
#[derive(Debug, Clone)]
pub struct PromptTable {
    mode: PromptMode,
    zero: Vec<f64>,
    full: BTreeMap<String, Vec<f64>>,
    query: BTreeMap<String, Vec<f64>>,
}

impl PromptTable {
    pub fn build(
        relations: &BTreeSet<String>,
        catalog: &[RelationMeta],
        labels: &[VirtualLabel],
        store: &VectorStore,
        mode: PromptMode,
    ) -> Result<Self> {
        let zero = zero_prompt(store.dim());
        let mut table = PromptTable {
            mode,
            zero,
            full: BTreeMap::new(),
            query: BTreeMap::new(),
        };
        if mode.is_ablated() {
            return Ok(table);
        }
        let label_by_name: BTreeMap<&str, &VirtualLabel> =
            labels.iter().map(|l| (l.relation.as_str(), l)).collect();
        for name in relations {
            let meta = crate::corpus::meta_for(catalog, name)
                .ok_or_else(|| Error::Data(format!("relation {name:?} missing from catalog")))?;
            let label = label_by_name
                .get(name.as_str())
                .ok_or_else(|| Error::Data(format!("relation {name:?} has no virtual label")))?;
            if label.vector.len() != store.dim() {
                return Err(Error::DimensionMismatch {
                    expected: store.dim(),
                    actual: label.vector.len(),
                });
            }
            table
                .full
                .insert(name.clone(), relation_prompt(meta, &label.vector, store)?);
            table.query.insert(name.clone(), query_prompt(meta, store)?);
        }
        Ok(table)
    }

    /// Prompt for prototype members of `relation`.
    pub fn full(&self, relation: &str) -> Result<&[f64]> {
        if self.mode.is_ablated() {
            return Ok(&self.zero);
        }
        self.full
            .get(relation)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Data(format!("no prompt built for relation {relation:?}")))
    }

    /// Prompt for query instances gold-labeled `relation`.
    pub fn query(&self, relation: &str) -> Result<&[f64]> {
        if self.mode.is_ablated() {
            return Ok(&self.zero);
        }
        self.query
            .get(relation)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Data(format!("no prompt built for relation {relation:?}")))
    }

    /// Width of every prompt in the table.
    pub fn width(&self) -> usize {
        self.zero.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concatenates_three_blocks_in_order() {
        let p = prompt_embedding(&[1.0, 0.0], &[0.0, 1.0], &[0.5, 0.5]).unwrap();
        assert_eq!(p, vec![1.0, 0.0, 0.0, 1.0, 0.5, 0.5]);
    }

    #[test]
    fn middle_block_is_bit_exact() {
        let relation = [0.1 + 0.2, -0.0f64, 1e-300];
        let p = prompt_embedding(&[0.0; 3], &relation, &[0.0; 3]).unwrap();
        for (a, b) in relation.iter().zip(&p[3..6]) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn swapping_entity_blocks_changes_the_prompt() {
        let head = [1.0, 0.0];
        let tail = [0.0, 1.0];
        let r = [0.5, 0.5];
        let a = prompt_embedding(&head, &r, &tail).unwrap();
        let b = prompt_embedding(&tail, &r, &head).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn rejects_mismatched_block_widths() {
        let err = prompt_embedding(&[1.0], &[1.0, 0.0], &[1.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn query_prompt_zeroes_only_the_middle_block() {
        let store = VectorStore::from_entries(vec![
            ("person".into(), vec![1.0, 0.0]),
            ("location".into(), vec![0.0, 1.0]),
        ])
        .unwrap();
        let meta = RelationMeta {
            name: "birthplace".into(),
            super_class: "location".into(),
            description: vec![],
            head_super: "person".into(),
            tail_super: "location".into(),
        };
        let p = query_prompt(&meta, &store).unwrap();
        assert_eq!(p, vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn zero_prompt_matches_width() {
        assert_eq!(zero_prompt(4), vec![0.0; 12]);
    }

    #[test]
    fn table_serves_full_and_query_prompts() {
        let store = VectorStore::from_entries(vec![
            ("person".into(), vec![1.0, 0.0]),
            ("location".into(), vec![0.0, 1.0]),
        ])
        .unwrap();
        let meta = RelationMeta {
            name: "birthplace".into(),
            super_class: "location".into(),
            description: vec![],
            head_super: "person".into(),
            tail_super: "location".into(),
        };
        let label = VirtualLabel {
            relation: "birthplace".into(),
            vector: vec![0.6, 0.8],
            components: vec![("birth".into(), 1.0)],
        };
        let rels: BTreeSet<String> = ["birthplace".to_string()].into();
        let table =
            PromptTable::build(&rels, &[meta], &[label], &store, PromptMode::Full).unwrap();
        assert_eq!(
            table.full("birthplace").unwrap(),
            &[1.0, 0.0, 0.6, 0.8, 0.0, 1.0]
        );
        assert_eq!(
            table.query("birthplace").unwrap(),
            &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]
        );
        assert!(table.full("other").is_err());
    }

    #[test]
    fn ablated_table_needs_no_metadata_and_returns_zeros() {
        let store = VectorStore::from_entries(vec![("w".into(), vec![1.0, 0.0])]).unwrap();
        let rels: BTreeSet<String> = ["anything".to_string()].into();
        let table = PromptTable::build(&rels, &[], &[], &store, PromptMode::Ablated).unwrap();
        assert_eq!(table.full("anything").unwrap(), &[0.0; 6]);
        assert_eq!(table.query("whatever").unwrap(), &[0.0; 6]);
    }

    #[test]
    fn table_rejects_missing_label() {
        let store = VectorStore::from_entries(vec![
            ("person".into(), vec![1.0, 0.0]),
            ("location".into(), vec![0.0, 1.0]),
        ])
        .unwrap();
        let meta = RelationMeta {
            name: "birthplace".into(),
            super_class: "location".into(),
            description: vec![],
            head_super: "person".into(),
            tail_super: "location".into(),
        };
        let rels: BTreeSet<String> = ["birthplace".to_string()].into();
        let err = PromptTable::build(&rels, &[meta], &[], &store, PromptMode::Full).unwrap_err();
        assert!(err.to_string().contains("virtual label"));
    }
}
