//! Zero-shot relation classification from side information.
//!
//! The pipeline classifies entity-pair relations it has never seen a
//! training sentence for. It leans on three kinds of side information:
//! static word embeddings, a relation catalog (name, super-class, textual
//! description, entity super-classes), and a knowledge graph over words.
//!
//! The stages, each its own module:
//!
//! * [`embeddings`]: vector store and the multiplicative analogy score
//!   used to move words between relations.
//! * [`augment`]: translates sentences of super-class-matched seen
//!   relations into synthetic sentences for unseen relations, replacing
//!   content words by their best analogy candidates.
//! * [`kglabel`]: builds a virtual label vector per relation from
//!   graph-derived word weights over threshold-filtered candidate words.
//! * [`prompt`]: assembles `[head super | virtual label | tail super]`
//!   prompt embeddings, with a query variant that zeroes the label block
//!   and an ablated mode that zeroes everything.
//! * [`encoder`]: a convolutional sentence encoder over static embeddings
//!   with max pooling, plus exact analytic gradients.
//! * [`proto`]: episodic prototypical training, distance-softmax
//!   classification, and prototype construction for seen and unseen
//!   relations.
//! * [`eval`]: zero-shot splits, macro precision/recall/F1, and the sweep
//!   table.
//! * [`synth`]: a deterministic synthetic benchmark whose relations are
//!   only separable with both sentence content and prompts.
//! * [`pipeline`]: glues the stages into reproducible end-to-end runs.
//!
//! Reductions that matter for reproducibility (prototype means, gradient
//! accumulation) use exactly rounded summation from [`numerics`], so
//! results do not depend on reduction order and the parallel feature
//! changes wall time, not bits. With `--no-default-features` the same
//! code runs sequentially.

pub mod augment;
pub mod corpus;
pub mod embeddings;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod kglabel;
pub mod numerics;
pub mod par;
pub mod pipeline;
pub mod prompt;
pub mod proto;
pub mod synth;

pub use error::{Error, Result};
