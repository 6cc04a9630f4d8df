//! SeMole core: molecular graphs, junction-tree decomposition, property
//! oracles, reverse-mode autodiff, and the semi-supervised junction-tree
//! VAE with its training loop.
//!
//! The crate is organized bottom-up:
//!
//! - [`chem`]: SMILES parsing, sanitization, ring perception, canonical output
//! - [`juncture`]: junction-tree decomposition, cluster vocabulary, assembly
//! - [`props`]: molecular weight, Crippen logP, QED, label loading
//! - [`tensor`]: dense f64 tensors with a reverse-mode tape and Adam
//! - [`model`]: encoders, decoders, and the semi-supervised objective
//! - [`train`]: configs, dataset splits, the epoch loop, checkpoints
//!
//! Batch-level work runs on rayon when the (default) `parallel` feature is
//! enabled and falls back to plain iterators without it; results are
//! bit-identical either way.

pub mod chem;
pub mod juncture;
pub mod model;
pub mod par;
pub mod props;
pub mod tensor;
