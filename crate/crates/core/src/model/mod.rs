//! The SeMole network: encoders for junction trees and molecular graphs,
//! Gaussian latent heads, a property head, property-conditioned tree and
//! graph decoders, and the semi-supervised objectives.
//!
//! All parameters live in a flat named registry ([`ModelState`]); a forward
//! pass binds them onto a fresh tape ([`ModelState::bind`]) so distinct
//! molecules can run on distinct tapes (and threads) against shared
//! read-only state.

mod decoder;
mod encoder;
pub mod features;
mod objective;

pub use decoder::{
    decode_graph_teacher, decode_tree_teacher, sample_molecule, teacher_losses, GraphTeacherOut,
    Sampled, TreeTeacherOut,
};
pub use encoder::{encode_graph, encode_tree, posterior_g, posterior_t, predict_y, GraphEncoding};
pub use objective::{
    elbo_labeled, elbo_unlabeled, objective_batch, BatchItem, BatchStats, LabeledTerms, Prepared,
    UnlabeledTerms,
};

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::chem::MolGraph;
use crate::juncture::{JunctureError, Vocab};
use crate::tensor::{Tape, Tensor, TensorError, Var};
use features::{atom_dim, edge_dim, pool_dim};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cluster label {label:?} is not in the vocabulary")]
    OOVCluster { label: String },
    #[error("decoding exceeded the node cap")]
    DecodeOverflow,
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Juncture(#[from] JunctureError),
}

/// Architecture hyperparameters. Everything downstream derives its shapes
/// from these plus the vocabulary size.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelConfig {
    /// Dimension of each of the two structural latents.
    pub z_dim: usize,
    /// Hidden size shared by the GRU cells and scoring layers.
    pub hidden: usize,
    /// Bond-message passing rounds in the graph encoder.
    pub mpnn_rounds: usize,
    /// Hard cap on sampled junction-tree size; expansion is forced into
    /// backtracking once it is reached.
    pub node_cap: usize,
    /// Cap on enumerated attachment candidates per tree edge.
    pub candidate_cap: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            z_dim: 56,
            hidden: 256,
            mpnn_rounds: 4,
            node_cap: 60,
            candidate_cap: 40,
        }
    }
}

impl ModelConfig {
    /// Width of the decoder conditioning vector `[z ; y]`.
    pub fn cond_dim(&self) -> usize {
        self.z_dim + 1
    }

    /// Input width of the attachment scorer: summed host-atom states,
    /// summed glued child-atom features, pooled child descriptor, pair
    /// count, and the conditioning vector.
    fn score_dim(&self) -> usize {
        self.hidden + atom_dim() + pool_dim() + 1 + self.cond_dim()
    }
}

enum Init {
    Zeros,
    /// Normal with the given stddev.
    Randn(f64),
}

fn fan(rows: usize) -> f64 {
    1.0 / (rows as f64).sqrt()
}

/// Expected parameter names and shapes for a configuration, in registry
/// order. Checkpoint loaders validate stored buffers against this before
/// reconstructing a state.
pub fn parameter_spec(cfg: &ModelConfig, vocab_len: usize) -> Vec<(String, usize, usize)> {
    registry(cfg, vocab_len)
        .into_iter()
        .map(|(name, rows, cols, _)| (name, rows, cols))
        .collect()
}

/// The named parameter registry for a given config and vocab size: GRU
/// blocks are 9 tensors each (W/U/b for the reset, update, and candidate
/// gates).
fn registry(cfg: &ModelConfig, vocab_len: usize) -> Vec<(String, usize, usize, Init)> {
    let h = cfg.hidden;
    let z = cfg.z_dim;
    let c = cfg.cond_dim();
    let mut out: Vec<(String, usize, usize, Init)> = Vec::new();
    let gru = |out: &mut Vec<(String, usize, usize, Init)>, prefix: &str, d_in: usize| {
        for gate in ["r", "z", "n"] {
            out.push((format!("{prefix}.w{gate}"), d_in, h, Init::Randn(fan(d_in))));
            out.push((format!("{prefix}.u{gate}"), h, h, Init::Randn(fan(h))));
            out.push((format!("{prefix}.b{gate}"), 1, h, Init::Zeros));
        }
    };
    let linear = |out: &mut Vec<_>, name: &str, rows: usize, cols: usize, init: Init| {
        out.push((format!("{name}.w"), rows, cols, init));
        out.push((format!("{name}.b"), 1, cols, Init::Zeros));
    };

    out.push(("embed.label".into(), vocab_len, h, Init::Randn(fan(h))));
    gru(&mut out, "enc_g.msg", edge_dim());
    gru(&mut out, "enc_g.node", atom_dim());
    gru(&mut out, "enc_t.msg", h);
    gru(&mut out, "enc_t.node", h);

    linear(&mut out, "head.zt_mu", h, z, Init::Randn(fan(h)));
    linear(&mut out, "head.zt_lv", h, z, Init::Randn(fan(h)));
    linear(&mut out, "head.zg_mu", h, z, Init::Randn(fan(h)));
    linear(&mut out, "head.zg_lv", h, z, Init::Randn(fan(h)));
    linear(&mut out, "head.y1", 2 * h, h, Init::Randn(fan(2 * h)));
    // zero-init output layer: the untrained predictor emits the label mean
    // (0 in normalized units) with unit variance
    linear(&mut out, "head.y2", h, 2, Init::Zeros);

    linear(&mut out, "dec_t.init", c, h, Init::Randn(fan(c)));
    gru(&mut out, "dec_t.gru", h);
    out.push(("dec_t.backtrack".into(), 1, h, Init::Randn(fan(h))));
    // zero-init decision heads: initial topology/label/candidate
    // distributions are exactly uniform
    linear(&mut out, "dec_t.topo", h + c, 2, Init::Zeros);
    linear(&mut out, "dec_t.label", h + c, vocab_len, Init::Zeros);
    linear(&mut out, "dec_g.score1", cfg.score_dim(), h, Init::Randn(fan(cfg.score_dim())));
    linear(&mut out, "dec_g.score2", h, 1, Init::Zeros);
    out
}

/// All parameters of the network plus derived read-only caches: parsed
/// vocabulary fragments, their featurizations, and a lazily filled
/// label-to-label attachability table.
pub struct ModelState {
    cfg: ModelConfig,
    vocab: Vocab,
    names: Vec<String>,
    tensors: Vec<Tensor>,
    by_name: HashMap<String, usize>,
    fragments: Vec<MolGraph>,
    frag_feats: Vec<Tensor>,
    frag_pools: Vec<Vec<f64>>,
    attachable: Mutex<HashMap<usize, Arc<Vec<bool>>>>,
}

impl ModelState {
    /// Fresh parameters drawn from `seed`. Every vocab label must parse.
    pub fn new(cfg: ModelConfig, vocab: Vocab, seed: u64) -> Result<ModelState, ModelError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = registry(&cfg, vocab.len());
        let mut names = Vec::with_capacity(spec.len());
        let mut tensors = Vec::with_capacity(spec.len());
        for (name, rows, cols, init) in spec {
            names.push(name);
            tensors.push(match init {
                Init::Zeros => Tensor::zeros(rows, cols),
                Init::Randn(s) => Tensor::randn(rows, cols, s, &mut rng),
            });
        }
        Self::from_parts(cfg, vocab, names, tensors)
    }

    /// Rebuilds a state from externally held buffers (checkpoint loading).
    /// Names and shapes must match the registry for `cfg` and `vocab`.
    pub fn from_parts(
        cfg: ModelConfig,
        vocab: Vocab,
        names: Vec<String>,
        tensors: Vec<Tensor>,
    ) -> Result<ModelState, ModelError> {
        let spec = registry(&cfg, vocab.len());
        assert_eq!(names.len(), spec.len(), "parameter count mismatch");
        for ((name, tensor), (want_name, rows, cols, _)) in
            names.iter().zip(&tensors).zip(&spec)
        {
            assert_eq!(name, want_name, "parameter name mismatch");
            assert_eq!(
                tensor.shape(),
                (*rows, *cols),
                "parameter {name} has the wrong shape"
            );
        }
        let by_name = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();

        let mut fragments = Vec::with_capacity(vocab.len());
        let mut frag_feats = Vec::with_capacity(vocab.len());
        let mut frag_pools = Vec::with_capacity(vocab.len());
        for label in vocab.labels() {
            let frag = crate::chem::parse_smiles(label).map_err(|source| {
                JunctureError::BadLabel {
                    label: label.clone(),
                    source,
                }
            })?;
            frag_feats.push(features::atom_features(&frag));
            frag_pools.push(features::fragment_pool(&frag));
            fragments.push(frag);
        }

        Ok(ModelState {
            cfg,
            vocab,
            names,
            tensors,
            by_name,
            fragments,
            frag_feats,
            frag_pools,
            attachable: Mutex::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn n_params(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub(crate) fn fragment(&self, label_id: usize) -> &MolGraph {
        &self.fragments[label_id]
    }

    pub(crate) fn frag_feats(&self, label_id: usize) -> &Tensor {
        &self.frag_feats[label_id]
    }

    pub(crate) fn frag_pool(&self, label_id: usize) -> &[f64] {
        &self.frag_pools[label_id]
    }

    /// Resolves a cluster label against the vocab.
    pub fn label_id(&self, label: &str) -> Result<usize, ModelError> {
        self.vocab.get(label).ok_or_else(|| ModelError::OOVCluster {
            label: label.to_string(),
        })
    }

    /// Which vocab labels can legally glue onto `parent` in isolation.
    /// Memoized; used to mask the tree decoder's label predictor.
    pub fn attachable(&self, parent: usize) -> Arc<Vec<bool>> {
        if let Some(hit) = self.attachable.lock().unwrap().get(&parent) {
            return Arc::clone(hit);
        }
        let host = crate::juncture::Assembly::from_fragment(&self.fragments[parent]);
        let site: Vec<usize> = (0..self.fragments[parent].n_atoms()).collect();
        let mask: Vec<bool> = (0..self.vocab.len())
            .map(|child| {
                crate::juncture::enumerate_attachments(&host, &site, &self.fragments[child], 1)
                    .is_ok()
            })
            .collect();
        let mask = Arc::new(mask);
        self.attachable
            .lock()
            .unwrap()
            .insert(parent, Arc::clone(&mask));
        mask
    }

    /// Leafs every parameter onto `tape` for one forward/backward pass.
    pub fn bind(&self, tape: &Tape) -> Bound<'_> {
        let vars = self
            .tensors
            .iter()
            .map(|t| tape.leaf(t.clone()))
            .collect();
        Bound { state: self, vars }
    }
}

/// One tape's view of the parameters.
pub struct Bound<'a> {
    state: &'a ModelState,
    vars: Vec<Var>,
}

impl<'a> Bound<'a> {
    pub fn state(&self) -> &'a ModelState {
        self.state
    }

    pub fn config(&self) -> &ModelConfig {
        &self.state.cfg
    }

    /// Parameter by registry name; panics on unknown names (programmer
    /// error, the registry is fixed at construction).
    pub fn var(&self, name: &str) -> &Var {
        let idx = *self
            .state
            .by_name
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name:?}"));
        &self.vars[idx]
    }

    pub(crate) fn cell(&self, prefix: &str) -> GruCell<'_> {
        GruCell {
            wr: self.var(&format!("{prefix}.wr")),
            ur: self.var(&format!("{prefix}.ur")),
            br: self.var(&format!("{prefix}.br")),
            wz: self.var(&format!("{prefix}.wz")),
            uz: self.var(&format!("{prefix}.uz")),
            bz: self.var(&format!("{prefix}.bz")),
            wn: self.var(&format!("{prefix}.wn")),
            un: self.var(&format!("{prefix}.un")),
            bn: self.var(&format!("{prefix}.bn")),
        }
    }

    /// Per-parameter gradients in registry order.
    pub fn gradients(&self, grads: &crate::tensor::Gradients) -> Vec<Tensor> {
        self.vars.iter().map(|v| grads.get(v)).collect()
    }
}

/// A gated recurrent cell: `h' = h + z ⊙ (n − h)` with reset gate `r`,
/// update gate `z`, and candidate `n`.
pub(crate) struct GruCell<'a> {
    wr: &'a Var,
    ur: &'a Var,
    br: &'a Var,
    wz: &'a Var,
    uz: &'a Var,
    bz: &'a Var,
    wn: &'a Var,
    un: &'a Var,
    bn: &'a Var,
}

impl GruCell<'_> {
    pub fn apply(&self, x: &Var, h: &Var) -> Result<Var, ModelError> {
        let r = x
            .matmul(self.wr)?
            .add(&h.matmul(self.ur)?)?
            .add_row(self.br)?
            .sigmoid();
        let z = x
            .matmul(self.wz)?
            .add(&h.matmul(self.uz)?)?
            .add_row(self.bz)?
            .sigmoid();
        let n = x
            .matmul(self.wn)?
            .add(&r.mul(h)?.matmul(self.un)?)?
            .add_row(self.bn)?
            .tanh();
        Ok(h.add(&z.mul(&n.sub(h)?)?)?)
    }
}

/// Decoder conditioning vector `[z ; y]`: the structural latent with the
/// scalar property appended.
pub(crate) fn condition(z: &Var, y: &Var) -> Result<Var, ModelError> {
    Ok(z.concat_cols(y)?)
}
