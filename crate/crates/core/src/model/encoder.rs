//! Graph and tree encoders plus the Gaussian heads.
//!
//! The graph encoder passes messages along directed bonds for a fixed
//! number of rounds and reads out the mean atom state. The tree encoder
//! computes the belief-propagation message on every directed tree edge
//! (each message depends only on the messages further from it, so the
//! up-then-down schedule realizes all of them in two passes and the result
//! does not depend on which node is the root), then updates each node from
//! its summed incoming messages.

use crate::chem::MolGraph;
use crate::juncture::JunctionTree;
use crate::tensor::{Tensor, Var, LOGVAR_MAX, LOGVAR_MIN};

use super::features::{atom_features, EdgeIndex};
use super::{Bound, ModelError};

/// Output of the graph encoder: per-atom states (for the attachment
/// scorer) and their mean.
pub struct GraphEncoding {
    /// `[n_atoms × hidden]`.
    pub atom_states: Var,
    /// `[1 × hidden]` mean over atoms.
    pub h_g: Var,
}

/// Bond-message passing over the molecular graph.
pub fn encode_graph(bound: &Bound<'_>, mol: &MolGraph) -> Result<GraphEncoding, ModelError> {
    let tape = bound.var("embed.label").tape();
    let h = bound.config().hidden;

    let feats = atom_features(mol);
    let edges = EdgeIndex::new(mol, &feats);
    let n_edges = edges.n_edges();

    let atom_in = tape.leaf(feats);
    let edge_in = tape.leaf(edges.edge_input);
    let msg_adj = tape.leaf(edges.msg_adj);
    let atom_adj = tape.leaf(edges.atom_adj);

    let msg_cell = bound.cell("enc_g.msg");
    let mut messages = tape.leaf(Tensor::zeros(n_edges, h));
    for _ in 0..bound.config().mpnn_rounds {
        let incoming = msg_adj.matmul(&messages)?;
        messages = msg_cell.apply(&edge_in, &incoming)?;
    }

    let node_cell = bound.cell("enc_g.node");
    let gathered = atom_adj.matmul(&messages)?;
    let atom_states = node_cell.apply(&atom_in, &gathered)?;
    let h_g = atom_states.sum_rows().scale(1.0 / mol.n_atoms() as f64);
    Ok(GraphEncoding { atom_states, h_g })
}

/// Encodes a junction tree into `[1 × hidden]`. Fails on labels outside
/// the vocabulary.
pub fn encode_tree(bound: &Bound<'_>, tree: &JunctionTree) -> Result<Var, ModelError> {
    let tape = bound.var("embed.label").tape();
    let h = bound.config().hidden;
    let n = tree.n_clusters();

    let label_ids: Vec<usize> = tree
        .clusters
        .iter()
        .map(|c| bound.state().label_id(&c.canonical_label))
        .collect::<Result<_, _>>()?;
    let emb = bound.var("embed.label").gather_rows(&label_ids)?;

    // directed edge id: (from, to) → slot
    let mut edge_id = std::collections::HashMap::new();
    for &(i, j) in &tree.edges {
        edge_id.insert((i, j), edge_id.len());
        edge_id.insert((j, i), edge_id.len());
    }
    let mut messages: Vec<Option<Var>> = vec![None; edge_id.len()];
    let msg_cell = bound.cell("enc_t.msg");
    let zero_row = tape.leaf(Tensor::zeros(1, h));

    // sum of incoming messages at `node`, excluding the one from `except`
    let sum_incoming = |messages: &[Option<Var>], node: usize, except: Option<usize>| -> Var {
        let mut total: Option<Var> = None;
        for nb in tree.neighbors(node) {
            if Some(nb) == except {
                continue;
            }
            let m = messages[edge_id[&(nb, node)]]
                .as_ref()
                .expect("message schedule: dependency already computed");
            total = Some(match total {
                None => m.clone(),
                Some(t) => t.add(m).expect("message shapes agree"),
            });
        }
        total.unwrap_or_else(|| zero_row.clone())
    };

    let order = tree.parent_order();
    for &(parent, child) in order.iter().rev() {
        let inbox = sum_incoming(&messages, child, Some(parent));
        let x = emb.gather_rows(&[child])?;
        messages[edge_id[&(child, parent)]] = Some(msg_cell.apply(&x, &inbox)?);
    }
    for &(parent, child) in &order {
        let inbox = sum_incoming(&messages, parent, Some(child));
        let x = emb.gather_rows(&[parent])?;
        messages[edge_id[&(parent, child)]] = Some(msg_cell.apply(&x, &inbox)?);
    }

    let node_cell = bound.cell("enc_t.node");
    let mut total: Option<Var> = None;
    for node in 0..n {
        let inbox = sum_incoming(&messages, node, None);
        let x = emb.gather_rows(&[node])?;
        let state = node_cell.apply(&x, &inbox)?;
        total = Some(match total {
            None => state,
            Some(t) => t.add(&state)?,
        });
    }
    Ok(total.expect("trees are non-empty").scale(1.0 / n as f64))
}

fn gaussian_head(bound: &Bound<'_>, input: &Var, prefix: &str) -> Result<(Var, Var), ModelError> {
    let mu = input
        .matmul(bound.var(&format!("head.{prefix}_mu.w")))?
        .add_row(bound.var(&format!("head.{prefix}_mu.b")))?;
    let lv = input
        .matmul(bound.var(&format!("head.{prefix}_lv.w")))?
        .add_row(bound.var(&format!("head.{prefix}_lv.b")))?
        .clamp(LOGVAR_MIN, LOGVAR_MAX);
    Ok((mu, lv))
}

/// q(z_T | T): mean and clamped log-variance, each `[1 × z_dim]`.
pub fn posterior_t(bound: &Bound<'_>, h_t: &Var) -> Result<(Var, Var), ModelError> {
    gaussian_head(bound, h_t, "zt")
}

/// q(z_G | G): mean and clamped log-variance, each `[1 × z_dim]`.
pub fn posterior_g(bound: &Bound<'_>, h_g: &Var) -> Result<(Var, Var), ModelError> {
    gaussian_head(bound, h_g, "zg")
}

/// q(y | T, G): scalar mean and clamped log-variance from `[h_T ; h_G]`.
pub fn predict_y(bound: &Bound<'_>, h_t: &Var, h_g: &Var) -> Result<(Var, Var), ModelError> {
    let joint = h_t.concat_cols(h_g)?;
    let hid = joint
        .matmul(bound.var("head.y1.w"))?
        .add_row(bound.var("head.y1.b"))?
        .tanh();
    let out = hid
        .matmul(bound.var("head.y2.w"))?
        .add_row(bound.var("head.y2.b"))?;
    let mu = out.slice_cols(0, 1)?;
    let lv = out.slice_cols(1, 2)?.clamp(LOGVAR_MIN, LOGVAR_MAX);
    Ok((mu, lv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;
    use crate::juncture::decompose;
    use crate::model::testutil::tiny_state;
    use crate::tensor::Tape;

    const CORPUS: &[&str] = &["CCO", "c1ccccc1O", "CC(=O)N", "C1CC1C"];

    #[test]
    fn graph_encoding_is_permutation_invariant() {
        let state = tiny_state(CORPUS, 12, 6, 42);
        // parse two atom orderings of the same molecule
        let a = parse_smiles("CC(=O)N").unwrap();
        let b = parse_smiles("NC(C)=O").unwrap();
        let tape = Tape::new();
        let bound = state.bind(&tape);
        let ha = encode_graph(&bound, &a).unwrap().h_g.value();
        let hb = encode_graph(&bound, &b).unwrap().h_g.value();
        for (x, y) in ha.data().iter().zip(hb.data()) {
            assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }

    #[test]
    fn isolated_atom_encodes_without_messages() {
        let state = tiny_state(CORPUS, 12, 6, 42);
        let mol = parse_smiles("C").unwrap();
        let tape = Tape::new();
        let bound = state.bind(&tape);
        let enc = encode_graph(&bound, &mol).unwrap();
        assert_eq!(enc.atom_states.shape(), (1, 12));
        // readout equals the single atom state
        for (a, b) in enc.h_g.value().data().iter().zip(enc.atom_states.value().data()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn tree_encoding_does_not_depend_on_the_root() {
        let state = tiny_state(CORPUS, 12, 6, 7);
        // a path-shaped junction tree with three distinct labels
        let mol = parse_smiles("OCCN").unwrap();
        let tree = decompose(&mol);
        assert!(tree.n_clusters() >= 3);
        let tape = Tape::new();
        let bound = state.bind(&tape);
        let baseline = encode_tree(&bound, &tree).unwrap().value();
        for root in 0..tree.n_clusters() {
            let mut rerooted = tree.clone();
            rerooted.root = root;
            let other = encode_tree(&bound, &rerooted).unwrap().value();
            for (x, y) in baseline.data().iter().zip(other.data()) {
                assert!((x - y).abs() < 1e-9, "root {root}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn single_cluster_tree_is_its_node_state() {
        let state = tiny_state(CORPUS, 12, 6, 3);
        let mol = parse_smiles("CC").unwrap();
        let tree = decompose(&mol);
        assert_eq!(tree.n_clusters(), 1);
        let tape = Tape::new();
        let bound = state.bind(&tape);
        let h_t = encode_tree(&bound, &tree).unwrap();
        assert_eq!(h_t.shape(), (1, 12));
        // same computation by hand: node GRU over the label embedding with
        // zero inbox
        let id = state.label_id("CC").unwrap();
        let emb = bound.var("embed.label").gather_rows(&[id]).unwrap();
        let zero = tape.leaf(Tensor::zeros(1, 12));
        let by_hand = bound.cell("enc_t.node").apply(&emb, &zero).unwrap();
        assert_eq!(h_t.value().data(), by_hand.value().data());
    }

    #[test]
    fn oov_cluster_is_rejected() {
        let state = tiny_state(&["CCO"], 8, 4, 0);
        let mol = parse_smiles("c1ccccc1").unwrap();
        let tree = decompose(&mol);
        let tape = Tape::new();
        let bound = state.bind(&tape);
        assert!(matches!(
            encode_tree(&bound, &tree),
            Err(ModelError::OOVCluster { .. })
        ));
    }

    #[test]
    fn untrained_property_head_predicts_the_label_mean() {
        let state = tiny_state(CORPUS, 12, 6, 9);
        let mol = parse_smiles("CCO").unwrap();
        let tree = decompose(&mol);
        let tape = Tape::new();
        let bound = state.bind(&tape);
        let enc = encode_graph(&bound, &mol).unwrap();
        let h_t = encode_tree(&bound, &tree).unwrap();
        let (mu, lv) = predict_y(&bound, &h_t, &enc.h_g).unwrap();
        assert_eq!(mu.item(), 0.0);
        assert_eq!(lv.item(), 0.0);
    }

    #[test]
    fn posteriors_have_latent_shape_and_clamped_logvar() {
        let state = tiny_state(CORPUS, 12, 6, 11);
        let mol = parse_smiles("c1ccccc1O").unwrap();
        let tape = Tape::new();
        let bound = state.bind(&tape);
        let enc = encode_graph(&bound, &mol).unwrap();
        let (mu, lv) = posterior_g(&bound, &enc.h_g).unwrap();
        assert_eq!(mu.shape(), (1, 6));
        assert_eq!(lv.shape(), (1, 6));
        for &v in lv.value().data() {
            assert!((LOGVAR_MIN..=LOGVAR_MAX).contains(&v));
        }
    }
}
