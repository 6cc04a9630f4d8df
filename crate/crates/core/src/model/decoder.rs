//! Property-conditioned structure decoders.
//!
//! The tree decoder threads one GRU state through a depth-first traversal
//! of the junction tree: at each step a topological head decides
//! expand-vs-backtrack and a label head picks the child cluster. The graph
//! decoder scores attachment candidates for each tree edge. Teacher-forced
//! variants walk the ground-truth structure and return cross-entropy
//! losses; sampling builds the assembly as it goes, masking label choices
//! to clusters that can legally glue onto it, so every sampled molecule
//! assembles and sanitizes.
//!
//! Teacher traversals are rooted and ordered canonically (by recursive
//! subtree label keys), which makes the losses independent of the input
//! atom numbering.

use rand::Rng;

use crate::chem::{canonical_atom_order, MolGraph};
use crate::juncture::{
    candidates_with_truth, decompose, enumerate_attachments, extract_fragment,
    ground_truth_attachments, Assembly, Attachment, Cluster, ClusterKind, JunctionTree,
};
use crate::tensor::{Tensor, Var};

use super::encoder::{encode_graph, GraphEncoding};
use super::features::{atom_dim, pool_dim};
use super::{Bound, ModelError, ModelState};

const MASK_OFF: f64 = -1e9;

/// Recursive label key of the subtree at `node` looking away from
/// `parent`; equal keys mean isomorphic labeled subtrees.
fn subtree_key(tree: &JunctionTree, node: usize, parent: Option<usize>) -> String {
    let mut child_keys: Vec<String> = tree
        .neighbors(node)
        .into_iter()
        .filter(|&nb| Some(nb) != parent)
        .map(|nb| subtree_key(tree, nb, Some(node)))
        .collect();
    child_keys.sort();
    let mut out = String::with_capacity(tree.clusters[node].canonical_label.len() + 2);
    out.push_str(&tree.clusters[node].canonical_label);
    out.push('(');
    for k in &child_keys {
        out.push_str(k);
        out.push(',');
    }
    out.push(')');
    out
}

/// A canonical rooted view of a junction tree: the root minimizing the
/// rooted key, children ordered by subtree key, and the depth-first edge
/// sequence. Depends only on the labeled tree shape, not on cluster or
/// atom numbering.
#[derive(Debug, Clone)]
pub(crate) struct CanonicalDfs {
    pub root: usize,
    pub children: Vec<Vec<usize>>,
    pub edges: Vec<(usize, usize)>,
}

pub(crate) fn canonical_dfs(tree: &JunctionTree) -> CanonicalDfs {
    let root = (0..tree.n_clusters())
        .min_by_key(|&r| subtree_key(tree, r, None))
        .expect("trees are non-empty");
    let mut dfs = CanonicalDfs {
        root,
        children: vec![Vec::new(); tree.n_clusters()],
        edges: Vec::new(),
    };
    order_children(tree, root, None, &mut dfs);
    dfs
}

fn order_children(tree: &JunctionTree, node: usize, parent: Option<usize>, dfs: &mut CanonicalDfs) {
    let mut kids: Vec<(String, usize)> = tree
        .neighbors(node)
        .into_iter()
        .filter(|&nb| Some(nb) != parent)
        .map(|nb| (subtree_key(tree, nb, Some(node)), nb))
        .collect();
    kids.sort();
    for (_, nb) in kids {
        dfs.children[node].push(nb);
        dfs.edges.push((node, nb));
        order_children(tree, nb, Some(node), dfs);
    }
}

/// Log-probabilities of the two topological moves, column 0 = backtrack
/// and column 1 = expand.
fn topo_log_probs(bound: &Bound<'_>, h: &Var, cond: &Var) -> Result<Var, ModelError> {
    Ok(h.concat_cols(cond)?
        .matmul(bound.var("dec_t.topo.w"))?
        .add_row(bound.var("dec_t.topo.b"))?
        .log_softmax())
}

/// Label logits with masked-out entries pushed to an effective −inf.
fn label_logits(bound: &Bound<'_>, h: &Var, cond: &Var, mask: &[bool]) -> Result<Var, ModelError> {
    let tape = h.tape();
    let logits = h
        .concat_cols(cond)?
        .matmul(bound.var("dec_t.label.w"))?
        .add_row(bound.var("dec_t.label.b"))?;
    if mask.iter().all(|&m| m) {
        return Ok(logits);
    }
    let row: Vec<f64> = mask.iter().map(|&m| if m { 0.0 } else { MASK_OFF }).collect();
    let penalty = tape.leaf(Tensor::from_vec(1, mask.len(), row));
    Ok(logits.add(&penalty)?)
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Teacher-forced tree decoding results. Losses are mean-reduced over
/// their decision counts; `loss` is their sum.
pub struct TreeTeacherOut {
    pub loss: Var,
    pub topo_loss: Var,
    pub label_loss: Var,
    pub n_topo: usize,
    pub n_label: usize,
    /// Label decisions whose argmax matches the target (reconstruction
    /// accuracy under teacher forcing).
    pub label_correct: usize,
}

/// Walks the ground-truth tree depth-first and scores every topological
/// and label decision against the decoder heads.
pub fn decode_tree_teacher(
    bound: &Bound<'_>,
    tree: &JunctionTree,
    cond: &Var,
) -> Result<TreeTeacherOut, ModelError> {
    if tree.n_clusters() > bound.config().node_cap {
        return Err(ModelError::DecodeOverflow);
    }
    let state = bound.state();
    let label_ids: Vec<usize> = tree
        .clusters
        .iter()
        .map(|c| state.label_id(&c.canonical_label))
        .collect::<Result<_, _>>()?;
    let dfs = canonical_dfs(tree);

    let mut acc = TreeAcc {
        topo: Vec::new(),
        label: Vec::new(),
        label_correct: 0,
    };
    let embed = bound.var("embed.label");
    let mut h = cond
        .matmul(bound.var("dec_t.init.w"))?
        .add_row(bound.var("dec_t.init.b"))?
        .tanh();

    // the root's own label is the first decision, over the full vocab
    let all = vec![true; state.vocab().len()];
    label_step(bound, &mut acc, &h, cond, &all, label_ids[dfs.root])?;
    h = bound
        .cell("dec_t.gru")
        .apply(&embed.gather_rows(&[label_ids[dfs.root]])?, &h)?;

    h = walk(bound, tree, &label_ids, &dfs, dfs.root, h, cond, &mut acc)?;
    let _ = h;

    let n_topo = acc.topo.len();
    let n_label = acc.label.len();
    let topo_loss = mean_of(&acc.topo, bound)?;
    let label_loss = mean_of(&acc.label, bound)?;
    Ok(TreeTeacherOut {
        loss: topo_loss.add(&label_loss)?,
        topo_loss,
        label_loss,
        n_topo,
        n_label,
        label_correct: acc.label_correct,
    })
}

struct TreeAcc {
    topo: Vec<Var>,
    label: Vec<Var>,
    label_correct: usize,
}

fn label_step(
    bound: &Bound<'_>,
    acc: &mut TreeAcc,
    h: &Var,
    cond: &Var,
    mask: &[bool],
    target: usize,
) -> Result<(), ModelError> {
    let logits = label_logits(bound, h, cond, mask)?;
    let ls = logits.log_softmax();
    if argmax(ls.value().data()) == target {
        acc.label_correct += 1;
    }
    acc.label.push(ls.slice_cols(target, target + 1)?.neg());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn walk(
    bound: &Bound<'_>,
    tree: &JunctionTree,
    label_ids: &[usize],
    dfs: &CanonicalDfs,
    node: usize,
    mut h: Var,
    cond: &Var,
    acc: &mut TreeAcc,
) -> Result<Var, ModelError> {
    let state = bound.state();
    let embed = bound.var("embed.label");
    for &child in &dfs.children[node] {
        let ls = topo_log_probs(bound, &h, cond)?;
        acc.topo.push(ls.slice_cols(1, 2)?.neg());
        let mut mask = state.attachable(label_ids[node]).as_ref().clone();
        // the ground truth is attachable by construction; keep the target
        // scorable even if the isolation check were ever stricter
        mask[label_ids[child]] = true;
        label_step(bound, acc, &h, cond, &mask, label_ids[child])?;
        h = bound
            .cell("dec_t.gru")
            .apply(&embed.gather_rows(&[label_ids[child]])?, &h)?;
        h = walk(bound, tree, label_ids, dfs, child, h, cond, acc)?;
    }
    let ls = topo_log_probs(bound, &h, cond)?;
    acc.topo.push(ls.slice_cols(0, 1)?.neg());
    h = bound
        .cell("dec_t.gru")
        .apply(bound.var("dec_t.backtrack"), &h)?;
    Ok(h)
}

fn mean_of(terms: &[Var], bound: &Bound<'_>) -> Result<Var, ModelError> {
    let tape = bound.var("embed.label").tape();
    let mut total: Option<Var> = None;
    for t in terms {
        total = Some(match total {
            None => t.clone(),
            Some(acc) => acc.add(t)?,
        });
    }
    Ok(match total {
        None => tape.leaf(Tensor::scalar(0.0)),
        Some(t) => t.scale(1.0 / terms.len() as f64),
    })
}

/// One attachment candidate's precomputed scorer inputs.
#[derive(Debug, Clone)]
pub(crate) struct CandFeat {
    /// Original-molecule atoms of the host side of each glued pair; the
    /// scorer gathers encoder states at these rows.
    host_orig: Vec<usize>,
    /// Summed glued-child-atom features, pooled child descriptor, and the
    /// pair count.
    local: Vec<f64>,
}

/// All candidates for one tree edge plus the ground-truth index.
#[derive(Debug, Clone)]
pub(crate) struct EdgeDecision {
    truth: usize,
    cands: Vec<CandFeat>,
}

/// Replays the ground-truth assembly along the canonical DFS and records,
/// for every tree edge, the candidate set with its scorer features and the
/// index of the true gluing. This is the expensive enumeration; it runs
/// once per molecule and the result is reused every epoch.
pub(crate) fn teacher_decisions(
    state: &ModelState,
    mol: &MolGraph,
    tree: &JunctionTree,
    label_ids: &[usize],
    dfs: &CanonicalDfs,
    atts: &[Attachment],
) -> Result<Vec<EdgeDecision>, ModelError> {
    let n = tree.n_clusters();
    // canonical fragment position -> original molecule atom, per cluster
    let canon2orig: Vec<Vec<usize>> = tree
        .clusters
        .iter()
        .map(|c| {
            let frag = extract_fragment(mol, &c.atom_indices);
            canonical_atom_order(&frag.graph)
                .into_iter()
                .map(|frag_idx| frag.to_mol[frag_idx])
                .collect()
        })
        .collect();

    let root_frag = state.fragment(label_ids[dfs.root]);
    let mut assembly = Assembly::from_fragment(root_frag);
    let mut placed: Vec<Vec<usize>> = vec![Vec::new(); n];
    placed[dfs.root] = (0..root_frag.n_atoms()).collect();
    let mut orig_of: Vec<usize> = canon2orig[dfs.root].clone();

    let mut out = Vec::with_capacity(dfs.edges.len());
    for &(parent, child) in &dfs.edges {
        let att = atts
            .iter()
            .find(|a| a.child == child)
            .expect("one attachment per non-root cluster");
        let truth_pairs: Vec<(usize, usize)> = att
            .pairs
            .iter()
            .map(|&(p, c)| (placed[parent][p], c))
            .collect();
        let child_frag = state.fragment(label_ids[child]);
        let (cands, truth) = candidates_with_truth(
            &assembly,
            &placed[parent],
            child_frag,
            &truth_pairs,
            state.config().candidate_cap,
        )?;

        let feats = state.frag_feats(label_ids[child]);
        let pool = state.frag_pool(label_ids[child]);
        let cand_feats = cands
            .iter()
            .map(|cand| {
                let mut local = vec![0.0; atom_dim() + pool_dim() + 1];
                for &(_, c) in &cand.pairs {
                    for col in 0..atom_dim() {
                        local[col] += feats.get(c, col);
                    }
                }
                local[atom_dim()..atom_dim() + pool_dim()].copy_from_slice(pool);
                local[atom_dim() + pool_dim()] = cand.pairs.len() as f64;
                CandFeat {
                    host_orig: cand.pairs.iter().map(|&(h, _)| orig_of[h]).collect(),
                    local,
                }
            })
            .collect();
        out.push(EdgeDecision {
            truth,
            cands: cand_feats,
        });

        let chosen = &cands[truth];
        for (c_atom, &asm_atom) in chosen.child_map.iter().enumerate() {
            if asm_atom >= orig_of.len() {
                orig_of.resize(asm_atom + 1, usize::MAX);
            }
            orig_of[asm_atom] = canon2orig[child][c_atom];
        }
        placed[child] = chosen.child_map.clone();
        assembly = chosen.assembly.clone();
    }
    Ok(out)
}

/// Teacher-forced graph decoding results. The loss is the mean candidate
/// cross-entropy over all tree edges (edges with a single candidate
/// contribute exactly zero).
pub struct GraphTeacherOut {
    pub loss: Var,
    pub n_edges: usize,
    /// Edges that required an actual choice (more than one candidate).
    pub n_decisions: usize,
    /// Of those, how many the argmax got right.
    pub correct: usize,
}

fn score_candidate(
    bound: &Bound<'_>,
    enc: &GraphEncoding,
    cand: &CandFeat,
    cond: &Var,
) -> Result<Var, ModelError> {
    let tape = cond.tape();
    let host = enc.atom_states.gather_rows(&cand.host_orig)?.sum_rows();
    let local = tape.leaf(Tensor::from_vec(1, cand.local.len(), cand.local.clone()));
    let desc = host.concat_cols(&local)?.concat_cols(cond)?;
    let hid = desc
        .matmul(bound.var("dec_g.score1.w"))?
        .add_row(bound.var("dec_g.score1.b"))?
        .tanh();
    Ok(hid
        .matmul(bound.var("dec_g.score2.w"))?
        .add_row(bound.var("dec_g.score2.b"))?)
}

pub(crate) fn decode_graph_decisions(
    bound: &Bound<'_>,
    decisions: &[EdgeDecision],
    enc: &GraphEncoding,
    cond: &Var,
) -> Result<GraphTeacherOut, ModelError> {
    let tape = cond.tape();
    let mut total: Option<Var> = None;
    let mut n_decisions = 0;
    let mut correct = 0;
    for decision in decisions {
        if decision.cands.len() < 2 {
            continue;
        }
        n_decisions += 1;
        let mut logits: Option<Var> = None;
        for cand in &decision.cands {
            let s = score_candidate(bound, enc, cand, cond)?;
            logits = Some(match logits {
                None => s,
                Some(row) => row.concat_cols(&s)?,
            });
        }
        let ls = logits.expect("at least two candidates").log_softmax();
        if argmax(ls.value().data()) == decision.truth {
            correct += 1;
        }
        let ce = ls.slice_cols(decision.truth, decision.truth + 1)?.neg();
        total = Some(match total {
            None => ce,
            Some(acc) => acc.add(&ce)?,
        });
    }
    let loss = match total {
        None => tape.leaf(Tensor::scalar(0.0)),
        Some(t) => t.scale(1.0 / decisions.len() as f64),
    };
    Ok(GraphTeacherOut {
        loss,
        n_edges: decisions.len(),
        n_decisions,
        correct,
    })
}

/// Enumerates and scores attachments for the ground-truth tree of `mol`,
/// returning the mean candidate cross-entropy. The per-edge candidate
/// work is recomputed here; training uses the cached variant through
/// [`super::Prepared`].
pub fn decode_graph_teacher(
    bound: &Bound<'_>,
    mol: &MolGraph,
    tree: &JunctionTree,
    enc: &GraphEncoding,
    cond: &Var,
) -> Result<GraphTeacherOut, ModelError> {
    let state = bound.state();
    let label_ids: Vec<usize> = tree
        .clusters
        .iter()
        .map(|c| state.label_id(&c.canonical_label))
        .collect::<Result<_, _>>()?;
    let dfs = canonical_dfs(tree);
    let mut rooted = tree.clone();
    rooted.root = dfs.root;
    let atts = ground_truth_attachments(mol, &rooted);
    let decisions = teacher_decisions(state, mol, &rooted, &label_ids, &dfs, &atts)?;
    decode_graph_decisions(bound, &decisions, enc, cond)
}

/// A molecule sampled from the decoders, with its junction tree (cluster
/// atom indices refer to the returned molecule).
pub struct Sampled {
    pub mol: MolGraph,
    pub tree: JunctionTree,
}

/// Samples a junction tree and its assembly from `(z_T, z_G, y)`.
///
/// Topology and label decisions are drawn from the decoder distributions;
/// label choices are masked to clusters with at least one legal gluing
/// onto the current assembly, expansion is forced into backtracking when
/// no cluster fits or the node cap is reached, and each gluing takes the
/// argmax attachment candidate. Every return is therefore a sanitized,
/// valid molecule.
pub fn sample_molecule<R: Rng>(
    state: &ModelState,
    z_t: &Tensor,
    z_g: &Tensor,
    y: f64,
    rng: &mut R,
) -> Result<Sampled, ModelError> {
    let tape = crate::tensor::Tape::new();
    let bound = state.bind(&tape);
    let vocab = state.vocab();

    let cond_row = |z: &Tensor| -> Tensor {
        let mut data = z.data().to_vec();
        data.push(y);
        Tensor::from_vec(1, data.len(), data)
    };
    let cond_t = tape.leaf(cond_row(z_t));
    let cond_g = tape.leaf(cond_row(z_g));

    let mut h = cond_t
        .matmul(bound.var("dec_t.init.w"))?
        .add_row(bound.var("dec_t.init.b"))?
        .tanh();

    // root label: sampled over the full vocabulary
    let all = vec![true; vocab.len()];
    let root_label = sample_label(&bound, &h, &cond_t, &all, rng)?;
    let embed = bound.var("embed.label");
    h = bound
        .cell("dec_t.gru")
        .apply(&embed.gather_rows(&[root_label])?, &h)?;

    let root_frag = state.fragment(root_label).clone();
    let mut gen = Generation {
        state,
        assembly: Assembly::from_fragment(&root_frag),
        mol: root_frag.clone(),
        labels: vec![root_label],
        placed: vec![(0..root_frag.n_atoms()).collect()],
        edges: Vec::new(),
    };
    grow(&bound, &mut gen, 0, &mut h, &cond_t, &cond_g, rng)?;

    let clusters = gen
        .labels
        .iter()
        .zip(&gen.placed)
        .map(|(&label, placed)| {
            let frag = state.fragment(label);
            let kind = match frag.n_atoms() {
                1 => ClusterKind::Singleton,
                2 => ClusterKind::Bond,
                _ => ClusterKind::Ring,
            };
            let mut atom_indices = placed.clone();
            atom_indices.sort_unstable();
            Cluster {
                kind,
                atom_indices,
                canonical_label: vocab.label(label).to_string(),
            }
        })
        .collect();
    Ok(Sampled {
        mol: gen.mol,
        tree: JunctionTree {
            clusters,
            edges: gen.edges,
            root: 0,
        },
    })
}

struct Generation<'a> {
    state: &'a ModelState,
    assembly: Assembly,
    /// Sanitized molecule of the current assembly (same atom indexing).
    mol: MolGraph,
    labels: Vec<usize>,
    placed: Vec<Vec<usize>>,
    edges: Vec<(usize, usize)>,
}

fn sample_label<R: Rng>(
    bound: &Bound<'_>,
    h: &Var,
    cond: &Var,
    mask: &[bool],
    rng: &mut R,
) -> Result<usize, ModelError> {
    let ls = label_logits(bound, h, cond, mask)?.log_softmax();
    let probs: Vec<f64> = ls.value().data().iter().map(|&v| v.exp()).collect();
    Ok(sample_categorical(&probs, rng))
}

fn sample_categorical<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let draw: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if draw < acc {
            return i;
        }
    }
    // numerical slack: fall back to the last nonzero entry
    probs
        .iter()
        .rposition(|&p| p > 0.0)
        .expect("probabilities sum to one")
}

#[allow(clippy::too_many_arguments)]
fn grow<R: Rng>(
    bound: &Bound<'_>,
    gen: &mut Generation<'_>,
    node: usize,
    h: &mut Var,
    cond_t: &Var,
    cond_g: &Var,
    rng: &mut R,
) -> Result<(), ModelError> {
    let state = gen.state;
    let cap = state.config().node_cap;
    let embed = bound.var("embed.label");

    loop {
        if gen.labels.len() >= cap {
            break; // cap reached: force backtracking everywhere
        }
        let p_expand = topo_log_probs(bound, h, cond_t)?.value().get(0, 1).exp();
        if rng.gen::<f64>() >= p_expand {
            break;
        }

        // mask to labels that can actually glue onto the current assembly
        // at this cluster's atoms
        let prefilter = state.attachable(gen.labels[node]);
        let mut feasible = vec![false; state.vocab().len()];
        let mut any = false;
        for j in 0..state.vocab().len() {
            if prefilter[j]
                && enumerate_attachments(&gen.assembly, &gen.placed[node], state.fragment(j), 1)
                    .is_ok()
            {
                feasible[j] = true;
                any = true;
            }
        }
        if !any {
            break; // nothing fits here: forced backtrack
        }

        let child_label = sample_label(bound, h, cond_t, &feasible, rng)?;
        let cands = enumerate_attachments(
            &gen.assembly,
            &gen.placed[node],
            state.fragment(child_label),
            state.config().candidate_cap,
        )?;

        // score candidates against the current assembly's encoding
        let chosen = if cands.len() == 1 {
            0
        } else {
            let enc = encode_graph(bound, &gen.mol)?;
            let feats = state.frag_feats(child_label);
            let pool = state.frag_pool(child_label);
            let mut scores = Vec::with_capacity(cands.len());
            for cand in &cands {
                let mut local = vec![0.0; atom_dim() + pool_dim() + 1];
                for &(_, c) in &cand.pairs {
                    for col in 0..atom_dim() {
                        local[col] += feats.get(c, col);
                    }
                }
                local[atom_dim()..atom_dim() + pool_dim()].copy_from_slice(pool);
                local[atom_dim() + pool_dim()] = cand.pairs.len() as f64;
                let feat = CandFeat {
                    host_orig: cand.pairs.iter().map(|&(h, _)| h).collect(),
                    local,
                };
                scores.push(score_candidate(bound, &enc, &feat, cond_g)?.item());
            }
            argmax(&scores)
        };
        let cand = &cands[chosen];

        let child = gen.labels.len();
        gen.labels.push(child_label);
        gen.placed.push(cand.child_map.clone());
        gen.edges.push((node, child));
        gen.assembly = cand.assembly.clone();
        gen.mol = cand.merged.clone();

        *h = bound
            .cell("dec_t.gru")
            .apply(&embed.gather_rows(&[child_label])?, h)?;
        grow(bound, gen, child, h, cond_t, cond_g, rng)?;
    }

    *h = bound.cell("dec_t.gru").apply(bound.var("dec_t.backtrack"), h)?;
    Ok(())
}

/// Convenience wrapper: teacher-forced tree+graph losses for a molecule,
/// recomputing decomposition and candidates. Tests and one-off calls only.
pub fn teacher_losses(
    bound: &Bound<'_>,
    mol: &MolGraph,
    cond_t: &Var,
    cond_g: &Var,
) -> Result<(TreeTeacherOut, GraphTeacherOut), ModelError> {
    let tree = decompose(mol);
    let enc = encode_graph(bound, mol)?;
    let tree_out = decode_tree_teacher(bound, &tree, cond_t)?;
    let graph_out = decode_graph_teacher(bound, mol, &tree, &enc, cond_g)?;
    Ok((tree_out, graph_out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::{is_valid, parse_smiles, write_smiles};
    use crate::model::testutil::tiny_state;
    use crate::tensor::Tape;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const CORPUS: &[&str] = &[
        "CCO",
        "c1ccccc1O",
        "CC(=O)N",
        "C1CC1C",
        "CCN(C)C",
        "c1ccncc1",
        "CC(C)CO",
    ];

    fn cond_pair(state: &ModelState, tape: &Tape, seed: u64, y: f64) -> (Var, Var) {
        let z = state.config().z_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut make = || {
            let mut data = Tensor::randn(1, z, 1.0, &mut rng).data().to_vec();
            data.push(y);
            tape.leaf(Tensor::from_vec(1, z + 1, data))
        };
        (make(), make())
    }

    #[test]
    fn single_cluster_tree_makes_one_label_and_one_topo_decision() {
        let state = tiny_state(CORPUS, 10, 5, 0);
        let mol = parse_smiles("CC").unwrap();
        let tree = decompose(&mol);
        assert_eq!(tree.n_clusters(), 1);
        let tape = Tape::new();
        let bound = state.bind(&tape);
        let (cond_t, _) = cond_pair(&state, &tape, 1, 0.3);
        let out = decode_tree_teacher(&bound, &tree, &cond_t).unwrap();
        assert_eq!(out.n_label, 1);
        assert_eq!(out.n_topo, 1);
    }

    #[test]
    fn decision_counts_match_tree_size() {
        let state = tiny_state(CORPUS, 10, 5, 0);
        let mol = parse_smiles("CC(C)CO").unwrap();
        let tree = decompose(&mol);
        let n = tree.n_clusters();
        let tape = Tape::new();
        let bound = state.bind(&tape);
        let (cond_t, _) = cond_pair(&state, &tape, 2, -0.5);
        let out = decode_tree_teacher(&bound, &tree, &cond_t).unwrap();
        assert_eq!(out.n_label, n);
        assert_eq!(out.n_topo, 2 * n - 1);
    }

    #[test]
    fn initial_losses_match_uniform_decision_entropy() {
        // zero-initialized decision heads: every label distribution is
        // uniform over its mask and every topo probability is one half
        let state = tiny_state(CORPUS, 10, 5, 4);
        let v = state.vocab().len() as f64;
        let mol = parse_smiles("CCN(C)C").unwrap();
        let tree = decompose(&mol);
        let tape = Tape::new();
        let bound = state.bind(&tape);
        let (cond_t, cond_g) = cond_pair(&state, &tape, 3, 0.0);

        let out = decode_tree_teacher(&bound, &tree, &cond_t).unwrap();
        assert!((out.topo_loss.item() - (2.0f64).ln()).abs() < 1e-9);
        // masked decisions are uniform over fewer labels, so the mean sits
        // at or below ln|vocab|, and the root decision alone equals it
        assert!(out.label_loss.item() <= v.ln() + 1e-9);
        assert!(out.label_loss.item() > (v.ln()) * 0.5);

        let enc = encode_graph(&bound, &mol).unwrap();
        let gout = decode_graph_teacher(&bound, &mol, &tree, &enc, &cond_g).unwrap();
        // the loss equals mean ln(#candidates) exactly at uniform init
        let dfs = canonical_dfs(&tree);
        let mut rooted = tree.clone();
        rooted.root = dfs.root;
        let atts = ground_truth_attachments(&mol, &rooted);
        let label_ids: Vec<usize> = tree
            .clusters
            .iter()
            .map(|c| state.label_id(&c.canonical_label).unwrap())
            .collect();
        let decisions =
            teacher_decisions(&state, &mol, &rooted, &label_ids, &dfs, &atts).unwrap();
        let expect: f64 = decisions
            .iter()
            .map(|d| (d.cands.len() as f64).ln())
            .sum::<f64>()
            / decisions.len() as f64;
        assert!(
            (gout.loss.item() - expect).abs() < 1e-9,
            "{} vs {}",
            gout.loss.item(),
            expect
        );
    }

    #[test]
    fn teacher_losses_are_invariant_to_atom_reindexing() {
        let state = tiny_state(CORPUS, 10, 5, 8);
        let tape = Tape::new();
        let bound = state.bind(&tape);
        let (cond_t, cond_g) = cond_pair(&state, &tape, 5, 0.7);
        // two spellings of the same molecule with different atom orders
        let a = parse_smiles("CC(=O)N").unwrap();
        let b = parse_smiles("NC(C)=O").unwrap();
        let (ta, ga) = teacher_losses(&bound, &a, &cond_t, &cond_g).unwrap();
        let (tb, gb) = teacher_losses(&bound, &b, &cond_t, &cond_g).unwrap();
        assert!((ta.loss.item() - tb.loss.item()).abs() < 1e-9);
        assert!((ga.loss.item() - gb.loss.item()).abs() < 1e-9);
    }

    #[test]
    fn oversized_teacher_tree_overflows() {
        let mut state = tiny_state(CORPUS, 8, 4, 0);
        // shrink the cap below the tree size
        let smiles = "CCCCCCCCCC";
        let mol = parse_smiles(smiles).unwrap();
        let tree = decompose(&mol);
        let cfg = super::super::ModelConfig {
            node_cap: tree.n_clusters() - 1,
            ..*state.config()
        };
        state = ModelState::new(cfg, state.vocab().clone(), 0).unwrap();
        let tape = Tape::new();
        let bound = state.bind(&tape);
        let (cond_t, _) = cond_pair(&state, &tape, 6, 0.0);
        assert!(matches!(
            decode_tree_teacher(&bound, &tree, &cond_t),
            Err(ModelError::DecodeOverflow)
        ));
    }

    #[test]
    fn sampled_molecules_are_valid_and_reproducible() {
        let state = tiny_state(CORPUS, 10, 5, 21);
        let z = state.config().z_dim;
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let z_t = Tensor::randn(1, z, 1.0, &mut rng);
            let z_g = Tensor::randn(1, z, 1.0, &mut rng);
            let sampled = sample_molecule(&state, &z_t, &z_g, 0.1, &mut rng).unwrap();
            assert!(is_valid(&sampled.mol), "seed {seed} produced invalid mol");
            assert!(sampled.tree.n_clusters() <= state.config().node_cap);

            // identical draw reproduces the identical molecule
            let mut rng2 = ChaCha8Rng::seed_from_u64(seed);
            let z_t2 = Tensor::randn(1, z, 1.0, &mut rng2);
            let z_g2 = Tensor::randn(1, z, 1.0, &mut rng2);
            let again = sample_molecule(&state, &z_t2, &z_g2, 0.1, &mut rng2).unwrap();
            assert_eq!(write_smiles(&sampled.mol), write_smiles(&again.mol));
        }
    }

    #[test]
    fn sampling_respects_the_node_cap() {
        let mut state = tiny_state(CORPUS, 8, 4, 2);
        let cfg = super::super::ModelConfig {
            node_cap: 3,
            ..*state.config()
        };
        state = ModelState::new(cfg, state.vocab().clone(), 2).unwrap();
        // bias the topology head hard toward expansion
        let idx = state
            .names()
            .iter()
            .position(|n| n == "dec_t.topo.b")
            .unwrap();
        state.tensors_mut()[idx].set(0, 1, 25.0);
        let z = state.config().z_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let z_t = Tensor::randn(1, z, 1.0, &mut rng);
        let z_g = Tensor::randn(1, z, 1.0, &mut rng);
        let sampled = sample_molecule(&state, &z_t, &z_g, 0.0, &mut rng).unwrap();
        assert!(is_valid(&sampled.mol));
        assert_eq!(sampled.tree.n_clusters(), 3);
    }

    #[test]
    fn tree_and_graph_losses_feel_the_conditioning_signal() {
        // gradients with respect to the y entry of the conditioning vector
        // must be nonzero once the heads are away from their zero init
        let mut state = tiny_state(CORPUS, 10, 5, 13);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for (name, t) in state
            .names()
            .to_vec()
            .into_iter()
            .zip(state.tensors_mut())
        {
            if name.starts_with("dec_t.topo") || name.starts_with("dec_t.label")
                || name.starts_with("dec_g.score2")
            {
                let (r, c) = t.shape();
                *t = Tensor::randn(r, c, 0.3, &mut rng);
            }
        }
        let mol = parse_smiles("CC(=O)N").unwrap();
        let tree = decompose(&mol);
        let tape = Tape::new();
        let bound = state.bind(&tape);

        let z = state.config().z_dim;
        let z_row = tape.leaf(Tensor::randn(1, z, 1.0, &mut rng));
        let y_var = tape.leaf(Tensor::scalar(0.4));
        let cond = z_row.concat_cols(&y_var).unwrap();

        let enc = encode_graph(&bound, &mol).unwrap();
        let tree_out = decode_tree_teacher(&bound, &tree, &cond).unwrap();
        let graph_out = decode_graph_teacher(&bound, &mol, &tree, &enc, &cond).unwrap();
        let loss = tree_out.loss.add(&graph_out.loss).unwrap();
        let grads = tape.backward(&loss).unwrap();
        assert!(
            grads.get(&y_var).item().abs() > 1e-12,
            "y gradient vanished: {}",
            grads.get(&y_var).item()
        );
    }

    #[test]
    fn canonical_dfs_is_stable_across_relabelings() {
        let a = decompose(&parse_smiles("CC(=O)NCC").unwrap());
        let b = decompose(&parse_smiles("CCNC(C)=O").unwrap());
        let da = canonical_dfs(&a);
        let db = canonical_dfs(&b);
        let labels = |tree: &JunctionTree, edges: &[(usize, usize)]| -> Vec<(String, String)> {
            edges
                .iter()
                .map(|&(p, c)| {
                    (
                        tree.clusters[p].canonical_label.clone(),
                        tree.clusters[c].canonical_label.clone(),
                    )
                })
                .collect()
        };
        assert_eq!(labels(&a, &da.edges), labels(&b, &db.edges));
    }
}
