//! Fixed featurizations of molecules for the neural modules: per-atom and
//! per-bond one-hots, directed-edge message-passing structure, and pooled
//! fragment descriptors. Everything here is a plain tensor (a leaf on the
//! tape); no parameters are involved.

use crate::chem::element::{all_elements, element_index};
use crate::chem::{BondOrder, MolGraph};
use crate::tensor::Tensor;

pub fn n_elements() -> usize {
    all_elements().len()
}

/// Per-atom feature width: element one-hot, formal charge, aromatic flag.
pub fn atom_dim() -> usize {
    n_elements() + 2
}

/// Bond-order one-hot width (single, double, triple, aromatic).
pub const BOND_DIM: usize = 4;

/// Per-directed-edge input width: source atom features plus bond one-hot.
pub fn edge_dim() -> usize {
    atom_dim() + BOND_DIM
}

/// Pooled-fragment descriptor width: element counts, atom/bond/aromatic
/// counts, total charge, bond-order counts.
pub fn pool_dim() -> usize {
    n_elements() + 4 + BOND_DIM
}

fn bond_slot(order: BondOrder) -> usize {
    match order {
        BondOrder::Single => 0,
        BondOrder::Double => 1,
        BondOrder::Triple => 2,
        BondOrder::Aromatic => 3,
    }
}

/// One row per atom: element one-hot, formal charge, aromatic flag.
pub fn atom_features(mol: &MolGraph) -> Tensor {
    let d = atom_dim();
    let mut out = Tensor::zeros(mol.n_atoms(), d);
    for (i, atom) in mol.atoms.iter().enumerate() {
        out.set(i, element_index(atom.element), 1.0);
        out.set(i, d - 2, f64::from(atom.formal_charge));
        out.set(i, d - 1, if atom.aromatic { 1.0 } else { 0.0 });
    }
    out
}

/// Directed-edge structure for bond-message passing. Edge `2k` runs
/// `a(k) → b(k)` of bond `k` and edge `2k+1` runs the reverse.
#[derive(Debug, Clone)]
pub struct EdgeIndex {
    /// Source atom of each directed edge.
    pub src: Vec<usize>,
    /// Target atom of each directed edge.
    pub dst: Vec<usize>,
    /// `[2E × edge_dim]`: source-atom features plus bond one-hot.
    pub edge_input: Tensor,
    /// `[2E × 2E]` 0/1 matrix: row e sums messages on edges `w → u` for
    /// `e = u → v`, excluding the reverse edge `v → u`.
    pub msg_adj: Tensor,
    /// `[n × 2E]` 0/1 matrix: row u sums messages on edges `w → u`.
    pub atom_adj: Tensor,
}

impl EdgeIndex {
    pub fn new(mol: &MolGraph, atom_feats: &Tensor) -> EdgeIndex {
        let n = mol.n_atoms();
        let m = 2 * mol.n_bonds();
        let d_atom = atom_dim();

        let mut src = Vec::with_capacity(m);
        let mut dst = Vec::with_capacity(m);
        let mut edge_input = Tensor::zeros(m, edge_dim());
        for (k, bond) in mol.bonds.iter().enumerate() {
            for (e, (u, v)) in [(bond.a, bond.b), (bond.b, bond.a)].into_iter().enumerate() {
                let row = 2 * k + e;
                src.push(u);
                dst.push(v);
                for c in 0..d_atom {
                    edge_input.set(row, c, atom_feats.get(u, c));
                }
                edge_input.set(row, d_atom + bond_slot(bond.order), 1.0);
            }
        }

        let mut msg_adj = Tensor::zeros(m, m);
        let mut atom_adj = Tensor::zeros(n, m);
        for e in 0..m {
            atom_adj.set(dst[e], e, 1.0);
            for f in 0..m {
                if dst[f] == src[e] && src[f] != dst[e] {
                    msg_adj.set(e, f, 1.0);
                }
            }
        }

        EdgeIndex {
            src,
            dst,
            edge_input,
            msg_adj,
            atom_adj,
        }
    }

    pub fn n_edges(&self) -> usize {
        self.src.len()
    }
}

/// Whole-graph descriptor used by the attachment scorer: element counts,
/// atom/bond/aromatic-atom counts, total formal charge, bond-order counts.
pub fn fragment_pool(mol: &MolGraph) -> Vec<f64> {
    let ne = n_elements();
    let mut out = vec![0.0; pool_dim()];
    for atom in &mol.atoms {
        out[element_index(atom.element)] += 1.0;
        if atom.aromatic {
            out[ne + 2] += 1.0;
        }
        out[ne + 3] += f64::from(atom.formal_charge);
    }
    out[ne] = mol.n_atoms() as f64;
    out[ne + 1] = mol.n_bonds() as f64;
    for bond in &mol.bonds {
        out[ne + 4 + bond_slot(bond.order)] += 1.0;
    }
    out
}
