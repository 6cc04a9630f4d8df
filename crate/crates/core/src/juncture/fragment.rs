//! Extraction of cluster subgraphs as standalone molecules.

use crate::chem::{ring_membership, Atom, Bond, BondOrder, MolGraph};

/// A cluster's induced subgraph as a sanitized molecule, with the mapping
/// from fragment atom indices back to the source molecule.
#[derive(Debug, Clone)]
pub struct Fragment {
    pub graph: MolGraph,
    pub to_mol: Vec<usize>,
}

/// Induced subgraph of `mol` on `atoms` (sorted ascending), fixed up so it
/// stands alone as a molecule:
///
/// - aromatic flags are kept only for atoms that remain cyclic in the
///   fragment; aromatic bond orders touching a cleared atom become single;
/// - an atom that keeps its full bond set keeps its exact hydrogen count;
///   an atom that lost bonds to other clusters has hydrogens re-derived
///   from its valence.
pub fn extract_fragment(mol: &MolGraph, atoms: &[usize]) -> Fragment {
    debug_assert!(atoms.windows(2).all(|w| w[0] < w[1]), "atoms sorted+unique");
    let mut frag_index = vec![usize::MAX; mol.n_atoms()];
    for (k, &a) in atoms.iter().enumerate() {
        frag_index[a] = k;
    }

    let mut frag_atoms: Vec<Atom> = atoms.iter().map(|&a| mol.atoms[a]).collect();
    let mut frag_bonds: Vec<Bond> = Vec::new();
    for bond in &mol.bonds {
        let (fa, fb) = (frag_index[bond.a], frag_index[bond.b]);
        if fa != usize::MAX && fb != usize::MAX {
            frag_bonds.push(Bond {
                a: fa,
                b: fb,
                order: bond.order,
            });
        }
    }

    // Aromaticity survives extraction only inside rings of the fragment.
    let probe = MolGraph::new(frag_atoms.clone(), frag_bonds.clone())
        .expect("induced subgraph is structurally well formed");
    let in_ring = ring_membership(&probe);
    for (k, atom) in frag_atoms.iter_mut().enumerate() {
        if atom.aromatic && !in_ring.atoms[k] {
            atom.aromatic = false;
        }
    }
    for bond in frag_bonds.iter_mut() {
        if bond.order == BondOrder::Aromatic
            && !(frag_atoms[bond.a].aromatic && frag_atoms[bond.b].aromatic)
        {
            bond.order = BondOrder::Single;
        }
    }

    // Hydrogen counts: exact for atoms whose whole neighborhood is in the
    // fragment, re-derived otherwise.
    for (k, &a) in atoms.iter().enumerate() {
        let full_degree = probe.degree(k) == mol.degree(a);
        if full_degree {
            frag_atoms[k].fixed_h = true;
            frag_atoms[k].implicit_h = mol.atoms[a].implicit_h;
        } else {
            frag_atoms[k].fixed_h = false;
            frag_atoms[k].implicit_h = 0;
        }
    }

    let mut graph =
        MolGraph::new(frag_atoms, frag_bonds).expect("induced subgraph is structurally well formed");
    graph
        .sanitize()
        .expect("fragment of a sanitized molecule sanitizes");
    Fragment {
        graph,
        to_mol: atoms.to_vec(),
    }
}
