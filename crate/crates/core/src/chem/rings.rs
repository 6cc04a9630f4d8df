//! Ring perception: smallest set of smallest rings plus cheap cyclic-edge
//! membership used by sanitization.

use super::MolGraph;
use std::collections::VecDeque;

pub(crate) struct RingMembership {
    pub atoms: Vec<bool>,
    pub bonds: Vec<bool>,
}

/// Marks atoms and bonds that lie on at least one cycle (non-bridge edges),
/// via an iterative bridge-finding DFS.
pub(crate) fn ring_membership(mol: &MolGraph) -> RingMembership {
    let n = mol.n_atoms();
    let mut disc = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut bond_cyclic = vec![false; mol.n_bonds()];
    let mut timer = 0usize;
    // iterative DFS: (atom, parent bond, next incident position)
    let mut stack: Vec<(usize, usize, usize)> = Vec::new();
    for root in 0..n {
        if disc[root] != usize::MAX {
            continue;
        }
        disc[root] = timer;
        low[root] = timer;
        timer += 1;
        stack.push((root, usize::MAX, 0));
        while let Some(&mut (a, pbond, ref mut pos)) = stack.last_mut() {
            if *pos < mol.incident(a).len() {
                let bi = mol.incident(a)[*pos];
                *pos += 1;
                if bi == pbond {
                    continue;
                }
                let b = mol.bonds[bi].other(a);
                if disc[b] == usize::MAX {
                    disc[b] = timer;
                    low[b] = timer;
                    timer += 1;
                    stack.push((b, bi, 0));
                } else {
                    low[a] = low[a].min(disc[b]);
                    bond_cyclic[bi] = true; // back edge
                }
            } else {
                stack.pop();
                if let Some(&mut (parent, _, _)) = stack.last_mut() {
                    low[parent] = low[parent].min(low[a]);
                    if low[a] <= disc[parent] {
                        // tree edge a->parent is on a cycle
                        bond_cyclic[pbond] = true;
                    }
                }
            }
        }
    }
    let mut atoms = vec![false; n];
    for (bi, cyc) in bond_cyclic.iter().enumerate() {
        if *cyc {
            atoms[mol.bonds[bi].a] = true;
            atoms[mol.bonds[bi].b] = true;
        }
    }
    RingMembership { atoms, bonds: bond_cyclic }
}

/// Smallest set of smallest rings.
///
/// Returns `bonds - atoms + components` rings as ascending atom-index sets.
/// Candidate cycles come from Horton's construction (shortest cycle through
/// each (vertex, edge) pair) plus the BFS fundamental cycles as a spanning
/// backstop; candidates are sorted by (size, atom set) and picked greedily
/// subject to GF(2) independence of their bond incidence vectors, which
/// makes the result deterministic.
pub fn ring_perception(mol: &MolGraph) -> Vec<Vec<usize>> {
    let n = mol.n_atoms();
    let m = mol.n_bonds();
    let components = count_components(mol);
    let cyclomatic = m + components;
    if cyclomatic <= n {
        return Vec::new();
    }
    let want = cyclomatic - n;

    let mut candidates: Vec<Cycle> = Vec::new();
    for root in 0..n {
        let (dist, parent_bond) = bfs(mol, root);
        for (bi, bond) in mol.bonds.iter().enumerate() {
            let (u, v) = (bond.a, bond.b);
            if dist[u] == usize::MAX || dist[v] == usize::MAX {
                continue;
            }
            if parent_bond[u] == Some(bi) || parent_bond[v] == Some(bi) {
                continue; // tree edge of this BFS
            }
            let pu = path_to_root(mol, u, &parent_bond);
            let pv = path_to_root(mol, v, &parent_bond);
            // paths must share only the root, else not a simple cycle
            if let Some(cycle) = join_paths(mol, &pu, &pv, bi, n, m) {
                candidates.push(cycle);
            }
        }
        if root == 0 {
            // fundamental cycles guarantee a full basis even when shortest
            // paths tie badly
            for (bi, bond) in mol.bonds.iter().enumerate() {
                if parent_bond[bond.a] == Some(bi) || parent_bond[bond.b] == Some(bi) {
                    continue;
                }
                if dist[bond.a] == usize::MAX {
                    continue;
                }
                let pu = path_to_root(mol, bond.a, &parent_bond);
                let pv = path_to_root(mol, bond.b, &parent_bond);
                if let Some(cycle) = fundamental_cycle(mol, &pu, &pv, bi, m) {
                    candidates.push(cycle);
                }
            }
        }
    }

    candidates.sort_by(|a, b| (a.atoms.len(), &a.atoms).cmp(&(b.atoms.len(), &b.atoms)));
    candidates.dedup_by(|a, b| a.bond_bits == b.bond_bits);

    let words = m.div_ceil(64);
    let mut basis: Vec<Vec<u64>> = Vec::new(); // row-reduced
    let mut picked = Vec::new();
    for cand in candidates {
        let mut vec = cand.bond_bits.clone();
        for row in &basis {
            let pivot = leading_bit(row);
            if pivot.is_some() && pivot == leading_bit(&vec) {
                xor_into(&mut vec, row);
            }
        }
        if vec.iter().any(|&w| w != 0) {
            // keep basis rows sorted by leading bit for the reduction above
            basis.push(vec);
            basis.sort_by_key(|r| std::cmp::Reverse(leading_bit(r)));
            picked.push(cand.atoms);
            if picked.len() == want {
                break;
            }
        }
        let _ = words;
    }
    picked
}

struct Cycle {
    atoms: Vec<usize>,
    bond_bits: Vec<u64>,
}

fn count_components(mol: &MolGraph) -> usize {
    let mut seen = vec![false; mol.n_atoms()];
    let mut comps = 0;
    for s in 0..mol.n_atoms() {
        if seen[s] {
            continue;
        }
        comps += 1;
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(a) = stack.pop() {
            for b in mol.neighbors(a) {
                if !seen[b] {
                    seen[b] = true;
                    stack.push(b);
                }
            }
        }
    }
    comps
}

fn bfs(mol: &MolGraph, root: usize) -> (Vec<usize>, Vec<Option<usize>>) {
    let mut dist = vec![usize::MAX; mol.n_atoms()];
    let mut parent_bond = vec![None; mol.n_atoms()];
    let mut q = VecDeque::from([root]);
    dist[root] = 0;
    while let Some(a) = q.pop_front() {
        // ascending bond order for deterministic shortest-path trees
        for &bi in mol.incident(a) {
            let b = mol.bonds[bi].other(a);
            if dist[b] == usize::MAX {
                dist[b] = dist[a] + 1;
                parent_bond[b] = Some(bi);
                q.push_back(b);
            }
        }
    }
    (dist, parent_bond)
}

/// Bonds from `a` back to the BFS root, nearest first.
fn path_to_root(mol: &MolGraph, mut a: usize, parent_bond: &[Option<usize>]) -> Vec<usize> {
    let mut bonds = Vec::new();
    while let Some(bi) = parent_bond[a] {
        bonds.push(bi);
        a = mol.bonds[bi].other(a);
    }
    bonds
}

fn collect_atoms(mol: &MolGraph, bond_ids: &[usize]) -> Vec<usize> {
    let mut atoms: Vec<usize> = bond_ids
        .iter()
        .flat_map(|&bi| [mol.bonds[bi].a, mol.bonds[bi].b])
        .collect();
    atoms.sort_unstable();
    atoms.dedup();
    atoms
}

fn join_paths(
    mol: &MolGraph,
    pu: &[usize],
    pv: &[usize],
    closing: usize,
    _n: usize,
    m: usize,
) -> Option<Cycle> {
    // simple cycle iff the two root paths are bond-disjoint
    let mut bits = vec![0u64; m.div_ceil(64)];
    let mut count = 0usize;
    for &bi in pu.iter().chain(pv).chain([&closing]) {
        let (w, o) = (bi / 64, bi % 64);
        if bits[w] >> o & 1 == 1 {
            return None;
        }
        bits[w] |= 1 << o;
        count += 1;
    }
    let bond_ids: Vec<usize> = pu.iter().chain(pv).chain([&closing]).copied().collect();
    let atoms = collect_atoms(mol, &bond_ids);
    // a simple cycle has as many atoms as bonds
    if atoms.len() != count {
        return None;
    }
    Some(Cycle { atoms, bond_bits: bits })
}

/// Fundamental cycle of a non-tree edge: the tree path between its endpoints
/// plus the edge itself. The shared prefix of the two root paths cancels
/// under XOR, leaving a simple cycle. These guarantee the greedy pick always
/// reaches a full basis.
fn fundamental_cycle(
    mol: &MolGraph,
    pu: &[usize],
    pv: &[usize],
    closing: usize,
    m: usize,
) -> Option<Cycle> {
    let mut bits = vec![0u64; m.div_ceil(64)];
    for &bi in pu.iter().chain(pv).chain([&closing]) {
        bits[bi / 64] ^= 1 << (bi % 64);
    }
    let bond_ids: Vec<usize> = (0..m)
        .filter(|&i| bits[i / 64] >> (i % 64) & 1 == 1)
        .collect();
    if bond_ids.is_empty() {
        return None;
    }
    let atoms = collect_atoms(mol, &bond_ids);
    Some(Cycle { atoms, bond_bits: bits })
}

fn leading_bit(v: &[u64]) -> Option<usize> {
    for (w, &word) in v.iter().enumerate().rev() {
        if word != 0 {
            return Some(w * 64 + 63 - word.leading_zeros() as usize);
        }
    }
    None
}

fn xor_into(a: &mut [u64], b: &[u64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x ^= y;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;

    #[test]
    fn benzene_has_one_six_ring() {
        let m = parse_smiles("c1ccccc1").unwrap();
        let rings = ring_perception(&m);
        assert_eq!(rings.len(), 1);
        assert_eq!(rings[0], vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn naphthalene_has_two_fused_six_rings() {
        let m = parse_smiles("c1ccc2ccccc2c1").unwrap();
        let rings = ring_perception(&m);
        assert_eq!(rings.len(), 2);
        assert!(rings.iter().all(|r| r.len() == 6));
        let shared: Vec<usize> = rings[0]
            .iter()
            .filter(|a| rings[1].contains(a))
            .copied()
            .collect();
        assert_eq!(shared.len(), 2);
    }

    #[test]
    fn acyclic_has_no_rings() {
        let m = parse_smiles("CCO").unwrap();
        assert!(ring_perception(&m).is_empty());
    }

    #[test]
    fn ring_count_equals_cyclomatic_number() {
        for smi in ["C1CC1", "C1CCC1C1CCC1", "c1ccc2ccccc2c1", "C1CC2CCC1CC2", "CC(C)C"] {
            let m = parse_smiles(smi).unwrap();
            let rings = ring_perception(&m);
            assert_eq!(rings.len(), m.n_bonds() + 1 - m.n_atoms(), "{smi}");
        }
    }

    #[test]
    fn norbornane_rings_are_smallest() {
        // bicyclo[2.2.1]heptane: cyclomatic 2, smallest rings are two 5-rings
        let m = parse_smiles("C1CC2CCC1C2").unwrap();
        let rings = ring_perception(&m);
        assert_eq!(rings.len(), 2);
        assert!(rings.iter().all(|r| r.len() == 5), "{rings:?}");
    }

    #[test]
    fn membership_marks_cyclic_bonds_only() {
        let m = parse_smiles("CC1CC1").unwrap();
        let mem = ring_membership(&m);
        assert!(!mem.atoms[0]);
        assert!(mem.atoms[1] && mem.atoms[2] && mem.atoms[3]);
        let cyclic = mem.bonds.iter().filter(|b| **b).count();
        assert_eq!(cyclic, 3);
    }
}
