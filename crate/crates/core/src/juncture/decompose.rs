//! Splitting a molecule into its junction tree.

use super::fragment::extract_fragment;
use super::{Attachment, Cluster, ClusterKind, JunctionTree};
use crate::chem::{
    canonical_atom_order, canonical_ranks, ring_membership, ring_perception, write_smiles,
    MolGraph,
};

/// Decomposes a sanitized, connected molecule into its junction tree.
///
/// Clusters are the SSSR rings (rings sharing more than two atoms merged
/// into one bridged cluster), one cluster per non-ring bond, and one
/// singleton per atom that sits in at least three of those clusters. Edges
/// are a maximum spanning tree of the cluster-intersection graph weighted
/// by shared-atom count, ties broken by the canonical atom ranks of the
/// endpoint clusters so the tree shape does not depend on the input atom
/// numbering. The root is the cluster containing atom 0 (lowest cluster
/// index on ties).
pub fn decompose(mol: &MolGraph) -> JunctionTree {
    assert!(mol.is_sanitized(), "decompose requires a sanitized molecule");
    assert!(mol.is_connected(), "decompose requires a connected molecule");

    // Ring clusters: SSSR rings, merged while any pair shares > 2 atoms.
    let rings = ring_perception(mol);
    let mut dsu = Dsu::new(rings.len());
    for i in 0..rings.len() {
        for j in i + 1..rings.len() {
            if shared_count(&rings[i], &rings[j]) > 2 {
                dsu.union(i, j);
            }
        }
    }
    let mut merged: Vec<Vec<usize>> = Vec::new();
    {
        let mut group_of = vec![usize::MAX; rings.len()];
        for (i, ring) in rings.iter().enumerate() {
            let root = dsu.find(i);
            if group_of[root] == usize::MAX {
                group_of[root] = merged.len();
                merged.push(Vec::new());
            }
            merged[group_of[root]].extend_from_slice(ring);
        }
        for atoms in merged.iter_mut() {
            atoms.sort_unstable();
            atoms.dedup();
        }
        merged.sort();
    }

    let mut clusters: Vec<(ClusterKind, Vec<usize>)> = merged
        .into_iter()
        .map(|atoms| (ClusterKind::Ring, atoms))
        .collect();

    // Bond clusters: one per non-ring bond.
    let in_ring = ring_membership(mol);
    let mut bond_clusters: Vec<Vec<usize>> = mol
        .bonds
        .iter()
        .enumerate()
        .filter(|&(bi, _)| !in_ring.bonds[bi])
        .map(|(_, b)| vec![b.a.min(b.b), b.a.max(b.b)])
        .collect();
    bond_clusters.sort();
    clusters.extend(bond_clusters.into_iter().map(|a| (ClusterKind::Bond, a)));

    // Singletons: atoms shared by ≥ 3 ring/bond clusters.
    let mut membership = vec![0usize; mol.n_atoms()];
    for (_, atoms) in &clusters {
        for &a in atoms {
            membership[a] += 1;
        }
    }
    for (a, &count) in membership.iter().enumerate() {
        if count >= 3 {
            clusters.push((ClusterKind::Singleton, vec![a]));
        }
    }
    if clusters.is_empty() {
        // single-atom molecule
        clusters.push((ClusterKind::Singleton, vec![0]));
    }

    let clusters: Vec<Cluster> = clusters
        .into_iter()
        .map(|(kind, atom_indices)| {
            let frag = extract_fragment(mol, &atom_indices);
            Cluster {
                kind,
                atom_indices,
                canonical_label: write_smiles(&frag.graph),
            }
        })
        .collect();

    let edges = spanning_tree(&clusters, &canonical_ranks(mol));

    let root = clusters
        .iter()
        .enumerate()
        .filter(|(_, c)| c.atom_indices.contains(&0))
        .map(|(i, _)| i)
        .min()
        .expect("atom 0 is covered by some cluster");

    let tree = JunctionTree {
        clusters,
        edges,
        root,
    };
    debug_assert!(running_intersection_holds(&tree, mol.n_atoms()));
    tree
}

/// Shared atoms of two sorted index sets.
fn shared_count(a: &[usize], b: &[usize]) -> usize {
    let mut n = 0;
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

fn shared_atoms(a: &[usize], b: &[usize]) -> Vec<usize> {
    a.iter().filter(|x| b.binary_search(x).is_ok()).copied().collect()
}

/// Maximum spanning tree of the cluster-intersection graph (Kruskal).
/// Ties are broken by the clusters' canonical atom ranks, which makes the
/// tree shape a function of the molecule rather than its atom numbering;
/// distinct clusters always have distinct rank sets, so the order is total.
fn spanning_tree(clusters: &[Cluster], ranks: &[usize]) -> Vec<(usize, usize)> {
    let n = clusters.len();
    let keys: Vec<Vec<usize>> = clusters
        .iter()
        .map(|c| {
            let mut k: Vec<usize> = c.atom_indices.iter().map(|&a| ranks[a]).collect();
            k.sort_unstable();
            k
        })
        .collect();
    let pair = |i: usize, j: usize| -> (&Vec<usize>, &Vec<usize>) {
        if keys[i] <= keys[j] {
            (&keys[i], &keys[j])
        } else {
            (&keys[j], &keys[i])
        }
    };
    let mut candidates: Vec<(usize, usize, usize)> = Vec::new(); // (weight, i, j)
    for i in 0..n {
        for j in i + 1..n {
            let w = shared_count(&clusters[i].atom_indices, &clusters[j].atom_indices);
            if w > 0 {
                candidates.push((w, i, j));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| pair(a.1, a.2).cmp(&pair(b.1, b.2))));
    let mut dsu = Dsu::new(n);
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    for (_, i, j) in candidates {
        if dsu.union(i, j) {
            edges.push((i, j));
        }
    }
    debug_assert_eq!(edges.len(), n - 1, "intersection graph is connected");
    edges.sort_unstable();
    edges
}

fn running_intersection_holds(tree: &JunctionTree, n_atoms: usize) -> bool {
    (0..n_atoms).all(|atom| {
        let holders: Vec<usize> = tree
            .clusters
            .iter()
            .enumerate()
            .filter(|(_, c)| c.atom_indices.binary_search(&atom).is_ok())
            .map(|(i, _)| i)
            .collect();
        if holders.len() <= 1 {
            return !holders.is_empty();
        }
        // the induced subgraph of the tree on `holders` must be connected
        let mut seen = vec![holders[0]];
        let mut frontier = vec![holders[0]];
        while let Some(c) = frontier.pop() {
            for nb in tree.neighbors(c) {
                if holders.contains(&nb) && !seen.contains(&nb) {
                    seen.push(nb);
                    frontier.push(nb);
                }
            }
        }
        seen.len() == holders.len()
    })
}

/// For every tree edge (parent → child in BFS order from the root), the
/// fragment-atom correspondences implied by the source molecule: shared
/// molecule atoms translated into each cluster's canonical fragment order.
pub fn ground_truth_attachments(mol: &MolGraph, tree: &JunctionTree) -> Vec<Attachment> {
    // canonical position of each molecule atom within each cluster fragment
    let canon_pos: Vec<std::collections::HashMap<usize, usize>> = tree
        .clusters
        .iter()
        .map(|c| {
            let frag = extract_fragment(mol, &c.atom_indices);
            canonical_atom_order(&frag.graph)
                .into_iter()
                .enumerate()
                .map(|(canon, frag_idx)| (frag.to_mol[frag_idx], canon))
                .collect()
        })
        .collect();

    tree.parent_order()
        .into_iter()
        .map(|(parent, child)| {
            let shared = shared_atoms(
                &tree.clusters[parent].atom_indices,
                &tree.clusters[child].atom_indices,
            );
            let mut pairs: Vec<(usize, usize)> = shared
                .into_iter()
                .map(|a| (canon_pos[parent][&a], canon_pos[child][&a]))
                .collect();
            pairs.sort_unstable();
            Attachment { child, pairs }
        })
        .collect()
}

struct Dsu {
    parent: Vec<usize>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns true when the two sets were previously disjoint.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (lo, hi) = (ra.min(rb), ra.max(rb));
        self.parent[hi] = lo;
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;

    fn tree_of(smiles: &str) -> JunctionTree {
        decompose(&parse_smiles(smiles).unwrap())
    }

    #[test]
    fn propane_gives_two_bond_clusters_one_edge() {
        let t = tree_of("CCC");
        assert_eq!(t.n_clusters(), 2);
        assert!(t.clusters.iter().all(|c| c.kind == ClusterKind::Bond));
        assert_eq!(t.clusters[0].atom_indices, vec![0, 1]);
        assert_eq!(t.clusters[1].atom_indices, vec![1, 2]);
        assert_eq!(t.edges, vec![(0, 1)]);
        assert_eq!(t.root, 0);
    }

    #[test]
    fn benzene_is_a_single_ring_cluster() {
        let t = tree_of("c1ccccc1");
        assert_eq!(t.n_clusters(), 1);
        assert_eq!(t.clusters[0].kind, ClusterKind::Ring);
        assert_eq!(t.clusters[0].atom_indices, vec![0, 1, 2, 3, 4, 5]);
        assert!(t.edges.is_empty());
        assert_eq!(t.root, 0);
    }

    #[test]
    fn toluene_is_ring_plus_bond() {
        let t = tree_of("Cc1ccccc1");
        assert_eq!(t.n_clusters(), 2);
        assert_eq!(t.clusters[0].kind, ClusterKind::Ring);
        assert_eq!(t.clusters[1].kind, ClusterKind::Bond);
        assert_eq!(t.clusters[1].atom_indices, vec![0, 1]);
        assert_eq!(t.edges, vec![(0, 1)]);
        // atom 0 is the methyl carbon, so the bond cluster is the root
        assert_eq!(t.root, 1);
    }

    #[test]
    fn norbornane_rings_merge_into_one_bridged_cluster() {
        let t = tree_of("C1CC2CCC1C2");
        assert_eq!(
            t.clusters.iter().filter(|c| c.kind == ClusterKind::Ring).count(),
            1
        );
        let ring = t.clusters.iter().find(|c| c.kind == ClusterKind::Ring).unwrap();
        assert_eq!(ring.atom_indices.len(), 7);
    }

    #[test]
    fn naphthalene_keeps_two_ring_clusters() {
        let t = tree_of("c1ccc2ccccc2c1");
        assert_eq!(t.n_clusters(), 2);
        assert!(t.clusters.iter().all(|c| c.kind == ClusterKind::Ring));
        assert_eq!(t.edges, vec![(0, 1)]);
    }

    #[test]
    fn neopentane_central_atom_becomes_a_singleton() {
        let t = tree_of("CC(C)(C)C");
        let singles: Vec<_> = t
            .clusters
            .iter()
            .filter(|c| c.kind == ClusterKind::Singleton)
            .collect();
        assert_eq!(singles.len(), 1);
        assert_eq!(singles[0].atom_indices, vec![1]);
        assert_eq!(singles[0].canonical_label, "C");
    }

    #[test]
    fn single_atom_molecule_is_one_singleton() {
        let t = tree_of("C");
        assert_eq!(t.n_clusters(), 1);
        assert_eq!(t.clusters[0].kind, ClusterKind::Singleton);
        assert_eq!(t.clusters[0].canonical_label, "C");
    }

    #[test]
    fn bond_coverage_is_a_partition() {
        // every bond lies inside at least one cluster; assigning each bond
        // to its first containing cluster covers all bonds exactly once
        for smi in ["CCC", "Cc1ccccc1", "CC(C)(C)C", "c1ccc2ccccc2c1", "CC1CCC(O)CC1"] {
            let mol = parse_smiles(smi).unwrap();
            let t = decompose(&mol);
            for bond in &mol.bonds {
                let holders = t
                    .clusters
                    .iter()
                    .filter(|c| {
                        c.atom_indices.binary_search(&bond.a).is_ok()
                            && c.atom_indices.binary_search(&bond.b).is_ok()
                    })
                    .count();
                assert!(holders >= 1, "{smi}: bond {bond:?} uncovered");
            }
        }
    }

    #[test]
    fn ground_truth_attachments_cover_every_non_root_cluster() {
        let mol = parse_smiles("CC(C)Cc1ccc(O)cc1").unwrap();
        let t = decompose(&mol);
        let atts = ground_truth_attachments(&mol, &t);
        assert_eq!(atts.len(), t.n_clusters() - 1);
        let mut children: Vec<usize> = atts.iter().map(|a| a.child).collect();
        children.sort_unstable();
        children.dedup();
        assert_eq!(children.len(), t.n_clusters() - 1);
        assert!(atts.iter().all(|a| !a.pairs.is_empty()));
    }
}
