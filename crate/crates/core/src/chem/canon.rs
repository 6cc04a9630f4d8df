//! Canonical atom ranking and SMILES output.

use super::element::element;
use super::{implied_hydrogens, BondOrder, MolGraph};
use std::collections::BinaryHeap;

const ORGANIC_SUBSET: [&str; 10] = ["B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"];

/// Canonical ranks by iterative neighborhood refinement.
///
/// Atoms start partitioned by (element, degree, charge, aromaticity,
/// hydrogen count) and are refined by sorted neighbor (bond, rank) multisets
/// until stable. Remaining ties are split by lowest original index and
/// refinement resumes, so the result is a total order.
pub fn canonical_ranks(mol: &MolGraph) -> Vec<usize> {
    let n = mol.n_atoms();
    let init: Vec<_> = (0..n)
        .map(|i| {
            let a = &mol.atoms[i];
            (
                a.element.atomic_number,
                mol.degree(i),
                a.formal_charge,
                a.aromatic,
                a.implicit_h,
            )
        })
        .collect();
    let mut ranks = ranks_from_keys(&init);

    loop {
        // refine to a fixed point
        loop {
            let keys: Vec<_> = (0..n)
                .map(|i| {
                    let mut nb: Vec<(u8, usize)> = mol
                        .incident(i)
                        .iter()
                        .map(|&bi| {
                            let b = &mol.bonds[bi];
                            (order_code(b.order), ranks[b.other(i)])
                        })
                        .collect();
                    nb.sort_unstable();
                    (ranks[i], nb)
                })
                .collect();
            let new_ranks = ranks_from_keys(&keys);
            if new_ranks == ranks {
                break;
            }
            ranks = new_ranks;
        }
        let classes = count_classes(&ranks);
        if classes == n {
            return ranks;
        }
        // artificial split: lowest-index atom of the lowest tied class
        let tied_rank = (0..n)
            .map(|i| ranks[i])
            .filter(|&r| ranks.iter().filter(|&&x| x == r).count() > 1)
            .min()
            .expect("tied class exists");
        let chosen = (0..n).find(|&i| ranks[i] == tied_rank).unwrap();
        let keys: Vec<_> = (0..n)
            .map(|i| (ranks[i] * 2 + usize::from(i != chosen), ()))
            .collect();
        ranks = ranks_from_keys(&keys);
    }
}

fn order_code(o: BondOrder) -> u8 {
    match o {
        BondOrder::Single => 0,
        BondOrder::Double => 1,
        BondOrder::Triple => 2,
        BondOrder::Aromatic => 3,
    }
}

fn ranks_from_keys<K: Ord + Clone>(keys: &[K]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
    let mut ranks = vec![0usize; keys.len()];
    let mut rank = 0;
    for w in 0..order.len() {
        if w > 0 && keys[order[w]] != keys[order[w - 1]] {
            rank = w;
        }
        ranks[order[w]] = rank;
    }
    ranks
}

fn count_classes(ranks: &[usize]) -> usize {
    let mut sorted = ranks.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    sorted.len()
}

/// The order in which [`write_smiles`] emits atoms: entry `k` is the index
/// (in `mol`) of the `k`-th atom of the canonical string. Parsing the
/// canonical string back therefore yields atom `k` ≡ `canonical_atom_order(mol)[k]`,
/// which is how fragment-local atom indices are translated between a molecule
/// and its canonical label.
pub fn canonical_atom_order(mol: &MolGraph) -> Vec<usize> {
    let (start, children, _, _) = plan_traversal(mol);
    emission_order(mol, start, &children)
}

struct Traversal {
    children: Vec<Vec<usize>>,
    closures: Vec<Vec<usize>>,
}

fn plan_traversal(mol: &MolGraph) -> (usize, Vec<Vec<usize>>, Vec<Vec<usize>>, Vec<usize>) {
    let n = mol.n_atoms();
    let ranks = canonical_ranks(mol);
    let start = (0..n).min_by_key(|&i| ranks[i]).expect("nonempty molecule");
    let mut visited = vec![false; n];
    let mut t = Traversal {
        children: vec![Vec::new(); n],
        closures: vec![Vec::new(); n],
    };
    let mut bond_used = vec![false; mol.n_bonds()];
    build_tree(mol, start, &ranks, &mut visited, &mut bond_used, &mut t);
    (start, t.children, t.closures, ranks)
}

/// Deterministic canonical SMILES of a sanitized molecule.
///
/// `parse_smiles(write_smiles(m))` is graph-isomorphic to `m`, and writing
/// twice yields the same string.
pub fn write_smiles(mol: &MolGraph) -> String {
    assert!(mol.is_sanitized(), "write_smiles requires a sanitized molecule");
    let (start, children, closures, _) = plan_traversal(mol);

    // Assign ring-closure digits in emission order with reuse of freed digits.
    let emission = emission_order(mol, start, &children);
    let mut digit_of_bond = vec![0u16; mol.n_bonds()];
    {
        let mut free: BinaryHeap<std::cmp::Reverse<u16>> =
            (1..100).map(std::cmp::Reverse).collect();
        let mut open_count =
            vec![0u8; mol.n_bonds()];
        for &a in &emission {
            for &bi in &closures[a] {
                if open_count[bi] == 0 {
                    let std::cmp::Reverse(d) = free.pop().expect("ring digits exhausted");
                    digit_of_bond[bi] = d;
                    open_count[bi] = 1;
                } else {
                    free.push(std::cmp::Reverse(digit_of_bond[bi]));
                }
            }
        }
    }

    let mut out = String::new();
    emit(mol, start, usize::MAX, &children, &closures, &digit_of_bond, &mut out);
    out
}

fn build_tree(
    mol: &MolGraph,
    a: usize,
    ranks: &[usize],
    visited: &mut [bool],
    bond_used: &mut [bool],
    t: &mut Traversal,
) {
    visited[a] = true;
    let mut nbs: Vec<usize> = mol.incident(a).to_vec();
    nbs.sort_by_key(|&bi| ranks[mol.bonds[bi].other(a)]);
    for bi in nbs {
        if bond_used[bi] {
            continue;
        }
        bond_used[bi] = true;
        let b = mol.bonds[bi].other(a);
        if visited[b] {
            // ring closure: opens at b (emitted earlier), closes at a
            t.closures[b].push(bi);
            t.closures[a].push(bi);
        } else {
            t.children[a].push(bi);
            build_tree(mol, b, ranks, visited, bond_used, t);
        }
    }
}

fn emission_order(mol: &MolGraph, start: usize, children: &[Vec<usize>]) -> Vec<usize> {
    let mut order = Vec::with_capacity(mol.n_atoms());
    let mut stack = vec![start];
    while let Some(a) = stack.pop() {
        order.push(a);
        for &bi in children[a].iter().rev() {
            stack.push(mol.bonds[bi].other(a));
        }
    }
    order
}

fn emit(
    mol: &MolGraph,
    a: usize,
    pbond: usize,
    children: &[Vec<usize>],
    closures: &[Vec<usize>],
    digit_of_bond: &[u16],
    out: &mut String,
) {
    if pbond != usize::MAX {
        out.push_str(bond_token(mol, pbond));
    }
    out.push_str(&atom_token(mol, a));
    for &bi in &closures[a] {
        out.push_str(bond_token(mol, bi));
        let d = digit_of_bond[bi];
        if d < 10 {
            out.push(char::from(b'0' + d as u8));
        } else {
            out.push('%');
            out.push_str(&d.to_string());
        }
    }
    let kids = &children[a];
    for (k, &bi) in kids.iter().enumerate() {
        let child = mol.bonds[bi].other(a);
        if k + 1 < kids.len() {
            out.push('(');
            emit(mol, child, bi, children, closures, digit_of_bond, out);
            out.push(')');
        } else {
            emit(mol, child, bi, children, closures, digit_of_bond, out);
        }
    }
}

fn bond_token(mol: &MolGraph, bi: usize) -> &'static str {
    let b = &mol.bonds[bi];
    let default = if mol.atoms[b.a].aromatic && mol.atoms[b.b].aromatic {
        BondOrder::Aromatic
    } else {
        BondOrder::Single
    };
    if b.order == default {
        ""
    } else {
        b.order.symbol()
    }
}

fn atom_token(mol: &MolGraph, i: usize) -> String {
    let atom = &mol.atoms[i];
    let sym = atom.element.symbol;
    let written = if atom.aromatic {
        sym.to_ascii_lowercase()
    } else {
        sym.to_string()
    };
    let organic = ORGANIC_SUBSET.contains(&sym) && element(sym).is_some();
    let plain_ok = organic && atom.formal_charge == 0 && {
        let allowed = atom.element.valences_for_charge(0);
        let ve = atom.element.net_valence_electrons(0);
        implied_hydrogens(mol.explicit_valence(i) as i32, atom.aromatic, &allowed, ve)
            == Some(atom.implicit_h)
    };
    if plain_ok {
        return written;
    }
    let mut token = String::from("[");
    token.push_str(&written);
    match atom.implicit_h {
        0 => {}
        1 => token.push('H'),
        h => {
            token.push('H');
            token.push_str(&h.to_string());
        }
    }
    match atom.formal_charge {
        0 => {}
        1 => token.push('+'),
        -1 => token.push('-'),
        c if c > 0 => token.push_str(&format!("+{c}")),
        c => token.push_str(&format!("-{}", -c)),
    }
    token.push(']');
    token
}
