//! Molecular graph data model: SMILES parsing/writing, sanitization,
//! ring perception, and validity checking.

pub mod element;
mod canon;
mod rings;
mod smiles;

pub use canon::{canonical_atom_order, canonical_ranks, write_smiles};
pub use element::{element, Element};
pub use rings::ring_perception;
pub(crate) use rings::ring_membership;
pub use smiles::parse_smiles;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChemError {
    #[error("unbalanced branch at offset {0}")]
    UnbalancedBranch(usize),
    #[error("unmatched ring closure at offset {0}")]
    UnmatchedRingClosure(usize),
    #[error("unknown atom symbol at offset {0}")]
    UnknownAtomSymbol(usize),
    #[error("multi-fragment input at offset {0}")]
    MultiFragmentInput(usize),
    #[error("valence violation on atom {atom}{}", .offset.map(|o| format!(" (offset {o})")).unwrap_or_default())]
    ValenceViolation { atom: usize, offset: Option<usize> },
    #[error("aromatic atom {0} is not in any ring")]
    AromaticityError(usize),
    #[error("bond endpoints {0} and {1} are identical")]
    SelfBond(usize, usize),
    #[error("duplicate bond between atoms {0} and {1}")]
    DuplicateBond(usize, usize),
    #[error("bond references atom {0} out of range")]
    BondOutOfRange(usize),
    #[error("molecule has no atoms")]
    EmptyMolecule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Contribution to explicit valence. Aromatic bonds count one here;
    /// the extra pi valence of aromatic systems is handled in `sanitize`.
    pub fn valence(self) -> u8 {
        match self {
            BondOrder::Single | BondOrder::Aromatic => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            BondOrder::Single => "-",
            BondOrder::Double => "=",
            BondOrder::Triple => "#",
            BondOrder::Aromatic => ":",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Atom {
    pub element: &'static Element,
    pub formal_charge: i32,
    pub aromatic: bool,
    /// Implicit hydrogen count, set by `sanitize` unless `fixed_h`.
    pub implicit_h: u8,
    /// True when the hydrogen count was given explicitly (bracket atom)
    /// and must not be recomputed.
    pub fixed_h: bool,
}

impl Atom {
    pub fn new(element: &'static Element) -> Self {
        Atom {
            element,
            formal_charge: 0,
            aromatic: false,
            implicit_h: 0,
            fixed_h: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
}

impl Bond {
    pub fn other(&self, atom: usize) -> usize {
        if atom == self.a {
            self.b
        } else {
            self.a
        }
    }
}

/// A connected molecular graph of heavy atoms.
#[derive(Debug, Clone)]
pub struct MolGraph {
    pub atoms: Vec<Atom>,
    pub bonds: Vec<Bond>,
    /// Per-atom list of incident bond indices.
    adjacency: Vec<Vec<usize>>,
    sanitized: bool,
}

impl MolGraph {
    /// Build a graph and its adjacency lists. Checks structural invariants
    /// only; call `sanitize` before using valence-dependent operations.
    pub fn new(atoms: Vec<Atom>, bonds: Vec<Bond>) -> Result<Self, ChemError> {
        if atoms.is_empty() {
            return Err(ChemError::EmptyMolecule);
        }
        let mut adjacency = vec![Vec::new(); atoms.len()];
        let mut seen = std::collections::HashSet::new();
        for (i, bond) in bonds.iter().enumerate() {
            if bond.a == bond.b {
                return Err(ChemError::SelfBond(bond.a, bond.b));
            }
            let hi = bond.a.max(bond.b);
            if hi >= atoms.len() {
                return Err(ChemError::BondOutOfRange(hi));
            }
            let key = (bond.a.min(bond.b), hi);
            if !seen.insert(key) {
                return Err(ChemError::DuplicateBond(key.0, key.1));
            }
            adjacency[bond.a].push(i);
            adjacency[bond.b].push(i);
        }
        Ok(MolGraph {
            atoms,
            bonds,
            adjacency,
            sanitized: false,
        })
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn n_bonds(&self) -> usize {
        self.bonds.len()
    }

    /// Incident bond indices of an atom.
    pub fn incident(&self, atom: usize) -> &[usize] {
        &self.adjacency[atom]
    }

    /// Neighbor atom indices, in incident-bond order.
    pub fn neighbors(&self, atom: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[atom].iter().map(move |&bi| self.bonds[bi].other(atom))
    }

    /// Heavy-atom degree.
    pub fn degree(&self, atom: usize) -> usize {
        self.adjacency[atom].len()
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<&Bond> {
        self.adjacency[a]
            .iter()
            .map(|&bi| &self.bonds[bi])
            .find(|bond| bond.other(a) == b)
    }

    /// Sum of bond-order valences at an atom (aromatic bonds count 1).
    pub fn explicit_valence(&self, atom: usize) -> u8 {
        self.adjacency[atom]
            .iter()
            .map(|&bi| self.bonds[bi].order.valence())
            .sum()
    }

    /// Total valence: explicit plus implicit hydrogens.
    pub fn total_valence(&self, atom: usize) -> u8 {
        self.explicit_valence(atom) + self.atoms[atom].implicit_h
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n_atoms()];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(a) = stack.pop() {
            for n in self.neighbors(a) {
                if !seen[n] {
                    seen[n] = true;
                    count += 1;
                    stack.push(n);
                }
            }
        }
        count == self.n_atoms()
    }

    pub fn is_sanitized(&self) -> bool {
        self.sanitized
    }

    /// Fill implicit hydrogens and verify valence and aromaticity rules.
    ///
    /// Implicit H targets the smallest allowed valence that fits the
    /// explicit valence; unbracketed aromatic atoms reserve one valence
    /// unit for the delocalized system (`max(0, v - explicit - 1)`).
    /// Idempotent.
    pub fn sanitize(&mut self) -> Result<(), ChemError> {
        let in_ring = rings::ring_membership(self);
        // Aromaticity checks: aromatic atoms must be cyclic, aromatic bonds
        // must be ring bonds with two aromatic endpoints.
        for (i, atom) in self.atoms.iter().enumerate() {
            if atom.aromatic && !in_ring.atoms[i] {
                return Err(ChemError::AromaticityError(i));
            }
        }
        for (bi, bond) in self.bonds.iter().enumerate() {
            if bond.order == BondOrder::Aromatic {
                if !self.atoms[bond.a].aromatic || !self.atoms[bond.b].aromatic {
                    let bad = if self.atoms[bond.a].aromatic { bond.b } else { bond.a };
                    return Err(ChemError::AromaticityError(bad));
                }
                if !in_ring.bonds[bi] {
                    return Err(ChemError::AromaticityError(bond.a));
                }
            }
        }
        for i in 0..self.n_atoms() {
            let explicit = self.explicit_valence(i) as i32;
            let atom = &self.atoms[i];
            let allowed = atom.element.valences_for_charge(atom.formal_charge);
            if allowed.is_empty() {
                return Err(ChemError::ValenceViolation { atom: i, offset: None });
            }
            let ve = atom.element.net_valence_electrons(atom.formal_charge);
            if atom.fixed_h {
                let total = explicit + atom.implicit_h as i32;
                let ok = allowed.iter().any(|&v| {
                    let v = v as i32;
                    if !atom.aromatic {
                        return total == v;
                    }
                    // an aromatic atom spends one valence unit on the pi
                    // system unless a lone pair can stand in for it
                    if ve - v >= 2 {
                        total == v || total + 1 == v
                    } else {
                        total + 1 == v
                    }
                });
                if !ok {
                    return Err(ChemError::ValenceViolation { atom: i, offset: None });
                }
            } else {
                let h = implied_hydrogens(explicit, atom.aromatic, &allowed, ve)
                    .ok_or(ChemError::ValenceViolation { atom: i, offset: None })?;
                self.atoms[i].implicit_h = h;
            }
        }
        self.sanitized = true;
        Ok(())
    }
}

/// Implicit hydrogen count the SMILES reader infers for an unbracketed atom
/// with the given explicit valence. Returns None when no allowed valence
/// fits. Aromatic atoms reserve one valence unit for the pi system; atoms
/// with a spare lone pair (`ve - v >= 2`, e.g. pyrrole N, furan O) may
/// donate the pair instead and keep their full sigma valence.
pub(crate) fn implied_hydrogens(
    explicit: i32,
    aromatic: bool,
    allowed: &[u8],
    ve: i32,
) -> Option<u8> {
    if !aromatic {
        let v = *allowed.iter().find(|&&v| v as i32 >= explicit)? as i32;
        return Some((v - explicit) as u8);
    }
    for &v in allowed {
        let v = v as i32;
        let lone_pair = ve - v >= 2;
        if lone_pair && v >= explicit {
            return Some((v - explicit - 1).max(0) as u8);
        }
        if !lone_pair && v >= explicit + 1 {
            return Some((v - explicit - 1) as u8);
        }
    }
    None
}

/// True iff the graph sanitizes cleanly and is connected.
pub fn is_valid(mol: &MolGraph) -> bool {
    let mut m = mol.clone();
    m.sanitize().is_ok() && m.is_connected()
}

/// Exact graph-isomorphism test on element, charge, aromatic flag, implicit
/// hydrogens and bond order. Backtracking VF2-style search with degree and
/// label pruning; molecules are small so this is fast in practice.
pub fn isomorphic(a: &MolGraph, b: &MolGraph) -> bool {
    if a.n_atoms() != b.n_atoms() || a.n_bonds() != b.n_bonds() {
        return false;
    }
    let label = |m: &MolGraph, i: usize| {
        let at = &m.atoms[i];
        (
            at.element.atomic_number,
            at.formal_charge,
            at.aromatic,
            at.implicit_h,
            m.degree(i),
        )
    };
    let mut la: Vec<_> = (0..a.n_atoms()).map(|i| label(a, i)).collect();
    let mut lb: Vec<_> = (0..b.n_atoms()).map(|i| label(b, i)).collect();
    {
        let mut sa = la.clone();
        let mut sb = lb.clone();
        sa.sort_unstable();
        sb.sort_unstable();
        if sa != sb {
            return false;
        }
    }
    // Order a's atoms so each one (after the first) touches an earlier atom;
    // keeps the search tree shallow on connected graphs.
    let order = {
        let mut order = Vec::with_capacity(a.n_atoms());
        let mut seen = vec![false; a.n_atoms()];
        let mut queue = std::collections::VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(x) = queue.pop_front() {
            order.push(x);
            for n in a.neighbors(x) {
                if !seen[n] {
                    seen[n] = true;
                    queue.push_back(n);
                }
            }
        }
        order
    };
    if order.len() != a.n_atoms() {
        // disconnected inputs: fall back to index order
        return isomorphic_search(a, b, &(0..a.n_atoms()).collect::<Vec<_>>(), &mut la, &mut lb);
    }
    isomorphic_search(a, b, &order, &mut la, &mut lb)
}

type AtomLabel = (u8, i32, bool, u8, usize);

fn isomorphic_search(
    a: &MolGraph,
    b: &MolGraph,
    order: &[usize],
    la: &mut [AtomLabel],
    lb: &mut [AtomLabel],
) -> bool {
    fn rec(
        a: &MolGraph,
        b: &MolGraph,
        order: &[usize],
        pos: usize,
        map: &mut [Option<usize>],
        used: &mut [bool],
        la: &[AtomLabel],
        lb: &[AtomLabel],
    ) -> bool {
        if pos == order.len() {
            return true;
        }
        let x = order[pos];
        'cand: for y in 0..b.n_atoms() {
            if used[y] || la[x] != lb[y] {
                continue;
            }
            // all already-mapped neighbors must be consistent
            for bi in a.incident(x) {
                let bond = &a.bonds[*bi];
                let nx = bond.other(x);
                if let Some(ny) = map[nx] {
                    match b.bond_between(y, ny) {
                        Some(bb) if bb.order == bond.order => {}
                        _ => continue 'cand,
                    }
                }
            }
            // reverse direction: mapped neighbors of y must be neighbors of x
            for by in b.incident(y) {
                let ny = b.bonds[*by].other(y);
                if let Some(xn) = map_inv(map, ny) {
                    if a.bond_between(x, xn).is_none() {
                        continue 'cand;
                    }
                }
            }
            map[x] = Some(y);
            used[y] = true;
            if rec(a, b, order, pos + 1, map, used, la, lb) {
                return true;
            }
            map[x] = None;
            used[y] = false;
        }
        false
    }
    fn map_inv(map: &[Option<usize>], y: usize) -> Option<usize> {
        map.iter().position(|&m| m == Some(y))
    }
    let mut map = vec![None; a.n_atoms()];
    let mut used = vec![false; b.n_atoms()];
    rec(a, b, order, 0, &mut map, &mut used, la, lb)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sanitize_fills_ethanol_hydrogens() {
        let mut m = parse_smiles("CCO").unwrap();
        m.sanitize().unwrap();
        assert_eq!(m.atoms[0].implicit_h, 3);
        assert_eq!(m.atoms[1].implicit_h, 2);
        assert_eq!(m.atoms[2].implicit_h, 1);
    }

    #[test]
    fn sanitize_is_idempotent() {
        let mut m = parse_smiles("c1ccc2ccccc2c1").unwrap();
        m.sanitize().unwrap();
        let h1: Vec<u8> = m.atoms.iter().map(|a| a.implicit_h).collect();
        m.sanitize().unwrap();
        let h2: Vec<u8> = m.atoms.iter().map(|a| a.implicit_h).collect();
        assert_eq!(h1, h2);
    }

    #[test]
    fn charged_nitrogen_four_bonds_is_valid() {
        let m = parse_smiles("C[N+](C)(C)C").unwrap();
        assert_eq!(m.atoms[1].implicit_h, 0);
        assert!(is_valid(&m));
    }

    #[test]
    fn aromatic_atom_outside_ring_rejected() {
        let c = element("C").unwrap();
        let mut a = Atom::new(c);
        a.aromatic = true;
        let mut m = MolGraph::new(
            vec![a, Atom::new(c)],
            vec![Bond { a: 0, b: 1, order: BondOrder::Single }],
        )
        .unwrap();
        assert!(matches!(m.sanitize(), Err(ChemError::AromaticityError(0))));
    }

    #[test]
    fn carbon_with_five_bonds_invalid() {
        let c = element("C").unwrap();
        let atoms = vec![Atom::new(c); 6];
        let bonds = (1..6)
            .map(|i| Bond { a: 0, b: i, order: BondOrder::Single })
            .collect();
        let m = MolGraph::new(atoms, bonds).unwrap();
        assert!(!is_valid(&m));
    }

    #[test]
    fn isomorphism_detects_same_graph_under_relabeling() {
        let a = parse_smiles("OCC").unwrap();
        let b = parse_smiles("CCO").unwrap();
        assert!(isomorphic(&a, &b));
        let c = parse_smiles("CC(C)C").unwrap();
        let d = parse_smiles("CCCC").unwrap();
        assert!(!isomorphic(&c, &d));
    }

    #[test]
    fn isomorphism_respects_bond_order() {
        let a = parse_smiles("C=CC").unwrap();
        let b = parse_smiles("CC=C").unwrap();
        let c = parse_smiles("CCC").unwrap();
        assert!(isomorphic(&a, &b));
        assert!(!isomorphic(&a, &c));
    }
}
