//! The eight molecular descriptors feeding the drug-likeness score.
//!
//! These are deliberately lightweight estimates computed directly on the
//! heavy-atom graph: good enough to rank molecules, not a substitute for a
//! full cheminformatics stack.

use std::sync::OnceLock;

use super::crippen::crippen_logp;
use super::mol_wt;
use super::pattern::{atom_features, CondTable, Query};
use super::PropsError;
use crate::chem::{ring_perception, BondOrder, MolGraph};

const TPSA_TEXT: &str = include_str!("../../data/tpsa_contributions.txt");
const ALERTS_TEXT: &str = include_str!("../../data/structural_alerts.txt");

fn tpsa_table() -> &'static CondTable {
    static TABLE: OnceLock<CondTable> = OnceLock::new();
    TABLE.get_or_init(|| CondTable::parse(TPSA_TEXT, 1))
}

fn alert_queries() -> &'static Vec<(String, Query)> {
    static QUERIES: OnceLock<Vec<(String, Query)>> = OnceLock::new();
    QUERIES.get_or_init(|| {
        ALERTS_TEXT
            .lines()
            .map(|raw| raw.split('#').next().unwrap_or("").trim())
            .filter(|line| !line.is_empty())
            .map(|line| {
                let (name, pattern) = line
                    .split_once(char::is_whitespace)
                    .expect("alert rows are `name pattern`");
                (name.to_string(), Query::parse(pattern.trim()))
            })
            .collect()
    })
}

/// The descriptor vector the desirability functions consume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QedDescriptors {
    pub mw: f64,
    pub alogp: f64,
    pub hba: f64,
    pub hbd: f64,
    pub psa: f64,
    pub rotb: f64,
    pub arom: f64,
    pub alerts: f64,
}

/// Computes all eight descriptors for a sanitized molecule.
pub fn qed_descriptors(mol: &MolGraph) -> Result<QedDescriptors, PropsError> {
    Ok(QedDescriptors {
        mw: mol_wt(mol),
        alogp: crippen_logp(mol)?,
        hba: hydrogen_bond_acceptors(mol) as f64,
        hbd: hydrogen_bond_donors(mol) as f64,
        psa: polar_surface_area(mol),
        rotb: rotatable_bonds(mol) as f64,
        arom: aromatic_rings(mol) as f64,
        alerts: structural_alerts(mol) as f64,
    })
}

/// Count of nitrogen and oxygen atoms.
pub fn hydrogen_bond_acceptors(mol: &MolGraph) -> usize {
    mol.atoms
        .iter()
        .filter(|a| matches!(a.element.symbol, "N" | "O"))
        .count()
}

/// Count of nitrogen and oxygen atoms bearing at least one hydrogen.
pub fn hydrogen_bond_donors(mol: &MolGraph) -> usize {
    mol.atoms
        .iter()
        .filter(|a| matches!(a.element.symbol, "N" | "O") && a.implicit_h > 0)
        .count()
}

/// Topological polar surface area over nitrogen and oxygen contributions.
pub fn polar_surface_area(mol: &MolGraph) -> f64 {
    let feats = atom_features(mol);
    mol.atoms
        .iter()
        .enumerate()
        .filter(|(_, a)| matches!(a.element.symbol, "N" | "O"))
        .map(|(i, a)| {
            tpsa_table()
                .classify(a.element.symbol, &feats[i])
                .expect("the shipped table has fallback rows for N and O")
                .values[0]
        })
        .sum()
}

/// Single acyclic bonds between two non-terminal atoms, excluding amide C-N.
pub fn rotatable_bonds(mol: &MolGraph) -> usize {
    let in_ring = crate::chem::ring_membership(mol).bonds;
    let acyl: Vec<bool> = (0..mol.n_atoms())
        .map(|i| {
            mol.atoms[i].element.symbol == "C"
                && mol.incident(i).iter().any(|&bi| {
                    mol.bonds[bi].order == BondOrder::Double
                        && mol.atoms[mol.bonds[bi].other(i)].element.symbol == "O"
                })
        })
        .collect();
    mol.bonds
        .iter()
        .enumerate()
        .filter(|(bi, bond)| {
            bond.order == BondOrder::Single
                && !in_ring[*bi]
                && mol.degree(bond.a) >= 2
                && mol.degree(bond.b) >= 2
                && !is_amide(mol, bond, &acyl)
        })
        .count()
}

fn is_amide(mol: &MolGraph, bond: &crate::chem::Bond, acyl: &[bool]) -> bool {
    let (a, b) = (bond.a, bond.b);
    (mol.atoms[a].element.symbol == "N" && acyl[b])
        || (mol.atoms[b].element.symbol == "N" && acyl[a])
}

/// Number of smallest rings whose bonds are all aromatic.
///
/// Ring atom lists are sets, so the check walks the bonds induced by each
/// set; smallest rings are chordless, which makes the two views agree.
pub fn aromatic_rings(mol: &MolGraph) -> usize {
    ring_perception(mol)
        .iter()
        .filter(|ring| {
            mol.bonds
                .iter()
                .filter(|b| ring.binary_search(&b.a).is_ok() && ring.binary_search(&b.b).is_ok())
                .all(|b| b.order == BondOrder::Aromatic)
        })
        .count()
}

/// Number of alert patterns with at least one embedding in the molecule.
pub fn structural_alerts(mol: &MolGraph) -> usize {
    alert_queries()
        .iter()
        .filter(|(_, q)| q.matches(mol))
        .count()
}

/// Names of the alerts that fired, for reports and diagnostics.
pub fn alert_names(mol: &MolGraph) -> Vec<&'static str> {
    alert_queries()
        .iter()
        .filter(|(_, q)| q.matches(mol))
        .map(|(name, _)| name.as_str())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;

    fn mol(smiles: &str) -> MolGraph {
        parse_smiles(smiles).unwrap()
    }

    #[test]
    fn aspirin_polar_surface_area_matches_hand_sum() {
        // ester =O (17.07) + ester O (9.23) + acid =O (17.07) + acid OH (20.23)
        let psa = polar_surface_area(&mol("CC(=O)Oc1ccccc1C(=O)O"));
        assert!((psa - 63.60).abs() < 1e-9, "got {psa}");
    }

    #[test]
    fn acceptor_and_donor_counts() {
        let m = mol("CC(=O)Nc1ccc(O)cc1");
        assert_eq!(hydrogen_bond_acceptors(&m), 3);
        assert_eq!(hydrogen_bond_donors(&m), 2);
        assert_eq!(hydrogen_bond_donors(&mol("COC")), 0);
    }

    #[test]
    fn rotatable_bonds_skip_rings_terminals_and_amides() {
        assert_eq!(rotatable_bonds(&mol("CCCC")), 1, "butane rotates about the middle bond");
        assert_eq!(rotatable_bonds(&mol("C1CCCCC1")), 0, "ring bonds are rigid");
        assert_eq!(rotatable_bonds(&mol("CC(=O)NC")), 0, "amide C-N does not count");
        assert_eq!(rotatable_bonds(&mol("CC(=O)OC")), 1, "the ester analogue does");
        assert_eq!(rotatable_bonds(&mol("c1ccccc1Cc1ccccc1")), 2);
    }

    #[test]
    fn aromatic_ring_count() {
        assert_eq!(aromatic_rings(&mol("c1ccccc1")), 1);
        assert_eq!(aromatic_rings(&mol("c1ccc2ccccc2c1")), 2);
        assert_eq!(aromatic_rings(&mol("C1CCCCC1")), 0);
        assert_eq!(aromatic_rings(&mol("C1=CC=CC=C1C")), 0, "kekulized input stays aliphatic");
    }

    #[test]
    fn alerts_fire_on_known_motifs() {
        assert_eq!(structural_alerts(&mol("CCO")), 0);
        assert_eq!(alert_names(&mol("CC=O")), vec!["aldehyde"]);
        assert_eq!(
            alert_names(&mol("O=[N+]([O-])c1ccc(N=Nc2ccccc2)cc1")),
            vec!["azo", "nitro"]
        );
        assert_eq!(alert_names(&mol("CC1CO1")), vec!["epoxide"]);
        assert_eq!(alert_names(&mol("CCS")), vec!["thiol"]);
    }

    #[test]
    fn descriptor_vector_is_deterministic() {
        let m = mol("CC(C)Cc1ccc(C(C)C(=O)O)cc1");
        let a = qed_descriptors(&m).unwrap();
        let b = qed_descriptors(&m).unwrap();
        assert_eq!(a, b);
    }
}
