//! Property calculators and label ingestion.
//!
//! Three target properties drive supervision and generation: molecular
//! weight, an atom-contribution logP estimate, and a drug-likeness score.
//! Training labels normally arrive from a CSV file; the internal
//! calculators fill in values when the file carries none and power the
//! generation-evaluation loop. The logP and QED calculators are
//! approximations built on shipped data tables, not bit-for-bit ports of
//! any external toolkit.

mod crippen;
mod descriptors;
mod labels;
pub mod pattern;
mod qed;

pub use crippen::{crippen_atom_types, crippen_logp};
pub use descriptors::{
    alert_names, aromatic_rings, hydrogen_bond_acceptors, hydrogen_bond_donors,
    polar_surface_area, qed_descriptors, rotatable_bonds, structural_alerts, QedDescriptors,
};
pub use labels::{load_labels, LabelTable, NormStats};
pub use qed::{qed, qed_from_descriptors};

use crate::chem::MolGraph;

/// The properties this artifact can predict and condition on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum PropertyKind {
    MolWt,
    LogP,
    Qed,
}

impl PropertyKind {
    /// Column name expected in label CSV headers, and the canonical
    /// spelling for config files and CLI flags.
    pub fn column_name(self) -> &'static str {
        match self {
            PropertyKind::MolWt => "molwt",
            PropertyKind::LogP => "logp",
            PropertyKind::Qed => "qed",
        }
    }

    /// Case-insensitive parse of the canonical spelling.
    pub fn parse(text: &str) -> Option<PropertyKind> {
        match text.to_ascii_lowercase().as_str() {
            "molwt" => Some(PropertyKind::MolWt),
            "logp" => Some(PropertyKind::LogP),
            "qed" => Some(PropertyKind::Qed),
            _ => None,
        }
    }
}

impl std::fmt::Display for PropertyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.column_name())
    }
}

/// Errors from property calculation and label ingestion.
#[derive(Debug, thiserror::Error)]
pub enum PropsError {
    #[error("atom {atom} matches no row of the atom-type table")]
    UntypedAtom { atom: usize },
    #[error("label row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("label value at line {line} is not finite")]
    NonFiniteValue { line: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Molecular weight: heavy atoms plus implicit hydrogens, in amu.
pub fn mol_wt(mol: &MolGraph) -> f64 {
    let h = crate::chem::element::hydrogen_weight();
    mol.atoms
        .iter()
        .map(|a| a.element.atomic_weight + f64::from(a.implicit_h) * h)
        .sum()
}

/// Computes one property with the internal calculators.
pub fn compute_property(kind: PropertyKind, mol: &MolGraph) -> Result<f64, PropsError> {
    match kind {
        PropertyKind::MolWt => Ok(mol_wt(mol)),
        PropertyKind::LogP => crippen_logp(mol),
        PropertyKind::Qed => qed(mol),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;
    use crate::juncture::decompose;

    #[test]
    fn methane_weight_matches_table_sum() {
        let mol = parse_smiles("C").unwrap();
        assert!((mol_wt(&mol) - 16.043).abs() < 1e-9);
    }

    #[test]
    fn ethanol_weight_matches_table_sum() {
        let mol = parse_smiles("CCO").unwrap();
        assert!((mol_wt(&mol) - 46.069).abs() < 1e-9);
    }

    #[test]
    fn weight_is_additive_over_junction_clusters() {
        // shared atoms counted once must reproduce the whole-molecule weight
        let h = crate::chem::element::hydrogen_weight();
        for smiles in [
            "CC(C)Cc1ccc(C(C)C(=O)O)cc1",
            "c1ccc2ccccc2c1",
            "CC1CCC(O)CC1",
            "O=C(N)c1ccncc1",
        ] {
            let mol = parse_smiles(smiles).unwrap();
            let tree = decompose(&mol);
            let mut seen = std::collections::HashSet::new();
            let mut total = 0.0;
            for cluster in &tree.clusters {
                for &a in &cluster.atom_indices {
                    if seen.insert(a) {
                        let atom = &mol.atoms[a];
                        total += atom.element.atomic_weight + f64::from(atom.implicit_h) * h;
                    }
                }
            }
            assert!((total - mol_wt(&mol)).abs() < 1e-9, "{smiles}");
            assert_eq!(seen.len(), mol.n_atoms(), "clusters cover every atom");
        }
    }

    #[test]
    fn property_kind_round_trips_through_names() {
        for kind in [PropertyKind::MolWt, PropertyKind::LogP, PropertyKind::Qed] {
            assert_eq!(PropertyKind::parse(kind.column_name()), Some(kind));
            assert_eq!(PropertyKind::parse(&kind.to_string().to_uppercase()), Some(kind));
        }
        assert_eq!(PropertyKind::parse("density"), None);
    }
}
