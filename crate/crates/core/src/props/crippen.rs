//! Atom-contribution logP estimator.
//!
//! Every heavy atom is assigned the first matching row of the shipped
//! atom-type table and contributes `value + implicit_h * h_value`. The
//! estimate is the sum over all atoms. Atoms of elements the table does
//! not cover produce [`PropsError::UntypedAtom`].

use std::sync::OnceLock;

use super::pattern::{atom_features, CondTable};
use super::PropsError;
use crate::chem::MolGraph;

const TABLE_TEXT: &str = include_str!("../../data/crippen_types.txt");

pub(crate) fn table() -> &'static CondTable {
    static TABLE: OnceLock<CondTable> = OnceLock::new();
    TABLE.get_or_init(|| CondTable::parse(TABLE_TEXT, 2))
}

/// Estimated octanol/water partition coefficient.
pub fn crippen_logp(mol: &MolGraph) -> Result<f64, PropsError> {
    let feats = atom_features(mol);
    let mut total = 0.0;
    for (i, atom) in mol.atoms.iter().enumerate() {
        let row = table()
            .classify(atom.element.symbol, &feats[i])
            .ok_or(PropsError::UntypedAtom { atom: i })?;
        total += row.values[0] + f64::from(atom.implicit_h) * row.values[1];
    }
    Ok(total)
}

/// Name of the type assigned to each atom, for diagnostics and tests.
pub fn crippen_atom_types(mol: &MolGraph) -> Result<Vec<&'static str>, PropsError> {
    let feats = atom_features(mol);
    mol.atoms
        .iter()
        .enumerate()
        .map(|(i, atom)| {
            table()
                .classify(atom.element.symbol, &feats[i])
                .map(|row| row.name.as_str())
                .ok_or(PropsError::UntypedAtom { atom: i })
        })
        .collect()
}
