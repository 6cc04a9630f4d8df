//! Gluing cluster fragments back into molecules.

use super::{Attachment, JunctionTree, JunctureError};
use crate::chem::{parse_smiles, write_smiles, Atom, Bond, ChemError, MolGraph};

/// A partially assembled molecule: atoms and bonds accumulated so far, plus
/// deferred hydrogen pins.
///
/// A fragment atom carrying an exact hydrogen count (bracket atom in its
/// label) pins that count *for the bond degree it had inside the fragment*.
/// When the final graph is materialized, a pin applies only if the atom
/// ended up with exactly that degree; an atom that gained bonds from other
/// clusters falls back to valence-derived hydrogens. This is what lets a
/// standalone pyrrole keep its N–H while the same ring label accepts an
/// N-substituent.
#[derive(Debug, Clone)]
pub struct Assembly {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    pins: Vec<Vec<(u8, usize)>>,
}

impl Assembly {
    /// Starts an assembly from a first placed fragment; atom indices carry
    /// over unchanged.
    pub fn from_fragment(frag: &MolGraph) -> Self {
        let mut asm = Assembly {
            atoms: Vec::new(),
            bonds: Vec::new(),
            pins: Vec::new(),
        };
        for (i, atom) in frag.atoms.iter().enumerate() {
            asm.push_atom(atom, frag.degree(i));
        }
        asm.bonds.extend(frag.bonds.iter().copied());
        asm
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }

    fn push_atom(&mut self, atom: &Atom, frag_degree: usize) {
        let mut stored = *atom;
        let mut pins = Vec::new();
        if atom.fixed_h {
            pins.push((atom.implicit_h, frag_degree));
        }
        stored.fixed_h = false;
        stored.implicit_h = 0;
        self.atoms.push(stored);
        self.pins.push(pins);
    }

    fn degree(&self, atom: usize) -> usize {
        self.bonds.iter().filter(|b| b.a == atom || b.b == atom).count()
    }

    fn find_bond(&self, a: usize, b: usize) -> Option<&Bond> {
        self.bonds
            .iter()
            .find(|x| (x.a == a && x.b == b) || (x.a == b && x.b == a))
    }

    /// Glues `child` onto this assembly, identifying child atom `c` with
    /// assembly atom `h` for every pair `(h, c)`. Returns the grown assembly
    /// and the mapping child-fragment-atom → assembly-atom.
    pub fn glue(
        &self,
        pairs: &[(usize, usize)],
        child: &MolGraph,
    ) -> Result<(Assembly, Vec<usize>), JunctureError> {
        if pairs.is_empty() {
            return Err(JunctureError::InconsistentAttachment(
                "attachment shares no atoms".into(),
            ));
        }
        let mut child_map = vec![usize::MAX; child.n_atoms()];
        let mut host_used = vec![false; self.n_atoms()];
        for &(h, c) in pairs {
            if h >= self.n_atoms() || c >= child.n_atoms() {
                return Err(JunctureError::InconsistentAttachment(format!(
                    "attachment pair ({h}, {c}) out of range"
                )));
            }
            if host_used[h] || child_map[c] != usize::MAX {
                return Err(JunctureError::InconsistentAttachment(format!(
                    "attachment pair ({h}, {c}) repeats an atom"
                )));
            }
            let (ha, ca) = (&self.atoms[h], &child.atoms[c]);
            if ha.element.atomic_number != ca.element.atomic_number {
                return Err(JunctureError::InconsistentAttachment(format!(
                    "cannot identify {} with {}",
                    ha.element.symbol, ca.element.symbol
                )));
            }
            if ha.formal_charge != ca.formal_charge {
                return Err(JunctureError::InconsistentAttachment(format!(
                    "charge mismatch on shared {} atom",
                    ha.element.symbol
                )));
            }
            host_used[h] = true;
            child_map[c] = h;
        }

        let mut merged = self.clone();
        for (c, atom) in child.atoms.iter().enumerate() {
            let h = child_map[c];
            if h == usize::MAX {
                child_map[c] = merged.n_atoms();
                merged.push_atom(atom, child.degree(c));
            } else {
                merged.atoms[h].aromatic |= atom.aromatic;
                if atom.fixed_h {
                    merged.pins[h].push((atom.implicit_h, child.degree(c)));
                }
            }
        }
        for bond in &child.bonds {
            let (a, b) = (child_map[bond.a], child_map[bond.b]);
            match merged.find_bond(a, b) {
                Some(existing) if existing.order == bond.order => {}
                Some(_) => {
                    return Err(JunctureError::InconsistentAttachment(
                        "shared bond has conflicting orders".into(),
                    ))
                }
                None => merged.bonds.push(Bond {
                    a,
                    b,
                    order: bond.order,
                }),
            }
        }
        Ok((merged, child_map))
    }

    /// Materializes the assembly as a sanitized molecule, applying hydrogen
    /// pins whose fragment degree matches the final degree.
    pub fn to_mol(&self) -> Result<MolGraph, JunctureError> {
        let mut atoms = self.atoms.clone();
        for (i, atom) in atoms.iter_mut().enumerate() {
            let degree = self.degree(i);
            if let Some(&(h, _)) = self.pins[i].iter().find(|&&(_, d)| d == degree) {
                atom.fixed_h = true;
                atom.implicit_h = h;
            }
        }
        let mut mol = MolGraph::new(atoms, self.bonds.clone()).map_err(chem_to_juncture)?;
        mol.sanitize().map_err(chem_to_juncture)?;
        Ok(mol)
    }
}

fn chem_to_juncture(e: ChemError) -> JunctureError {
    match e {
        ChemError::ValenceViolation { atom, .. } => JunctureError::ValenceViolation { atom },
        other => JunctureError::InconsistentAttachment(other.to_string()),
    }
}

/// Rebuilds a molecule from a junction tree and one attachment per non-root
/// cluster. With the ground-truth attachments of `decompose`, the result is
/// isomorphic to the original molecule.
pub fn assemble(tree: &JunctionTree, attachments: &[Attachment]) -> Result<MolGraph, JunctureError> {
    let fragments: Vec<MolGraph> = tree
        .clusters
        .iter()
        .map(|c| {
            parse_smiles(&c.canonical_label).map_err(|source| JunctureError::BadLabel {
                label: c.canonical_label.clone(),
                source,
            })
        })
        .collect::<Result<_, _>>()?;

    let mut placed: Vec<Option<Vec<usize>>> = vec![None; tree.n_clusters()];
    let mut assembly = Assembly::from_fragment(&fragments[tree.root]);
    placed[tree.root] = Some((0..fragments[tree.root].n_atoms()).collect());

    for (parent, child) in tree.parent_order() {
        let att = attachments
            .iter()
            .find(|a| a.child == child)
            .ok_or_else(|| {
                JunctureError::InconsistentAttachment(format!(
                    "no attachment provided for cluster {child}"
                ))
            })?;
        let parent_map = placed[parent]
            .as_ref()
            .expect("parents are placed before children");
        let pairs: Vec<(usize, usize)> = att
            .pairs
            .iter()
            .map(|&(p, c)| {
                parent_map
                    .get(p)
                    .copied()
                    .ok_or_else(|| {
                        JunctureError::InconsistentAttachment(format!(
                            "parent atom {p} out of range for cluster {parent}"
                        ))
                    })
                    .map(|host| (host, c))
            })
            .collect::<Result<_, _>>()?;
        let (next, child_map) = assembly.glue(&pairs, &fragments[child])?;
        assembly = next;
        placed[child] = Some(child_map);
    }
    assembly.to_mol()
}

/// One legal way to glue a child fragment onto an assembly.
#[derive(Debug, Clone)]
pub struct AttachmentCandidate {
    /// (assembly atom, child fragment atom) identifications.
    pub pairs: Vec<(usize, usize)>,
    /// The assembly after gluing.
    pub assembly: Assembly,
    /// Sanitized molecule of the merged state.
    pub merged: MolGraph,
    /// Canonical SMILES of `merged`; candidates are deduplicated on this.
    pub key: String,
    /// Child fragment atom → merged assembly atom.
    pub child_map: Vec<usize>,
}

/// All automorphism-distinct ways to glue `child` onto `host` so that the
/// shared atoms lie in `site` (the parent cluster's atoms). Single-atom
/// identifications are enumerated first (host atom ascending, child atom
/// ascending), then two-atom fused-edge identifications; duplicates are
/// collapsed by the canonical form of the merged graph and the list is
/// truncated to `cap` entries.
pub fn enumerate_attachments(
    host: &Assembly,
    site: &[usize],
    child: &MolGraph,
    cap: usize,
) -> Result<Vec<AttachmentCandidate>, JunctureError> {
    let found = all_candidates(host, site, child, cap);
    if found.is_empty() {
        return Err(JunctureError::NoLegalAttachment);
    }
    Ok(found)
}

/// Like [`enumerate_attachments`], but guarantees the ground-truth gluing is
/// present: when the candidate matching `truth_pairs` (by merged canonical
/// form) was truncated away, it is appended past the cap. Returns the
/// candidate list and the index of the ground-truth candidate.
pub fn candidates_with_truth(
    host: &Assembly,
    site: &[usize],
    child: &MolGraph,
    truth_pairs: &[(usize, usize)],
    cap: usize,
) -> Result<(Vec<AttachmentCandidate>, usize), JunctureError> {
    let mut found = all_candidates(host, site, child, cap);
    let truth = try_glue(host, truth_pairs.to_vec(), child).ok_or_else(|| {
        JunctureError::InconsistentAttachment("ground-truth attachment does not glue".into())
    })?;
    if let Some(idx) = found.iter().position(|c| c.key == truth.key) {
        return Ok((found, idx));
    }
    found.push(truth);
    let idx = found.len() - 1;
    Ok((found, idx))
}

fn all_candidates(
    host: &Assembly,
    site: &[usize],
    child: &MolGraph,
    cap: usize,
) -> Vec<AttachmentCandidate> {
    let mut found: Vec<AttachmentCandidate> = Vec::new();
    let mut keys = std::collections::HashSet::new();
    let mut consider = |cand: AttachmentCandidate, found: &mut Vec<AttachmentCandidate>| {
        if found.len() < cap && keys.insert(cand.key.clone()) {
            found.push(cand);
        }
    };

    for &h in site {
        for c in 0..child.n_atoms() {
            if let Some(cand) = try_glue(host, vec![(h, c)], child) {
                consider(cand, &mut found);
            }
        }
    }

    let site_bonds: Vec<(usize, usize)> = host
        .bonds
        .iter()
        .filter(|b| site.contains(&b.a) && site.contains(&b.b))
        .map(|b| (b.a, b.b))
        .collect();
    for &(ha, hb) in &site_bonds {
        for bond in &child.bonds {
            for (ca, cb) in [(bond.a, bond.b), (bond.b, bond.a)] {
                if let Some(cand) = try_glue(host, vec![(ha, ca), (hb, cb)], child) {
                    consider(cand, &mut found);
                }
            }
        }
    }
    found
}

fn try_glue(
    host: &Assembly,
    pairs: Vec<(usize, usize)>,
    child: &MolGraph,
) -> Option<AttachmentCandidate> {
    let (assembly, child_map) = host.glue(&pairs, child).ok()?;
    let merged = assembly.to_mol().ok()?;
    if !merged.is_connected() {
        return None;
    }
    let key = write_smiles(&merged);
    Some(AttachmentCandidate {
        pairs,
        assembly,
        merged,
        key,
        child_map,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::{isomorphic, parse_smiles};
    use crate::juncture::{decompose, ground_truth_attachments};

    fn round_trip(smiles: &str) {
        let mol = parse_smiles(smiles).unwrap();
        let tree = decompose(&mol);
        let atts = ground_truth_attachments(&mol, &tree);
        let rebuilt = assemble(&tree, &atts)
            .unwrap_or_else(|e| panic!("assemble({smiles}): {e}"));
        assert!(
            isomorphic(&mol, &rebuilt),
            "{smiles} rebuilt as {}",
            crate::chem::write_smiles(&rebuilt)
        );
    }

    #[test]
    fn propane_round_trips() {
        round_trip("CCC");
    }

    #[test]
    fn representative_molecules_round_trip() {
        for smi in [
            "Cc1ccccc1",
            "CC(C)Cc1ccc(C(C)C(=O)O)cc1",
            "c1ccc2ccccc2c1",
            "CC(=O)Oc1ccccc1C(=O)O",
            "C1CC2CCC1C2",
            "CC(C)(C)C",
            "c1cc[nH]c1",
            "Cn1cccc1",
            "[NH3+]CC([O-])=O",
            "O=C1CCCCC1",
            "c1ccc(-c2ccccc2)cc1",
            "OC(=O)c1ccncc1",
            "CN1CCC(O)(c2ccccc2)CC1",
        ] {
            round_trip(smi);
        }
    }

    #[test]
    fn different_element_identification_is_rejected() {
        let host = Assembly::from_fragment(&parse_smiles("CC").unwrap());
        let child = parse_smiles("CO").unwrap();
        let err = host.glue(&[(0, 1)], &child).unwrap_err();
        assert!(matches!(err, JunctureError::InconsistentAttachment(_)));
    }

    #[test]
    fn bond_onto_benzene_has_one_distinct_candidate() {
        let host = Assembly::from_fragment(&parse_smiles("c1ccccc1").unwrap());
        let child = parse_smiles("CC").unwrap();
        let cands = enumerate_attachments(&host, &[0, 1, 2, 3, 4, 5], &child, 40).unwrap();
        assert_eq!(cands.len(), 1);
        assert_eq!(cands[0].key, "Cc1ccccc1");
    }

    #[test]
    fn bond_onto_monosubstituted_ring_gives_ortho_meta_para() {
        // host: toluene-shaped assembly; attach another C-C at the ring
        let mol = parse_smiles("Cc1ccccc1").unwrap();
        let host = Assembly::from_fragment(&mol);
        let ring_site = [1, 2, 3, 4, 5, 6];
        let child = parse_smiles("CC").unwrap();
        let cands = enumerate_attachments(&host, &ring_site, &child, 40).unwrap();
        let mut keys: Vec<&str> = cands.iter().map(|c| c.key.as_str()).collect();
        keys.sort_unstable();
        assert_eq!(cands.len(), 3, "{keys:?}");
    }

    #[test]
    fn empty_site_has_no_legal_attachment() {
        let host = Assembly::from_fragment(&parse_smiles("CC").unwrap());
        let child = parse_smiles("CC").unwrap();
        assert!(matches!(
            enumerate_attachments(&host, &[], &child, 40),
            Err(JunctureError::NoLegalAttachment)
        ));
    }

    #[test]
    fn truth_candidate_is_always_present() {
        let host = Assembly::from_fragment(&parse_smiles("Cc1ccccc1").unwrap());
        let child = parse_smiles("CC").unwrap();
        // cap of 1 would normally evict two of the three distinct gluings
        let truth = vec![(4usize, 0usize)]; // para-ish position
        let (cands, idx) = candidates_with_truth(&host, &[1, 2, 3, 4, 5, 6], &child, &truth, 1).unwrap();
        assert!(idx < cands.len());
        let reglued = try_glue(&host, truth, &child).unwrap();
        assert_eq!(cands[idx].key, reglued.key);
    }

    #[test]
    fn fused_ring_attachment_uses_two_atoms() {
        // glue a second benzene onto benzene along a shared edge
        let host = Assembly::from_fragment(&parse_smiles("c1ccccc1").unwrap());
        let child = parse_smiles("c1ccccc1").unwrap();
        let cands = enumerate_attachments(&host, &[0, 1, 2, 3, 4, 5], &child, 40).unwrap();
        let naphthalene = parse_smiles("c1ccc2ccccc2c1").unwrap();
        assert!(
            cands.iter().any(|c| isomorphic(&c.merged, &naphthalene)),
            "keys: {:?}",
            cands.iter().map(|c| &c.key).collect::<Vec<_>>()
        );
    }

    #[test]
    fn spiro_attachment_shares_one_atom() {
        let host = Assembly::from_fragment(&parse_smiles("C1CCCCC1").unwrap());
        let child = parse_smiles("C1CCCC1").unwrap();
        let cands = enumerate_attachments(&host, &[0, 1, 2, 3, 4, 5], &child, 40).unwrap();
        let spiro = parse_smiles("C1CCC2(CC1)CCCC2").unwrap();
        assert!(cands.iter().any(|c| isomorphic(&c.merged, &spiro)));
    }
}
