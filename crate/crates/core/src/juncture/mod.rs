//! Junction-tree decomposition of molecular graphs.
//!
//! A molecule is cut into chemically meaningful clusters — SSSR rings
//! (bridged systems merged), non-ring bonds, and singleton atoms at dense
//! junctions — and the clusters are arranged in a spanning tree. The tree
//! plus per-edge attachment choices is enough to reassemble the molecule,
//! which is the supervision signal for the structure decoders.

mod assemble;
mod decompose;
mod fragment;

pub use assemble::{
    assemble, candidates_with_truth, enumerate_attachments, Assembly, AttachmentCandidate,
};
pub use decompose::{decompose, ground_truth_attachments};
pub use fragment::{extract_fragment, Fragment};

use crate::chem::ChemError;
use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JunctureError {
    #[error("empty dataset: vocabulary needs at least one molecule")]
    EmptyDataset,
    #[error("inconsistent attachment: {0}")]
    InconsistentAttachment(String),
    #[error("valence violation while merging clusters at atom {atom}")]
    ValenceViolation { atom: usize },
    #[error("no legal attachment between the given clusters")]
    NoLegalAttachment,
    #[error("cluster label {0:?} not in vocabulary")]
    UnknownLabel(String),
    #[error("cluster label {label:?} does not parse: {source}")]
    BadLabel {
        label: String,
        source: ChemError,
    },
    #[error("vocab file: {0}")]
    Io(#[from] std::io::Error),
}

/// Kind of a junction-tree cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClusterKind {
    Ring,
    Bond,
    Singleton,
}

impl fmt::Display for ClusterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClusterKind::Ring => write!(f, "ring"),
            ClusterKind::Bond => write!(f, "bond"),
            ClusterKind::Singleton => write!(f, "singleton"),
        }
    }
}

/// One cluster of a junction tree: a ring system, a non-ring bond, or a
/// single junction atom, with its atoms given as sorted indices into the
/// source molecule.
#[derive(Debug, Clone)]
pub struct Cluster {
    pub kind: ClusterKind,
    pub atom_indices: Vec<usize>,
    pub canonical_label: String,
}

/// The junction tree of a molecule: clusters plus spanning-tree edges.
///
/// Edges are stored as index pairs with `i < j`; `root` is the cluster
/// containing atom 0. Adjacent clusters share at least one atom, and for
/// any atom the clusters containing it form a connected subtree.
#[derive(Debug, Clone)]
pub struct JunctionTree {
    pub clusters: Vec<Cluster>,
    pub edges: Vec<(usize, usize)>,
    pub root: usize,
}

impl JunctionTree {
    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    /// Clusters adjacent to `c`, ascending.
    pub fn neighbors(&self, c: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .edges
            .iter()
            .filter_map(|&(i, j)| {
                if i == c {
                    Some(j)
                } else if j == c {
                    Some(i)
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out
    }

    /// Tree edges oriented away from the root, in BFS order with children
    /// visited in ascending cluster index. Every non-root cluster appears
    /// exactly once as a child.
    pub fn parent_order(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.n_clusters().saturating_sub(1));
        let mut seen = vec![false; self.n_clusters()];
        seen[self.root] = true;
        let mut frontier = std::collections::VecDeque::from([self.root]);
        while let Some(c) = frontier.pop_front() {
            for nb in self.neighbors(c) {
                if !seen[nb] {
                    seen[nb] = true;
                    out.push((c, nb));
                    frontier.push_back(nb);
                }
            }
        }
        out
    }
}

/// Ground-truth gluing for one tree edge: which fragment atoms of the child
/// cluster coincide with which fragment atoms of its parent. Atom indices on
/// both sides refer to the *canonical* fragment order, i.e. the atom order
/// obtained by parsing the cluster's canonical label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Attachment {
    pub child: usize,
    pub pairs: Vec<(usize, usize)>,
}

/// Write-once cluster vocabulary; index = line number in the vocab file.
#[derive(Debug, Clone)]
pub struct Vocab {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Builds a vocab from unique, lexicographically sorted labels.
    pub fn from_labels(labels: Vec<String>) -> Self {
        debug_assert!(labels.windows(2).all(|w| w[0] < w[1]), "labels sorted+unique");
        let index = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
        Vocab { labels, index }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn label(&self, idx: usize) -> &str {
        &self.labels[idx]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Plain text, one label per line, line number = index.
    pub fn save(&self, path: &Path) -> Result<(), JunctureError> {
        let mut text = self.labels.join("\n");
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, JunctureError> {
        let text = std::fs::read_to_string(path)?;
        let labels: Vec<String> = text.lines().map(str::to_string).collect();
        if labels.is_empty() {
            return Err(JunctureError::EmptyDataset);
        }
        let index: HashMap<String, usize> = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
        if index.len() != labels.len() {
            return Err(JunctureError::InconsistentAttachment(
                "vocab file has duplicate labels".into(),
            ));
        }
        Ok(Vocab { labels, index })
    }
}

/// Union of cluster labels over the training molecules, sorted
/// lexicographically.
pub fn build_vocab<'a, I>(molecules: I) -> Result<Vocab, JunctureError>
where
    I: IntoIterator<Item = &'a crate::chem::MolGraph>,
{
    let mut set = std::collections::BTreeSet::new();
    let mut any = false;
    for mol in molecules {
        any = true;
        for cluster in decompose(mol).clusters {
            set.insert(cluster.canonical_label);
        }
    }
    if !any {
        return Err(JunctureError::EmptyDataset);
    }
    Ok(Vocab::from_labels(set.into_iter().collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;

    #[test]
    fn vocab_roundtrips_through_file() {
        let mols: Vec<_> = ["CCC", "c1ccccc1", "Cc1ccccc1"]
            .iter()
            .map(|s| parse_smiles(s).unwrap())
            .collect();
        let vocab = build_vocab(&mols).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        vocab.save(&path).unwrap();
        let loaded = Vocab::load(&path).unwrap();
        assert_eq!(loaded.labels(), vocab.labels());
        for (i, l) in vocab.labels().iter().enumerate() {
            assert_eq!(loaded.get(l), Some(i));
        }
    }

    #[test]
    fn empty_stream_is_rejected() {
        assert!(matches!(build_vocab([]), Err(JunctureError::EmptyDataset)));
    }

    #[test]
    fn propane_vocab_has_one_label() {
        let mols = [parse_smiles("CCC").unwrap()];
        let vocab = build_vocab(&mols).unwrap();
        assert_eq!(vocab.labels(), ["CC"]);
    }
}
