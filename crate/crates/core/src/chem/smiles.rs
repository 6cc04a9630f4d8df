//! SMILES reader for the organic subset plus bracket atoms with charge and
//! explicit hydrogen counts. Stereo markers are accepted and discarded.

use super::element::element;
use super::{Atom, Bond, BondOrder, ChemError, MolGraph};
use std::collections::HashMap;

/// Parse a SMILES string into a sanitized [`MolGraph`].
///
/// Supported: B C N O P S F Cl Br I, aromatic b c n o p s, bond symbols
/// `- = # :`, branches, ring closures (digits and `%nn`), bracket atoms with
/// charge and explicit H. `/ \ @` are discarded. `.` is rejected.
pub fn parse_smiles(text: &str) -> Result<MolGraph, ChemError> {
    let bytes = text.as_bytes();
    let mut p = Parser {
        bytes,
        pos: 0,
        atoms: Vec::new(),
        atom_offsets: Vec::new(),
        bonds: Vec::new(),
        prev: None,
        pending: None,
        branch_stack: Vec::new(),
        rings: HashMap::new(),
    };
    p.run()?;
    let offsets = p.atom_offsets.clone();
    let mut mol = MolGraph::new(p.atoms, p.bonds)?;
    mol.sanitize().map_err(|e| match e {
        ChemError::ValenceViolation { atom, .. } => ChemError::ValenceViolation {
            atom,
            offset: offsets.get(atom).copied(),
        },
        other => other,
    })?;
    Ok(mol)
}

struct PendingBond {
    order: BondOrder,
    offset: usize,
}

struct RingOpen {
    atom: usize,
    order: Option<BondOrder>,
    offset: usize,
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
    atoms: Vec<Atom>,
    atom_offsets: Vec<usize>,
    bonds: Vec<Bond>,
    prev: Option<usize>,
    pending: Option<PendingBond>,
    branch_stack: Vec<(usize, usize)>, // (saved prev atom, '(' offset)
    rings: HashMap<u16, RingOpen>,
}

impl<'a> Parser<'a> {
    fn run(&mut self) -> Result<(), ChemError> {
        while self.pos < self.bytes.len() {
            let i = self.pos;
            match self.bytes[i] {
                b'(' => {
                    let Some(prev) = self.prev else {
                        return Err(ChemError::UnbalancedBranch(i));
                    };
                    self.branch_stack.push((prev, i));
                    self.pos += 1;
                }
                b')' => {
                    if self.pending.is_some() {
                        return Err(ChemError::UnknownAtomSymbol(i));
                    }
                    let Some((prev, _)) = self.branch_stack.pop() else {
                        return Err(ChemError::UnbalancedBranch(i));
                    };
                    self.prev = Some(prev);
                    self.pos += 1;
                }
                b'-' => self.set_pending(BondOrder::Single, i)?,
                b'=' => self.set_pending(BondOrder::Double, i)?,
                b'#' => self.set_pending(BondOrder::Triple, i)?,
                b':' => self.set_pending(BondOrder::Aromatic, i)?,
                // stereo bond markers read as plain single bonds
                b'/' | b'\\' => self.set_pending(BondOrder::Single, i)?,
                b'.' => return Err(ChemError::MultiFragmentInput(i)),
                b'0'..=b'9' => {
                    let d = (self.bytes[i] - b'0') as u16;
                    self.pos += 1;
                    self.ring_closure(d, i)?;
                }
                b'%' => {
                    if i + 2 >= self.bytes.len()
                        || !self.bytes[i + 1].is_ascii_digit()
                        || !self.bytes[i + 2].is_ascii_digit()
                    {
                        return Err(ChemError::UnmatchedRingClosure(i));
                    }
                    let d = (self.bytes[i + 1] - b'0') as u16 * 10
                        + (self.bytes[i + 2] - b'0') as u16;
                    self.pos += 3;
                    self.ring_closure(d, i)?;
                }
                b'[' => {
                    let atom = self.parse_bracket_atom()?;
                    self.add_atom(atom, i)?;
                }
                _ => {
                    let atom = self.parse_organic_atom()?;
                    self.add_atom(atom, i)?;
                }
            }
        }
        if let Some(p) = &self.pending {
            return Err(ChemError::UnknownAtomSymbol(p.offset));
        }
        if let Some(&(_, off)) = self.branch_stack.last() {
            return Err(ChemError::UnbalancedBranch(off));
        }
        if let Some(open) = self.rings.values().min_by_key(|o| o.offset) {
            return Err(ChemError::UnmatchedRingClosure(open.offset));
        }
        if self.atoms.is_empty() {
            return Err(ChemError::UnknownAtomSymbol(0));
        }
        Ok(())
    }

    fn set_pending(&mut self, order: BondOrder, offset: usize) -> Result<(), ChemError> {
        if self.pending.is_some() || self.prev.is_none() {
            return Err(ChemError::UnknownAtomSymbol(offset));
        }
        self.pending = Some(PendingBond { order, offset });
        self.pos += 1;
        Ok(())
    }

    fn default_order(&self, a: usize, b: usize) -> BondOrder {
        if self.atoms[a].aromatic && self.atoms[b].aromatic {
            BondOrder::Aromatic
        } else {
            BondOrder::Single
        }
    }

    fn add_atom(&mut self, atom: Atom, offset: usize) -> Result<(), ChemError> {
        let idx = self.atoms.len();
        self.atoms.push(atom);
        self.atom_offsets.push(offset);
        if let Some(prev) = self.prev {
            let order = match self.pending.take() {
                Some(p) => p.order,
                None => self.default_order(prev, idx),
            };
            self.bonds.push(Bond { a: prev, b: idx, order });
        }
        self.prev = Some(idx);
        Ok(())
    }

    fn ring_closure(&mut self, digit: u16, offset: usize) -> Result<(), ChemError> {
        let Some(here) = self.prev else {
            return Err(ChemError::UnmatchedRingClosure(offset));
        };
        let pending = self.pending.take();
        match self.rings.remove(&digit) {
            Some(open) => {
                if open.atom == here {
                    return Err(ChemError::UnmatchedRingClosure(offset));
                }
                let order = match (open.order, pending.map(|p| p.order)) {
                    (Some(a), Some(b)) if a != b => {
                        return Err(ChemError::UnmatchedRingClosure(offset))
                    }
                    (Some(a), _) => a,
                    (None, Some(b)) => b,
                    (None, None) => self.default_order(open.atom, here),
                };
                if self
                    .bonds
                    .iter()
                    .any(|b| (b.a, b.b) == (open.atom, here) || (b.b, b.a) == (open.atom, here))
                {
                    return Err(ChemError::UnmatchedRingClosure(offset));
                }
                self.bonds.push(Bond { a: open.atom, b: here, order });
            }
            None => {
                self.rings.insert(
                    digit,
                    RingOpen {
                        atom: here,
                        order: pending.map(|p| p.order),
                        offset,
                    },
                );
            }
        }
        Ok(())
    }

    fn parse_organic_atom(&mut self) -> Result<Atom, ChemError> {
        let i = self.pos;
        let rest = &self.bytes[i..];
        let (symbol, aromatic, len) = match rest {
            [b'C', b'l', ..] => ("Cl", false, 2),
            [b'B', b'r', ..] => ("Br", false, 2),
            [b'B', ..] => ("B", false, 1),
            [b'C', ..] => ("C", false, 1),
            [b'N', ..] => ("N", false, 1),
            [b'O', ..] => ("O", false, 1),
            [b'P', ..] => ("P", false, 1),
            [b'S', ..] => ("S", false, 1),
            [b'F', ..] => ("F", false, 1),
            [b'I', ..] => ("I", false, 1),
            [b'b', ..] => ("B", true, 1),
            [b'c', ..] => ("C", true, 1),
            [b'n', ..] => ("N", true, 1),
            [b'o', ..] => ("O", true, 1),
            [b'p', ..] => ("P", true, 1),
            [b's', ..] => ("S", true, 1),
            _ => return Err(ChemError::UnknownAtomSymbol(i)),
        };
        let el = element(symbol).ok_or(ChemError::UnknownAtomSymbol(i))?;
        self.pos += len;
        let mut atom = Atom::new(el);
        atom.aromatic = aromatic;
        Ok(atom)
    }

    fn parse_bracket_atom(&mut self) -> Result<Atom, ChemError> {
        let open = self.pos;
        self.pos += 1; // consume '['
        if self.pos >= self.bytes.len() {
            return Err(ChemError::UnknownAtomSymbol(open));
        }
        // isotopes are out of scope: a leading digit is rejected
        if self.bytes[self.pos].is_ascii_digit() {
            return Err(ChemError::UnknownAtomSymbol(self.pos));
        }
        let sym_start = self.pos;
        let (symbol, aromatic) = {
            let rest = &self.bytes[self.pos..];
            match rest {
                [b'C', b'l', ..] => {
                    self.pos += 2;
                    ("Cl".to_string(), false)
                }
                [b'B', b'r', ..] => {
                    self.pos += 2;
                    ("Br".to_string(), false)
                }
                [c, ..] if c.is_ascii_uppercase() => {
                    self.pos += 1;
                    ((*c as char).to_string(), false)
                }
                [c @ (b'b' | b'c' | b'n' | b'o' | b'p' | b's'), ..] => {
                    self.pos += 1;
                    ((*c as char).to_ascii_uppercase().to_string(), true)
                }
                _ => return Err(ChemError::UnknownAtomSymbol(self.pos)),
            }
        };
        let el = element(&symbol).ok_or(ChemError::UnknownAtomSymbol(sym_start))?;
        if el.symbol == "H" {
            // bare hydrogen atoms are not modeled
            return Err(ChemError::UnknownAtomSymbol(sym_start));
        }
        let mut atom = Atom::new(el);
        atom.aromatic = aromatic;
        atom.fixed_h = true;
        atom.implicit_h = 0;
        loop {
            let Some(&c) = self.bytes.get(self.pos) else {
                return Err(ChemError::UnknownAtomSymbol(open));
            };
            match c {
                b']' => {
                    self.pos += 1;
                    return Ok(atom);
                }
                b'@' => {
                    // chirality discarded
                    self.pos += 1;
                }
                b'H' => {
                    self.pos += 1;
                    atom.implicit_h = self.read_count(1) as u8;
                }
                b'+' => {
                    self.pos += 1;
                    let reps = self.read_repeats(b'+');
                    atom.formal_charge = if reps > 0 { 1 + reps } else { self.read_count(1) };
                }
                b'-' => {
                    self.pos += 1;
                    let reps = self.read_repeats(b'-');
                    atom.formal_charge = -(if reps > 0 { 1 + reps } else { self.read_count(1) });
                }
                _ => return Err(ChemError::UnknownAtomSymbol(self.pos)),
            }
        }
    }

    /// Reads an optional decimal count, defaulting when absent.
    fn read_count(&mut self, default: i32) -> i32 {
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == start {
            default
        } else {
            std::str::from_utf8(&self.bytes[start..self.pos])
                .unwrap()
                .parse()
                .unwrap_or(default)
        }
    }

    /// Counts additional repeats of `c` (for `++` / `--` style charges).
    fn read_repeats(&mut self, c: u8) -> i32 {
        let mut reps = 0;
        while self.bytes.get(self.pos) == Some(&c) {
            reps += 1;
            self.pos += 1;
        }
        reps
    }
}
