//! The pattern mini-language used by the shipped descriptor tables.
//!
//! Two forms share this module:
//!
//! 1. *Atom-type condition tables* (Crippen logP, TPSA): each row is
//!    `NAME value [value…] cond;cond;…` where a condition is `key op int`
//!    with op one of `=`, `>=`, `<=`, over per-atom features such as
//!    element, aromaticity, hydrogen count, or neighbor counts. Rows are
//!    tried top to bottom; the first match wins.
//!
//! 2. *Subgraph queries* (structural alerts): a linear SMILES-like notation
//!    (`[CH]=O`, `C1CO1`, `S(=O)(=O)X`) compiled to a small query graph and
//!    matched with a VF2-style backtracking search. `X` matches any halogen
//!    and `*` any atom; a bracket hydrogen count is a minimum.

use crate::chem::{BondOrder, MolGraph};

// ---------------------------------------------------------------------------
// per-atom features and condition tables
// ---------------------------------------------------------------------------

/// Per-atom feature vector the condition keys address.
#[derive(Debug, Clone, Default)]
pub struct AtomFeatures {
    pub arom: i32,
    pub charge: i32,
    pub h: i32,
    pub deg: i32,
    pub sgl: i32,
    pub dbl: i32,
    pub trp: i32,
    pub arb: i32,
    pub aromnb: i32,
    pub arnb_c: i32,
    pub hetnb: i32,
    pub dblhet: i32,
    pub acylnb: i32,
    pub ring3: i32,
    pub alnb_c: i32,
    pub alnb_n: i32,
    pub alnb_o: i32,
    pub alnb_s: i32,
    pub alnb_f: i32,
    pub alnb_cl: i32,
    pub alnb_br: i32,
    pub alnb_i: i32,
}

/// Computes the feature vectors for every atom of a sanitized molecule.
pub fn atom_features(mol: &MolGraph) -> Vec<AtomFeatures> {
    let mut ring3 = vec![false; mol.n_atoms()];
    for ring in crate::chem::ring_perception(mol) {
        if ring.len() == 3 {
            for a in ring {
                ring3[a] = true;
            }
        }
    }
    // carbons double-bonded to O or S mark their neighbors as acyl-adjacent
    let acyl: Vec<bool> = (0..mol.n_atoms())
        .map(|i| {
            mol.atoms[i].element.symbol == "C"
                && mol.incident(i).iter().any(|&bi| {
                    let b = &mol.bonds[bi];
                    b.order == BondOrder::Double
                        && matches!(mol.atoms[b.other(i)].element.symbol, "O" | "S")
                })
        })
        .collect();

    (0..mol.n_atoms())
        .map(|i| {
            let atom = &mol.atoms[i];
            let mut f = AtomFeatures {
                arom: i32::from(atom.aromatic),
                charge: atom.formal_charge,
                h: atom.implicit_h as i32,
                deg: mol.degree(i) as i32,
                ring3: i32::from(ring3[i]),
                ..AtomFeatures::default()
            };
            for &bi in mol.incident(i) {
                let bond = &mol.bonds[bi];
                let nb = bond.other(i);
                let nb_atom = &mol.atoms[nb];
                match bond.order {
                    BondOrder::Single => f.sgl += 1,
                    BondOrder::Double => f.dbl += 1,
                    BondOrder::Triple => f.trp += 1,
                    BondOrder::Aromatic => f.arb += 1,
                }
                if bond.order == BondOrder::Double && nb_atom.element.symbol != "C" {
                    f.dblhet += 1;
                }
                if nb_atom.element.symbol != "C" {
                    f.hetnb += 1;
                }
                if acyl[nb] {
                    f.acylnb += 1;
                }
                if nb_atom.aromatic {
                    f.aromnb += 1;
                    if nb_atom.element.symbol == "C" {
                        f.arnb_c += 1;
                    }
                } else {
                    match nb_atom.element.symbol {
                        "C" => f.alnb_c += 1,
                        "N" => f.alnb_n += 1,
                        "O" => f.alnb_o += 1,
                        "S" => f.alnb_s += 1,
                        "F" => f.alnb_f += 1,
                        "Cl" => f.alnb_cl += 1,
                        "Br" => f.alnb_br += 1,
                        "I" => f.alnb_i += 1,
                        _ => {}
                    }
                }
            }
            f
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FeatKey {
    Arom,
    Charge,
    H,
    Deg,
    Sgl,
    Dbl,
    Trp,
    Arb,
    AromNb,
    ArNbC,
    HetNb,
    DblHet,
    AcylNb,
    Ring3,
    AlNbC,
    AlNbN,
    AlNbO,
    AlNbS,
    AlNbF,
    AlNbCl,
    AlNbBr,
    AlNbI,
}

impl FeatKey {
    fn parse(s: &str) -> Option<FeatKey> {
        Some(match s {
            "arom" => FeatKey::Arom,
            "charge" => FeatKey::Charge,
            "h" => FeatKey::H,
            "deg" => FeatKey::Deg,
            "sgl" => FeatKey::Sgl,
            "dbl" => FeatKey::Dbl,
            "trp" => FeatKey::Trp,
            "arb" => FeatKey::Arb,
            "aromnb" => FeatKey::AromNb,
            "arnbC" => FeatKey::ArNbC,
            "hetnb" => FeatKey::HetNb,
            "dblhet" => FeatKey::DblHet,
            "acylnb" => FeatKey::AcylNb,
            "ring3" => FeatKey::Ring3,
            "alnbC" => FeatKey::AlNbC,
            "alnbN" => FeatKey::AlNbN,
            "alnbO" => FeatKey::AlNbO,
            "alnbS" => FeatKey::AlNbS,
            "alnbF" => FeatKey::AlNbF,
            "alnbCl" => FeatKey::AlNbCl,
            "alnbBr" => FeatKey::AlNbBr,
            "alnbI" => FeatKey::AlNbI,
            _ => return None,
        })
    }

    fn get(self, f: &AtomFeatures) -> i32 {
        match self {
            FeatKey::Arom => f.arom,
            FeatKey::Charge => f.charge,
            FeatKey::H => f.h,
            FeatKey::Deg => f.deg,
            FeatKey::Sgl => f.sgl,
            FeatKey::Dbl => f.dbl,
            FeatKey::Trp => f.trp,
            FeatKey::Arb => f.arb,
            FeatKey::AromNb => f.aromnb,
            FeatKey::ArNbC => f.arnb_c,
            FeatKey::HetNb => f.hetnb,
            FeatKey::DblHet => f.dblhet,
            FeatKey::AcylNb => f.acylnb,
            FeatKey::Ring3 => f.ring3,
            FeatKey::AlNbC => f.alnb_c,
            FeatKey::AlNbN => f.alnb_n,
            FeatKey::AlNbO => f.alnb_o,
            FeatKey::AlNbS => f.alnb_s,
            FeatKey::AlNbF => f.alnb_f,
            FeatKey::AlNbCl => f.alnb_cl,
            FeatKey::AlNbBr => f.alnb_br,
            FeatKey::AlNbI => f.alnb_i,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Eq,
    Ge,
    Le,
}

#[derive(Debug, Clone)]
enum Cond {
    Elem(String),
    Num(FeatKey, Op, i32),
}

impl Cond {
    fn matches(&self, symbol: &str, f: &AtomFeatures) -> bool {
        match self {
            Cond::Elem(s) => s == symbol,
            Cond::Num(key, op, rhs) => {
                let lhs = key.get(f);
                match op {
                    Op::Eq => lhs == *rhs,
                    Op::Ge => lhs >= *rhs,
                    Op::Le => lhs <= *rhs,
                }
            }
        }
    }
}

/// One row of an atom-type table: a name, numeric payload columns, and the
/// conjunction of conditions an atom must satisfy.
#[derive(Debug, Clone)]
pub struct CondRow {
    pub name: String,
    pub values: Vec<f64>,
    conds: Vec<Cond>,
}

/// An ordered first-match atom-type table.
#[derive(Debug, Clone)]
pub struct CondTable {
    rows: Vec<CondRow>,
}

impl CondTable {
    /// Parses `NAME value…(n_values) conds` rows; `#` starts a comment and
    /// blank lines are skipped. A lone `-` condition field matches any atom.
    /// Panics on malformed rows: the tables ship inside the binary and a
    /// parse failure is a build defect, not an input error.
    pub fn parse(text: &str, n_values: usize) -> CondTable {
        let mut rows = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = parse_fields(line, lineno, n_values);
            let conds_field = parts.pop().expect("condition field present");
            let conds = if conds_field == "-" {
                Vec::new()
            } else {
                conds_field
                    .split(';')
                    .map(|c| parse_cond(c, lineno))
                    .collect()
            };
            let name = parts.remove(0);
            let values = parts
                .iter()
                .map(|v| {
                    v.parse::<f64>()
                        .unwrap_or_else(|_| panic!("table line {}: bad number {v:?}", lineno + 1))
                })
                .collect();
            rows.push(CondRow { name, values, conds });
        }
        assert!(!rows.is_empty(), "atom-type table is empty");
        CondTable { rows }
    }

    /// First row matching the atom, or None.
    pub fn classify(&self, symbol: &str, f: &AtomFeatures) -> Option<&CondRow> {
        self.rows
            .iter()
            .find(|row| row.conds.iter().all(|c| c.matches(symbol, f)))
    }

    pub fn rows(&self) -> &[CondRow] {
        &self.rows
    }
}

fn parse_fields(line: &str, lineno: usize, n_values: usize) -> Vec<String> {
    let fields: Vec<String> = line.split_whitespace().map(str::to_string).collect();
    assert_eq!(
        fields.len(),
        n_values + 2,
        "table line {}: expected name, {} value(s) and conditions",
        lineno + 1,
        n_values
    );
    fields
}

fn parse_cond(text: &str, lineno: usize) -> Cond {
    let (key, op, value) = if let Some((k, v)) = text.split_once(">=") {
        (k, Op::Ge, v)
    } else if let Some((k, v)) = text.split_once("<=") {
        (k, Op::Le, v)
    } else if let Some((k, v)) = text.split_once('=') {
        (k, Op::Eq, v)
    } else {
        panic!("table line {}: bad condition {text:?}", lineno + 1);
    };
    if key == "elem" {
        assert!(matches!(op, Op::Eq), "elem only supports '='");
        return Cond::Elem(value.to_string());
    }
    let key = FeatKey::parse(key)
        .unwrap_or_else(|| panic!("table line {}: unknown key {key:?}", lineno + 1));
    let value: i32 = value
        .parse()
        .unwrap_or_else(|_| panic!("table line {}: bad value {value:?}", lineno + 1));
    Cond::Num(key, op, value)
}

// ---------------------------------------------------------------------------
// subgraph queries
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
enum ElemSpec {
    Any,
    Halogen,
    Sym(String),
}

#[derive(Debug, Clone)]
struct QueryAtom {
    elem: ElemSpec,
    aromatic: Option<bool>,
    charge: Option<i32>,
    min_h: u8,
}

#[derive(Debug, Clone, Copy)]
enum BondSpec {
    Any,
    Order(BondOrder),
}

#[derive(Debug, Clone)]
struct QueryBond {
    a: usize,
    b: usize,
    spec: BondSpec,
}

/// A compiled subgraph query.
#[derive(Debug, Clone)]
pub struct Query {
    atoms: Vec<QueryAtom>,
    bonds: Vec<QueryBond>,
    adjacency: Vec<Vec<usize>>,
}

impl Query {
    /// Compiles the linear pattern notation. Panics on malformed patterns
    /// (they ship with the binary).
    pub fn parse(pattern: &str) -> Query {
        let bytes = pattern.as_bytes();
        let mut atoms: Vec<QueryAtom> = Vec::new();
        let mut bonds: Vec<QueryBond> = Vec::new();
        let mut prev: Option<usize> = None;
        let mut pending: Option<BondSpec> = None;
        let mut branch: Vec<Option<usize>> = Vec::new();
        let mut rings: std::collections::HashMap<u8, (usize, Option<BondSpec>)> =
            std::collections::HashMap::new();
        let mut pos = 0;
        let bad = |pos: usize| -> ! { panic!("query {pattern:?}: unexpected byte at {pos}") };

        while pos < bytes.len() {
            match bytes[pos] {
                b'(' => {
                    branch.push(prev);
                    pos += 1;
                }
                b')' => {
                    prev = branch.pop().unwrap_or_else(|| bad(pos));
                    pos += 1;
                }
                b'-' => {
                    pending = Some(BondSpec::Order(BondOrder::Single));
                    pos += 1;
                }
                b'=' => {
                    pending = Some(BondSpec::Order(BondOrder::Double));
                    pos += 1;
                }
                b'#' => {
                    pending = Some(BondSpec::Order(BondOrder::Triple));
                    pos += 1;
                }
                b':' => {
                    pending = Some(BondSpec::Order(BondOrder::Aromatic));
                    pos += 1;
                }
                b'~' => {
                    pending = Some(BondSpec::Any);
                    pos += 1;
                }
                b'0'..=b'9' => {
                    let digit = bytes[pos] - b'0';
                    let here = prev.unwrap_or_else(|| bad(pos));
                    match rings.remove(&digit) {
                        None => {
                            rings.insert(digit, (here, pending.take()));
                        }
                        Some((there, opened)) => {
                            let spec = match (opened, pending.take()) {
                                (None, None) => BondSpec::Order(BondOrder::Single),
                                (Some(s), None) | (None, Some(s)) => s,
                                (Some(s), Some(_)) => s,
                            };
                            bonds.push(QueryBond {
                                a: there,
                                b: here,
                                spec,
                            });
                        }
                    }
                    pos += 1;
                }
                b'[' => {
                    let end = pattern[pos..]
                        .find(']')
                        .map(|e| pos + e)
                        .unwrap_or_else(|| bad(pos));
                    let atom = parse_bracket(&pattern[pos + 1..end]);
                    pos = end + 1;
                    link(&mut atoms, &mut bonds, &mut prev, &mut pending, atom);
                }
                _ => {
                    let (atom, used) = parse_plain(&pattern[pos..]).unwrap_or_else(|| bad(pos));
                    pos += used;
                    link(&mut atoms, &mut bonds, &mut prev, &mut pending, atom);
                }
            }
        }
        assert!(rings.is_empty(), "query {pattern:?}: unclosed ring digit");
        assert!(branch.is_empty(), "query {pattern:?}: unbalanced parens");
        assert!(!atoms.is_empty(), "query {pattern:?}: empty");

        let mut adjacency = vec![Vec::new(); atoms.len()];
        for (bi, b) in bonds.iter().enumerate() {
            adjacency[b.a].push(bi);
            adjacency[b.b].push(bi);
        }
        Query {
            atoms,
            bonds,
            adjacency,
        }
    }

    /// True if the query embeds anywhere in the molecule (subgraph match:
    /// extra molecule bonds between mapped atoms are allowed).
    pub fn matches(&self, mol: &MolGraph) -> bool {
        // order query atoms so each one after the first touches a previous one
        let order = self.search_order();
        let mut assignment = vec![usize::MAX; self.atoms.len()];
        let mut used = vec![false; mol.n_atoms()];
        self.search(mol, &order, 0, &mut assignment, &mut used)
    }

    fn search_order(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.atoms.len());
        let mut seen = vec![false; self.atoms.len()];
        let mut queue = std::collections::VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(q) = queue.pop_front() {
            order.push(q);
            for &bi in &self.adjacency[q] {
                let b = &self.bonds[bi];
                let other = if b.a == q { b.b } else { b.a };
                if !seen[other] {
                    seen[other] = true;
                    queue.push_back(other);
                }
            }
        }
        assert_eq!(order.len(), self.atoms.len(), "query must be connected");
        order
    }

    fn search(
        &self,
        mol: &MolGraph,
        order: &[usize],
        depth: usize,
        assignment: &mut Vec<usize>,
        used: &mut Vec<bool>,
    ) -> bool {
        if depth == order.len() {
            return true;
        }
        let q = order[depth];
        for m in 0..mol.n_atoms() {
            if used[m] || !atom_matches(&self.atoms[q], mol, m) {
                continue;
            }
            let consistent = self.adjacency[q].iter().all(|&bi| {
                let b = &self.bonds[bi];
                let other = if b.a == q { b.b } else { b.a };
                let mapped = assignment[other];
                if mapped == usize::MAX {
                    return true; // other end not placed yet
                }
                match mol.bond_between(m, mapped) {
                    None => false,
                    Some(mb) => match b.spec {
                        BondSpec::Any => true,
                        BondSpec::Order(o) => mb.order == o,
                    },
                }
            });
            if !consistent {
                continue;
            }
            assignment[q] = m;
            used[m] = true;
            if self.search(mol, order, depth + 1, assignment, used) {
                return true;
            }
            assignment[q] = usize::MAX;
            used[m] = false;
        }
        false
    }
}

fn atom_matches(q: &QueryAtom, mol: &MolGraph, m: usize) -> bool {
    let atom = &mol.atoms[m];
    let elem_ok = match &q.elem {
        ElemSpec::Any => true,
        ElemSpec::Halogen => matches!(atom.element.symbol, "F" | "Cl" | "Br" | "I"),
        ElemSpec::Sym(s) => atom.element.symbol == s,
    };
    elem_ok
        && q.aromatic.map_or(true, |want| atom.aromatic == want)
        && q.charge.map_or(true, |want| atom.formal_charge == want)
        && atom.implicit_h >= q.min_h
}

fn link(
    atoms: &mut Vec<QueryAtom>,
    bonds: &mut Vec<QueryBond>,
    prev: &mut Option<usize>,
    pending: &mut Option<BondSpec>,
    atom: QueryAtom,
) {
    let idx = atoms.len();
    atoms.push(atom);
    if let Some(p) = *prev {
        bonds.push(QueryBond {
            a: p,
            b: idx,
            spec: pending.take().unwrap_or(BondSpec::Order(BondOrder::Single)),
        });
    }
    *prev = Some(idx);
}

fn parse_plain(rest: &str) -> Option<(QueryAtom, usize)> {
    let two = rest.get(0..2);
    if let Some(sym @ ("Cl" | "Br")) = two {
        return Some((concrete(sym, false), 2));
    }
    let c = rest.chars().next()?;
    let atom = match c {
        'C' | 'N' | 'O' | 'S' | 'P' | 'B' | 'F' | 'I' => concrete(&c.to_string(), false),
        'c' | 'n' | 'o' | 's' => concrete(&c.to_uppercase().to_string(), true),
        'X' => QueryAtom {
            elem: ElemSpec::Halogen,
            aromatic: None,
            charge: None,
            min_h: 0,
        },
        '*' => QueryAtom {
            elem: ElemSpec::Any,
            aromatic: None,
            charge: None,
            min_h: 0,
        },
        _ => return None,
    };
    Some((atom, 1))
}

fn concrete(sym: &str, aromatic: bool) -> QueryAtom {
    QueryAtom {
        elem: ElemSpec::Sym(sym.to_string()),
        aromatic: Some(aromatic),
        charge: Some(0),
        min_h: 0,
    }
}

fn parse_bracket(body: &str) -> QueryAtom {
    let bytes = body.as_bytes();
    let mut pos = 0;
    let (mut atom, used) =
        parse_plain(body).unwrap_or_else(|| panic!("query bracket {body:?}: bad element"));
    pos += used;
    while pos < bytes.len() {
        match bytes[pos] {
            b'H' => {
                pos += 1;
                let mut n = 1u8;
                if pos < bytes.len() && bytes[pos].is_ascii_digit() {
                    n = bytes[pos] - b'0';
                    pos += 1;
                }
                atom.min_h = n;
            }
            b'+' | b'-' => {
                let sign: i32 = if bytes[pos] == b'+' { 1 } else { -1 };
                pos += 1;
                let mut mag = 1i32;
                if pos < bytes.len() && bytes[pos].is_ascii_digit() {
                    mag = (bytes[pos] - b'0') as i32;
                    pos += 1;
                }
                atom.charge = Some(sign * mag);
            }
            _ => panic!("query bracket {body:?}: unexpected byte at {pos}"),
        }
    }
    atom
}
