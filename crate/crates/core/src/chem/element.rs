//! Periodic data for the organic subset, loaded from the versioned table
//! shipped in `data/periodic_table.txt`.

use std::sync::OnceLock;

const PERIODIC_TABLE: &str = include_str!("../../data/periodic_table.txt");

/// One row of the periodic data table.
#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub symbol: &'static str,
    pub atomic_number: u8,
    pub atomic_weight: f64,
    /// Allowed total valences for the neutral atom, ascending.
    pub allowed_valences: Vec<u8>,
}

impl Element {
    /// Valence-electron count after applying a formal charge.
    ///
    /// Used to decide whether an aromatic atom can contribute a lone pair
    /// to the ring's delocalized system (N, O, S can; C, B cannot).
    pub(crate) fn net_valence_electrons(&self, charge: i32) -> i32 {
        self.valence_electrons() - charge
    }

    /// Valence-electron count for the neutral atom (main group only).
    fn valence_electrons(&self) -> i32 {
        let z = self.atomic_number as i32;
        let core = match z {
            1..=2 => 0,
            3..=10 => 2,
            11..=18 => 10,
            19..=36 => 28,
            37..=54 => 46,
            _ => panic!("element {} outside supported range", self.symbol),
        };
        z - core
    }

    /// Allowed total valences adjusted for a formal charge.
    ///
    /// Neutral atoms use the table as-is. Charged atoms fall back to the
    /// single octet valence of the isoelectronic neutral species, e.g.
    /// N+ behaves like C (valence 4) and O- like F (valence 1).
    pub fn valences_for_charge(&self, charge: i32) -> Vec<u8> {
        if charge == 0 {
            return self.allowed_valences.clone();
        }
        let ve = self.net_valence_electrons(charge);
        if !(0..=8).contains(&ve) {
            return Vec::new();
        }
        let v = if ve <= 4 { ve } else { 8 - ve };
        if v <= 0 {
            Vec::new()
        } else {
            vec![v as u8]
        }
    }
}

fn parse_table(text: &'static str) -> Vec<Element> {
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let symbol = parts.next().expect("periodic table: missing symbol");
        let atomic_number: u8 = parts
            .next()
            .and_then(|s| s.parse().ok())
            .expect("periodic table: bad atomic number");
        let atomic_weight: f64 = parts
            .next()
            .and_then(|s| s.parse().ok())
            .expect("periodic table: bad atomic weight");
        let allowed_valences: Vec<u8> = parts
            .next()
            .expect("periodic table: missing valences")
            .split(',')
            .map(|v| v.parse().expect("periodic table: bad valence"))
            .collect();
        assert!(
            !allowed_valences.is_empty() && allowed_valences.windows(2).all(|w| w[0] < w[1]),
            "periodic table: valences for {symbol} must be nonempty and ascending"
        );
        out.push(Element {
            symbol,
            atomic_number,
            atomic_weight,
            allowed_valences,
        });
    }
    assert!(!out.is_empty(), "periodic table: empty");
    out
}

fn table() -> &'static [Element] {
    static TABLE: OnceLock<Vec<Element>> = OnceLock::new();
    TABLE.get_or_init(|| parse_table(PERIODIC_TABLE))
}

/// Look up an element by its case-sensitive symbol.
pub fn element(symbol: &str) -> Option<&'static Element> {
    table().iter().find(|e| e.symbol == symbol)
}

/// All elements in table order. Index into this slice is the element id
/// used for one-hot atom features.
pub fn all_elements() -> &'static [Element] {
    table()
}

/// Index of an element in the periodic table (one-hot feature position).
pub fn element_index(e: &Element) -> usize {
    table()
        .iter()
        .position(|x| x.atomic_number == e.atomic_number)
        .expect("element not in table")
}

pub fn hydrogen_weight() -> f64 {
    element("H").expect("H in periodic table").atomic_weight
}
