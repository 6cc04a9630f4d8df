//! Label ingestion: reads a molecule CSV, canonicalizes the SMILES keys,
//! masks a seeded fraction as observed, and stores values normalized by
//! statistics of the observed subset only.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{compute_property, PropertyKind, PropsError};
use crate::chem::{parse_smiles, write_smiles};

/// Normalization statistics of the observed training labels.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
}

impl NormStats {
    /// Population statistics of the given values. Degenerate inputs (no
    /// values, or all identical) fall back to std 1 so normalization stays
    /// finite.
    pub fn fit(values: &[f64]) -> NormStats {
        if values.is_empty() {
            return NormStats { mean: 0.0, std: 1.0 };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        NormStats {
            mean,
            std: if std < 1e-12 { 1.0 } else { std },
        }
    }

    pub fn normalize(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    pub fn denormalize(&self, v: f64) -> f64 {
        v * self.std + self.mean
    }
}

/// Property labels keyed by canonical SMILES, with an observed mask.
///
/// Values are stored normalized. Iteration order is file order (first
/// occurrence wins when a molecule repeats).
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct LabelTable {
    smiles: Vec<String>,
    values: Vec<f64>,
    observed: Vec<bool>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl LabelTable {
    fn new(smiles: Vec<String>, values: Vec<f64>, observed: Vec<bool>) -> LabelTable {
        let index = smiles
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        LabelTable {
            smiles,
            values,
            observed,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.smiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.smiles.is_empty()
    }

    pub fn observed_count(&self) -> usize {
        self.observed.iter().filter(|o| **o).count()
    }

    /// Normalized value and observed flag for a canonical SMILES key.
    pub fn get(&self, smiles: &str) -> Option<(f64, bool)> {
        self.index
            .get(smiles)
            .map(|&i| (self.values[i], self.observed[i]))
    }

    pub fn smiles(&self) -> &[String] {
        &self.smiles
    }

    /// `(canonical smiles, normalized value, observed)` at file-order index.
    pub fn entry(&self, i: usize) -> (&str, f64, bool) {
        (&self.smiles[i], self.values[i], self.observed[i])
    }

    /// Rebuilds the lookup index after deserialization.
    pub fn reindex(&mut self) {
        self.index = self
            .smiles
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
    }
}

/// Reads a label CSV and returns the normalized table plus the statistics
/// used to normalize it.
///
/// The header must be `smiles,<property>` (property column named after
/// `kind`) or `smiles` alone, in which case the internal calculator fills
/// the values. A seeded shuffle marks `label_fraction` of the rows as
/// observed; statistics come from the observed subset only.
pub fn load_labels(
    csv_path: &Path,
    kind: PropertyKind,
    label_fraction: f64,
    seed: u64,
) -> Result<(LabelTable, NormStats), PropsError> {
    assert!(
        (0.0..=1.0).contains(&label_fraction),
        "label_fraction must lie in [0, 1]"
    );
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(csv_path)
        .map_err(|e| csv_error(e, 1))?;

    let headers = reader.headers().map_err(|e| csv_error(e, 1))?.clone();
    let has_value_column = match headers.len() {
        1 => false,
        2 => true,
        n => {
            return Err(PropsError::MalformedRow {
                line: 1,
                reason: format!("expected 1 or 2 columns, found {n}"),
            })
        }
    };
    if !headers[0].eq_ignore_ascii_case("smiles") {
        return Err(PropsError::MalformedRow {
            line: 1,
            reason: format!("first column must be `smiles`, found {:?}", &headers[0]),
        });
    }
    if has_value_column && !headers[1].eq_ignore_ascii_case(kind.column_name()) {
        return Err(PropsError::MalformedRow {
            line: 1,
            reason: format!(
                "second column must be {:?} for this property, found {:?}",
                kind.column_name(),
                &headers[1]
            ),
        });
    }

    let mut smiles = Vec::new();
    let mut raw_values = Vec::new();
    let mut seen = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(e, 0))?;
        let line = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or_default();
        if record.len() != headers.len() {
            return Err(PropsError::MalformedRow {
                line,
                reason: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        let mol = parse_smiles(&record[0]).map_err(|e| PropsError::MalformedRow {
            line,
            reason: format!("bad SMILES {:?}: {e}", &record[0]),
        })?;
        let value = if has_value_column {
            record[1].parse::<f64>().map_err(|_| PropsError::MalformedRow {
                line,
                reason: format!("bad number {:?}", &record[1]),
            })?
        } else {
            compute_property(kind, &mol)?
        };
        if !value.is_finite() {
            return Err(PropsError::NonFiniteValue { line });
        }
        let canonical = write_smiles(&mol);
        if seen.insert(canonical.clone(), smiles.len()).is_none() {
            smiles.push(canonical);
            raw_values.push(value);
        }
    }

    let n = smiles.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n_observed = ((label_fraction * n as f64).round() as usize).min(n);
    let mut observed = vec![false; n];
    for &i in order.iter().take(n_observed) {
        observed[i] = true;
    }

    let observed_values: Vec<f64> = (0..n).filter(|&i| observed[i]).map(|i| raw_values[i]).collect();
    let stats = NormStats::fit(&observed_values);
    let values = raw_values.iter().map(|&v| stats.normalize(v)).collect();
    Ok((LabelTable::new(smiles, values, observed), stats))
}

fn csv_error(e: csv::Error, fallback_line: usize) -> PropsError {
    let line = e
        .position()
        .map(|p| p.line() as usize)
        .unwrap_or(fallback_line);
    PropsError::MalformedRow {
        line,
        reason: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(text: &str) -> tempfile::NamedTempFile {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        file.write_all(text.as_bytes()).unwrap();
        file.flush().unwrap();
        file
    }

    #[test]
    fn full_fraction_marks_everything_observed() {
        let file = write_csv("smiles,molwt\nC,16.043\nCCO,46.069\nCCC,44.097\n");
        let (table, stats) = load_labels(file.path(), PropertyKind::MolWt, 1.0, 7).unwrap();
        assert_eq!(table.len(), 3);
        assert_eq!(table.observed_count(), 3);
        // canonical keys: lookup uses the canonicalized spelling
        let (v, observed) = table.get("CCO").unwrap();
        assert!(observed);
        assert!((stats.denormalize(v) - 46.069).abs() < 1e-9);
    }

    #[test]
    fn seeded_mask_is_reproducible_and_sized() {
        let rows: String = (0..1000).map(|i| format!("{},{}.0\n", chain(i), i)).collect();
        let text = format!("smiles,logp\n{rows}");
        let file = write_csv(&text);
        let (a, _) = load_labels(file.path(), PropertyKind::LogP, 0.05, 42).unwrap();
        let (b, _) = load_labels(file.path(), PropertyKind::LogP, 0.05, 42).unwrap();
        assert_eq!(a.len(), 1000, "all rows are distinct molecules");
        assert_eq!(a.observed_count(), 50, "5% of 1000 rows");
        let mask_a: Vec<bool> = (0..a.len()).map(|i| a.entry(i).2).collect();
        let mask_b: Vec<bool> = (0..b.len()).map(|i| b.entry(i).2).collect();
        assert_eq!(mask_a, mask_b);
        let (c, _) = load_labels(file.path(), PropertyKind::LogP, 0.05, 43).unwrap();
        let mask_c: Vec<bool> = (0..c.len()).map(|i| c.entry(i).2).collect();
        assert_ne!(mask_a, mask_c, "a different seed moves the mask");
    }

    /// Distinct chain molecules: a nitrogen head breaks reversal symmetry,
    /// then ten C/O positions encode the integer, so every i < 1024 yields
    /// a different graph.
    fn chain(i: usize) -> String {
        let mut s = String::from("N");
        for bit in 0..10 {
            s.push(if i >> bit & 1 == 1 { 'O' } else { 'C' });
        }
        s
    }

    #[test]
    fn observed_values_are_standardized() {
        let rows: String = (0..200).map(|i| format!("{},{}.5\n", chain(i), i)).collect();
        let file = write_csv(&format!("smiles,qed\n{rows}"));
        let (table, _) = load_labels(file.path(), PropertyKind::Qed, 0.5, 3).unwrap();
        let observed: Vec<f64> = (0..table.len())
            .filter_map(|i| {
                let (_, v, obs) = table.entry(i);
                obs.then_some(v)
            })
            .collect();
        let n = observed.len() as f64;
        let mean = observed.iter().sum::<f64>() / n;
        let std = (observed.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 1e-9, "mean {mean}");
        assert!((std - 1.0).abs() < 1e-9, "std {std}");
    }

    #[test]
    fn denormalization_inverts_normalization() {
        let stats = NormStats::fit(&[3.0, 7.5, -2.25, 14.0, 0.5]);
        for v in [-100.0, -1.0, 0.0, 0.3, 42.0, 1e6] {
            assert!((stats.denormalize(stats.normalize(v)) - v).abs() <= 1e-12 * v.abs().max(1.0));
        }
    }

    #[test]
    fn header_only_csv_uses_internal_calculator() {
        let file = write_csv("smiles\nC\nCCO\n");
        let (table, stats) = load_labels(file.path(), PropertyKind::MolWt, 1.0, 0).unwrap();
        let (v, _) = table.get("C").unwrap();
        assert!((stats.denormalize(v) - 16.043).abs() < 1e-9);
    }

    #[test]
    fn malformed_rows_name_their_line() {
        let file = write_csv("smiles,logp\nCCO,1.0\nnot_a_molecule,2.0\n");
        match load_labels(file.path(), PropertyKind::LogP, 1.0, 0) {
            Err(PropsError::MalformedRow { line: 3, .. }) => {}
            other => panic!("expected MalformedRow at line 3, got {other:?}"),
        }
        let file = write_csv("smiles,logp\nCCO,abc\n");
        match load_labels(file.path(), PropertyKind::LogP, 1.0, 0) {
            Err(PropsError::MalformedRow { line: 2, .. }) => {}
            other => panic!("expected MalformedRow at line 2, got {other:?}"),
        }
    }

    #[test]
    fn non_finite_values_are_rejected() {
        let file = write_csv("smiles,logp\nCCO,NaN\n");
        match load_labels(file.path(), PropertyKind::LogP, 1.0, 0) {
            Err(PropsError::NonFiniteValue { line: 2 }) => {}
            other => panic!("expected NonFiniteValue, got {other:?}"),
        }
    }

    #[test]
    fn wrong_header_is_rejected() {
        let file = write_csv("smiles,density\nCCO,1.0\n");
        assert!(matches!(
            load_labels(file.path(), PropertyKind::LogP, 1.0, 0),
            Err(PropsError::MalformedRow { line: 1, .. })
        ));
    }

    #[test]
    fn duplicate_molecules_keep_first_row() {
        // C(C)O and CCO canonicalize identically
        let file = write_csv("smiles,logp\nCCO,1.0\nC(C)O,9.0\n");
        let (table, stats) = load_labels(file.path(), PropertyKind::LogP, 1.0, 0).unwrap();
        assert_eq!(table.len(), 1);
        let (v, _) = table.get("CCO").unwrap();
        assert!((stats.denormalize(v) - 1.0).abs() < 1e-9);
    }
}
