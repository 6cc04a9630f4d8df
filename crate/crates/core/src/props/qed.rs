//! Quantitative estimate of drug-likeness: a weighted geometric mean of
//! desirability-transformed descriptors. The desirability parameters and
//! weights ship as a data table; see `qed_desirability.txt`.

use std::sync::OnceLock;

use super::descriptors::{qed_descriptors, QedDescriptors};
use super::PropsError;
use crate::chem::MolGraph;

const PARAMS_TEXT: &str = include_str!("../../data/qed_desirability.txt");

#[derive(Debug, Clone, Copy)]
struct AdsParams {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
    e: f64,
    f: f64,
    dmax: f64,
    weight: f64,
}

impl AdsParams {
    /// Asymmetric double sigmoid, normalized to (0, 1] by its maximum.
    fn desirability(&self, x: f64) -> f64 {
        let rise = 1.0 / (1.0 + (-(x - self.c + self.d / 2.0) / self.e).exp());
        let fall = 1.0 - 1.0 / (1.0 + (-(x - self.c - self.d / 2.0) / self.f).exp());
        let ads = self.a + self.b * rise * fall;
        (ads / self.dmax).min(1.0)
    }
}

/// Table order matches the descriptor vector: MW, ALOGP, HBA, HBD, PSA,
/// ROTB, AROM, ALERTS.
fn params() -> &'static [AdsParams; 8] {
    static PARAMS: OnceLock<[AdsParams; 8]> = OnceLock::new();
    PARAMS.get_or_init(|| {
        let expected = ["MW", "ALOGP", "HBA", "HBD", "PSA", "ROTB", "AROM", "ALERTS"];
        let mut rows = Vec::new();
        for raw in PARAMS_TEXT.lines() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            assert_eq!(fields.len(), 9, "desirability rows have name + 8 numbers");
            let num = |i: usize| -> f64 { fields[i].parse().expect("numeric field") };
            rows.push((
                fields[0].to_string(),
                AdsParams {
                    a: num(1),
                    b: num(2),
                    c: num(3),
                    d: num(4),
                    e: num(5),
                    f: num(6),
                    dmax: num(7),
                    weight: num(8),
                },
            ));
        }
        let names: Vec<&str> = rows.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, expected, "desirability table order is fixed");
        let mut out = [rows[0].1; 8];
        for (i, (_, p)) in rows.iter().enumerate() {
            out[i] = *p;
        }
        out
    })
}

/// Drug-likeness score in (0, 1] from a descriptor vector.
pub fn qed_from_descriptors(d: &QedDescriptors) -> f64 {
    let xs = [d.mw, d.alogp, d.hba, d.hbd, d.psa, d.rotb, d.arom, d.alerts];
    let mut log_sum = 0.0;
    let mut weight_sum = 0.0;
    for (p, x) in params().iter().zip(xs) {
        log_sum += p.weight * p.desirability(x).ln();
        weight_sum += p.weight;
    }
    (log_sum / weight_sum).exp()
}

/// Drug-likeness score of a sanitized molecule.
pub fn qed(mol: &MolGraph) -> Result<f64, PropsError> {
    Ok(qed_from_descriptors(&qed_descriptors(mol)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;

    fn score(smiles: &str) -> f64 {
        qed(&parse_smiles(smiles).unwrap()).unwrap()
    }

    #[test]
    fn scores_lie_in_unit_interval() {
        for smiles in [
            "C",
            "CCO",
            "c1ccccc1",
            "CC(C)Cc1ccc(C(C)C(=O)O)cc1",
            "CCCCCCCCCCCCCCCC(=O)O",
            "O=[N+]([O-])c1ccc(N=Nc2ccc([N+](=O)[O-])cc2)cc1",
        ] {
            let q = score(smiles);
            assert!(q > 0.0 && q <= 1.0, "{smiles} scored {q}");
        }
    }

    #[test]
    fn drug_like_molecules_outscore_pathological_ones() {
        let ibuprofen = score("CC(C)Cc1ccc(C(C)C(=O)O)cc1");
        let palmitic = score("CCCCCCCCCCCCCCCC(=O)O");
        let sorbitol = score("OCC(O)C(O)C(O)C(O)CO");
        assert!(ibuprofen > 0.6, "got {ibuprofen}");
        assert!(palmitic < 0.5, "got {palmitic}");
        assert!(sorbitol < 0.35, "got {sorbitol}");
        assert!(ibuprofen > palmitic && palmitic > sorbitol);

        // an alert costs score relative to the same descriptor vector without it
        let epoxide = parse_smiles("CC1CO1").unwrap();
        let d = crate::props::qed_descriptors(&epoxide).unwrap();
        assert!(d.alerts >= 1.0, "epoxide alert fires");
        let muted = crate::props::QedDescriptors { alerts: 0.0, ..d };
        assert!(qed_from_descriptors(&d) < qed_from_descriptors(&muted));
    }

    #[test]
    fn score_is_monotone_non_increasing_in_alerts() {
        // inject synthetic descriptor vectors so only the alert count varies
        let base = QedDescriptors {
            mw: 300.0,
            alogp: 2.5,
            hba: 3.0,
            hbd: 1.0,
            psa: 60.0,
            rotb: 4.0,
            arom: 2.0,
            alerts: 0.0,
        };
        let mut prev = f64::INFINITY;
        for alerts in 0..=6 {
            let q = qed_from_descriptors(&QedDescriptors {
                alerts: f64::from(alerts),
                ..base
            });
            assert!(q <= prev + 1e-15, "alerts={alerts} raised the score");
            prev = q;
        }
    }

    #[test]
    fn desirability_is_normalized() {
        for p in params().iter() {
            // the maximum over a dense sweep must not exceed 1
            let max = (0..=2000)
                .map(|i| p.desirability(f64::from(i) * 0.5))
                .fold(f64::MIN, f64::max);
            assert!(max <= 1.0 + 1e-12);
            assert!(max > 0.5, "dmax should be reachable");
        }
    }

    #[test]
    fn ranking_matches_reference_fixture() {
        let fixture = include_str!("../../data/qed_reference.csv");
        let mut reference = Vec::new();
        let mut computed = Vec::new();
        for line in fixture.lines().skip(1) {
            let mut fields = line.split(',');
            let _name = fields.next().unwrap();
            let smiles = fields.next().unwrap();
            let value: f64 = fields.next().unwrap().parse().unwrap();
            reference.push(value);
            computed.push(score(smiles));
        }
        assert_eq!(reference.len(), 20);
        let rho = spearman(&reference, &computed);
        assert!(rho >= 0.8, "Spearman correlation {rho:.3} below 0.8");
    }

    fn ranks(values: &[f64]) -> Vec<usize> {
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let mut rank = vec![0; values.len()];
        for (r, &i) in order.iter().enumerate() {
            rank[i] = r;
        }
        rank
    }

    fn spearman(a: &[f64], b: &[f64]) -> f64 {
        let (ra, rb) = (ranks(a), ranks(b));
        let n = a.len() as f64;
        let d2: f64 = ra
            .iter()
            .zip(&rb)
            .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
            .sum();
        1.0 - 6.0 * d2 / (n * (n * n - 1.0))
    }

    #[test]
    fn repeated_evaluation_is_deterministic() {
        let a = score("CC(=O)Nc1ccc(O)cc1");
        let b = score("CC(=O)Nc1ccc(O)cc1");
        assert_eq!(a, b);
    }
}
