#!/usr/bin/env python3
"""Builds the QED ranking fixture used by the property tests.

The reference scores are computed here, independently of the Rust
calculators: the descriptor vectors below were derived by hand from each
structure (atom counts, published logP and polar-surface-area values,
rotatable-bond and ring counts read off the drawing), and the desirability
transform uses the published parameter set. Run from the repository root:

    python3 tools/make_qed_fixture.py > crates/core/data/qed_reference.csv
"""

import math

# name a b c d e f dmax weight, in descriptor order
ADS = {
    "MW":     (2.817065973, 392.5754953, 290.7489764, 2.419764353, 49.22325677, 65.37051707, 104.98055614, 0.66),
    "ALOGP":  (3.172690585, 137.8624751, 2.534937431, 4.581497897, 0.822739154, 0.576295591, 131.31866035, 0.46),
    "HBA":    (2.948620388, 160.4605972, 3.615294657, 4.435986202, 0.290141953, 1.300669958, 148.77630464, 0.05),
    "HBD":    (1.618662227, 1010.051101, 0.985094388, 0.000000001, 0.713820843, 0.920922555, 258.16326158, 0.61),
    "PSA":    (1.876861559, 125.2232657, 62.90773554, 87.83366614, 12.01999824, 28.51324732, 104.56861672, 0.06),
    "ROTB":   (0.010000000, 272.4121427, 2.558379970, 1.565547684, 1.271567166, 2.758063707, 105.44204380, 0.65),
    "AROM":   (3.217788970, 957.7374108, 2.274627939, 0.000000001, 1.317690384, 0.375760881, 312.33726097, 0.48),
    "ALERTS": (0.010000000, 1199.094025, -0.090028830, 0.000000001, 0.185904477, 0.875193782, 417.72531400, 0.95),
}

# name, smiles, (MW, ALOGP, HBA, HBD, PSA, ROTB, AROM, ALERTS)
MOLECULES = [
    ("methane",         "C",                                              (16.04,  0.64, 0, 0,   0.00,  0, 0, 0)),
    ("ethanol",         "CCO",                                            (46.07,  0.00, 1, 1,  20.23,  0, 0, 0)),
    ("benzene",         "c1ccccc1",                                       (78.11,  1.69, 0, 0,   0.00,  0, 1, 0)),
    ("toluene",         "Cc1ccccc1",                                      (92.14,  1.96, 0, 0,   0.00,  0, 1, 0)),
    ("phenol",          "Oc1ccccc1",                                      (94.11,  1.39, 1, 1,  20.23,  0, 1, 0)),
    ("pyridine",        "c1ccncc1",                                       (79.10,  1.08, 1, 0,  12.89,  0, 1, 0)),
    ("aspirin",         "CC(=O)Oc1ccccc1C(=O)O",                          (180.16, 1.31, 4, 1,  63.60,  3, 1, 0)),
    ("caffeine",        "CN1C=NC2=C1C(=O)N(C)C(=O)N2C",                   (194.19, -1.03, 6, 0, 58.44,  0, 2, 0)),
    ("paracetamol",     "CC(=O)Nc1ccc(O)cc1",                             (151.16, 1.35, 3, 2,  49.33,  1, 1, 0)),
    ("benzoic_acid",    "OC(=O)c1ccccc1",                                 (122.12, 1.38, 2, 1,  37.30,  1, 1, 0)),
    ("naproxen",        "COc1ccc2cc(C(C)C(=O)O)ccc2c1",                   (230.26, 3.00, 3, 1,  46.53,  3, 2, 0)),
    ("lidocaine",       "CCN(CC)CC(=O)Nc1c(C)cccc1C",                     (234.34, 2.20, 3, 1,  32.34,  5, 1, 0)),
    ("diphenhydramine", "CN(C)CCOC(c1ccccc1)c1ccccc1",                    (255.36, 3.27, 2, 0,  12.47,  6, 2, 0)),
    ("ibuprofen",       "CC(C)Cc1ccc(C(C)C(=O)O)cc1",                     (206.28, 3.07, 2, 1,  37.30,  4, 1, 0)),
    ("dopamine",        "NCCc1ccc(O)c(O)c1",                              (153.18, 0.00, 3, 3,  66.48,  2, 1, 0)),
    ("sorbitol",        "OCC(O)C(O)C(O)C(O)CO",                           (182.17, -3.10, 6, 6, 121.38, 5, 0, 0)),
    ("decane",          "CCCCCCCCCC",                                     (142.28, 4.15, 0, 0,   0.00,  7, 0, 0)),
    ("palmitic_acid",   "CCCCCCCCCCCCCCCC(=O)O",                          (256.43, 6.07, 2, 1,  37.30, 14, 0, 0)),
    ("glucose",         "OCC1OC(O)C(O)C(O)C1O",                           (180.16, -2.59, 6, 5, 110.38, 1, 0, 0)),
    ("azo_dinitro_dye", "O=[N+]([O-])c1ccc(N=Nc2ccc([N+](=O)[O-])cc2)cc1", (272.22, 3.30, 8, 0, 116.36, 2, 2, 2)),
]


def desirability(name: str, x: float) -> float:
    a, b, c, d, e, f, dmax, _w = ADS[name]
    rise = 1.0 / (1.0 + math.exp(-(x - c + d / 2.0) / e))
    fall = 1.0 - 1.0 / (1.0 + math.exp(-(x - c - d / 2.0) / f))
    return min((a + b * rise * fall) / dmax, 1.0)


def qed(descriptors) -> float:
    names = list(ADS)
    total = sum(ADS[n][7] * math.log(desirability(n, x)) for n, x in zip(names, descriptors))
    weight = sum(ADS[n][7] for n in names)
    return math.exp(total / weight)


def main() -> None:
    print("name,smiles,qed")
    for name, smiles, desc in MOLECULES:
        print(f"{name},{smiles},{qed(desc):.4f}")


if __name__ == "__main__":
    main()
