"""Regenerate tests/data/affiliation_reference.json from the reference affiliation code.

The reference is the `affiliation` package vendored in TSB-UAD
(``pip install TSB_UAD`` or an unpacked wheel on ``--ref-path``). It is
only needed to refresh the stored fixtures, never at test time.

    python scripts/make_affiliation_fixtures.py --ref-path /tmp/ref
"""

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np


def segments(v):
    padded = np.concatenate([[0], v, [0]])
    edges = np.flatnonzero(np.diff(padded))
    return [(int(s), int(e)) for s, e in zip(edges[::2], edges[1::2])]


def random_case(rng):
    T = int(rng.integers(30, 400))
    gt = np.zeros(T, dtype=int)
    for _ in range(int(rng.integers(1, 5))):
        s = int(rng.integers(0, T - 5))
        gt[s : s + int(rng.integers(1, 30))] = 1
    pred = (rng.random(T) < rng.choice([0.02, 0.05, 0.2])).astype(int)
    for _ in range(int(rng.integers(0, 3))):
        s = int(rng.integers(0, T - 5))
        pred[s : s + int(rng.integers(1, 20))] = 1
    return T, segments(pred), segments(gt)


def hand_cases():
    return [
        (100, [(45, 55)], [(40, 60)]),
        (100, [(40, 60)], [(40, 60)]),
        (100, [], [(40, 60)]),
        (100, [(0, 3), (97, 100)], [(40, 60)]),
        (50, [(0, 50)], [(10, 20), (30, 35)]),
        (200, [(5, 6), (150, 160)], [(0, 10), (100, 110), (190, 200)]),
        (120, [(61, 62)], [(20, 30), (90, 100)]),
        (80, [(10, 11), (12, 13), (14, 15)], [(11, 14)]),
    ]


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--ref-path", help="directory containing the TSB_UAD package")
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "tests/data/affiliation_reference.json"))
    ap.add_argument("--seed", type=int, default=20240611)
    args = ap.parse_args(argv)
    if args.ref_path:
        sys.path.insert(0, args.ref_path)
    from TSB_UAD.vus.affiliation.metrics import pr_from_events

    rng = np.random.default_rng(args.seed)
    cases = hand_cases()
    while len(cases) < 25:
        cases.append(random_case(rng))
    out = []
    for T, pred, gt in cases:
        res = pr_from_events(pred, gt, (0, T))
        p = res["Affiliation_Precision"]
        out.append(
            {
                "T": T,
                "pred": [list(s) for s in pred],
                "gt": [list(s) for s in gt],
                "precision": None if math.isnan(p) else p,
                "recall": res["Affiliation_Recall"],
                "individual_precision": [None if math.isnan(x) else x for x in res["individual_precision_probabilities"]],
                "individual_recall": res["individual_recall_probabilities"],
            }
        )
    Path(args.out).write_text(json.dumps(out, indent=1) + "\n", encoding="utf-8")
    print(f"wrote {len(out)} cases to {args.out}")


if __name__ == "__main__":
    main()
