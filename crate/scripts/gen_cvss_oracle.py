"""Regenerate tests/fixtures/cvss31_oracle.csv with the `cvss` package."""

import csv
import itertools
import sys
from pathlib import Path

from cvss import CVSS3

VALUES = [
    ("AV", "NALP"), ("AC", "LH"), ("PR", "NLH"), ("UI", "NR"),
    ("S", "UC"), ("C", "HLN"), ("I", "HLN"), ("A", "HLN"),
]

out = Path(sys.argv[1] if len(sys.argv) > 1 else "crates/core/tests/fixtures/cvss31_oracle.csv")
with out.open("w", newline="") as f:
    w = csv.writer(f, lineterminator="\n")
    w.writerow(["vector", "score", "rating"])
    for combo in itertools.product(*(v for _, v in VALUES)):
        vec = "/".join(f"{k}:{c}" for (k, _), c in zip(VALUES, combo))
        c = CVSS3("CVSS:3.1/" + vec)
        w.writerow([vec, f"{c.base_score:.1f}", c.severities()[0]])
