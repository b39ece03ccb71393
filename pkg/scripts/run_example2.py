"""Example 2 end to end: two W-control sets, only the right one invariant; h(Q) against h(cl D_2)."""

import argparse
import sys

from qsmlab.cli import main

if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", default="out/ex2")
    p.add_argument("--alpha", type=float, default=0.09)
    a = p.parse_args()
    sys.exit(main(["example", "ex2", "--config", "configs/ex2.json", "--out", a.out,
                   "--override", f"system.alpha={a.alpha}"]))
