"""Example 1 end to end: QSM support, the invariant control set, entropy upper bounds over Q and K."""

import argparse
import sys

from qsmlab.cli import main

if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", default="out/ex1")
    p.add_argument("--alpha", type=float, default=0.09)
    a = p.parse_args()
    sys.exit(main(["example", "ex1", "--config", "configs/ex1.json", "--out", a.out,
                   "--override", f"system.alpha={a.alpha}"]))
