#!/usr/bin/env python3
"""Single-task sweep: correct-group model vs trivial-symmetry baseline.

Writes one report per (task, arm, seed) under --out, ready for
`symbreak report`. Equivariant protocol: 2500 records, 40 epochs.
"""

import argparse
import pathlib

from symbreak.cli import main as cli

TASKS = [
    "intersect",
    "symmetricdifference",
    "palindrome",
    "monotonerun",
    "cyclicsum",
    "cyclicproduct",
]


def run(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/single")
    ap.add_argument("--seeds", default="1,2,3")
    ap.add_argument("--tasks", default=",".join(TASKS))
    ap.add_argument("--records", default="2500")
    args = ap.parse_args(argv)
    out = pathlib.Path(args.out)
    for task in args.tasks.split(","):
        for arm, group in (("equivariant", None), ("baseline", "I(10)")):
            dest = out / task / arm
            flags = [
                "train", "--task", task, "--records", args.records,
                "--seeds", args.seeds, "--out", str(dest),
            ]
            if group:
                flags += ["--group", group]
            rc = cli(flags)
            if rc:
                return rc
    return 0


if __name__ == "__main__":
    raise SystemExit(run())
