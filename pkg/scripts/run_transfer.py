#!/usr/bin/env python3
"""Transfer sweep: fine-tune-only vs pretrain+fine-tune on each target task,
with the other tasks as the pretraining mix (0.15 target units, 1.5 per
pretraining task)."""

import argparse
import pathlib

from symbreak.cli import main as cli

EQ_TASKS = ["intersect", "cyclicsum", "palindrome"]


def run(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/transfer")
    ap.add_argument("--seeds", default="1,2,3")
    args = ap.parse_args(argv)
    out = pathlib.Path(args.out)
    for target in EQ_TASKS:
        others = ",".join(t for t in EQ_TASKS if t != target)
        rc = cli([
            "transfer", "--target", target, "--pretrain", others,
            "--target-units", "0.15", "--pretrain-units", "1.5",
            "--seeds", args.seeds, "--out", str(out / target),
        ])
        if rc:
            return rc
    return 0


if __name__ == "__main__":
    raise SystemExit(run())
