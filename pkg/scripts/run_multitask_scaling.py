#!/usr/bin/env python3
"""Multitask scaling sweep: single-task vs shared-trunk multitask across data
sizes r in units, and across task counts at fixed r."""

import argparse
import pathlib

from symbreak.cli import main as cli

TASK_SETS = {
    3: "intersect,cyclicsum,palindrome",
    4: "intersect,cyclicsum,palindrome,symmetricdifference",
    5: "intersect,cyclicsum,palindrome,symmetricdifference,cyclicproduct",
    6: "intersect,cyclicsum,palindrome,symmetricdifference,cyclicproduct,monotonerun",
}


def run(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/multitask")
    ap.add_argument("--seeds", default="1,2,3")
    ap.add_argument("--units", default="0.2,0.4,0.6,0.8,1.0,2.0,3.0")
    ap.add_argument("--task-counts", default="3,4,5,6")
    args = ap.parse_args(argv)
    out = pathlib.Path(args.out)
    for r in args.units.split(","):
        rc = cli([
            "train", "--task", "intersect", "--units", r,
            "--seeds", args.seeds, "--out", str(out / f"single_r{r}"),
        ])
        if rc:
            return rc
        for count in args.task_counts.split(","):
            rc = cli([
                "multitask", "--tasks", TASK_SETS[int(count)], "--units", r,
                "--seeds", args.seeds, "--out", str(out / f"mt{count}_r{r}"),
            ])
            if rc:
                return rc
    return 0


if __name__ == "__main__":
    raise SystemExit(run())
