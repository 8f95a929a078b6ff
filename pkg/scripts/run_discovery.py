#!/usr/bin/env python3
"""Symmetry discovery: train Intersect with the misspecified group (S_5)^2
and compare edge-embedding distances before and after training against the
full half-swap group."""

import argparse
import pathlib

from symbreak.cli import main as cli


def run(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/discovery")
    ap.add_argument("--seeds", default="1,2,3")
    args = ap.parse_args(argv)
    out = pathlib.Path(args.out)
    rc = cli([
        "train", "--task", "intersect", "--group", "S(5)xS(5)",
        "--records", "2500", "--seeds", args.seeds, "--save-init",
        "--out", str(out / "train"),
    ])
    if rc:
        return rc
    for seed in args.seeds.split(","):
        rc = cli([
            "discovery",
            "--init-checkpoint", str(out / "train" / f"checkpoint_init_seed{seed}.bin"),
            "--checkpoint", str(out / "train" / f"checkpoint_seed{seed}.bin"),
            "--full-group", "Intersect(10)",
            "--mis-group", "S(5)xS(5)",
            "--out", str(out / f"analysis_seed{seed}"),
        ])
        if rc:
            return rc
    return 0


if __name__ == "__main__":
    raise SystemExit(run())
