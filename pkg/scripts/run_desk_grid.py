#!/usr/bin/env python3
"""Run the full method-comparison grid on a synthetic benchmark and print
the per-method table (mean over seeds, at the most imbalanced ratio).

Drives the same code paths as `vmfbal grid` but in-process, so it is the
quickest way to eyeball how much each synthesis method recovers.
"""
import argparse
import csv
import subprocess
import sys
import tempfile
from collections import defaultdict
from pathlib import Path


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--workdir", type=Path, default=None,
                    help="where to put generated files (default: temp dir)")
    ap.add_argument("--irs", default="10,50,100")
    ap.add_argument("--seeds", default="0,1,2,3,4")
    ap.add_argument("--nmax", type=int, default=200)
    args = ap.parse_args()

    workdir = args.workdir or Path(tempfile.mkdtemp(prefix="vmfbal-grid-"))
    workdir.mkdir(parents=True, exist_ok=True)
    here = Path(__file__).parent

    def run(cmd):
        print("+", " ".join(map(str, cmd)))
        subprocess.run([str(c) for c in cmd], check=True)

    run([sys.executable, here / "make_toy_embeddings.py", "--outdir", workdir,
         "--train-per-class", str(args.nmax)])
    run([sys.executable, "-m", "vmfbal.cli", "grid",
         "--train", workdir / "toy.train.vmfe",
         "--test", workdir / "toy.test.vmfe",
         "--outdir", workdir / "runs",
         "--irs", args.irs, "--seeds", args.seeds, "--nmax", str(args.nmax)])

    by_cell = defaultdict(list)
    with open(workdir / "runs" / "grid.csv") as fh:
        for row in csv.DictReader(fh):
            if row["overall"]:
                by_cell[(row["method"], row["ir"])].append(float(row["overall"]))

    irs = sorted({ir for _, ir in by_cell}, key=float)
    methods = ["none", "ros", "smote", "gauss-kde", "vmf-kde"]
    print(f"\nmean overall accuracy over seeds {args.seeds}:")
    print(f"{'method':>10s} " + " ".join(f"ir={ir:>6s}" for ir in irs))
    for m in methods:
        cells = [by_cell.get((m, ir)) for ir in irs]
        print(f"{m:>10s} " + " ".join(
            f"{sum(c) / len(c):9.4f}" if c else f"{'---':>9s}" for c in cells))
    print(f"\nartifacts in {workdir}")


if __name__ == "__main__":
    main()
