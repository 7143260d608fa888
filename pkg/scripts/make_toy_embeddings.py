#!/usr/bin/env python3
"""Generate a synthetic embedding benchmark: one vMF cluster per class.

Class mean directions share a fixed pairwise cosine, which controls how
hard the classification problem is.  Writes <name>.train.vmfe and
<name>.test.vmfe plus class-name sidecars, ready for the vmfbal CLI.
"""
import argparse
import math
from pathlib import Path

import numpy as np

import vmfbal as vb


def make_means(gen, num_classes: int, dim: int, pair_cosine: float) -> np.ndarray:
    if num_classes + 1 > dim:
        raise SystemExit(f"need dim >= classes+1 for the shared-frame construction "
                         f"({num_classes + 1} > {dim})")
    q, _ = np.linalg.qr(gen.standard_normal((dim, num_classes + 1)))
    u, vs = q[:, 0], q[:, 1:].T
    return math.sqrt(pair_cosine) * u[None, :] + math.sqrt(1.0 - pair_cosine) * vs


def make_split(means, per_class: int, kappa: float, rng, split: str) -> vb.EmbeddingDataset:
    num_classes = means.shape[0]
    mats, labels = [], []
    for cls in range(num_classes):
        mats.append(vb.sample_vmf(vb.VmfParams(means[cls], kappa), per_class, rng))
        labels += [cls] * per_class
    names = {i: f"cluster-{i:02d}" for i in range(num_classes)}
    return vb.EmbeddingDataset(np.concatenate(mats).astype(np.float32),
                               np.array(labels, np.uint32), num_classes,
                               class_names=names, split=split)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--outdir", type=Path, default=Path("toydata"))
    ap.add_argument("--name", default="toy")
    ap.add_argument("--classes", type=int, default=20)
    ap.add_argument("--dim", type=int, default=64)
    ap.add_argument("--kappa", type=float, default=80.0)
    ap.add_argument("--train-per-class", type=int, default=200)
    ap.add_argument("--test-per-class", type=int, default=100)
    ap.add_argument("--pair-cosine", type=float, default=0.5,
                    help="cosine between every pair of class means")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    base = vb.RngHandle(args.seed, 777)
    means = make_means(base.child(0).gen, args.classes, args.dim, args.pair_cosine)
    train = make_split(means, args.train_per_class, args.kappa, base.child(1), "train")
    test = make_split(means, args.test_per_class, args.kappa, base.child(2), "test")

    args.outdir.mkdir(parents=True, exist_ok=True)
    train_path = args.outdir / f"{args.name}.train.vmfe"
    test_path = args.outdir / f"{args.name}.test.vmfe"
    vb.write_embeddings(train, train_path)
    vb.write_embeddings(test, test_path)
    print(f"wrote {train_path} ({train.n} rows) and {test_path} ({test.n} rows); "
          f"d={args.dim}, C={args.classes}, kappa={args.kappa}")


if __name__ == "__main__":
    main()
