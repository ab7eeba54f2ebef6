"""Write a synthetic IDX image/label pair (random pixels, random labels).

Used to exercise the IDX pipeline without downloading a real dataset:

    python scripts/make_idx.py data --n-train 2000 --n-eval 500
"""
import argparse
from pathlib import Path

import numpy as np

from bregat.data import encode_idx_images, encode_idx_labels


def write_pair(out: Path, prefix: str, n: int, rng) -> None:
    images = rng.integers(0, 256, size=(n, 28, 28), dtype=np.uint8)
    labels = rng.integers(0, 10, size=n, dtype=np.uint8)
    (out / f"{prefix}-images-idx3-ubyte").write_bytes(encode_idx_images(images))
    (out / f"{prefix}-labels-idx1-ubyte").write_bytes(encode_idx_labels(labels))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out", type=Path)
    ap.add_argument("--n-train", type=int, default=2000)
    ap.add_argument("--n-eval", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    args.out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    write_pair(args.out, "train", args.n_train, rng)
    write_pair(args.out, "t10k", args.n_eval, rng)


if __name__ == "__main__":
    main()
