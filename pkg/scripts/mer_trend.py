"""Per-epoch R and R' for TRADES and TRADES-MER on two-moons.

    python scripts/mer_trend.py --seeds 0 1 2 --out trend.csv
"""
import argparse
import csv
import sys

from bregat.experiments import TREND_EPS, moons_run
from bregat.train import TrainConfig


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--lam", type=float, default=9.0)
    ap.add_argument("--eps", type=float, default=TREND_EPS)
    ap.add_argument("--epochs", type=int, default=40)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--out", default=None, help="CSV path (default: stdout)")
    args = ap.parse_args(argv)

    warmup = TrainConfig().warmup_epochs
    rows = []
    for name in ("trades", "trades-mer"):
        for seed in args.seeds:
            run = moons_run(name, args.lam, seed, eps=args.eps, epochs=args.epochs)
            for m in run.metrics:
                rows.append({"variant": name, "seed": seed, "epoch": m.epoch, "loss_rob": m.loss_rob,
                             "loss_rprime": m.loss_rprime, "robust_acc": m.robust_acc})
            below = sum(m.loss_rprime < m.loss_rob for m in run.metrics if m.epoch > warmup)
            print(f"{name:>10} seed {seed}: final R {run.final.loss_rob:.5f}, "
                  f"R' < R in {below}/{len(run.metrics) - warmup} post-warmup epochs, {run.seconds:.1f}s",
                  file=sys.stderr)

    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    w = csv.DictWriter(fh, fieldnames=list(rows[0]))
    w.writeheader()
    w.writerows(rows)
    if args.out:
        fh.close()


if __name__ == "__main__":
    main()
