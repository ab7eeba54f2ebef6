"""Final clean and robust accuracy of each preset over seeds and lambda values.

With no arguments this runs the trend set used by the acceptance suite.

    python scripts/lambda_sweep.py --variant trades --lams 1 3 9 27
"""
import argparse

from bregat.objectives import PRESETS
from bregat.experiments import SEEDS, TREND_EPS, TREND_RUNS, moons_run, seed_stats


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--variant", default=None)
    ap.add_argument("--lams", type=float, nargs="+", default=None)
    ap.add_argument("--eps", type=float, default=TREND_EPS)
    ap.add_argument("--epochs", type=int, default=40)
    ap.add_argument("--seeds", type=int, nargs="+", default=list(SEEDS))
    args = ap.parse_args(argv)

    if args.variant:
        grid = [(args.variant, lam) for lam in (args.lams or [PRESETS[args.variant].lam])]
    else:
        grid = list(TREND_RUNS)

    print(f"| variant | lambda | clean | robust (PGD-20, eps={args.eps:g}) |")
    print("|---|---|---|---|")
    for name, lam in grid:
        runs = [moons_run(name, lam, s, eps=args.eps, epochs=args.epochs) for s in args.seeds]
        (cm, cs), (rm, rs) = seed_stats(runs, "clean_acc"), seed_stats(runs, "robust_acc")
        print(f"| {name} | {lam:g} | {cm:.4f} ± {cs:.4f} | {rm:.4f} ± {rs:.4f} |", flush=True)


if __name__ == "__main__":
    main()
