"""Run the divergence and theorem sweeps at full size and print a JSON report.

Equivalent to ``bregat verify all`` with the default sizes; kept as a script
so the sizes and seeds can be scanned in a loop.
"""
import argparse
import json

from bregat.theory import sweep_bregman_identities, sweep_lemma1, sweep_theorem1, sweep_theorem2


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--n", type=int, default=100_000)
    ap.add_argument("--resolution", type=float, default=0.01)
    args = ap.parse_args(argv)

    reports = []
    for seed in args.seeds:
        reports += sweep_bregman_identities(args.n // 10, seed=seed)
        reports.append(sweep_lemma1(args.n, seed=seed))
        reports.append(sweep_lemma1(args.n // 10, seed=seed, near_boundary=True))
    reports += [sweep_theorem1(args.resolution), sweep_theorem2(args.resolution)]
    print(json.dumps([r.as_dict() for r in reports], indent=2, default=str))
    return 0 if all(r.passed for r in reports) else 1


if __name__ == "__main__":
    raise SystemExit(main())
