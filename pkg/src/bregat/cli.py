"""``bregat`` command line: train, evaluate, verify, export.

Exit codes: 0 success, 1 verification failure, 2 usage or config error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import subprocess
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .attacks import AttackConfig, clean_accuracy, evaluate_robust_accuracy
from .config import ConfigError, load, make_datasets, parse_overrides
from .data import IdxError
from .nn import load_params, save_params
from .theory import sweep_bregman_identities, sweep_lemma1, sweep_theorem1, sweep_theorem2
from .train import TrainingDiverged, train, write_metrics_csv

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
SUITES = ("bregman", "lemma1", "theorem1", "theorem2")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def artifact_version() -> str:
    try:
        sha = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True, text=True,
                             cwd=Path(__file__).parent, timeout=5).stdout.strip()
    except (OSError, subprocess.SubprocessError):
        sha = ""
    return f"{__version__}+g{sha}" if sha else __version__


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _attack_dict(cfg: AttackConfig) -> dict:
    return {k: getattr(cfg, k) for k in ("eps", "step", "iters", "interp", "inner_loss", "restarts",
                                        "rand_init_scale")} | {"box": list(cfg.box)}


# -- train --------------------------------------------------------------------

def cmd_train(args, extra: list[str]) -> int:
    try:
        overrides = parse_overrides(extra)
        run = load(args.config, overrides)
        train_ds, eval_ds = make_datasets(run.values)
    except (ConfigError, IdxError, OSError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_USAGE

    out = run.out_dir
    out.mkdir(parents=True, exist_ok=True)
    paths = {"metrics": str(out / "metrics.csv"), "manifest": str(out / "manifest.json"),
             "final_params": str(out / "final.bat"), "best_params": str(out / "best.bat")}
    tc = run.train
    manifest = {
        "config": run.echo(), "config_file": run.source, "overrides": run.overrides,
        "artifact_version": artifact_version(), "seed": tc.seed, "started": _now(), "finished": None,
        "outputs": paths, "variant": tc.objective.label, "lambda": tc.objective.lam,
        "train_attack": _attack_dict(tc.train_attack), "eval_attack": _attack_dict(tc.eval_attack),
        "final_attack": _attack_dict(tc.final_attack),
        "selection_note": "best epoch chosen with the per-epoch eval attack; "
                          "final numbers re-evaluate that checkpoint with the final attack",
    }
    _write_json(out / "manifest.json", manifest)

    records = []

    def on_epoch(rec):
        records.append(rec)
        write_metrics_csv(records, paths["metrics"])

    try:
        res = train(run.network, tc, train_ds, eval_ds, on_epoch=on_epoch)
    except TrainingDiverged as e:
        manifest["error"] = str(e)
        _write_json(out / "manifest.json", manifest)
        print(f"training diverged: {e}", file=sys.stderr)
        return EXIT_FAIL
    write_metrics_csv(res.metrics, paths["metrics"])
    save_params(res.params, paths["final_params"])
    save_params(res.best_params, paths["best_params"])

    final = {"clean_acc": clean_accuracy(run.network, res.best_params, eval_ds),
             "robust_acc": evaluate_robust_accuracy(run.network, res.best_params, eval_ds, tc.final_attack,
                                                    seed=tc.seed)}
    best = next((m for m in res.metrics if m.best), None)
    manifest.update(finished=_now(), best_epoch=res.best_epoch, final=final,
                    best_epoch_summary=None if best is None else
                    {"epoch": best.epoch, "clean_acc": best.clean_acc, "robust_acc": best.robust_acc})
    _write_json(out / "manifest.json", manifest)
    print(f"{tc.objective.label} lambda={tc.objective.lam:g} best epoch {res.best_epoch}: "
          f"clean {final['clean_acc']:.4f} robust {final['robust_acc']:.4f} -> {out}")
    return EXIT_OK


# -- evaluate -------------------------------------------------------------------

def cmd_evaluate(args, extra: list[str]) -> int:
    if not Path(args.params).is_file():
        print(f"params file not found: {args.params}", file=sys.stderr)
        return EXIT_USAGE
    try:
        overrides = parse_overrides(extra)
        run = load(args.config, overrides)
        _, eval_ds = make_datasets(run.values)
        params = load_params(args.params)
        spec = params.spec(run.network.activation)
        base = run.train.eval_attack
        attacks = []
        for eps in args.eps or [base.eps]:
            # eps = 0 keeps a positive step; projection pins the iterate to x anyway
            step = args.step if args.step is not None else (eps / 4 if eps > 0 else base.step)
            kw = {"eps": eps, "step": step}
            if args.iters is not None:
                kw["iters"] = args.iters
            if args.restarts is not None:
                kw["restarts"] = args.restarts
            attacks.append(base.with_(**kw))
    except (ConfigError, IdxError, ValueError, OSError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_USAGE

    clean = clean_accuracy(spec, params, eval_ds)
    results = []
    print(f"clean accuracy {clean:.4f} on {len(eval_ds)} examples")
    for atk in attacks:
        rob = evaluate_robust_accuracy(spec, params, eval_ds, atk, seed=args.seed)
        results.append({"attack": _attack_dict(atk), "clean_acc": clean, "robust_acc": rob})
        print(f"eps={atk.eps:g} K={atk.iters} restarts={atk.restarts}: robust accuracy {rob:.4f}")
    out = Path(args.out) if args.out else Path(args.params).with_suffix(".eval.json")
    _write_json(out, {"params": str(args.params), "dataset": run.values.get("data.name"),
                      "n_examples": len(eval_ds), "seed": args.seed, "results": results})
    return EXIT_OK


# -- verify ---------------------------------------------------------------------

def cmd_verify(args, extra: list[str]) -> int:
    if extra:
        print(f"unrecognised arguments: {' '.join(extra)}", file=sys.stderr)
        return EXIT_USAGE
    suites = SUITES if args.suite == "all" else (args.suite,)
    reports = []
    for s in suites:
        if s == "bregman":
            reports += sweep_bregman_identities(args.n_pairs, seed=args.seed, invert=args.self_test)
        elif s == "lemma1":
            reports.append(sweep_lemma1(args.n, seed=args.seed, invert=args.self_test))
            reports.append(sweep_lemma1(max(args.n // 10, 1), seed=args.seed + 1, near_boundary=True,
                                        invert=args.self_test))
        elif s == "theorem1":
            reports.append(sweep_theorem1(args.resolution, invert=args.self_test))
        elif s == "theorem2":
            reports.append(sweep_theorem2(args.resolution, invert=args.self_test))

    print(f"{'suite':<16}{'cases':>10}{'violations':>12}{'worst margin':>16}  result")
    for r in reports:
        print(f"{r.name:<16}{r.cases:>10}{r.violations:>12}{r.worst_margin:>16.3e}  "
              f"{'PASS' if r.passed else 'FAIL'}")
    ok = all(r.passed for r in reports)
    summary = {"passed": ok, "seed": args.seed, "suites": [r.as_dict() for r in reports]}
    if args.json:
        _write_json(Path(args.json), summary)
    print("SUMMARY " + json.dumps({"passed": ok, "violations": {r.name: r.violations for r in reports}},
                                  sort_keys=True))
    return EXIT_OK if ok else EXIT_FAIL


# -- export ---------------------------------------------------------------------

def collect_rows(run_dirs) -> list[dict]:
    rows = []
    for d in run_dirs:
        m = json.loads((Path(d) / "manifest.json").read_text())
        res = m.get("final") or m.get("best_epoch_summary") or {}
        rows.append({"variant": m["variant"], "lambda": float(m["lambda"]),
                     "clean": res.get("clean_acc"), "robust": res.get("robust_acc"), "run": str(d)})
    return sorted(rows, key=lambda r: (r["variant"], r["lambda"]))


def format_rows(rows, fmt: str) -> str:
    cols = ("variant", "lambda", "clean", "robust")

    def cell(v):
        return f"{v:.4f}" if isinstance(v, float) else ("" if v is None else str(v))

    if fmt == "md":
        lines = ["| " + " | ".join(cols) + " |", "|" + "---|" * len(cols)]
        lines += ["| " + " | ".join(cell(r[c]) if c != "lambda" else f"{r[c]:g}" for c in cols) + " |"
                  for r in rows]
        return "\n".join(lines) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([r["variant"], f"{r['lambda']:g}", cell(r["clean"]), cell(r["robust"])])
    return buf.getvalue()


def cmd_export(args, extra: list[str]) -> int:
    if extra:
        print(f"unrecognised arguments: {' '.join(extra)}", file=sys.stderr)
        return EXIT_USAGE
    if not args.runs:
        print("no run directories given", file=sys.stderr)
        return EXIT_USAGE
    try:
        rows = collect_rows(args.runs)
    except (OSError, KeyError, json.JSONDecodeError) as e:
        print(f"cannot read manifest: {e}", file=sys.stderr)
        return EXIT_USAGE
    text = format_rows(rows, args.format)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# -- entry point ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bregat", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one model; extra --section.key value pairs override the config")
    t.add_argument("config", nargs="?", help="flat section.key = value config file")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="clean and PGD robust accuracy of a saved params file")
    e.add_argument("params")
    e.add_argument("--config", help="config file describing the evaluation data and model")
    e.add_argument("--eps", type=float, nargs="+")
    e.add_argument("--step", type=float)
    e.add_argument("--iters", type=int)
    e.add_argument("--restarts", type=int)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", help="JSON output path (default: <params>.eval.json)")
    e.set_defaults(func=cmd_evaluate)

    v = sub.add_parser("verify", help="brute-force checks of the divergence identities and theorems")
    v.add_argument("suite", nargs="?", default="all", choices=("all",) + SUITES)
    v.add_argument("--n", type=int, default=100_000, help="random triples per dimension (lemma1)")
    v.add_argument("--n-pairs", type=int, default=10_000, help="random pairs per dimension (bregman)")
    v.add_argument("--resolution", type=float, default=0.01)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--json", help="write the machine-readable summary here")
    v.add_argument("--self-test", action="store_true", help="invert every predicate; must FAIL")
    v.set_defaults(func=cmd_verify)

    x = sub.add_parser("export", help="merge run manifests into one comparison table")
    x.add_argument("runs", nargs="*")
    x.add_argument("--format", choices=("csv", "md"), default="csv")
    x.add_argument("--out")
    x.set_defaults(func=cmd_export)
    return p


def split_overrides(argv: list[str]) -> tuple[list[str], list[str]]:
    """Pull ``--section.key value`` pairs out before argparse sees them."""
    rest, extra, i = [], [], 0
    while i < len(argv):
        tok = argv[i]
        if tok.startswith("--") and "." in tok.split("=", 1)[0]:
            take = 1 if "=" in tok else 2
            extra += argv[i:i + take]
            i += take
        else:
            rest.append(tok)
            i += 1
    return rest, extra


def main(argv=None) -> int:
    parser = build_parser()
    rest, extra = split_overrides(list(sys.argv[1:] if argv is None else argv))
    try:
        args = parser.parse_args(rest)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    return args.func(args, extra)


if __name__ == "__main__":
    sys.exit(main())
