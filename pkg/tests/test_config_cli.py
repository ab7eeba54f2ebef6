import json

import numpy as np
import pytest

from bregat import __version__
from bregat.cli import collect_rows, format_rows, main, split_overrides
from bregat.config import OUT_DIR_ENV, ConfigError, build, load, make_datasets, parse_config_text, parse_overrides
from bregat.data import encode_idx_images, encode_idx_labels
from bregat.nn import init_params, save_params

FAST = ["--train.epochs", "2", "--data.n_train", "200", "--data.n_eval", "100", "--model.hidden", "[8]"]


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv(OUT_DIR_ENV, raising=False)
    return tmp_path


def test_parse_config_text():
    vals = parse_config_text("""
        # comment
        objective.variant = fait   # trailing
        objective.lambda = 12
        attack.interp = 2
        train.milestones = [[30, 0.1]]
        output.dir = none
    """)
    assert vals == {"objective.variant": "fait", "objective.lambda": 12, "attack.interp": 2,
                    "train.milestones": [[30, 0.1]], "output.dir": None}
    with pytest.raises(ConfigError, match="line 1"):
        parse_config_text("no equals sign")
    with pytest.raises(ConfigError, match="section"):
        parse_config_text("lambda = 3")


def test_parse_overrides():
    assert parse_overrides(["--a.b", "3", "--c.d=x"]) == {"a.b": 3, "c.d": "x"}
    with pytest.raises(ConfigError):
        parse_overrides(["--a.b"])
    with pytest.raises(ConfigError):
        parse_overrides(["stray"])


def test_split_overrides():
    rest, extra = split_overrides(["train", "cfg.txt", "--objective.lambda", "12", "--attack.interp=2", "-v"])
    assert rest == ["train", "cfg.txt", "-v"] and extra == ["--objective.lambda", "12", "--attack.interp=2"]


def test_build_defaults(workdir):
    run = build({})
    assert run.train.objective.lam == 9.0 and run.network.widths == [2, 64, 64, 2]
    assert run.train.eval_attack.iters == 20 and run.train.eval_attack.inner_loss == "ce"
    assert run.train.final_attack.iters == 100 and run.train.final_attack.restarts == 5
    assert str(run.out_dir) == "runs/trades-l9-s0"


def test_build_attack_eps_sets_step_and_eval(workdir):
    run = build({"attack.eps": 0.2})
    assert run.train.attack.step == pytest.approx(0.05)
    assert run.train.eval_attack.eps == 0.2 and run.train.final_attack.step == pytest.approx(0.02)


def test_build_errors():
    with pytest.raises(ConfigError, match="unknown"):
        build({"train.epoch": 3})
    with pytest.raises(ConfigError, match="interp"):
        build({"objective.variant": "fait"})
    with pytest.raises(ConfigError):
        build({"objective.lambda": -1})


def test_out_dir_env(workdir, monkeypatch):
    monkeypatch.setenv(OUT_DIR_ENV, str(workdir / "elsewhere"))
    assert build({"train.seed": 3}).out_dir == workdir / "elsewhere" / "trades-l9-s3"


def test_idx_datasets(workdir):
    rng = np.random.default_rng(0)
    (workdir / "i").write_bytes(encode_idx_images(rng.integers(0, 256, (30, 28, 28), dtype=np.uint8)))
    (workdir / "l").write_bytes(encode_idx_labels(rng.integers(0, 10, 30, dtype=np.uint8)))
    vals = {"data.name": "idx", "data.train_images": "i", "data.train_labels": "l",
            "data.eval_images": "i", "data.eval_labels": "l", "data.limit_eval": 10}
    tr, ev = make_datasets(vals)
    assert len(tr) == 30 and len(ev) == 10
    run = build(vals)
    assert run.network.in_dim == 784 and run.network.n_classes == 10
    assert run.train.attack.eps == pytest.approx(8 / 255) and run.train.attack.box == (0.0, 1.0)


def test_train_writes_outputs(workdir):
    (workdir / "run.cfg").write_text("objective.variant = trades\nobjective.lambda = 3\n")
    assert main(["train", "run.cfg", *FAST, "--output.dir", "out"]) == 0
    m = json.loads((workdir / "out" / "manifest.json").read_text())
    assert m["finished"] and m["best_epoch"] in (1, 2) and m["config_file"] == "run.cfg"
    assert m["config"]["objective.lambda"] == 3 and m["artifact_version"].startswith(__version__)
    assert m["started"] <= m["finished"]
    assert set(m["final"]) == {"clean_acc", "robust_acc"}
    assert m["final_attack"]["iters"] == 100 and m["final_attack"]["restarts"] == 5
    lines = (workdir / "out" / "metrics.csv").read_text().splitlines()
    assert lines[0].startswith("epoch,clean_acc") and len(lines) == 3
    for f in ("final.bat", "best.bat"):
        assert (workdir / "out" / f).stat().st_size > 0


def test_train_overrides_echoed(workdir):
    args = ["train", *FAST, "--objective.variant", "fait", "--objective.lambda", "12", "--attack.interp", "2",
            "--output.dir", "fait"]
    assert main(args) == 0
    m = json.loads((workdir / "fait" / "manifest.json").read_text())
    assert m["overrides"]["objective.lambda"] == 12 and m["overrides"]["attack.interp"] == 2
    assert m["config"]["objective.lambda"] == 12 and m["train_attack"]["interp"] == 2
    assert m["variant"] == "fait" and m["lambda"] == 12


def test_train_config_errors(workdir, capsys):
    assert main(["train", *FAST, "--objective.variant", "fait"]) == 2
    assert "interp" in capsys.readouterr().err
    assert main(["train", "--bogus.key", "1"]) == 2
    assert main(["train", "missing.cfg"]) == 2
    assert not (workdir / "runs").exists()


@pytest.fixture
def saved_params(workdir):
    run = build({"model.hidden": [8]})
    save_params(init_params(run.network, 1), workdir / "p.bat")
    return workdir / "p.bat"


def test_evaluate_eps_zero(saved_params, capsys):
    assert main(["evaluate", str(saved_params), "--model.hidden", "[8]", "--data.n_eval", "100",
                 "--eps", "0", "--out", "e.json"]) == 0
    r = json.loads(open("e.json").read())["results"][0]
    assert r["clean_acc"] == r["robust_acc"]


def test_evaluate_flags_echoed(saved_params):
    assert main(["evaluate", str(saved_params), "--data.n_eval", "40", "--eps", "0.1", "0.2",
                 "--iters", "100", "--restarts", "5"]) == 0
    out = json.loads(saved_params.with_suffix(".eval.json").read_text())
    assert [r["attack"]["eps"] for r in out["results"]] == [0.1, 0.2]
    assert all(r["attack"]["iters"] == 100 and r["attack"]["restarts"] == 5 for r in out["results"])


def test_evaluate_missing_params(workdir):
    assert main(["evaluate", "nope.bat"]) == 2


def test_verify_pass_and_self_test(workdir, capsys):
    assert main(["verify", "lemma1", "--n", "2000", "--json", "v.json"]) == 0
    out = capsys.readouterr().out
    assert "PASS" in out and "FAIL" not in out and out.strip().splitlines()[-1].startswith("SUMMARY ")
    assert json.loads(open("v.json").read())["passed"] is True
    assert main(["verify", "theorem1", "--resolution", "0.05"]) == 0
    assert main(["verify", "theorem2", "--resolution", "0.05"]) == 0
    capsys.readouterr()
    assert main(["verify", "all", "--n", "500", "--n-pairs", "200", "--resolution", "0.05", "--self-test"]) == 1
    assert "PASS" not in capsys.readouterr().out


def test_usage_errors(workdir):
    assert main([]) == 2
    assert main(["frobnicate"]) == 2
    assert main(["verify", "--n"]) == 2
    assert main(["verify", "--theory.n", "3"]) == 2


def fake_run(path, variant, lam, clean=0.9, robust=0.5):
    path.mkdir()
    (path / "manifest.json").write_text(json.dumps({
        "variant": variant, "lambda": lam, "final": {"clean_acc": clean, "robust_acc": robust}}))
    return str(path)


def test_export(workdir, capsys):
    runs = [fake_run(workdir / f"t{l}", "trades", l) for l in (15, 3, 9)]
    runs.append(fake_run(workdir / "f", "fait", 12))
    assert main(["export", *runs]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "variant,lambda,clean,robust"
    assert [l.split(",")[:2] for l in lines[1:]] == [["fait", "12"], ["trades", "3"], ["trades", "9"],
                                                    ["trades", "15"]]
    assert main(["export", runs[0], runs[1], "--format", "md", "--out", "t.md"]) == 0
    md = open("t.md").read().splitlines()
    assert md[0] == "| variant | lambda | clean | robust |" and len(md) == 4


def test_export_errors(workdir):
    assert main(["export"]) == 2
    assert main(["export", str(workdir / "nothing")]) == 2


def test_format_rows_blank_for_missing():
    rows = collect_rows([]) + [{"variant": "x", "lambda": 1.0, "clean": None, "robust": 0.5}]
    assert format_rows(rows, "csv").splitlines()[1] == "x,1,,0.5000"


def test_load_reads_file(workdir):
    (workdir / "c.cfg").write_text("train.seed = 4\n")
    run = load("c.cfg", {"objective.lambda": 1})
    assert run.train.seed == 4 and run.train.objective.lam == 1 and run.source == "c.cfg"
