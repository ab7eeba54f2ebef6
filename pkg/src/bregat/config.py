"""Flat ``section.key = value`` run configs and their dotted-path overrides."""
from __future__ import annotations

import ast
import os
from dataclasses import dataclass, field
from pathlib import Path

from .attacks import AttackConfig, image_attack
from .data import Dataset, gen_gaussian_blobs, gen_two_moons, load_idx
from .nn import NetworkSpec
from .objectives import ObjectiveSpec
from .train import TrainConfig

OUT_DIR_ENV = "BREGAT_OUT_DIR"


class ConfigError(ValueError):
    pass


DEFAULTS: dict[str, object] = {
    "data.name": "two_moons",
    "data.n_train": 2000,
    "data.n_eval": 1000,
    "data.noise": 0.15,
    "data.seed": 100,
    "data.eval_seed": 200,
    "data.centers": [[-1.0, 0.0], [1.0, 0.0]],
    "data.sigma": 0.5,
    "data.train_images": None,
    "data.train_labels": None,
    "data.eval_images": None,
    "data.eval_labels": None,
    "data.limit_train": 2000,
    "data.limit_eval": 1000,
    "model.hidden": [64, 64],
    "model.activation": "relu",
    "objective.variant": "trades",
    "objective.lambda": 9.0,
    "objective.beta_cle": 0.0,
    "objective.beta_adv": 0.0,
    "objective.psi": "neg_entropy",
    "train.epochs": 40,
    "train.batch_size": 128,
    "train.lr": 0.1,
    "train.momentum": 0.9,
    "train.weight_decay": 5e-4,
    "train.warmup_epochs": 2,
    "train.milestones": [[30, 0.1], [36, 0.1]],
    "train.seed": 0,
    "train.metrics_interp": 2,
    "train.record_timing": False,
    "output.dir": None,
}
ATTACK_KEYS = ("eps", "step", "iters", "interp", "inner_loss", "restarts", "rand_init_scale", "box")
ATTACK_SECTIONS = ("attack", "eval_attack", "final_attack")


def parse_value(text: str):
    text = text.strip()
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("none", "null", ""):
        return None
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'section.key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if "." not in key:
            raise ConfigError(f"line {lineno}: key {key!r} has no section")
        out[key] = parse_value(value)
    return out


def parse_overrides(args: list[str]) -> dict:
    """``--section.key value`` / ``--section.key=value`` pairs."""
    out, i = {}, 0
    while i < len(args):
        tok = args[i]
        if not tok.startswith("--") or "." not in tok:
            raise ConfigError(f"unrecognised argument {tok!r}")
        if "=" in tok:
            key, value = tok[2:].split("=", 1)
            i += 1
        else:
            if i + 1 >= len(args):
                raise ConfigError(f"override {tok} is missing a value")
            key, value = tok[2:], args[i + 1]
            i += 2
        out[key] = parse_value(value)
    return out


def _known(key: str) -> bool:
    section, _, name = key.partition(".")
    return key in DEFAULTS or (section in ATTACK_SECTIONS and name in ATTACK_KEYS)


@dataclass
class RunConfig:
    values: dict
    network: NetworkSpec
    train: TrainConfig
    out_dir: Path
    source: str | None = None
    overrides: dict = field(default_factory=dict)

    def echo(self) -> dict:
        return dict(sorted(self.values.items()))


def _attack(values: dict, section: str, base: AttackConfig) -> AttackConfig:
    kw = {k: values[f"{section}.{k}"] for k in ATTACK_KEYS if f"{section}.{k}" in values}
    if "eps" in kw and "step" not in kw:
        kw["step"] = kw["eps"] / 4
    return base.with_(**kw)


def build(values: dict, source: str | None = None, overrides: dict | None = None) -> RunConfig:
    unknown = sorted(k for k in values if not _known(k))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    v = {**DEFAULTS, **values}
    try:
        image = v["data.name"] == "idx"
        base = image_attack() if image else AttackConfig()
        attack = _attack(v, "attack", base)
        eval_attack = _attack(v, "eval_attack", base.with_(eps=attack.eps, step=attack.eps / 4, iters=20,
                                                             inner_loss="ce"))
        final_attack = _attack(v, "final_attack", eval_attack.with_(step=attack.eps / 10, iters=100,
                                                                     restarts=5))
        obj = ObjectiveSpec(v["objective.variant"], float(v["objective.lambda"]), float(v["objective.beta_cle"]),
                            float(v["objective.beta_adv"]), v["objective.psi"])
        tc = TrainConfig(
            epochs=int(v["train.epochs"]), batch_size=int(v["train.batch_size"]), lr=float(v["train.lr"]),
            momentum=float(v["train.momentum"]), weight_decay=float(v["train.weight_decay"]),
            warmup_epochs=int(v["train.warmup_epochs"]), milestones=v["train.milestones"] or (),
            seed=int(v["train.seed"]), objective=obj, attack=attack, eval_attack=eval_attack,
            final_attack=final_attack, metrics_interp=int(v["train.metrics_interp"]),
            record_timing=bool(v["train.record_timing"]))
        in_dim = 784 if image else 2
        n_classes = 10 if image else (max(len(v["data.centers"]), 2) if v["data.name"] == "blobs" else 2)
        net = NetworkSpec(in_dim, tuple(v["model.hidden"]), n_classes, v["model.activation"])
    except (ValueError, TypeError, KeyError) as e:
        raise ConfigError(str(e)) from e
    out = v["output.dir"]
    if out is None:
        root = Path(os.environ.get(OUT_DIR_ENV, "runs"))
        out = root / f"{obj.label}-l{obj.lam:g}-s{tc.seed}"
    return RunConfig(v, net, tc, Path(out), source, overrides or {})


def load(path=None, overrides: dict | None = None) -> RunConfig:
    values = parse_config_text(Path(path).read_text()) if path else {}
    values.update(overrides or {})
    return build(values, str(path) if path else None, overrides)


def make_datasets(values: dict) -> tuple[Dataset, Dataset]:
    v = {**DEFAULTS, **values}
    name = v["data.name"]
    if name == "two_moons":
        return (gen_two_moons(int(v["data.n_train"]), float(v["data.noise"]), int(v["data.seed"])),
                gen_two_moons(int(v["data.n_eval"]), float(v["data.noise"]), int(v["data.eval_seed"])))
    if name == "blobs":
        return (gen_gaussian_blobs(int(v["data.n_train"]), v["data.centers"], float(v["data.sigma"]),
                                   int(v["data.seed"])),
                gen_gaussian_blobs(int(v["data.n_eval"]), v["data.centers"], float(v["data.sigma"]),
                                   int(v["data.eval_seed"])))
    if name == "idx":
        for k in ("data.train_images", "data.train_labels", "data.eval_images", "data.eval_labels"):
            if not v[k]:
                raise ConfigError(f"{k} is required for idx data")
        return (load_idx(v["data.train_images"], v["data.train_labels"], v["data.limit_train"]),
                load_idx(v["data.eval_images"], v["data.eval_labels"], v["data.limit_eval"]))
    raise ConfigError(f"unknown dataset {name!r}")
