"""Desk-scale two-moons protocol shared by the acceptance suite and scripts/.

Every variant is trained on the same data splits and evaluated with PGD-20
(CE) at the training radius.  The trend experiments use ``TREND_EPS = 0.2``:
at the library default of 0.1 the moons are wide enough that standard
training is already nearly robust and the variants cannot be told apart.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .attacks import AttackConfig
from .data import gen_two_moons
from .nn import NetworkSpec
from .objectives import PRESET_INTERP, preset
from .train import MetricsRecord, TrainConfig, TrainResult, train

TREND_EPS = 0.2
SEEDS = (0, 1, 2)
# (preset, lambda) pairs; MER runs share lambda with the plain TRADES run they are compared against
TREND_RUNS = (
    ("standard", 0.0), ("pgd-at", 0.0),
    ("trades", 1.0), ("trades", 9.0), ("trades", 27.0), ("trades-mer", 9.0),
    ("fait", 12.0), ("fait-mer", 30.0),
    ("score", 4.0), ("fait-s", 8.0), ("trades-mer-s", 10.0),
)


@dataclass
class MoonsRun:
    name: str
    lam: float
    seed: int
    eps: float
    metrics: list[MetricsRecord]
    seconds: float
    result: TrainResult

    @property
    def final(self) -> MetricsRecord:
        return self.metrics[-1]


def moons_config(name: str, lam: float, seed: int, eps: float = TREND_EPS, epochs: int = 40) -> TrainConfig:
    obj = preset(name) if name in ("standard", "pgd-at") else preset(name, lam=lam)
    return TrainConfig(
        epochs=epochs, seed=seed, objective=obj,
        attack=AttackConfig(eps=eps, step=eps / 4, iters=10, interp=PRESET_INTERP.get(name)),
        eval_attack=AttackConfig(eps=eps, step=eps / 4, iters=20, inner_loss="ce"))


def moons_run(name: str, lam: float, seed: int, eps: float = TREND_EPS, epochs: int = 40,
              n_train: int = 2000, n_eval: int = 1000, noise: float = 0.15) -> MoonsRun:
    train_ds = gen_two_moons(n_train, noise, seed=100 + seed)
    eval_ds = gen_two_moons(n_eval, noise, seed=200 + seed)
    t0 = time.perf_counter()
    res = train(NetworkSpec(2, (64, 64), 2), moons_config(name, lam, seed, eps, epochs), train_ds, eval_ds)
    return MoonsRun(name, lam, seed, eps, res.metrics, time.perf_counter() - t0, res)


def seed_stats(runs, attr: str) -> tuple[float, float]:
    """Mean and sample std over seeds of a final-epoch metric."""
    vals = np.array([getattr(r.final, attr) for r in runs])
    return float(vals.mean()), float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
