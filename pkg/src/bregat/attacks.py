"""l-inf PGD adversaries with optional interpolation sampling, and robust accuracy."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .nn import NetworkSpec, Params, forward, grad_input, predict
from .simplex import cross_entropy, kl, se, softmax
from .tensor import Tensor, no_grad

INNER_LOSSES = ("ce", "kl", "se")
# tag mixed into per-example seeds so attack noise never collides with other streams
ATTACK_STREAM = 0xA77AC


@dataclass(frozen=True)
class AttackConfig:
    eps: float = 0.1
    step: float = 0.025
    iters: int = 10
    interp: int | None = None
    inner_loss: str = "kl"
    restarts: int = 1
    rand_init_scale: float = 0.001
    box: tuple[float, float] = (-3.0, 3.0)

    def __post_init__(self):
        object.__setattr__(self, "box", tuple(float(b) for b in self.box))
        object.__setattr__(self, "inner_loss", str(self.inner_loss).lower())
        if self.eps < 0:
            raise ValueError("eps must be >= 0")
        if self.iters < 0:
            raise ValueError("iters must be >= 0")
        if self.iters > 0 and self.step <= 0:
            raise ValueError("step must be > 0 when iters > 0")
        if self.interp is not None and not 0 < self.interp < self.iters:
            raise ValueError(f"interp must satisfy 0 < I < K={self.iters}, got {self.interp}")
        if self.inner_loss not in INNER_LOSSES:
            raise ValueError(f"inner_loss must be one of {INNER_LOSSES}")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.box[0] > self.box[1]:
            raise ValueError("empty input box")

    def with_(self, **kw) -> "AttackConfig":
        return replace(self, **kw)


def image_attack(**kw) -> AttackConfig:
    """eps = 8/255, step = 2/255, K = 10 on [0, 1] pixels."""
    base = dict(eps=8 / 255, step=2 / 255, iters=10, box=(0.0, 1.0))
    base.update(kw)
    return AttackConfig(**base)


@dataclass
class AdvBatch:
    x_adv: np.ndarray
    x_interp: np.ndarray | None = None


def project_linf_box(candidate, center, cfg: AttackConfig) -> np.ndarray:
    candidate, center = np.asarray(candidate, dtype=np.float64), np.asarray(center, dtype=np.float64)
    if candidate.shape != center.shape:
        raise ValueError(f"shape mismatch {candidate.shape} vs {center.shape}")
    lo = np.maximum(center - cfg.eps, cfg.box[0])
    hi = np.minimum(center + cfg.eps, cfg.box[1])
    return np.clip(candidate, lo, hi)


def init_noise(shape, indices, seed: int, epoch: int, restart: int) -> np.ndarray:
    """Standard normal rows looked up by example index.

    Row ``i`` of a table drawn from one (seed, epoch, restart) stream is the
    same whatever the table length, so the noise an example receives does not
    depend on which batch it lands in.
    """
    indices = np.asarray(indices, dtype=np.int64)
    if len(indices) != shape[0]:
        raise ValueError("one index per row is required")
    if not len(indices):
        return np.empty(shape)
    rng = np.random.default_rng([ATTACK_STREAM, seed, epoch, restart])
    table = rng.standard_normal((int(indices.max()) + 1, *shape[1:]))
    return table[indices]


def inner_loss(name: str, q: Tensor, p_clean: np.ndarray, y) -> Tensor:
    """Per-example loss the adversary ascends; ``p_clean`` is a constant."""
    if name == "ce":
        return cross_entropy(q, y)
    if name == "kl":
        return kl(Tensor(p_clean), q)
    return se(Tensor(p_clean), q)


def pgd_attack(spec: NetworkSpec, params: Params, x, y, cfg: AttackConfig, *,
               seed: int = 0, epoch: int = 0, restart: int = 0, indices=None) -> AdvBatch:
    """K sign-gradient ascent steps from ``x + scale * N(0, I)``, projected every step.

    ``x_interp`` is the iterate right after step ``cfg.interp``.  Noise is
    keyed on (seed, epoch, restart, example index), so the result for an
    example does not depend on how the data was batched.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    if x.ndim != 2:
        raise ValueError("x must be [m, d]")
    if indices is None:
        indices = np.arange(len(x))
    frozen = params.frozen()
    with no_grad():
        p_clean = softmax(forward(spec, frozen, x)).data

    noise = init_noise(x.shape, indices, seed, epoch, restart)
    x_adv = project_linf_box(x + cfg.rand_init_scale * noise, x, cfg)
    x_interp = None
    for k in range(1, cfg.iters + 1):
        xt = Tensor(x_adv, requires_grad=True)
        q = softmax(forward(spec, frozen, xt))
        g = grad_input(inner_loss(cfg.inner_loss, q, p_clean, y).sum(), xt)
        x_adv = project_linf_box(x_adv + cfg.step * np.sign(g), x, cfg)
        if k == cfg.interp:
            x_interp = x_adv.copy()
    return AdvBatch(x_adv, x_interp)


def clean_accuracy(spec: NetworkSpec, params: Params, dataset) -> float:
    return float(np.mean(predict(spec, params, dataset.features) == dataset.labels))


def evaluate_robust_accuracy(spec: NetworkSpec, params: Params, dataset, cfg: AttackConfig, *,
                             seed: int = 0, batch_size: int = 512) -> float:
    """Fraction of examples classified correctly at x and under every restart."""
    X, y = dataset.features, dataset.labels
    ok = predict(spec, params, X) == y
    for r in range(cfg.restarts):
        for start in range(0, len(X), batch_size):
            sl = slice(start, start + batch_size)
            adv = pgd_attack(spec, params, X[sl], y[sl], cfg, seed=seed, restart=r,
                             indices=np.arange(len(X))[sl])
            ok[sl] &= predict(spec, params, adv.x_adv) == y[sl]
    return float(ok.mean())
