"""Brute-force checks of the chord inequality for KL and the binary entropy theorems.

Binary distributions are represented by their projection onto the label,
``a = p(x)[y]`` and ``b = p(x')[y]``; in two classes this loses nothing.
Grids are enumerated on integer indices (``k / n``) so that matched
differences and dominance comparisons are exact.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .nn import forward
from .simplex import Psi, bregman, entropy, kl, se, softmax
from .tensor import no_grad

TOL = 1e-12


class Condition(str, enum.Enum):
    C1 = "C1"  # clean correct, adversarial wrong
    C2 = "C2"  # both wrong
    C3 = "C3"  # both correct


@dataclass(frozen=True)
class BinaryPair:
    a: float
    b: float

    def __post_init__(self):
        if not (0 < self.a < 1 and 0 < self.b < 1):
            raise ValueError(f"projections must lie in (0, 1), got ({self.a}, {self.b})")

    @property
    def condition(self) -> Condition:
        return classify_condition(self)

    @property
    def robustness(self) -> float:
        return float(binary_kl(self.a, self.b))


@dataclass
class SweepReport:
    name: str
    cases: int
    violations: int
    worst_margin: float
    resolution: float | None = None
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def as_dict(self) -> dict:
        return {"name": self.name, "cases": self.cases, "violations": self.violations,
                "worst_margin": self.worst_margin, "resolution": self.resolution,
                "passed": self.passed, **self.details}


@dataclass(frozen=True)
class Verdict:
    holds: bool
    r1: float
    r2: float

    @property
    def margin(self) -> float:
        return self.r1 - self.r2


def classify_condition(pair: BinaryPair) -> Condition:
    if pair.a > 0.5 >= pair.b:
        return Condition.C1
    if pair.a <= 0.5 and pair.b <= 0.5:
        return Condition.C2
    if pair.a > 0.5 and pair.b > 0.5:
        return Condition.C3
    # a <= 1/2 < b: adversary more correct than the clean point; outside the three cases
    raise ValueError(f"pair {pair} matches none of C1-C3")


def binary_kl(a, b):
    """KL(Bern(a) || Bern(b)), elementwise over arrays."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return kl(np.stack([a, 1 - a], -1), np.stack([b, 1 - b], -1)).data


def sweep_bregman_identities(n: int = 10_000, dims=range(2, 11), seed: int = 0,
                             kl_tol: float = 1e-10, se_tol: float = 1e-12,
                             invert: bool = False) -> list[SweepReport]:
    """|kl - bregman(neg-entropy)| and |se - bregman(square)| on random simplex pairs."""
    rng = np.random.default_rng(seed)
    dims = list(dims)
    kl_err, se_err = [], []
    for d in dims:
        p, q = _random_simplex(rng, n, d), _random_simplex(rng, n, d)
        kl_err.append(np.abs(kl(p, q).data - bregman(Psi.NEG_ENTROPY, p, q).data))
        se_err.append(np.abs(se(p, q).data - bregman(Psi.SQUARE, p, q).data))
    out = []
    for name, errs, tol in (("bregman-kl", kl_err, kl_tol), ("bregman-se", se_err, se_tol)):
        e = np.concatenate(errs)
        bad = e <= tol if invert else e > tol
        out.append(SweepReport(name, e.size, int(bad.sum()), float(tol - e.max()),
                               details={"dims": dims, "seed": seed, "max_abs_error": float(e.max()),
                                        "tolerance": tol, "inverted": invert}))
    return out


# -- chord inequality ---------------------------------------------------------

def check_lemma1(p1, p2, alpha):
    """KL(p2||p1) - KL(p2||p*) - KL(p*||p1) for p* = (1-alpha) p1 + alpha p2; >= 0 expected.

    Works row-wise, so batches of triples are evaluated in one call.
    """
    p1, p2 = np.asarray(p1, dtype=np.float64), np.asarray(p2, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    if ((alpha < 0) | (alpha > 1)).any():
        raise ValueError("alpha must lie in [0, 1]")
    a = alpha[..., None] if alpha.ndim == p1.ndim - 1 and p1.ndim > 1 else alpha
    p_star = (1 - a) * p1 + a * p2
    slack = kl(p2, p1).data - kl(p2, p_star).data - kl(p_star, p1).data
    return float(slack) if slack.ndim == 0 else slack


def _random_simplex(rng, n, dim, near_boundary=False):
    if near_boundary:
        # most mass on one vertex, the rest spread at tiny scales down to the clamp
        logs = rng.uniform(-30, 0, size=(n, dim))
        logs[np.arange(n), rng.integers(dim, size=n)] = 0.0
        p = np.exp(logs)
    else:
        p = rng.dirichlet(np.ones(dim), size=n)
    return p / p.sum(axis=1, keepdims=True)


def sweep_lemma1(n: int = 100_000, dims=range(2, 11), seed: int = 0, near_boundary: bool = False,
                 chunk: int = 50_000, invert: bool = False) -> SweepReport:
    rng = np.random.default_rng(seed)
    dims = list(dims)
    cases = violations = 0
    worst = np.inf
    per_dim = {}
    for d in dims:
        v_d = 0
        for start in range(0, n, chunk):
            m = min(chunk, n - start)
            p1 = _random_simplex(rng, m, d, near_boundary)
            p2 = _random_simplex(rng, m, d, near_boundary)
            alpha = rng.uniform(0, 1, size=m)
            s = check_lemma1(p1, p2, alpha)
            v_d += int((s >= -TOL).sum() if invert else (s < -TOL).sum())
            worst = min(worst, float(s.min()))
            cases += m
        per_dim[d] = v_d
        violations += v_d
    return SweepReport("lemma1" + ("-boundary" if near_boundary else ""), cases, violations, worst,
                       details={"dims": dims, "seed": seed, "violations_per_dim": per_dim,
                                "inverted": invert})


# -- binary theorems ------------------------------------------------------------

def _dominated(p1: BinaryPair, p2: BinaryPair) -> bool:
    """Model 2 is at least as uncertain as model 1 at both points, with equal argmaxes."""
    closer = abs(p2.a - 0.5) <= abs(p1.a - 0.5) and abs(p2.b - 0.5) <= abs(p1.b - 0.5)
    same_argmax = (p1.a > 0.5) == (p2.a > 0.5) and (p1.b > 0.5) == (p2.b > 0.5)
    return closer and same_argmax


def check_theorem1(pair1: BinaryPair, pair2: BinaryPair) -> Verdict:
    if pair1.condition is not Condition.C1 or pair2.condition is not Condition.C1:
        raise ValueError("theorem 1 needs both pairs in C1")
    if not _dominated(pair1, pair2):
        raise ValueError("pair2 must entropy-dominate pair1 with the same argmaxes")
    r1, r2 = pair1.robustness, pair2.robustness
    return Verdict(r1 >= r2 - TOL, r1, r2)


def check_theorem2(pair1: BinaryPair, pair2: BinaryPair) -> Verdict:
    c1, c2 = pair1.condition, pair2.condition
    if c1 != c2 or c1 not in (Condition.C2, Condition.C3):
        raise ValueError("theorem 2 needs both pairs in C2 or both in C3")
    if abs((pair1.a - pair1.b) - (pair2.a - pair2.b)) > TOL:
        raise ValueError("theorem 2 needs equal clean-adversarial differences")
    if not _dominated(pair1, pair2):
        raise ValueError("pair2 must entropy-dominate pair1 with the same argmaxes")
    r1, r2 = pair1.robustness, pair2.robustness
    return Verdict(r1 >= r2 - TOL, r1, r2)


def _grid(resolution: float, lo: float, hi: float) -> tuple[int, int, int]:
    n = int(round(1 / resolution))
    if abs(n * resolution - 1) > 1e-9:
        raise ValueError("resolution must divide 1")
    return n, int(round(lo * n)), int(round(hi * n))


def sweep_theorem1(resolution: float = 0.01, lo: float = 0.01, hi: float = 0.99,
                   invert: bool = False) -> SweepReport:
    """All C1 pairs (a1, b1) and dominated partners (a2, b2) on the grid.

    Pair 2 must satisfy 1/2 < a2 <= a1 and b1 <= b2 <= 1/2; the constraints on
    the clean and adversarial coordinates separate, so the sweep is the
    product of the admissible (a1, a2) and (b1, b2) index pairs.
    """
    n, klo, khi = _grid(resolution, lo, hi)
    half = n / 2
    ks = np.arange(klo, khi + 1)
    a_idx = ks[ks > half]
    b_idx = ks[ks <= half]
    A1, A2 = np.meshgrid(a_idx, a_idx, indexing="ij")
    keep = A2 <= A1
    A1, A2 = A1[keep], A2[keep]
    B1, B2 = np.meshgrid(b_idx, b_idx, indexing="ij")
    keep = B2 >= B1
    B1, B2 = B1[keep], B2[keep]

    # KL depends on both coordinates, so evaluate the full product in row blocks
    violations, worst, cases = 0, np.inf, 0
    for i in range(len(A1)):
        r1 = binary_kl(A1[i] / n, B1 / n)
        r2 = binary_kl(A2[i] / n, B2 / n)
        margin = r1 - r2
        if invert:
            margin = -margin - 1.0
        violations += int((margin < -TOL).sum())
        worst = min(worst, float(margin.min()))
        cases += margin.size
    return SweepReport("theorem1", cases, violations, worst, resolution,
                       details={"interior": [lo, hi], "inverted": invert})


def sweep_theorem2(resolution: float = 0.01, lo: float = 0.01, hi: float = 0.99,
                   regions=(Condition.C2, Condition.C3), invert: bool = False) -> SweepReport:
    """Pairs shifted toward 1/2 by a common amount s >= 0 (so d is matched exactly)."""
    n, klo, khi = _grid(resolution, lo, hi)
    half = n / 2
    ks = np.arange(klo, khi + 1)
    violations, worst, cases = 0, np.inf, 0
    per_region = {}
    for region in map(Condition, regions):
        side = ks[ks > half] if region is Condition.C3 else ks[ks <= half]
        A1, B1 = (g.ravel() for g in np.meshgrid(side, side, indexing="ij"))
        if region is Condition.C3:
            max_shift = np.minimum(A1, B1) - int(np.floor(half)) - 1
            sign = -1
        else:
            max_shift = int(np.floor(half)) - np.maximum(A1, B1)
            sign = 1
        reps = max_shift + 1
        A1r, B1r = np.repeat(A1, reps), np.repeat(B1, reps)
        S = np.concatenate([np.arange(r) for r in reps])
        A2, B2 = A1r + sign * S, B1r + sign * S
        margin = binary_kl(A1r / n, B1r / n) - binary_kl(A2 / n, B2 / n)
        if invert:
            margin = -margin - 1.0
        v = int((margin < -TOL).sum())
        per_region[region.value] = {"cases": int(margin.size), "violations": v}
        violations += v
        worst = min(worst, float(margin.min()))
        cases += margin.size
    return SweepReport("theorem2", cases, violations, worst, resolution,
                       details={"interior": [lo, hi], "regions": per_region, "inverted": invert,
                                "note": "constructed pairs only; trained networks rarely match d exactly"})


# -- sampled definitions ----------------------------------------------------------

Model = Callable[[np.ndarray], np.ndarray]


@dataclass
class DominanceReport:
    entropy_dominated: bool
    adv_convergent: bool
    n_points: int
    seed: int
    max_entropy_excess: float
    mode: str = "sampled"


def network_model(spec, params) -> Model:
    frozen = params.frozen()

    def model(x):
        with no_grad():
            return forward(spec, frozen, x).data

    return model


def sample_ball(x: np.ndarray, eps: float, box, n_samples: int, seed: int) -> np.ndarray:
    """Each row of ``x`` followed by ``n_samples`` uniform draws from its clipped l-inf ball."""
    rng = np.random.default_rng(seed)
    noise = rng.uniform(-eps, eps, size=(len(x), n_samples, x.shape[1]))
    pts = np.clip(x[:, None, :] + noise, box[0], box[1])
    return np.concatenate([x[:, None, :], pts], axis=1).reshape(-1, x.shape[1])


def entropy_dominance_sampled(model1: Model, model2: Model, dataset, cfg, n_samples: int = 16,
                              seed: int = 0) -> DominanceReport:
    """Sampled surrogates for "model2 is an entropy upper bound of model1" and equal argmaxes."""
    pts = sample_ball(dataset.features, cfg.eps, cfg.box, n_samples, seed)
    z1, z2 = model1(pts), model2(pts)
    h1, h2 = entropy(softmax(z1)).data, entropy(softmax(z2)).data
    excess = float(np.max(h1 - h2))
    return DominanceReport(
        entropy_dominated=bool((h1 <= h2 + TOL).all()),
        adv_convergent=bool((np.argmax(z1, 1) == np.argmax(z2, 1)).all()),
        n_points=len(pts), seed=seed, max_entropy_excess=excess)
