"""Softmax, entropy and Bregman divergences on the probability simplex.

All functions take array-likes, :class:`ProbDist` or :class:`Tensor` and work
row-wise along the last axis, returning a :class:`Tensor` with the class axis
reduced away (so ``float(kl(p, q))`` works for single distributions and
gradients flow when the inputs carry a graph).  Logs are natural and are taken
of probabilities clamped to ``>= CLAMP``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, as_tensor

CLAMP = 1e-12
SUM_TOL = 1e-9


@dataclass(frozen=True)
class ProbDist:
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 1 or p.size < 2:
            raise ValueError("a distribution needs at least two components")
        if (p < 0).any() or (p > 1).any():
            raise ValueError(f"components outside [0, 1]: {p}")
        if abs(p.sum() - 1.0) > SUM_TOL:
            raise ValueError(f"components sum to {p.sum()!r}, not 1")
        object.__setattr__(self, "probs", p)

    def __len__(self) -> int:
        return self.probs.size

    def __array__(self, dtype=None, copy=None):
        return self.probs if dtype is None else self.probs.astype(dtype)


@dataclass(frozen=True)
class OneHotLabel:
    index: int
    n_classes: int

    def __post_init__(self):
        if not 0 <= self.index < self.n_classes:
            raise ValueError(f"label {self.index} out of range for {self.n_classes} classes")


class Psi(enum.Enum):
    """Generator functions for the Bregman divergence."""

    NEG_ENTROPY = "neg_entropy"
    SQUARE = "square"

    def value(self, p: Tensor) -> Tensor:
        if self is Psi.NEG_ENTROPY:
            return (p * log_clamped(p)).sum(axis=-1)
        return p.square().sum(axis=-1)

    def gradient(self, q: Tensor) -> Tensor:
        if self is Psi.NEG_ENTROPY:
            return log_clamped(q) + 1.0
        return q * 2.0

    @classmethod
    def parse(cls, s) -> "Psi":
        if isinstance(s, cls):
            return s
        key = str(s).lower()
        if key in ("neg_entropy", "negentropy", "kl", "-h"):
            return cls.NEG_ENTROPY
        if key in ("square", "se", "s"):
            return cls.SQUARE
        raise ValueError(f"unknown psi {s!r}")


def _t(x) -> Tensor:
    if isinstance(x, ProbDist):
        return Tensor(x.probs)
    if isinstance(x, OneHotLabel):
        return Tensor(one_hot(x))
    return as_tensor(x)


def log_clamped(p: Tensor) -> Tensor:
    return p.clamp_min(CLAMP).log()


def softmax(logits) -> Tensor:
    z = _t(logits)
    shift = z.data.max(axis=-1, keepdims=True)
    e = (z - shift).exp()
    return e / e.sum(axis=-1, keepdims=True)


def entropy(p) -> Tensor:
    p = _t(p)
    return -(p * log_clamped(p)).sum(axis=-1)


def kl(p, q) -> Tensor:
    """KL(p || q).  With a one-hot ``p`` this is exactly ``-ln q_y``."""
    if isinstance(p, OneHotLabel):
        q = _t(q)
        return -log_clamped(q[..., p.index])
    p, q = _t(p), _t(q)
    _check_dims(p, q)
    return (p * (log_clamped(p) - log_clamped(q))).sum(axis=-1)


def cross_entropy(q, labels) -> Tensor:
    """Per-row ``-ln q[i, labels[i]]`` for a batch of distributions."""
    q = _t(q)
    labels = np.asarray(labels, dtype=np.intp)
    return -log_clamped(q[np.arange(len(labels)), labels])


def se(p, q) -> Tensor:
    p, q = _t(p), _t(q)
    _check_dims(p, q)
    return (p - q).square().sum(axis=-1)


def bregman(psi, p, q) -> Tensor:
    """psi(p) - psi(q) - <grad psi(q), p - q>."""
    psi = Psi.parse(psi)
    p, q = _t(p), _t(q)
    _check_dims(p, q)
    return psi.value(p) - psi.value(q) - (psi.gradient(q) * (p - q)).sum(axis=-1)


def one_hot(label, n_classes: int | None = None) -> np.ndarray:
    """One-hot rows for a :class:`OneHotLabel`, an int, or an int array."""
    if isinstance(label, OneHotLabel):
        label, n_classes = label.index, label.n_classes
    if n_classes is None:
        raise ValueError("n_classes is required for raw integer labels")
    idx = np.asarray(label, dtype=np.intp)
    if (idx < 0).any() or (idx >= n_classes).any():
        raise ValueError(f"label out of range for {n_classes} classes")
    return np.eye(n_classes)[idx]


def _check_dims(p: Tensor, q: Tensor) -> None:
    if p.shape[-1] != q.shape[-1]:
        raise ValueError(f"dimension mismatch: {p.shape[-1]} vs {q.shape[-1]}")
