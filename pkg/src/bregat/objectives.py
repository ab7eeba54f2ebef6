"""Outer-minimization losses: PGD-AT, TRADES, FAIT and their MER variants.

Every variant is assembled from three pieces computed per example and then
batch-averaged:

* accuracy term ``A = CE(p(x), y)`` (``CE(p(x'), y)`` for PGD-AT),
* robustness term ``R = D_psi(p(x), p(x'))`` or the interpolated
  ``R' = D_psi(p(x), p(x*)) + D_psi(p(x*), p(x'))``,
* entropy penalty ``-(b_cle H(p(x)) + b_adv H(p(x')))``; with psi = square,
  ``H`` is replaced by ``-S``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .simplex import OneHotLabel, Psi, bregman, cross_entropy, entropy, kl, log_clamped
from .tensor import Tensor, as_tensor


class Variant(str, enum.Enum):
    PGD_AT = "pgd-at"
    TRADES = "trades"
    FAIT = "fait"
    TRADES_MER = "trades-mer"
    FAIT_MER = "fait-mer"

    @property
    def uses_interp(self) -> bool:
        return self in (Variant.FAIT, Variant.FAIT_MER)

    @property
    def uses_mer(self) -> bool:
        return self in (Variant.TRADES_MER, Variant.FAIT_MER)


@dataclass(frozen=True)
class ObjectiveSpec:
    variant: Variant = Variant.TRADES
    lam: float = 9.0
    beta_cle: float = 0.0
    beta_adv: float = 0.0
    psi: Psi = Psi.NEG_ENTROPY

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        object.__setattr__(self, "psi", Psi.parse(self.psi))
        for name in ("lam", "beta_cle", "beta_adv"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def inner_loss(self) -> str:
        """Loss the PGD adversary maximizes for this objective."""
        if self.variant is Variant.PGD_AT:
            return "ce"
        return "kl" if self.psi is Psi.NEG_ENTROPY else "se"

    @property
    def label(self) -> str:
        suffix = "" if self.psi is Psi.NEG_ENTROPY else "-s"
        return f"{self.variant.value}{suffix}"


# CIFAR-10 scale defaults; desk-scale runs re-tune lambda.
PRESETS: dict[str, ObjectiveSpec] = {
    "standard": ObjectiveSpec(Variant.TRADES, lam=0.0),
    "pgd-at": ObjectiveSpec(Variant.PGD_AT, lam=0.0),
    "trades": ObjectiveSpec(Variant.TRADES, lam=9.0),
    "fait": ObjectiveSpec(Variant.FAIT, lam=12.0),
    "trades-mer": ObjectiveSpec(Variant.TRADES_MER, lam=21.0, beta_cle=1.0, beta_adv=0.0),
    "fait-mer": ObjectiveSpec(Variant.FAIT_MER, lam=30.0, beta_cle=1.0, beta_adv=0.0),
    "score": ObjectiveSpec(Variant.TRADES, lam=4.0, psi=Psi.SQUARE),
    "fait-s": ObjectiveSpec(Variant.FAIT, lam=8.0, psi=Psi.SQUARE),
    "trades-mer-s": ObjectiveSpec(Variant.TRADES_MER, lam=10.0, beta_cle=1.0, psi=Psi.SQUARE),
}
PRESET_INTERP = {"fait": 2, "fait-mer": 2, "fait-s": 2}


def preset(name: str, **overrides) -> ObjectiveSpec:
    return replace(PRESETS[name], **overrides)


@dataclass
class LossBreakdown:
    total: float
    acc_term: float
    rob_term: float
    mer_term: float
    mean_entropy_clean: float
    mean_entropy_adv: float
    loss: Tensor | None = field(default=None, repr=False, compare=False)


def _ce(p: Tensor, y) -> Tensor:
    if isinstance(y, OneHotLabel):
        return kl(y, p)
    if p.ndim == 1:
        return -log_clamped(p[int(y)])
    return cross_entropy(p, y)


def accuracy_loss(p_clean, y) -> Tensor:
    return _ce(as_tensor(p_clean), y)


def robustness_loss(psi, p_clean, p_adv) -> Tensor:
    return bregman(psi, p_clean, p_adv)


def fait_robustness_loss(psi, p_clean, p_interp, p_adv) -> Tensor:
    """D(p(x), p(x*)) + D(p(x*), p(x')), the interpolated robustness loss used in training."""
    return bregman(psi, p_clean, p_interp) + bregman(psi, p_interp, p_adv)


def fait_robustness_loss_lemma_order(psi, p_clean, p_interp, p_adv) -> Tensor:
    """D(p(x*), p(x)) + D(p(x'), p(x*)).

    This argument order is the one for which a chord point ``p(x*)`` is
    guaranteed to give a value no larger than ``D(p(x'), p(x))``.
    """
    return bregman(psi, p_interp, p_clean) + bregman(psi, p_adv, p_interp)


def mer_penalty(beta_cle: float, beta_adv: float, p_clean, p_adv, psi=Psi.NEG_ENTROPY) -> Tensor:
    psi = Psi.parse(psi)
    if psi is Psi.NEG_ENTROPY:
        h_clean, h_adv = entropy(p_clean), entropy(p_adv)
    else:
        h_clean = -as_tensor(p_clean).square().sum(axis=-1)
        h_adv = -as_tensor(p_adv).square().sum(axis=-1)
    return -(h_clean * beta_cle + h_adv * beta_adv)


def total_loss(objspec: ObjectiveSpec, y, p_clean, p_interp, p_adv) -> LossBreakdown:
    """Batch-mean loss for ``objspec``; gradients flow through all three distributions."""
    v = objspec.variant
    if v.uses_interp and p_interp is None:
        raise ValueError(f"{v.value} needs the interpolated distribution p(x*)")
    p_clean, p_adv = as_tensor(p_clean), as_tensor(p_adv)

    zero = Tensor(np.zeros(p_clean.shape[:-1]))
    if v is Variant.PGD_AT:
        acc = _ce(p_adv, y)
        rob, mer = zero, zero
        total = acc
    else:
        acc = _ce(p_clean, y)
        if v.uses_interp:
            rob = fait_robustness_loss(objspec.psi, p_clean, as_tensor(p_interp), p_adv)
        else:
            rob = robustness_loss(objspec.psi, p_clean, p_adv)
        if v.uses_mer:
            mer = mer_penalty(objspec.beta_cle, objspec.beta_adv, p_clean, p_adv, objspec.psi)
        else:
            mer = zero
        total = acc + rob * objspec.lam + mer

    loss = total.mean()
    return LossBreakdown(
        total=loss.item(),
        acc_term=float(acc.data.mean()),
        rob_term=float(rob.data.mean()),
        mer_term=float(mer.data.mean()),
        mean_entropy_clean=float(entropy(p_clean.detach()).data.mean()),
        mean_entropy_adv=float(entropy(p_adv.detach()).data.mean()),
        loss=loss,
    )
