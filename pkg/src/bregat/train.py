"""SGD outer loop with per-batch adversary generation and per-epoch metrics."""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .attacks import AttackConfig, clean_accuracy, evaluate_robust_accuracy, pgd_attack
from .nn import NetworkSpec, Params, forward, grad_params, init_params
from .objectives import ObjectiveSpec, Variant, fait_robustness_loss, robustness_loss, total_loss
from .simplex import softmax
from .tensor import NonFiniteError, no_grad

log = logging.getLogger(__name__)

CSV_COLUMNS = ("epoch", "clean_acc", "robust_acc", "loss_total", "loss_acc", "loss_rob",
               "loss_rprime", "loss_mer", "ent_clean", "ent_adv", "lr", "seconds")
DATA_STREAM = 0xDA7A


class TrainingDiverged(RuntimeError):
    pass


def _default_eval_attack() -> AttackConfig:
    return AttackConfig(eps=0.1, step=0.025, iters=20, inner_loss="ce")


def _default_final_attack() -> AttackConfig:
    return AttackConfig(eps=0.1, step=0.01, iters=100, restarts=5, inner_loss="ce")


@dataclass
class TrainConfig:
    epochs: int = 40
    batch_size: int = 128
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    warmup_epochs: int = 2
    milestones: tuple = ((30, 0.1), (36, 0.1))
    seed: int = 0
    objective: ObjectiveSpec = field(default_factory=ObjectiveSpec)
    attack: AttackConfig = field(default_factory=AttackConfig)
    eval_attack: AttackConfig = field(default_factory=_default_eval_attack)
    final_attack: AttackConfig = field(default_factory=_default_final_attack)
    # interpolation step used to log R' when the objective itself does not need x*
    metrics_interp: int = 2
    record_timing: bool = False

    def __post_init__(self):
        self.milestones = tuple((int(e), float(f)) for e, f in self.milestones)
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        epochs = [e for e, _ in self.milestones]
        if any(b <= a for a, b in zip(epochs, epochs[1:])):
            raise ValueError("milestones must be strictly increasing")
        if epochs and self.warmup_epochs >= epochs[0]:
            raise ValueError("warmup must end before the first milestone")
        if self.objective.variant.uses_interp and self.attack.interp is None:
            raise ValueError(f"{self.objective.variant.value} needs attack.interp (I)")
        # the training adversary always ascends the objective's own divergence
        if self.attack.inner_loss != self.objective.inner_loss:
            self.attack = replace(self.attack, inner_loss=self.objective.inner_loss)

    @property
    def train_attack(self) -> AttackConfig:
        interp = self.attack.interp
        if interp is None and 0 < self.metrics_interp < self.attack.iters:
            interp = self.metrics_interp
        return replace(self.attack, interp=interp)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["objective"]["variant"] = self.objective.variant.value
        d["objective"]["psi"] = self.objective.psi.value
        return d


@dataclass
class MetricsRecord:
    epoch: int
    clean_acc: float
    robust_acc: float
    loss_total: float
    loss_acc: float
    loss_rob: float
    loss_rprime: float
    loss_mer: float
    ent_clean: float
    ent_adv: float
    lam_rob: float
    lr: float
    seconds: float
    best: bool = False

    def csv_row(self) -> list[str]:
        return [str(self.epoch)] + [repr(float(getattr(self, c))) for c in CSV_COLUMNS[1:]]


@dataclass
class TrainResult:
    params: Params
    best_params: Params
    best_epoch: int | None
    metrics: list[MetricsRecord]


def lr_at(t: float, cfg: TrainConfig) -> float:
    """Learning rate at fractional epoch ``t`` (0-based): linear warmup from 0, then milestone decay."""
    if cfg.warmup_epochs > 0 and t < cfg.warmup_epochs:
        return cfg.lr * t / cfg.warmup_epochs
    lr = cfg.lr
    for epoch, factor in cfg.milestones:
        if t >= epoch:
            lr *= factor
    return lr


def sgd_step(params: list[np.ndarray], grads: list[np.ndarray], velocity: list[np.ndarray],
             lr: float, cfg: TrainConfig) -> tuple[list[np.ndarray], list[np.ndarray]]:
    new_p, new_v = [], []
    for p, g, v in zip(params, grads, velocity):
        g = g + cfg.weight_decay * p
        v = cfg.momentum * v + g
        new_p.append(p - lr * v)
        new_v.append(v)
    return new_p, new_v


def _probs(spec, params, x):
    with no_grad():
        return softmax(forward(spec, params, x)).data


def train(spec: NetworkSpec, cfg: TrainConfig, train_ds, eval_ds, on_epoch=None) -> TrainResult:
    params = init_params(spec, cfg.seed)
    best_params, best_epoch, best_rob = params.copy(), None, -1.0
    metrics: list[MetricsRecord] = []
    velocity = [np.zeros_like(a) for a in params.arrays()]
    obj, attack = cfg.objective, cfg.train_attack
    X, y = train_ds.features, train_ds.labels
    n = len(X)
    n_batches = -(-n // cfg.batch_size)

    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        perm = np.random.default_rng([DATA_STREAM, cfg.seed, epoch]).permutation(n)
        sums = np.zeros(8)
        lr = 0.0
        for b in range(n_batches):
            idx = perm[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            lr = lr_at(epoch + b / n_batches, cfg)
            xb, yb = X[idx], y[idx]
            # overflow surfaces as NonFiniteError, so numpy's warnings are redundant here
            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    adv = pgd_attack(spec, params, xb, yb, attack, seed=cfg.seed, epoch=epoch, indices=idx)
                    tp = params.tracked()
                    p_clean = softmax(forward(spec, tp, xb))
                    p_adv = softmax(forward(spec, tp, adv.x_adv))
                    p_int = softmax(forward(spec, tp, adv.x_interp)) if obj.variant.uses_interp else None
                    bd = total_loss(obj, yb, p_clean, p_int, p_adv)
                    grads = list(grad_params(bd.loss, tp).values())
                    if not all(np.isfinite(g).all() for g in grads):
                        raise NonFiniteError("non-finite gradient")
            except NonFiniteError as e:
                raise TrainingDiverged(f"epoch {epoch + 1} batch {b}: {e}; lower the learning rate "
                                       f"(lr={lr:g}) or check the probability clamp") from e

            pc, pa = p_clean.data, p_adv.data
            pi = p_int.data if p_int is not None else (
                _probs(spec, params, adv.x_interp) if adv.x_interp is not None else pa)
            r = float(robustness_loss(obj.psi, pc, pa).data.mean())
            r_prime = float(fait_robustness_loss(obj.psi, pc, pi, pa).data.mean())
            w = len(idx)
            sums += w * np.array([bd.total, bd.acc_term, r, r_prime, bd.mer_term,
                                  bd.mean_entropy_clean, bd.mean_entropy_adv, bd.rob_term])

            with np.errstate(over="ignore", invalid="ignore"):
                new, velocity = sgd_step(params.arrays(), grads, velocity, lr, cfg)
                finite = all(np.isfinite(a).all() for a in new)
            if not finite:
                raise TrainingDiverged(f"epoch {epoch + 1} batch {b}: parameters overflowed; "
                                       f"lower the learning rate (lr={lr:g})")
            params = params.replace(new)

        means = sums / n
        clean = clean_accuracy(spec, params, eval_ds)
        robust = evaluate_robust_accuracy(spec, params, eval_ds, cfg.eval_attack, seed=cfg.seed)
        lam_rob = 0.0 if obj.variant is Variant.PGD_AT else obj.lam * means[7]
        rec = MetricsRecord(
            epoch=epoch + 1, clean_acc=clean, robust_acc=robust,
            loss_total=means[0], loss_acc=means[1], loss_rob=means[2], loss_rprime=means[3],
            loss_mer=means[4], ent_clean=means[5], ent_adv=means[6], lam_rob=lam_rob, lr=lr,
            seconds=time.perf_counter() - t0 if cfg.record_timing else 0.0)
        if robust > best_rob:
            best_rob, best_epoch, best_params = robust, rec.epoch, params.copy()
        metrics.append(rec)
        log.info("epoch %d clean %.4f robust %.4f loss %.4f R %.4f R' %.4f",
                 rec.epoch, clean, robust, rec.loss_total, rec.loss_rob, rec.loss_rprime)
        if on_epoch is not None:
            on_epoch(rec)

    for rec in metrics:
        rec.best = rec.epoch == best_epoch
    return TrainResult(params, best_params, best_epoch, metrics)


def write_metrics_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for rec in records:
            w.writerow(rec.csv_row())


def read_metrics_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]
