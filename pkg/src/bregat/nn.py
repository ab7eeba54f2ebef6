"""Feed-forward classifiers on top of :mod:`bregat.tensor`."""
from __future__ import annotations

import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .tensor import Tensor, gradients, no_grad

MAGIC = b"BAT1"
ACTIVATIONS = ("relu", "tanh")


@dataclass(frozen=True)
class NetworkSpec:
    in_dim: int
    hidden: tuple[int, ...] = (64, 64)
    n_classes: int = 2
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.n_classes < 2:
            raise ValueError("need at least two classes")
        if self.in_dim < 1:
            raise ValueError("in_dim must be positive")
        if any(h < 1 for h in self.hidden):
            raise ValueError("hidden widths must be positive; use hidden=() for a linear model")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def widths(self) -> list[int]:
        return [self.in_dim, *self.hidden, self.n_classes]


@dataclass
class Params:
    """Ordered weight/bias tensors ``W0, b0, W1, b1, ...``."""

    tensors: "OrderedDict[str, Tensor]" = field(default_factory=OrderedDict)

    def __post_init__(self):
        ws = [t for k, t in self.tensors.items() if k.startswith("W")]
        for a, b in zip(ws, ws[1:]):
            if a.shape[1] != b.shape[0]:
                raise ValueError(f"inconsistent layer chain: {a.shape} -> {b.shape}")

    def __iter__(self):
        return iter(self.tensors.items())

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __len__(self) -> int:
        return len(self.tensors)

    @property
    def n_layers(self) -> int:
        return len(self.tensors) // 2

    def names(self) -> list[str]:
        return list(self.tensors)

    def arrays(self) -> list[np.ndarray]:
        return [t.data for t in self.tensors.values()]

    def tracked(self) -> "Params":
        """Fresh leaf tensors with grad tracking, sharing no graph with ``self``."""
        return Params(OrderedDict((k, Tensor(t.data.copy(), requires_grad=True)) for k, t in self))

    def frozen(self) -> "Params":
        return Params(OrderedDict((k, Tensor(t.data)) for k, t in self))

    def copy(self) -> "Params":
        return Params(OrderedDict((k, Tensor(t.data.copy())) for k, t in self))

    def replace(self, arrays) -> "Params":
        return Params(OrderedDict((k, Tensor(a)) for k, a in zip(self.tensors, arrays)))

    def spec(self, activation: str = "relu") -> NetworkSpec:
        ws = [t.shape for k, t in self if k.startswith("W")]
        return NetworkSpec(ws[0][0], tuple(s[1] for s in ws[:-1]), ws[-1][1], activation)


def init_params(spec: NetworkSpec, seed: int = 0) -> Params:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases."""
    rng = np.random.default_rng(seed)
    out = OrderedDict()
    widths = spec.widths
    for i, (fan_in, fan_out) in enumerate(zip(widths, widths[1:])):
        bound = np.sqrt(1.0 / fan_in)
        out[f"W{i}"] = Tensor(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        out[f"b{i}"] = Tensor(rng.uniform(-bound, bound, size=(fan_out,)))
    return Params(out)


def forward(spec: NetworkSpec, params: Params, batch) -> Tensor:
    x = batch if isinstance(batch, Tensor) else Tensor(batch)
    if x.ndim != 2 or x.shape[1] != spec.in_dim:
        raise ValueError(f"batch shape {x.shape} does not match [m, {spec.in_dim}]")
    n = len(spec.widths) - 1
    if params.n_layers != n:
        raise ValueError(f"params have {params.n_layers} layers, spec expects {n}")
    h = x
    for i in range(n):
        W, b = params[f"W{i}"], params[f"b{i}"]
        if W.shape != (spec.widths[i], spec.widths[i + 1]):
            raise ValueError(f"W{i} has shape {W.shape}, expected {(spec.widths[i], spec.widths[i + 1])}")
        h = h @ W + b
        if i < n - 1:
            h = h.relu() if spec.activation == "relu" else h.tanh()
    return h


def grad_params(loss: Tensor, params: Params) -> "OrderedDict[str, np.ndarray]":
    names = params.names()
    grads = gradients(loss, [params[k] for k in names])
    return OrderedDict(zip(names, grads))


def grad_input(loss: Tensor, inp: Tensor) -> np.ndarray:
    return gradients(loss, [inp])[0]


def predict(spec: NetworkSpec, params: Params, x) -> np.ndarray:
    """Argmax class per row; ties go to the lowest index."""
    with no_grad():
        logits = forward(spec, params.frozen(), x).data
    return np.argmax(logits, axis=1)


# -- BAT1 params file --------------------------------------------------------
# header: b"BAT1", u32 layer count; per layer: u32 in, u32 out,
# W payload (in*out f64, row-major), b payload (out f64).  All little-endian.

def save_params(params: Params, path) -> None:
    chunks = [MAGIC, struct.pack("<I", params.n_layers)]
    for i in range(params.n_layers):
        W, b = params[f"W{i}"].data, params[f"b{i}"].data
        chunks.append(struct.pack("<II", *W.shape))
        chunks.append(W.astype("<f8").tobytes())
        chunks.append(b.astype("<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_params(path) -> Params:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: not a BAT1 params file")
    (n,) = struct.unpack_from("<I", raw, 4)
    off = 8
    out = OrderedDict()
    for i in range(n):
        if off + 8 > len(raw):
            raise ValueError(f"{path}: truncated at layer {i}")
        fin, fout = struct.unpack_from("<II", raw, off)
        off += 8
        nw, nb = fin * fout * 8, fout * 8
        if off + nw + nb > len(raw):
            raise ValueError(f"{path}: truncated at layer {i}")
        out[f"W{i}"] = Tensor(np.frombuffer(raw, "<f8", fin * fout, off).reshape(fin, fout).astype(np.float64))
        off += nw
        out[f"b{i}"] = Tensor(np.frombuffer(raw, "<f8", fout, off).astype(np.float64))
        off += nb
    if off != len(raw):
        raise ValueError(f"{path}: {len(raw) - off} trailing bytes")
    return Params(out)
