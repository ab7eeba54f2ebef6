"""Synthetic binary datasets and an IDX (MNIST-style) reader/writer."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
DEFAULT_BOX = (-3.0, 3.0)


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    n_classes: int
    name: str = ""
    box: tuple[float, float] = DEFAULT_BOX
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ValueError("features must be [N, d]")
        if len(self.features) != len(self.labels):
            raise ValueError(f"{len(self.features)} feature rows vs {len(self.labels)} labels")
        lo, hi = self.box
        if self.features.size and (self.features.min() < lo or self.features.max() > hi):
            raise ValueError(f"features fall outside the input box {self.box}")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.features[idx], self.labels[idx], self.n_classes, self.name, self.box, dict(self.meta))


def gen_two_moons(n: int, noise: float = 0.15, seed: int = 0, box=DEFAULT_BOX) -> Dataset:
    """Two interleaved half circles; class 0 is the upper arc starting at (1, 0)."""
    if n < 2 or n % 2:
        raise ValueError("n must be a positive even number")
    half = n // 2
    t = np.linspace(0.0, np.pi, half)
    upper = np.stack([np.cos(t), np.sin(t)], axis=1)
    lower = np.stack([1.0 - np.cos(t), 0.5 - np.sin(t)], axis=1)
    X = np.concatenate([upper, lower])
    y = np.repeat([0, 1], half)
    rng = np.random.default_rng(seed)
    if noise > 0:
        X = X + rng.normal(scale=noise, size=X.shape)
    X = np.clip(X, *box)
    return Dataset(X, y, 2, "two_moons", tuple(box), {"noise": noise, "seed": seed})


def gen_gaussian_blobs(n: int, centers, sigma: float = 0.5, seed: int = 0, box=DEFAULT_BOX) -> Dataset:
    """``n`` points split evenly across isotropic Gaussians at ``centers``; label = center index."""
    centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    k = len(centers)
    if n % k:
        raise ValueError(f"n={n} is not divisible by {k} centers")
    rng = np.random.default_rng(seed)
    y = np.repeat(np.arange(k), n // k)
    X = centers[y] + rng.normal(scale=sigma, size=(n, centers.shape[1]))
    X = np.clip(X, *box)
    return Dataset(X, y, max(k, 2), "blobs", tuple(box), {"sigma": sigma, "seed": seed})


# -- IDX ----------------------------------------------------------------------

class IdxError(ValueError):
    pass


class BadMagicError(IdxError):
    pass


class TruncatedError(IdxError):
    pass


class CountMismatchError(IdxError):
    pass


@dataclass(frozen=True)
class IdxHeader:
    magic: int
    dims: tuple[int, ...]

    @property
    def size(self) -> int:
        return 4 + 4 * len(self.dims)

    @property
    def payload_len(self) -> int:
        return int(np.prod(self.dims))


def parse_idx_header(raw: bytes, expected_magic: int) -> IdxHeader:
    if len(raw) < 4:
        raise TruncatedError("file shorter than the magic number")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise BadMagicError(f"bad magic {magic} (expected {expected_magic})")
    ndim = 3 if magic == IMAGES_MAGIC else 1
    if len(raw) < 4 + 4 * ndim:
        raise TruncatedError("header truncated")
    dims = struct.unpack(f">{ndim}I", raw[4:4 + 4 * ndim])
    return IdxHeader(magic, tuple(dims))


def _read_idx(path, magic: int) -> tuple[IdxHeader, np.ndarray]:
    raw = Path(path).read_bytes()
    hdr = parse_idx_header(raw, magic)
    payload = raw[hdr.size:]
    if len(payload) < hdr.payload_len:
        raise TruncatedError(f"{path}: payload has {len(payload)} bytes, header promises {hdr.payload_len}")
    arr = np.frombuffer(payload, dtype=np.uint8, count=hdr.payload_len).reshape(hdr.dims)
    return hdr, arr


def load_idx(path_images, path_labels, limit: int | None = None) -> Dataset:
    """Images scaled to [0, 1]; at most ``limit`` examples."""
    ih, images = _read_idx(path_images, IMAGES_MAGIC)
    lh, labels = _read_idx(path_labels, LABELS_MAGIC)
    if ih.dims[0] != lh.dims[0]:
        raise CountMismatchError(f"{ih.dims[0]} images vs {lh.dims[0]} labels")
    if limit is not None:
        images, labels = images[:limit], labels[:limit]
    rows, cols = ih.dims[1:]
    X = images.reshape(len(images), rows * cols).astype(np.float64) / 255.0
    n_classes = max(int(labels.max()) + 1, 10) if labels.size else 10
    return Dataset(X, labels.astype(np.int64), n_classes, Path(path_images).name, (0.0, 1.0),
                   {"image_shape": (rows, cols), "scale": 255.0})


def encode_idx_images(images: np.ndarray) -> bytes:
    images = np.asarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    return struct.pack(">IIII", IMAGES_MAGIC, n, rows, cols) + images.tobytes()


def encode_idx_labels(labels: np.ndarray) -> bytes:
    labels = np.asarray(labels, dtype=np.uint8)
    return struct.pack(">II", LABELS_MAGIC, len(labels)) + labels.tobytes()


def dataset_to_idx(ds: Dataset) -> tuple[bytes, bytes]:
    """Inverse of :func:`load_idx` for datasets it produced."""
    rows, cols = ds.meta["image_shape"]
    pixels = np.rint(ds.features * ds.meta.get("scale", 255.0)).astype(np.uint8)
    return encode_idx_images(pixels.reshape(len(ds), rows, cols)), encode_idx_labels(ds.labels)
