"""Datasets: Gaussian mixtures, mixed-pair universum samples, IDX files, batching.

Randomness comes from numpy's PCG64 bit generator seeded with 64-bit
integers, so every generator here is a pure function of (params, seed).
"""

import gzip
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .autodiff import DomainError, Tensor
from .losses import LabeledBatch, UnlabeledBatch

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class FormatError(ValueError):
    pass


class ConsistencyError(ValueError):
    pass


def make_rng(seed):
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    L: int
    train_idx: np.ndarray = None
    test_idx: np.ndarray = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.int64).reshape(-1)
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise DomainError(f"X {X.shape} does not match {y.shape[0]} labels")
        if y.size and (y.min() < 1 or y.max() > self.L):
            raise DomainError(f"labels must lie in 1..{self.L}")
        train = np.arange(len(y)) if self.train_idx is None else np.asarray(self.train_idx, dtype=np.int64)
        test = np.empty(0, dtype=np.int64) if self.test_idx is None else np.asarray(self.test_idx, dtype=np.int64)
        if np.intersect1d(train, test).size:
            raise DomainError("train and test indices overlap")
        for name, value in (("X", X), ("y", y), ("train_idx", train), ("test_idx", test)):
            object.__setattr__(self, name, value)

    @property
    def n_features(self):
        return self.X.shape[1]

    @property
    def X_train(self):
        return self.X[self.train_idx]

    @property
    def y_train(self):
        return self.y[self.train_idx]

    @property
    def X_test(self):
        return self.X[self.test_idx]

    @property
    def y_test(self):
        return self.y[self.test_idx]

    def labeled(self):
        return LabeledBatch(Tensor(self.X_train), self.y_train, self.L)


def _class_means(L, d, sep):
    if d >= L:
        # simplex vertices, pairwise distance sep
        means = np.zeros((L, d))
        means[np.arange(L), np.arange(L)] = sep / np.sqrt(2.0)
        return means
    # circle in the first two coordinates, neighbour distance sep
    radius = sep / (2.0 * np.sin(np.pi / L))
    angles = 2.0 * np.pi * np.arange(L) / L
    means = np.zeros((L, d))
    means[:, 0] = radius * np.cos(angles)
    means[:, 1] = radius * np.sin(angles)
    return means


def gen_gaussian_mixture(L, per_class, d, sep, seed):
    """Balanced mixture of unit-variance isotropic Gaussians.

    Rows are grouped by class; use ``split`` to draw train/test indices.
    """
    if L < 2 or d < 2 or per_class < 1 or sep < 0:
        raise ValueError(f"invalid mixture parameters L={L} per_class={per_class} d={d} sep={sep}")
    rng = make_rng(seed)
    means = _class_means(L, d, sep)
    y = np.repeat(np.arange(1, L + 1), per_class)
    X = means[y - 1] + rng.standard_normal((L * per_class, d))
    prov = {"kind": "synthetic", "L": L, "per_class": per_class, "d": d, "sep": sep, "seed": seed}
    return Dataset(X, y, L, provenance=prov)


def split(ds, train_size, test_size=None, seed=0, stratified=False):
    """Draw disjoint train/test indices from the whole dataset.

    ``test_size=None`` puts every remaining row in the test split.
    """
    n = len(ds.y)
    test_size = n - train_size if test_size is None else test_size
    if train_size < 1 or test_size < 0 or train_size + test_size > n:
        raise DomainError(f"cannot split {n} rows into {train_size} + {test_size}")
    rng = make_rng(seed)
    if stratified:
        per = train_size // ds.L
        if per * ds.L != train_size:
            raise DomainError(f"stratified train_size {train_size} not divisible by L={ds.L}")
        train = np.concatenate([
            rng.choice(np.flatnonzero(ds.y == k), per, replace=False) for k in range(1, ds.L + 1)
        ])
        rest = np.setdiff1d(np.arange(n), train)
        test = rng.permutation(rest)[:test_size]
    else:
        order = rng.permutation(n)
        train, test = order[:train_size], order[train_size:train_size + test_size]
    prov = dict(ds.provenance, split={"train": train_size, "test": test_size, "seed": seed,
                                      "stratified": stratified})
    return replace(ds, train_idx=np.sort(train), test_idx=np.sort(test), provenance=prov)


def mix_universum(ds, pairs, a, seed):
    """Weighted averages a*x_i + (1-a)*x_j of random distinct training rows."""
    if not 0.5 <= a <= 1.0:
        raise DomainError(f"mixing ratio must lie in [0.5, 1.0], got {a}")
    X = ds.X_train
    n = X.shape[0]
    if n < 2:
        raise DomainError("need at least 2 training rows to mix")
    rng = make_rng(seed)
    i = rng.integers(0, n, size=pairs)
    j = (i + rng.integers(1, n, size=pairs)) % n
    return UnlabeledBatch(Tensor(a * X[i] + (1.0 - a) * X[j]))


def _open(path):
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(2)
    return gzip.open(path, "rb") if head == b"\x1f\x8b" else open(path, "rb")


def _read_idx(path, expected_magic):
    with _open(path) as fh:
        (magic,) = struct.unpack(">I", fh.read(4))
        if magic != expected_magic:
            raise FormatError(f"{path}: bad IDX magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
        ndim = magic & 0xFF
        dims = struct.unpack(">" + "I" * ndim, fh.read(4 * ndim))
        count = int(np.prod(dims))
        data = np.frombuffer(fh.read(count), dtype=np.uint8)
    if data.size != count:
        raise FormatError(f"{path}: truncated, expected {count} bytes of data, got {data.size}")
    return data.reshape(dims)


def load_idx(images_path, labels_path):
    """Load an IDX image/label pair (optionally gzipped).

    Pixels are scaled to [0, 1] and flattened; labels are shifted to 1..L.
    """
    images = _read_idx(images_path, IDX_IMAGES_MAGIC)
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise ConsistencyError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    X = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    y = labels.astype(np.int64) + 1
    L = max(int(y.max()) if y.size else 2, 2)
    prov = {"kind": "idx", "images": str(images_path), "labels": str(labels_path),
            "image_shape": list(images.shape[1:])}
    return Dataset(X, y, L, provenance=prov)


def write_idx(ds, images_path, labels_path, image_shape=None, compress=False):
    """Write ``ds`` back to IDX; inverse of ``load_idx`` for 8-bit data."""
    if image_shape is None:
        image_shape = ds.provenance.get("image_shape") or [ds.n_features]
    pixels = np.rint(ds.X * 255.0)
    if pixels.min() < 0 or pixels.max() > 255:
        raise DomainError("pixel values outside [0, 1]")
    dims = (len(ds.y), *image_shape)
    opener = gzip.open if compress else open
    with opener(images_path, "wb") as fh:
        fh.write(struct.pack(">I", IDX_IMAGES_MAGIC & ~0xFF | len(dims)))
        fh.write(struct.pack(">" + "I" * len(dims), *dims))
        fh.write(pixels.astype(np.uint8).tobytes())
    with opener(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, len(ds.y)))
        fh.write((ds.y - 1).astype(np.uint8).tobytes())


def sample_batch(ds, M, rng):
    """Draw M distinct training rows; advances ``rng``."""
    n = len(ds.train_idx)
    if M > n:
        raise DomainError(f"batch size {M} exceeds train split size {n}")
    idx = ds.train_idx[rng.choice(n, M, replace=False)]
    return LabeledBatch(Tensor(ds.X[idx]), ds.y[idx], ds.L)
