"""Differentiable classifiers, dataset handling, and meta-gradient machinery.

Models expose loss/gradient/Hessian-vector-product over a flat parameter
vector, which keeps the meta-gradient code architecture-agnostic.  The
meta-objective is the loss after one inner gradient step,

    F(w) = f(w - eta1 * grad f(w)),

whose exact gradient is (I - eta1 * H(w)) @ grad f(w - eta1 * grad f(w)),
computed with Hessian-vector products (never a dense Hessian).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, UnsupportedArchitecture

# Parameter-count cap for exact Hessian-based meta-gradients; beyond this the
# first-order mode must be used.
EXACT_META_MAX_PARAMS = 50_000


@dataclass
class Dataset:
    """Feature matrix + integer labels, all points weighted equally."""

    x: np.ndarray  # (N, F) float
    y: np.ndarray  # (N,) int

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.x.ndim != 2 or self.y.ndim != 1 or len(self.x) != len(self.y):
            raise ValueError("dataset needs (N,F) features and (N,) labels")

    def __len__(self) -> int:
        return len(self.y)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.x[idx], self.y[idx])

    def check_labels(self, num_classes: int) -> None:
        if len(self) and (self.y.min() < 0 or self.y.max() >= num_classes):
            raise ValueError(f"labels outside [0, {num_classes})")


@dataclass(frozen=True)
class BatchRatios:
    """Mini-batch sampling ratios for the three meta-gradient batches."""

    a1: float
    a2: float
    a3: float

    def __post_init__(self):
        for name, a in zip(("a1", "a2", "a3"), (self.a1, self.a2, self.a3)):
            if not (0.0 < a <= 1.0):
                raise DomainError(f"batch ratio {name} must be in (0, 1], got {a}")

    @property
    def total(self) -> float:
        return self.a1 + self.a2 + self.a3

    def as_tuple(self):
        return (self.a1, self.a2, self.a3)


def batch_size(ratio: float, n: int) -> int:
    """Sampling rule: at least one point, otherwise round(ratio * n)."""
    return max(1, int(round(ratio * n)))


def sample_three_batches(dataset: Dataset, ratios: BatchRatios,
                         rng: np.random.Generator):
    """Three independent with-replacement batches of sizes round(a_i * D)."""
    if len(dataset) == 0:
        raise DomainError("cannot sample from an empty dataset")
    n = len(dataset)
    out = []
    for a in ratios.as_tuple():
        idx = rng.integers(0, n, size=batch_size(a, n))
        out.append(dataset.subset(idx))
    return tuple(out)


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------

class SoftmaxRegression:
    """Multinomial logistic regression over a flat parameter vector."""

    def __init__(self, n_features: int, n_classes: int):
        self.n_features = n_features
        self.n_classes = n_classes
        self.n_params = n_classes * n_features + n_classes

    def init_params(self, rng: np.random.Generator, scale: float = 0.0) -> np.ndarray:
        if scale == 0.0:
            return np.zeros(self.n_params)
        return scale * rng.standard_normal(self.n_params)

    def _unpack(self, params):
        C, F = self.n_classes, self.n_features
        W = params[: C * F].reshape(C, F)
        b = params[C * F:]
        return W, b

    def _probs(self, params, x):
        W, b = self._unpack(params)
        logits = x @ W.T + b
        logits -= logits.max(axis=1, keepdims=True)
        e = np.exp(logits)
        return e / e.sum(axis=1, keepdims=True)

    def loss(self, params, dataset: Dataset) -> float:
        if len(dataset) == 0:
            raise DomainError("loss over an empty dataset")
        dataset.check_labels(self.n_classes)
        p = self._probs(params, dataset.x)
        picked = p[np.arange(len(dataset)), dataset.y]
        return float(-np.log(np.clip(picked, 1e-300, None)).mean())

    def gradient(self, params, dataset: Dataset) -> np.ndarray:
        if len(dataset) == 0:
            raise DomainError("gradient over an empty dataset")
        p = self._probs(params, dataset.x)
        p[np.arange(len(dataset)), dataset.y] -= 1.0
        p /= len(dataset)
        gW = p.T @ dataset.x
        gb = p.sum(axis=0)
        return np.concatenate([gW.ravel(), gb])

    def hvp(self, params, dataset: Dataset, v: np.ndarray) -> np.ndarray:
        """Hessian-vector product of the mean cross-entropy loss."""
        if len(dataset) == 0:
            raise DomainError("hvp over an empty dataset")
        p = self._probs(params, dataset.x)
        Vw, vb = self._unpack(v)
        dz = dataset.x @ Vw.T + vb
        # (diag(p) - p p^T) dz, rowwise
        a = p * dz - p * (p * dz).sum(axis=1, keepdims=True)
        a /= len(dataset)
        hW = a.T @ dataset.x
        hb = a.sum(axis=0)
        return np.concatenate([hW.ravel(), hb])

    def predict(self, params, x) -> np.ndarray:
        return self._probs(params, np.asarray(x, dtype=np.float64)).argmax(axis=1)

    def accuracy(self, params, dataset: Dataset) -> float:
        return float((self.predict(params, dataset.x) == dataset.y).mean())


class TinyMlp:
    """One-hidden-layer tanh MLP with exact Hessian-vector products."""

    def __init__(self, n_features: int, hidden: int, n_classes: int):
        self.n_features = n_features
        self.hidden = hidden
        self.n_classes = n_classes
        self.n_params = hidden * n_features + hidden + n_classes * hidden + n_classes

    def init_params(self, rng: np.random.Generator, scale: float | None = None):
        if scale is None:
            scale = 1.0 / np.sqrt(self.n_features)
        H, F, C = self.hidden, self.n_features, self.n_classes
        w = np.zeros(self.n_params)
        w[: H * F] = scale * rng.standard_normal(H * F)
        off = H * F + H
        w[off: off + C * H] = (1.0 / np.sqrt(H)) * rng.standard_normal(C * H)
        return w

    def _unpack(self, params):
        H, F, C = self.hidden, self.n_features, self.n_classes
        i = 0
        W1 = params[i: i + H * F].reshape(H, F); i += H * F
        b1 = params[i: i + H]; i += H
        W2 = params[i: i + C * H].reshape(C, H); i += C * H
        b2 = params[i: i + C]
        return W1, b1, W2, b2

    def _forward(self, params, x):
        W1, b1, W2, b2 = self._unpack(params)
        a1 = np.tanh(x @ W1.T + b1)
        logits = a1 @ W2.T + b2
        logits = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(logits)
        p = e / e.sum(axis=1, keepdims=True)
        return a1, p

    def loss(self, params, dataset: Dataset) -> float:
        if len(dataset) == 0:
            raise DomainError("loss over an empty dataset")
        dataset.check_labels(self.n_classes)
        _, p = self._forward(params, dataset.x)
        picked = p[np.arange(len(dataset)), dataset.y]
        return float(-np.log(np.clip(picked, 1e-300, None)).mean())

    def gradient(self, params, dataset: Dataset) -> np.ndarray:
        if len(dataset) == 0:
            raise DomainError("gradient over an empty dataset")
        x, y = dataset.x, dataset.y
        W1, b1, W2, b2 = self._unpack(params)
        a1, p = self._forward(params, x)
        d2 = p.copy()
        d2[np.arange(len(y)), y] -= 1.0
        d2 /= len(y)
        gW2 = d2.T @ a1
        gb2 = d2.sum(axis=0)
        d1 = (d2 @ W2) * (1.0 - a1 ** 2)
        gW1 = d1.T @ x
        gb1 = d1.sum(axis=0)
        return np.concatenate([gW1.ravel(), gb1, gW2.ravel(), gb2])

    def hvp(self, params, dataset: Dataset, v: np.ndarray) -> np.ndarray:
        """Exact HVP via forward-over-reverse differentiation."""
        if len(dataset) == 0:
            raise DomainError("hvp over an empty dataset")
        x, y = dataset.x, dataset.y
        n = len(y)
        W1, b1, W2, b2 = self._unpack(params)
        V1, c1, V2, c2 = self._unpack(v)

        z1 = x @ W1.T + b1
        a1 = np.tanh(z1)
        da1 = 1.0 - a1 ** 2
        r_z1 = x @ V1.T + c1
        r_a1 = da1 * r_z1

        p = self._forward(params, x)[1]
        r_z2 = r_a1 @ W2.T + a1 @ V2.T + c2
        d2 = p.copy()
        d2[np.arange(n), y] -= 1.0
        d2 /= n
        r_d2 = (p * r_z2 - p * (p * r_z2).sum(axis=1, keepdims=True)) / n

        r_gW2 = r_d2.T @ a1 + d2.T @ r_a1
        r_gb2 = r_d2.sum(axis=0)
        d1 = (d2 @ W2) * da1
        r_d1 = (r_d2 @ W2 + d2 @ V2) * da1 + (d2 @ W2) * (-2.0 * a1 * r_a1)
        r_gW1 = r_d1.T @ x
        r_gb1 = r_d1.sum(axis=0)
        return np.concatenate([r_gW1.ravel(), r_gb1, r_gW2.ravel(), r_gb2])

    def predict(self, params, x) -> np.ndarray:
        _, p = self._forward(params, np.asarray(x, dtype=np.float64))
        return p.argmax(axis=1)

    def accuracy(self, params, dataset: Dataset) -> float:
        return float((self.predict(params, dataset.x) == dataset.y).mean())


class QuadraticBowl:
    """f(w) = 0.5 ||w||^2 regardless of the data; closed-form reference model."""

    def __init__(self, dim: int = 1):
        self.n_params = dim
        self.n_classes = 1

    def init_params(self, rng=None, scale: float = 0.0):
        return np.zeros(self.n_params)

    def loss(self, params, dataset=None) -> float:
        return float(0.5 * params @ params)

    def gradient(self, params, dataset=None) -> np.ndarray:
        return params.copy()

    def hvp(self, params, dataset, v) -> np.ndarray:
        return np.asarray(v, dtype=float).copy()


def make_model(arch: str, n_features: int, n_classes: int, hidden: int = 16):
    if arch == "softmax":
        return SoftmaxRegression(n_features, n_classes)
    if arch == "mlp":
        return TinyMlp(n_features, hidden, n_classes)
    raise ValueError(f"unknown architecture {arch!r} (use 'softmax' or 'mlp')")


# ---------------------------------------------------------------------------
# Meta-gradient machinery
# ---------------------------------------------------------------------------

def meta_loss(model, params, dataset: Dataset, eta1: float) -> float:
    """Loss after one inner gradient step on the same data."""
    adapted = params - eta1 * model.gradient(params, dataset)
    return model.loss(adapted, dataset)


def meta_gradient_fo(model, params, batches, eta1: float) -> np.ndarray:
    """First-order meta-gradient: the Hessian factor is dropped."""
    d1, d2, _ = batches
    adapted = params - eta1 * model.gradient(params, d1)
    return model.gradient(adapted, d2)


def meta_gradient_exact(model, params, batches, eta1: float) -> np.ndarray:
    """Exact meta-gradient (I - eta1 * H(w | d3)) @ grad f(w_adapted | d2).

    Implemented with a Hessian-vector product; refuses models above
    EXACT_META_MAX_PARAMS.
    """
    if getattr(model, "n_params", 0) > EXACT_META_MAX_PARAMS:
        raise UnsupportedArchitecture(
            f"exact meta-gradient capped at {EXACT_META_MAX_PARAMS} parameters; "
            f"model has {model.n_params}")
    d1, d2, d3 = batches
    g = meta_gradient_fo(model, params, (d1, d2, d3), eta1)
    return g - eta1 * model.hvp(params, d3, g)


def meta_gradient(model, params, batches, eta1: float, mode: str) -> np.ndarray:
    if mode == "exact":
        return meta_gradient_exact(model, params, batches, eta1)
    if mode == "first_order":
        return meta_gradient_fo(model, params, batches, eta1)
    raise ValueError(f"unknown meta-gradient mode {mode!r}")


# ---------------------------------------------------------------------------
# Data sources
# ---------------------------------------------------------------------------

_IDX_IMAGE_MAGIC = 0x00000803
_IDX_LABEL_MAGIC = 0x00000801


def read_idx_images(path) -> np.ndarray:
    """Read an IDX image file (big-endian, magic 0x00000803) as (N, rows*cols)."""
    raw = Path(path).read_bytes()
    magic, n, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != _IDX_IMAGE_MAGIC:
        raise ValueError(f"bad IDX image magic 0x{magic:08x} in {path}")
    data = np.frombuffer(raw, dtype=np.uint8, offset=16)
    if len(data) != n * rows * cols:
        raise ValueError(f"truncated IDX image file {path}")
    return (data.reshape(n, rows * cols).astype(np.float64)) / 255.0


def read_idx_labels(path) -> np.ndarray:
    """Read an IDX label file (big-endian, magic 0x00000801)."""
    raw = Path(path).read_bytes()
    magic, n = struct.unpack(">II", raw[:8])
    if magic != _IDX_LABEL_MAGIC:
        raise ValueError(f"bad IDX label magic 0x{magic:08x} in {path}")
    data = np.frombuffer(raw, dtype=np.uint8, offset=8)
    if len(data) != n:
        raise ValueError(f"truncated IDX label file {path}")
    return data.astype(np.int64)


def load_idx_dataset(images_path, labels_path) -> Dataset:
    return Dataset(read_idx_images(images_path), read_idx_labels(labels_path))


def make_class_blobs(n_classes: int, n_features: int, rng: np.random.Generator,
                     separation: float = 2.2):
    """Class means for a synthetic Gaussian-blob classification task."""
    means = rng.standard_normal((n_classes, n_features))
    means *= separation / np.linalg.norm(means, axis=1, keepdims=True)
    return means


def sample_blob_dataset(means: np.ndarray, labels: np.ndarray, size: int,
                        rng: np.random.Generator, noise: float = 1.0) -> Dataset:
    """Draw `size` points uniformly over the given label subset."""
    lab = rng.choice(labels, size=size)
    x = means[lab] + noise * rng.standard_normal((size, means.shape[1]))
    return Dataset(x, lab)


def label_skew_partition(n_groups: int, n_classes: int, labels_per_group: int,
                         rng: np.random.Generator) -> list[np.ndarray]:
    """Assign each group a small label subset, covering all classes jointly."""
    groups = []
    pool = list(rng.permutation(n_classes))
    for _ in range(n_groups):
        take = []
        for _ in range(labels_per_group):
            if not pool:
                pool = list(rng.permutation(n_classes))
            take.append(pool.pop())
        groups.append(np.array(sorted(take)))
    return groups


def synthetic_group_datasets(n_groups: int, n_classes: int, n_features: int,
                             labels_per_group: int, size_mean: float,
                             size_std: float, rng: np.random.Generator,
                             noise: float = 1.0, test_fraction: float = 0.2):
    """Label-skewed per-group train/test datasets (sizes ~ N(mean, std)).

    Returns (means, [(train, test), ...]).
    """
    means = make_class_blobs(n_classes, n_features, rng)
    label_sets = label_skew_partition(n_groups, n_classes, labels_per_group, rng)
    out = []
    for labels in label_sets:
        size = max(20, int(round(rng.normal(size_mean, size_std))))
        ds = sample_blob_dataset(means, labels, size, rng, noise=noise)
        n_test = max(1, int(round(test_fraction * size)))
        out.append((ds.subset(np.arange(n_test, size)), ds.subset(np.arange(n_test))))
    return means, out
