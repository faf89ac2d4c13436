"""Models, synthetic data, partitioning, and IDX file loading.

Two model families are supported, both with closed-form per-sample gradients
so no autodiff dependency is needed: multinomial logistic regression and a
one-hidden-layer tanh network. Parameters live in a flat float64 vector.
"""

from __future__ import annotations

import gzip
import math
import struct
from dataclasses import dataclass

import numpy as np


class PartitionError(ValueError):
    """The requested partition cannot be built from the given data."""


class IdxFormatError(ValueError):
    """The file does not follow the expected IDX byte layout."""


@dataclass(frozen=True)
class Dataset:
    """Immutable feature matrix [n, d] with integer labels [n]."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-d array")
        if self.labels.ndim != 1 or self.labels.shape[0] != self.features.shape[0]:
            raise ValueError("labels must be a vector matching features rows")
        self.features.setflags(write=False)
        self.labels.setflags(write=False)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class ModelSpec:
    """Architecture descriptor. hidden_units None selects plain softmax regression."""

    feature_dim: int
    num_classes: int
    hidden_units: int | None = None

    def __post_init__(self) -> None:
        if self.feature_dim < 1 or self.num_classes < 2:
            raise ValueError("need feature_dim >= 1 and num_classes >= 2")
        if self.hidden_units is not None and self.hidden_units < 1:
            raise ValueError("hidden_units must be positive when set")

    @property
    def dim(self) -> int:
        d, k = self.feature_dim, self.num_classes
        if self.hidden_units is None:
            return k * d + k
        h = self.hidden_units
        return h * d + h + k * h + k


@dataclass
class ModelWeights:
    values: np.ndarray
    spec: ModelSpec

    def __post_init__(self) -> None:
        if self.values.shape != (self.spec.dim,):
            raise ValueError(f"expected flat vector of length {self.spec.dim}")

    def copy(self) -> "ModelWeights":
        return ModelWeights(self.values.copy(), self.spec)


def init_weights(spec: ModelSpec, rng: np.random.Generator | None = None) -> ModelWeights:
    """Starting weights: zeros for softmax regression, which is convex there.

    The tanh network is stuck at an all-zero point (both layers' gradients
    vanish), so its weight matrices get small random draws scaled by fan-in
    instead, with zero biases. Pass a generator to control the draw; the
    fallback generator is fixed so repeated calls agree.
    """
    if spec.hidden_units is None:
        return ModelWeights(np.zeros(spec.dim), spec)
    if rng is None:
        rng = np.random.default_rng(0)
    d, k, h = spec.feature_dim, spec.num_classes, spec.hidden_units
    values = np.zeros(spec.dim)
    values[: h * d] = rng.standard_normal(h * d) / math.sqrt(d)
    start = h * d + h
    values[start : start + k * h] = rng.standard_normal(k * h) / math.sqrt(h)
    return ModelWeights(values, spec)


def _unpack_softmax(w: ModelWeights) -> tuple[np.ndarray, np.ndarray]:
    d, k = w.spec.feature_dim, w.spec.num_classes
    return w.values[: k * d].reshape(k, d), w.values[k * d :]


def _unpack_mlp(w: ModelWeights) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    d, k, h = w.spec.feature_dim, w.spec.num_classes, w.spec.hidden_units
    v = w.values
    o = 0
    w1 = v[o : o + h * d].reshape(h, d)
    o += h * d
    b1 = v[o : o + h]
    o += h
    w2 = v[o : o + k * h].reshape(k, h)
    o += k * h
    b2 = v[o : o + k]
    return w1, b1, w2, b2


def _forward(w: ModelWeights, x: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
    """Logits plus the hidden activation (None for softmax regression)."""
    if w.spec.hidden_units is None:
        wt, b = _unpack_softmax(w)
        return x @ wt.T + b, None
    w1, b1, w2, b2 = _unpack_mlp(w)
    hidden = np.tanh(x @ w1.T + b1)
    return hidden @ w2.T + b2, hidden


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def per_sample_loss_grads(
    w: ModelWeights, features: np.ndarray, labels: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy loss and the per-sample gradient matrix [n, dim].

    The mean of the returned rows equals the gradient of the mean loss.
    """
    if features.ndim != 2 or features.shape[1] != w.spec.feature_dim:
        raise ValueError("features do not match the model's feature_dim")
    if labels.shape != (features.shape[0],):
        raise ValueError("labels must be a vector matching features rows")
    if np.any(labels < 0) or np.any(labels >= w.spec.num_classes):
        raise ValueError("labels out of range for the model's classes")
    n = features.shape[0]
    logits, hidden = _forward(w, features)
    logp = _log_softmax(logits)
    loss = float(-logp[np.arange(n), labels].mean())
    dlogits = np.exp(logp)
    dlogits[np.arange(n), labels] -= 1.0
    if w.spec.hidden_units is None:
        gw = np.einsum("nk,nd->nkd", dlogits, features).reshape(n, -1)
        grads = np.concatenate([gw, dlogits], axis=1)
    else:
        w1, b1, w2, b2 = _unpack_mlp(w)
        dhidden = dlogits @ w2
        dpre = dhidden * (1.0 - hidden * hidden)
        gw1 = np.einsum("nh,nd->nhd", dpre, features).reshape(n, -1)
        gw2 = np.einsum("nk,nh->nkh", dlogits, hidden).reshape(n, -1)
        grads = np.concatenate([gw1, dpre, gw2, dlogits], axis=1)
    return loss, grads


def evaluate(w: ModelWeights, data: Dataset) -> tuple[float, float]:
    """(accuracy, mean cross-entropy loss) of w on data.

    Predictions are the argmax logit, with exact ties resolved to the lowest
    class index.
    """
    logits, _ = _forward(w, data.features)
    preds = logits.argmax(axis=1)
    accuracy = float((preds == data.labels).mean())
    logp = _log_softmax(logits)
    loss = float(-logp[np.arange(data.n), data.labels].mean())
    return accuracy, loss


def synthesize_classification(
    num_samples: int,
    feature_dim: int,
    num_classes: int,
    separation: float,
    rng: np.random.Generator,
) -> Dataset:
    """Gaussian class clusters with unit within-class noise.

    Class means sit at distance ``separation`` from the origin, on orthogonal
    axes when the dimension allows and on random unit directions otherwise.
    Label counts are balanced up to rounding and the sample order is shuffled.
    """
    if num_samples < 1:
        raise ValueError("num_samples must be positive")
    if separation < 0:
        raise ValueError("separation must be nonnegative")
    counts = np.full(num_classes, num_samples // num_classes)
    counts[: num_samples % num_classes] += 1
    labels = rng.permutation(np.repeat(np.arange(num_classes), counts))
    if feature_dim >= num_classes:
        means = np.zeros((num_classes, feature_dim))
        means[np.arange(num_classes), np.arange(num_classes)] = separation
    else:
        dirs = rng.standard_normal((num_classes, feature_dim))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        means = separation * dirs
    features = means[labels] + rng.standard_normal((num_samples, feature_dim))
    return Dataset(features, labels)


@dataclass(frozen=True)
class PartitionSpec:
    """How to split a dataset across clients.

    mode: "iid", "dirichlet", or "sizes".
    concentration: Dirichlet concentration for per-client class mixtures.
    sizes: exact per-client sample counts, required for mode "sizes".
    """

    mode: str
    num_clients: int
    concentration: float = 0.2
    sizes: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.mode not in ("iid", "dirichlet", "sizes"):
            raise ValueError(f"unknown partition mode {self.mode!r}")
        if self.num_clients < 1:
            raise ValueError("num_clients must be positive")
        if self.mode == "dirichlet" and self.concentration <= 0:
            raise ValueError("concentration must be positive")
        if self.mode == "sizes" and len(self.sizes) != self.num_clients:
            raise ValueError("sizes must list one count per client")


def partition(data: Dataset, spec: PartitionSpec, rng: np.random.Generator) -> list[Dataset]:
    """Split data into disjoint client shards according to spec."""
    if spec.mode == "iid":
        index_sets = _split_iid(data.n, spec.num_clients, rng)
    elif spec.mode == "sizes":
        if sum(spec.sizes) > data.n:
            raise PartitionError(
                f"requested {sum(spec.sizes)} samples but only {data.n} available"
            )
        perm = rng.permutation(data.n)
        index_sets = []
        start = 0
        for size in spec.sizes:
            index_sets.append(perm[start : start + size])
            start += size
    else:
        index_sets = _split_dirichlet(data, spec, rng)
    return [Dataset(data.features[idx], data.labels[idx]) for idx in index_sets]


def _split_iid(n: int, num_clients: int, rng: np.random.Generator) -> list[np.ndarray]:
    perm = rng.permutation(n)
    sizes = np.full(num_clients, n // num_clients)
    sizes[: n % num_clients] += 1
    cuts = np.cumsum(sizes)[:-1]
    return np.split(perm, cuts)


def _split_dirichlet(
    data: Dataset, spec: PartitionSpec, rng: np.random.Generator
) -> list[np.ndarray]:
    """Equal-size shards whose class mixtures follow per-client Dirichlet draws.

    Each client asks for floor(theta_k * size) samples of class k (largest
    remainders fill the shard); exhausted class pools are back-filled from
    whichever classes still have stock.
    """
    classes = np.unique(data.labels)
    pools = {int(k): list(rng.permutation(np.flatnonzero(data.labels == k))) for k in classes}
    base = data.n // spec.num_clients
    shard_sizes = np.full(spec.num_clients, base)
    shard_sizes[: data.n % spec.num_clients] += 1
    proportions = rng.dirichlet(
        np.full(len(classes), spec.concentration), size=spec.num_clients
    )
    index_sets = []
    for i in range(spec.num_clients):
        size = int(shard_sizes[i])
        raw = proportions[i] * size
        want = np.floor(raw).astype(int)
        remainder = size - want.sum()
        for k in np.argsort(raw - want)[::-1][:remainder]:
            want[k] += 1
        taken: list[int] = []
        for k_pos, k in enumerate(classes):
            pool = pools[int(k)]
            grab = min(want[k_pos], len(pool))
            taken.extend(pool[:grab])
            del pool[:grab]
        while len(taken) < size:
            largest = max(pools, key=lambda k: len(pools[k]))
            if not pools[largest]:
                raise PartitionError("ran out of samples while building shards")
            taken.append(pools[largest].pop(0))
        index_sets.append(np.asarray(taken, dtype=int))
    return index_sets


def _open_binary(path: str):
    with open(path, "rb") as fh:
        head = fh.read(2)
    if head == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def read_idx_images(path: str) -> np.ndarray:
    """Images from an IDX file as float64 rows scaled to [0, 1]."""
    with _open_binary(path) as fh:
        header = fh.read(16)
        if len(header) < 16:
            raise IdxFormatError(f"{path}: truncated header")
        magic, count, rows, cols = struct.unpack(">IIII", header)
        if magic != 0x00000803:
            raise IdxFormatError(f"{path}: expected image magic 0x803, got {magic:#010x}")
        raw = fh.read(count * rows * cols)
    if len(raw) != count * rows * cols:
        raise IdxFormatError(f"{path}: expected {count * rows * cols} pixel bytes")
    pixels = np.frombuffer(raw, dtype=np.uint8).astype(np.float64) / 255.0
    return pixels.reshape(count, rows * cols)


def read_idx_labels(path: str) -> np.ndarray:
    """Labels from an IDX file as an int64 vector."""
    with _open_binary(path) as fh:
        header = fh.read(8)
        if len(header) < 8:
            raise IdxFormatError(f"{path}: truncated header")
        magic, count = struct.unpack(">II", header)
        if magic != 0x00000801:
            raise IdxFormatError(f"{path}: expected label magic 0x801, got {magic:#010x}")
        raw = fh.read(count)
    if len(raw) != count:
        raise IdxFormatError(f"{path}: expected {count} label bytes")
    return np.frombuffer(raw, dtype=np.uint8).astype(np.int64)


def load_mnist(images_path: str, labels_path: str, limit: int | None = None) -> Dataset:
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise IdxFormatError("image and label counts differ")
    if limit is not None:
        images = images[:limit]
        labels = labels[:limit]
    return Dataset(images, labels)
