"""Sparsified, clipped, noised local training.

A client draws one Bernoulli coordinate mask per round and runs tau noisy
steps with it: per-sample gradients are masked first, then clipped, then the
batch average is perturbed with Gaussian noise on the retained coordinates
only. Masking before clipping shrinks the clipping threshold to
sqrt(s) * clip_c, and the noise scale shrinks with it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .model_data import Dataset, ModelWeights, per_sample_loss_grads


class TrainingDivergenceError(RuntimeError):
    """Loss or gradients became non-finite during local training."""


@dataclass(frozen=True)
class DpConfig:
    """Local training knobs.

    adaptive_clip False is an ablation switch: clipping and noise then use the
    dense threshold clip_c regardless of the sparsification rate.
    """

    clip_c: float
    sigma_hat: float
    batch_size: int
    tau: int
    eta: float
    adaptive_clip: bool = True

    def __post_init__(self) -> None:
        if self.clip_c <= 0:
            raise ValueError("clip_c must be positive")
        if self.sigma_hat < 0:
            raise ValueError("sigma_hat must be nonnegative")
        if self.batch_size < 1 or self.tau < 1:
            raise ValueError("batch_size and tau must be positive")
        if self.eta <= 0:
            raise ValueError("eta must be positive")

    def clip_threshold(self, s: float) -> float:
        return math.sqrt(s) * self.clip_c if self.adaptive_clip else self.clip_c


@dataclass(frozen=True)
class SparsityMask:
    """Coordinate retention mask for one client round."""

    bits: np.ndarray
    rate: float

    def __post_init__(self) -> None:
        if self.bits.dtype != np.bool_ or self.bits.ndim != 1:
            raise ValueError("bits must be a boolean vector")
        self.bits.setflags(write=False)

    @property
    def retained(self) -> int:
        return int(self.bits.sum())


@dataclass(frozen=True)
class SparseUpdate:
    """Model delta whose support is confined to the round's mask."""

    values: np.ndarray
    mask: SparsityMask
    payload_bits: int


@dataclass(frozen=True)
class TrainStreams:
    """Random generators for one client round, one per purpose."""

    mask: np.random.Generator
    batch: np.random.Generator
    noise: np.random.Generator


@dataclass
class TrainStats:
    """Running estimates the simulator collects across client rounds."""

    max_grad_norm: float = 0.0
    noise_sq_sum: float = 0.0
    noise_draws: int = 0


def generate_mask(dim: int, s: float, rng: np.random.Generator) -> SparsityMask:
    """Bernoulli(s) mask over dim coordinates."""
    if dim < 1:
        raise ValueError("dim must be positive")
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"rate must be in [0, 1], got {s}")
    return SparsityMask(bits=rng.random(dim) < s, rate=float(s))


def clip_per_sample(grads: np.ndarray, threshold: float) -> np.ndarray:
    """Scale each row to norm at most threshold. Zero rows pass through."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    norms = np.linalg.norm(grads, axis=1)
    factors = np.where(norms > 0.0, np.minimum(1.0, threshold / np.maximum(norms, 1e-300)), 1.0)
    return grads * factors[:, None]


def _draw_masked_noise(
    dim: int, cfg: DpConfig, s: float, mask: SparsityMask, rng: np.random.Generator
) -> np.ndarray:
    std = cfg.sigma_hat * cfg.clip_threshold(s) / cfg.batch_size
    return rng.normal(0.0, std, size=dim) * mask.bits


def perturb_average(
    clipped_mean: np.ndarray,
    cfg: DpConfig,
    s: float,
    mask: SparsityMask,
    rng: np.random.Generator,
) -> np.ndarray:
    """Add Gaussian noise at std sigma_hat * threshold / batch to retained coordinates.

    Coordinates outside the mask are returned untouched (zero noise there), so
    the perturbed average keeps the mask's support.
    """
    return clipped_mean + _draw_masked_noise(clipped_mean.shape[0], cfg, s, mask, rng)


def local_train(
    w_init: ModelWeights,
    data: Dataset,
    s: float,
    cfg: DpConfig,
    streams: TrainStreams,
    *,
    client_id: int = -1,
    round_num: int = -1,
    stats: TrainStats | None = None,
) -> SparseUpdate:
    """Run tau masked noisy steps and return the resulting weight delta.

    The mask is drawn once and reused for every step of the round, so the
    delta's support is a subset of the mask. Batches are sampled without
    replacement per step; a dataset smaller than the configured batch is used
    whole.
    """
    if not 0.0 < s <= 1.0:
        raise ValueError(f"rate must be in (0, 1], got {s}")
    dim = w_init.spec.dim
    mask = generate_mask(dim, s, streams.mask)
    threshold = cfg.clip_threshold(s)
    batch = min(cfg.batch_size, data.n)
    if batch != cfg.batch_size:
        cfg = replace(cfg, batch_size=batch)
    w = w_init.values.copy()
    model = ModelWeights(w, w_init.spec)
    for _ in range(cfg.tau):
        take = streams.batch.choice(data.n, size=batch, replace=False)
        loss, grads = per_sample_loss_grads(model, data.features[take], data.labels[take])
        if not math.isfinite(loss) or not np.all(np.isfinite(grads)):
            raise TrainingDivergenceError(
                f"non-finite loss or gradient for client {client_id} in round {round_num}"
            )
        if stats is not None:
            stats.max_grad_norm = max(
                stats.max_grad_norm, float(np.linalg.norm(grads, axis=1).max())
            )
        masked = grads * mask.bits
        clipped_mean = clip_per_sample(masked, threshold).mean(axis=0)
        noise = _draw_masked_noise(dim, cfg, s, mask, streams.noise)
        if stats is not None:
            stats.noise_sq_sum += float(noise @ noise)
            stats.noise_draws += 1
        w -= cfg.eta * (clipped_mean + noise)
    delta = w - w_init.values
    payload = 32 * mask.retained + dim
    return SparseUpdate(values=delta, mask=mask, payload_bits=payload)
