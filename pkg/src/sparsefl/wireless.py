"""Wireless link and on-device compute cost model.

Path loss follows the urban-macro curve 128.1 + 37.6 log10(distance_km) dB,
multiplied by unit-mean exponential small-scale fading. Link rates are Shannon
capacities over the configured bandwidth. Uplink payloads combine 32-bit
floats for retained coordinates with a 1-bit-per-coordinate mask; the dense
downlink broadcast carries 32 bits per coordinate.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

_MIN_DISTANCE_M = 1.0


@dataclass(frozen=True)
class PathLossModel:
    intercept_db: float = 128.1
    slope_db: float = 37.6

    def attenuation_db(self, distance_m: float) -> float:
        """Path loss in dB at the given distance, clamped below at one meter."""
        if distance_m < _MIN_DISTANCE_M:
            logger.warning(
                "distance %.3g m below %.0f m floor, clamping", distance_m, _MIN_DISTANCE_M
            )
            distance_m = _MIN_DISTANCE_M
        return self.intercept_db + self.slope_db * math.log10(distance_m / 1000.0)


DEFAULT_PATHLOSS = PathLossModel()


@dataclass(frozen=True)
class RadioParams:
    bandwidth_hz: float
    noise_w: float
    downlink_power_w: float
    max_power_w: float
    interference_w: float = 0.0
    pathloss: PathLossModel = field(default_factory=PathLossModel)

    def __post_init__(self) -> None:
        if min(self.bandwidth_hz, self.noise_w, self.downlink_power_w, self.max_power_w) <= 0:
            raise ValueError("bandwidth, noise, and powers must be positive")
        if self.interference_w < 0:
            raise ValueError("interference must be nonnegative")


@dataclass(frozen=True)
class ComputeParams:
    """Per-client processing profile for one round."""

    cycles_per_sample: float
    cpu_freq_hz: float
    capacitance: float

    def __post_init__(self) -> None:
        if min(self.cycles_per_sample, self.cpu_freq_hz, self.capacitance) <= 0:
            raise ValueError("compute parameters must be positive")


@dataclass(frozen=True)
class ChannelRealization:
    """Per-round linear power gains: uplink [clients, channels], downlink [clients]."""

    uplink_gains: np.ndarray
    downlink_gains: np.ndarray

    def __post_init__(self) -> None:
        if self.uplink_gains.ndim != 2:
            raise ValueError("uplink_gains must be [clients, channels]")
        if self.downlink_gains.shape != (self.uplink_gains.shape[0],):
            raise ValueError("downlink_gains must have one entry per client")


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) * 1e-3


def channel_gain(
    distance_m: float, fading: float, pathloss: PathLossModel = DEFAULT_PATHLOSS
) -> float:
    """Linear power gain: path-loss attenuation times a fading draw."""
    if fading < 0:
        raise ValueError("fading must be nonnegative")
    return 10.0 ** (-pathloss.attenuation_db(distance_m) / 10.0) * fading


def realize_channels(
    distances_m: np.ndarray,
    n_channels: int,
    rng: np.random.Generator,
    pathloss: PathLossModel = DEFAULT_PATHLOSS,
) -> ChannelRealization:
    """Draw unit-mean exponential fading for every client-channel pair.

    Uplink fading is drawn first as a [clients, channels] block, then downlink
    fading as a vector, a fixed order that keeps runs reproducible.
    """
    n = len(distances_m)
    base = np.array([10.0 ** (-pathloss.attenuation_db(d) / 10.0) for d in distances_m])
    fading_up = rng.exponential(1.0, size=(n, n_channels))
    fading_down = rng.exponential(1.0, size=n)
    return ChannelRealization(
        uplink_gains=base[:, None] * fading_up, downlink_gains=base * fading_down
    )


def link_rate(power_w: float, gain: float, interference_w: float, radio: RadioParams) -> float:
    """Shannon rate in bits/s for the given transmit power and channel gain."""
    if power_w < 0 or gain < 0:
        raise ValueError("power and gain must be nonnegative")
    snr = power_w * gain / (interference_w + radio.noise_w)
    return radio.bandwidth_hz * math.log2(1.0 + snr)


def payload_bits(model_dim: int, s: float) -> int:
    """Uplink bits for one sparse update: 32 bits per retained coordinate plus mask."""
    if model_dim < 1:
        raise ValueError("model_dim must be positive")
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"rate must be in [0, 1], got {s}")
    return math.ceil(32.0 * s * model_dim) + model_dim


def downlink_payload_bits(model_dim: int) -> int:
    """Dense broadcast bits for the global model."""
    if model_dim < 1:
        raise ValueError("model_dim must be positive")
    return 32 * model_dim


@dataclass(frozen=True)
class RoundCosts:
    """Delay and energy components for one client in one round."""

    d_down: float
    d_local: float
    d_up: float
    e_comm: float
    e_comp: float

    @property
    def total_delay(self) -> float:
        return self.d_down + self.d_local + self.d_up


def round_costs(
    model_dim: int,
    s: float,
    power_w: float,
    uplink_gain: float,
    downlink_gain: float,
    dataset_size: int,
    tau: int,
    radio: RadioParams,
    compute: ComputeParams,
) -> RoundCosts:
    """All delay and energy components for one scheduled client.

    Download and upload delays divide payloads by Shannon rates; local delay is
    tau * dataset_size * cycles_per_sample / cpu_freq; transmit energy is power
    times upload time; compute energy is the capacitance model
    capacitance * tau * dataset_size * cycles_per_sample * freq^2 / 2.
    """
    down_rate = link_rate(radio.downlink_power_w, downlink_gain, radio.interference_w, radio)
    up_rate = link_rate(power_w, uplink_gain, radio.interference_w, radio)
    if down_rate <= 0 or up_rate <= 0:
        raise ValueError("link rates must be positive for a scheduled client")
    d_down = downlink_payload_bits(model_dim) / down_rate
    d_up = payload_bits(model_dim, s) / up_rate
    work = tau * dataset_size * compute.cycles_per_sample
    d_local = work / compute.cpu_freq_hz
    e_comp = compute.capacitance * work * compute.cpu_freq_hz**2 / 2.0
    e_comm = power_w * d_up
    return RoundCosts(d_down=d_down, d_local=d_local, d_up=d_up, e_comm=e_comm, e_comp=e_comp)
