import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from sparsefl.config import ExperimentConfig
from sparsefl.scheduler import RoundContext, SchedulerConfig
from sparsefl.wireless import ChannelRealization, ComputeParams, RadioParams

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")

# One verdict line per release criterion, filled in by test_acceptance.py and
# echoed after the test summary so a full run ends with the twelve verdicts.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def fast_config(**overrides) -> ExperimentConfig:
    """Desk-scale config whose budgets survive a handful of rounds."""
    base = dict(
        seed=11,
        rounds=6,
        num_clients=6,
        num_channels=2,
        num_train=720,
        num_test=90,
        feature_dim=8,
        num_classes=4,
        tau=5,
        batch_size=5,
        sigma_hat=1.5,
        d_avg_calibration_rounds=3,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def make_context(
    gains: np.ndarray,
    *,
    model_dim: int = 40,
    tau: int = 2,
    sizes: np.ndarray | None = None,
    eligible: np.ndarray | None = None,
    downlink_gains: np.ndarray | None = None,
    max_power_w: float = 1.0,
) -> RoundContext:
    """RoundContext with hand-picked uplink gains for targeted scheduler tests."""
    gains = np.asarray(gains, dtype=float)
    n = gains.shape[0]
    if sizes is None:
        sizes = np.full(n, 40)
    if eligible is None:
        eligible = np.arange(n)
    if downlink_gains is None:
        downlink_gains = np.full(n, 1e-7)
    weights = np.zeros(n)
    weights[eligible] = sizes[eligible] / sizes[eligible].sum()
    radio = RadioParams(
        bandwidth_hz=15e3,
        noise_w=1.995262314968883e-14,
        downlink_power_w=0.199526231496888,
        max_power_w=max_power_w,
    )
    compute = [ComputeParams(cycles_per_sample=1e4, cpu_freq_hz=2.4e9, capacitance=1e-28)] * n
    return RoundContext(
        model_dim=model_dim,
        tau=tau,
        eligible=np.asarray(eligible, dtype=int),
        weights=weights,
        dataset_sizes=np.asarray(sizes),
        channels=ChannelRealization(
            uplink_gains=gains, downlink_gains=np.asarray(downlink_gains, dtype=float)
        ),
        radio=radio,
        compute=compute,
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


def loose_scheduler_config(**overrides) -> SchedulerConfig:
    base = dict(lam=50.0, d_avg=1.0, e_max_j=1e9, s_th=0.05)
    base.update(overrides)
    return SchedulerConfig(**base)
