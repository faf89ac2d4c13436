"""End-to-end federated training rounds over the modeled network.

run_experiment builds the world from a config (data, placement, radio,
per-client privacy ledgers), then repeats: realize channels, schedule clients
under the chosen policy, run noisy sparse local training for the scheduled
set, aggregate, advance privacy ledgers and virtual queues, and record one
metrics row. Clients whose next participation would overrun their privacy
budget retire; the run truncates early if everyone retires.

Every random draw comes from a stream addressed by the root seed and a fixed
integer path, so a repeated run is bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import streams
from .accountant import make_ledger, participation_fraction, PrivacyLedger, RdpParams
from .config import ConfigError, ExperimentConfig, validate_config
from .dpsgd import DpConfig, TrainStats, TrainStreams, local_train
from .model_data import (
    Dataset,
    ModelSpec,
    ModelWeights,
    PartitionSpec,
    evaluate,
    init_weights,
    load_mnist,
    partition,
    synthesize_classification,
)
from .scheduler import (
    OPTIMIZED_POLICY,
    POLICIES,
    EmptyRoundError,
    RoundContext,
    ScheduleDecision,
    SchedulerConfig,
    VirtualQueues,
    baseline_schedule,
    schedule_round,
    update_queues,
    validate_decision,
)
from .wireless import ComputeParams, RadioParams, dbm_to_watts, realize_channels

# Channel and CPU draws for the d_avg calibration prologue live in their own
# round-index namespace so they never collide with the training rounds.
_CALIBRATION_BASE = 1_000_000


@dataclass(frozen=True)
class ClientProfile:
    """Static per-client state fixed at experiment setup."""

    data: Dataset
    position: np.ndarray
    distance_m: float
    eps_budget: float


@dataclass
class MetricsRow:
    """One round of an experiment, in CSV column order.

    spars_deficit is internal bookkeeping (sum of aggregation weight times
    1 - s over the scheduled set); the exported bound terms are derived from
    it once the whole run's gradient and noise statistics are known.
    """

    round: int
    policy: str
    accuracy: float
    loss: float
    round_delay_s: float
    cum_delay_s: float
    participants: int
    mean_s: float
    q_de: float
    max_q_fa: float
    term_sparsification: float
    term_dp: float
    eligible: int
    spars_deficit: float = 0.0


CSV_COLUMNS = (
    "round",
    "policy",
    "accuracy",
    "loss",
    "round_delay_s",
    "cum_delay_s",
    "participants",
    "mean_s",
    "q_de",
    "max_q_fa",
    "term_sparsification",
    "term_dp",
    "eligible",
)


@dataclass
class MetricsTrace:
    """A finished run: per-round rows plus run-level summaries.

    t_hats is -1 per client when accounting is disabled (sigma_hat = 0).
    truncated_at is the round index at which no eligible client remained, or
    None if the run went the full distance.
    """

    policy: str
    rows: list[MetricsRow]
    betas: np.ndarray
    t_hats: np.ndarray
    participation: np.ndarray
    final_q_fa: np.ndarray
    final_q_de: float
    grad_norm_max: float
    noise_sq_mean: float
    d_avg_s: float
    truncated_at: int | None = None


@dataclass(frozen=True)
class BoundTerms:
    """Per-round diagnostic decomposition of the convergence penalty."""

    term_divergence: float
    term_sparsification: float
    term_dp: float


@dataclass
class SimState:
    """Everything run_round mutates between rounds."""

    config: ExperimentConfig
    policy: str
    model_spec: ModelSpec
    weights: ModelWeights
    clients: list[ClientProfile]
    sizes: np.ndarray
    distances: np.ndarray
    test_set: Dataset
    train_pool: Dataset
    radio: RadioParams
    sched_cfg: SchedulerConfig
    ledgers: list[PrivacyLedger] | None
    betas: np.ndarray
    t_hats: np.ndarray
    queues: VirtualQueues
    stats: TrainStats
    participation: np.ndarray
    round_num: int = 0
    cum_delay: float = 0.0


def _build_datasets(config: ExperimentConfig) -> tuple[Dataset, Dataset]:
    if config.dataset == "synthetic":
        train = synthesize_classification(
            config.num_train,
            config.feature_dim,
            config.num_classes,
            config.separation,
            streams.substream(config.seed, streams.DATA, 0),
        )
        test = synthesize_classification(
            config.num_test,
            config.feature_dim,
            config.num_classes,
            config.separation,
            streams.substream(config.seed, streams.DATA, 1),
        )
        return train, test
    train = load_mnist(config.mnist_train_images, config.mnist_train_labels, config.num_train)
    test = load_mnist(config.mnist_test_images, config.mnist_test_labels, config.num_test)
    for name, data in (("train", train), ("test", test)):
        if int(data.labels.max(initial=0)) >= config.num_classes:
            raise ConfigError(
                f"num_classes: {name} labels reach {int(data.labels.max())}, "
                f"but num_classes = {config.num_classes}"
            )
    return train, test


def _radio_params(config: ExperimentConfig) -> RadioParams:
    return RadioParams(
        bandwidth_hz=config.bandwidth_hz,
        noise_w=dbm_to_watts(config.noise_dbm),
        downlink_power_w=dbm_to_watts(config.downlink_power_dbm),
        max_power_w=dbm_to_watts(config.max_power_dbm),
        interference_w=dbm_to_watts(config.interference_dbm),
    )


def _draw_compute(config: ExperimentConfig, round_key: int) -> list[ComputeParams]:
    """Per-round CPU frequencies, uniform over the configured fraction range."""
    rng = streams.substream(config.seed, streams.CPU, round_key)
    fracs = rng.uniform(config.cpu_freq_min_frac, config.cpu_freq_max_frac, config.num_clients)
    return [
        ComputeParams(
            cycles_per_sample=config.cycles_per_sample,
            cpu_freq_hz=float(f) * config.cpu_freq_max_hz,
            capacitance=config.capacitance,
        )
        for f in fracs
    ]


def _empty_decision(n_clients: int) -> ScheduleDecision:
    zeros = np.zeros(n_clients)
    return ScheduleDecision(
        assigned_channel=np.full(n_clients, -1, dtype=int),
        rates=zeros.copy(),
        powers=zeros.copy(),
        d_down=zeros.copy(),
        d_local=zeros.copy(),
        d_up=zeros.copy(),
        e_comm=zeros.copy(),
        e_comp=zeros.copy(),
        round_delay=0.0,
    )


def _round_context(
    state: SimState, eligible: np.ndarray, round_key: int
) -> RoundContext:
    config = state.config
    channels = realize_channels(
        state.distances,
        config.num_channels,
        streams.substream(config.seed, streams.CHANNEL, round_key),
    )
    weights = np.zeros(config.num_clients)
    weights[eligible] = state.sizes[eligible] / state.sizes[eligible].sum()
    return RoundContext(
        model_dim=state.model_spec.dim,
        tau=config.tau,
        eligible=eligible,
        weights=weights,
        dataset_sizes=state.sizes,
        channels=channels,
        radio=state.radio,
        compute=_draw_compute(config, round_key),
    )


def _calibrate_d_avg(state: SimState) -> float:
    """Delay target from a short dense delay_min prologue.

    Runs a few rounds of the delay_min policy on dedicated channel and CPU
    draws (no training, no queue or ledger effects) and scales the mean round
    delay by the configured margin.
    """
    config = state.config
    eligible = np.arange(config.num_clients)
    total = 0.0
    for k in range(config.d_avg_calibration_rounds):
        ctx = _round_context(state, eligible, _CALIBRATION_BASE + k)
        decision = baseline_schedule(
            ctx,
            "delay_min",
            k,
            streams.substream(config.seed, streams.BASELINE, _CALIBRATION_BASE + k),
        )
        total += decision.round_delay
    return config.d_avg_margin * total / config.d_avg_calibration_rounds


def build_state(config: ExperimentConfig, policy: str) -> SimState:
    """Construct the immutable world and the initial mutable state."""
    validate_config(config)
    if policy not in POLICIES:
        raise ConfigError(f"policies: unknown policy {policy!r}; choose from {POLICIES}")

    train_pool, test_set = _build_datasets(config)
    spec = ModelSpec(
        feature_dim=train_pool.feature_dim,
        num_classes=config.num_classes,
        hidden_units=config.hidden_units or None,
    )
    parts = partition(
        train_pool,
        PartitionSpec(
            mode=config.partition,
            num_clients=config.num_clients,
            concentration=config.dirichlet_concentration,
            sizes=config.partition_sizes,
        ),
        streams.substream(config.seed, streams.DATA, 2),
    )

    placement_rng = streams.substream(config.seed, streams.PLACEMENT)
    positions = placement_rng.uniform(0.0, config.area_side_m, size=(config.num_clients, 2))
    center = np.full(2, config.area_side_m / 2.0)
    distances = np.maximum(np.linalg.norm(positions - center, axis=1), 1.0)

    privacy_rng = streams.substream(config.seed, streams.PRIVACY)
    eps = privacy_rng.uniform(config.eps_min, config.eps_max, config.num_clients)

    sizes = np.array([p.n for p in parts], dtype=int)
    clients = [
        ClientProfile(
            data=parts[i],
            position=positions[i],
            distance_m=float(distances[i]),
            eps_budget=float(eps[i]),
        )
        for i in range(config.num_clients)
    ]

    if config.sigma_hat > 0:
        ledgers = []
        for i in range(config.num_clients):
            batch = min(config.batch_size, int(sizes[i]))
            params = RdpParams(
                q=batch / int(sizes[i]),
                sigma_hat=config.sigma_hat,
                delta=config.delta,
                tau=config.tau,
            )
            ledgers.append(make_ledger(float(eps[i]), params))
        t_hats = np.array([ledger.t_hat for ledger in ledgers], dtype=int)
        betas = participation_fraction(t_hats, config.num_channels)
        for ledger, beta in zip(ledgers, betas):
            ledger.beta = float(beta)
    else:
        ledgers = None
        t_hats = np.full(config.num_clients, -1, dtype=int)
        betas = np.full(
            config.num_clients, min(config.num_channels / config.num_clients, 1.0)
        )

    state = SimState(
        config=config,
        policy=policy,
        model_spec=spec,
        weights=init_weights(spec, streams.substream(config.seed, streams.MODEL)),
        clients=clients,
        sizes=sizes,
        distances=distances,
        test_set=test_set,
        train_pool=train_pool,
        radio=_radio_params(config),
        sched_cfg=SchedulerConfig(
            lam=config.lam,
            d_avg=1.0,
            e_max_j=config.e_max_j,
            s_th=config.s_th,
            loop_tol=config.loop_tol,
            loop_max_iters=config.loop_max_iters,
        ),
        ledgers=ledgers,
        betas=betas,
        t_hats=t_hats,
        queues=VirtualQueues.zeros(config.num_clients),
        stats=TrainStats(),
        participation=np.zeros(config.num_clients, dtype=int),
    )
    d_avg = config.d_avg_s if config.d_avg_s > 0 else _calibrate_d_avg(state)
    state.sched_cfg = SchedulerConfig(
        lam=config.lam,
        d_avg=d_avg,
        e_max_j=config.e_max_j,
        s_th=config.s_th,
        loop_tol=config.loop_tol,
        loop_max_iters=config.loop_max_iters,
    )
    return state


def _eligible_clients(state: SimState) -> np.ndarray:
    if state.ledgers is None:
        return np.arange(state.config.num_clients)
    return np.array(
        [i for i in range(state.config.num_clients) if not state.ledgers[i].exhausted],
        dtype=int,
    )


def run_round(state: SimState) -> MetricsRow | None:
    """Advance one round; None means no eligible client remained."""
    config = state.config
    t = state.round_num
    eligible = _eligible_clients(state)
    if eligible.size == 0:
        return None

    ctx = _round_context(state, eligible, t)
    if state.policy == OPTIMIZED_POLICY:
        try:
            decision = schedule_round(ctx, state.sched_cfg, state.queues)
        except EmptyRoundError:
            decision = _empty_decision(config.num_clients)
    else:
        decision = baseline_schedule(
            ctx,
            state.policy,
            t,
            streams.substream(config.seed, streams.BASELINE, t),
            s_value=config.s_fixed,
        )
    validate_decision(
        ctx, state.sched_cfg, decision, enforce_energy=state.policy == OPTIMIZED_POLICY
    )

    participants = np.sort(decision.participants)
    spars_deficit = 0.0
    if participants.size:
        selected_weights = state.sizes[participants] / state.sizes[participants].sum()
        delta = np.zeros(state.model_spec.dim)
        for pos, i in enumerate(participants):
            dp_cfg = DpConfig(
                clip_c=config.clip_c,
                sigma_hat=config.sigma_hat,
                batch_size=min(config.batch_size, int(state.sizes[i])),
                tau=config.tau,
                eta=config.eta,
                adaptive_clip=config.adaptive_clip,
            )
            train_streams = TrainStreams(
                mask=streams.substream(config.seed, streams.TRAIN, t, int(i), streams.MASK),
                batch=streams.substream(config.seed, streams.TRAIN, t, int(i), streams.BATCH),
                noise=streams.substream(config.seed, streams.TRAIN, t, int(i), streams.NOISE),
            )
            update = local_train(
                state.weights,
                state.clients[int(i)].data,
                float(decision.rates[i]),
                dp_cfg,
                train_streams,
                client_id=int(i),
                round_num=t,
                stats=state.stats,
            )
            delta += selected_weights[pos] * update.values
            spars_deficit += selected_weights[pos] * (1.0 - float(decision.rates[i]))
        state.weights.values += delta
        state.participation[participants] += 1
        if state.ledgers is not None:
            for i in participants:
                ledger = state.ledgers[int(i)]
                ledger.exposures += 1
                ledger.exhausted = ledger.exposures >= ledger.t_hat

    state.queues = update_queues(state.queues, decision, state.betas, state.sched_cfg.d_avg)
    state.cum_delay += decision.round_delay
    state.round_num += 1

    accuracy, _ = evaluate(state.weights, state.test_set)
    _, train_loss = evaluate(state.weights, state.train_pool)
    mean_s = float(decision.rates[participants].mean()) if participants.size else 0.0
    return MetricsRow(
        round=t,
        policy=state.policy,
        accuracy=accuracy,
        loss=train_loss,
        round_delay_s=decision.round_delay,
        cum_delay_s=state.cum_delay,
        participants=int(participants.size),
        mean_s=mean_s,
        q_de=state.queues.q_de,
        max_q_fa=float(state.queues.q_fa.max()),
        term_sparsification=math.nan,
        term_dp=math.nan,
        eligible=int(eligible.size),
        spars_deficit=spars_deficit,
    )


def bound_diagnostics(
    rows: list[MetricsRow],
    grad_norm_bound: float,
    smoothness: float,
    noise_sq_mean: float,
    divergence: float,
    eta: float,
    tau: int,
) -> list[BoundTerms]:
    """Per-round convergence-penalty terms from run-level estimates.

    grad_norm_bound is the largest pre-clip gradient norm observed,
    noise_sq_mean the sample mean of the squared per-step noise norm, and
    smoothness and divergence are caller-supplied diagnostic knobs. The terms
    are diagnostics, not certified bounds.
    """
    dp_term = eta * tau**2 * noise_sq_mean * (1.0 + 3.0 * eta * smoothness * tau)
    return [
        BoundTerms(
            term_divergence=3.0 * divergence,
            term_sparsification=3.0 * grad_norm_bound**2 * row.spars_deficit,
            term_dp=dp_term,
        )
        for row in rows
    ]


def run_experiment(config: ExperimentConfig, policy: str) -> MetricsTrace:
    """Run one policy for the configured number of rounds (or until retirement)."""
    state = build_state(config, policy)
    rows: list[MetricsRow] = []
    truncated_at: int | None = None
    for t in range(config.rounds):
        row = run_round(state)
        if row is None:
            truncated_at = t
            break
        rows.append(row)

    noise_sq_mean = (
        state.stats.noise_sq_sum / state.stats.noise_draws if state.stats.noise_draws else 0.0
    )
    terms = bound_diagnostics(
        rows,
        grad_norm_bound=state.stats.max_grad_norm,
        smoothness=config.smoothness_l,
        noise_sq_mean=noise_sq_mean,
        divergence=config.divergence_eps,
        eta=config.eta,
        tau=config.tau,
    )
    for row, term in zip(rows, terms):
        row.term_sparsification = term.term_sparsification
        row.term_dp = term.term_dp

    return MetricsTrace(
        policy=policy,
        rows=rows,
        betas=state.betas,
        t_hats=state.t_hats,
        participation=state.participation,
        final_q_fa=state.queues.q_fa.copy(),
        final_q_de=state.queues.q_de,
        grad_norm_max=state.stats.max_grad_norm,
        noise_sq_mean=noise_sq_mean,
        d_avg_s=state.sched_cfg.d_avg,
        truncated_at=truncated_at,
    )
