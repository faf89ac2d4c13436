"""Joint client-channel assignment, transmit power, and sparsification control.

Each round minimizes a drift-plus-penalty objective

    V = sum_assigned (q_fa[i] - lam * p[i] * s[i]) + q_de * (d_round - d_avg)

over one-to-one client-channel assignments, per-client transmit powers, and
per-client sparsification rates, where d_round is the slowest assigned
client's delay and the virtual queues q_fa (participation credit) and q_de
(delay debt) feed back long-run fairness and delay targets.

Block structure: for fixed rates and powers the assignment problem is a
bottleneck-augmented matching solved exactly by sweeping the possible
round-delay levels with one Hungarian matching per level; for a fixed
assignment the optimal power is the largest energy-feasible value; for fixed
assignment and powers the rate problem is an exact parametric sweep over the
straggler's delay. The three blocks alternate until the objective stops
improving, so the objective trace is non-increasing.

Inside the objective the uplink payload is the smooth function
32 * s * dim + dim bits (no integer rounding), which keeps the block solvers
exact; realized decisions use the rounded payload, which differs by less than
one bit.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import wireless
from .wireless import ChannelRealization, ComputeParams, RadioParams

_BIG_COST = 1e18
_POWER_FLOOR_FRACTION = 1e-12
_ENERGY_MARGIN = 1e-6
# Instances with at most this many candidate assignments are solved by
# enumerating every assignment instead of alternating against one incumbent.
_EXHAUSTIVE_LIMIT = 24

BASELINE_POLICIES = ("random", "round_robin", "delay_min")
OPTIMIZED_POLICY = "lyapunov"
POLICIES = (OPTIMIZED_POLICY,) + BASELINE_POLICIES


class EmptyRoundError(RuntimeError):
    """No client can be scheduled this round."""


class EnergyInfeasibleError(RuntimeError):
    """A client cannot meet the energy cap at any positive transmit power."""


@dataclass
class VirtualQueues:
    """Participation-credit queues (one per client) and the delay-debt queue."""

    q_fa: np.ndarray
    q_de: float = 0.0

    @classmethod
    def zeros(cls, n_clients: int) -> "VirtualQueues":
        return cls(q_fa=np.zeros(n_clients), q_de=0.0)


@dataclass(frozen=True)
class SchedulerConfig:
    lam: float = 50.0
    d_avg: float = 1.0
    e_max_j: float = 10.0
    s_th: float = 0.05
    loop_tol: float = 1e-6
    loop_max_iters: int = 50

    def __post_init__(self) -> None:
        if self.lam < 0 or self.d_avg <= 0 or self.e_max_j <= 0:
            raise ValueError("lam must be nonnegative; d_avg and e_max_j positive")
        if not 0.0 < self.s_th <= 1.0:
            raise ValueError("s_th must be in (0, 1]")
        if self.loop_tol <= 0 or self.loop_max_iters < 1:
            raise ValueError("loop_tol must be positive and loop_max_iters at least 1")


@dataclass(frozen=True)
class RoundContext:
    """Everything about one round the solvers need, precomputed.

    weights are the aggregation weights over the eligible set (zero for
    ineligible clients). d_down, d_local, and e_comp are fixed per client for
    the round; only the uplink leg depends on the decision variables.
    """

    model_dim: int
    tau: int
    eligible: np.ndarray
    weights: np.ndarray
    dataset_sizes: np.ndarray
    channels: ChannelRealization
    radio: RadioParams
    compute: list[ComputeParams]
    d_down: np.ndarray = field(init=False)
    d_local: np.ndarray = field(init=False)
    e_comp: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        n = self.channels.uplink_gains.shape[0]
        d_down = np.empty(n)
        d_local = np.empty(n)
        e_comp = np.empty(n)
        for i in range(n):
            down_rate = wireless.link_rate(
                self.radio.downlink_power_w,
                float(self.channels.downlink_gains[i]),
                self.radio.interference_w,
                self.radio,
            )
            d_down[i] = wireless.downlink_payload_bits(self.model_dim) / down_rate
            work = self.tau * int(self.dataset_sizes[i]) * self.compute[i].cycles_per_sample
            d_local[i] = work / self.compute[i].cpu_freq_hz
            e_comp[i] = self.compute[i].capacitance * work * self.compute[i].cpu_freq_hz**2 / 2.0
        object.__setattr__(self, "d_down", d_down)
        object.__setattr__(self, "d_local", d_local)
        object.__setattr__(self, "e_comp", e_comp)

    @property
    def n_clients(self) -> int:
        return self.channels.uplink_gains.shape[0]

    @property
    def n_channels(self) -> int:
        return self.channels.uplink_gains.shape[1]

    def uplink_rate(self, client: int, channel: int, power_w: float) -> float:
        return wireless.link_rate(
            power_w,
            float(self.channels.uplink_gains[client, channel]),
            self.radio.interference_w,
            self.radio,
        )

    def smooth_delay(self, client: int, channel: int, s: float, power_w: float) -> float:
        """Round delay of one client under the un-rounded payload model."""
        rate = self.uplink_rate(client, channel, power_w)
        payload = 32.0 * s * self.model_dim + self.model_dim
        return payload / rate + self.d_down[client] + self.d_local[client]


@dataclass
class ScheduleDecision:
    """One round's scheduling outcome with realized costs.

    assigned_channel holds -1 for clients left out. Cost vectors are zero for
    unscheduled clients. v_trace records the objective after each block pass
    for the optimizing policy (empty for baselines).
    """

    assigned_channel: np.ndarray
    rates: np.ndarray
    powers: np.ndarray
    d_down: np.ndarray
    d_local: np.ndarray
    d_up: np.ndarray
    e_comm: np.ndarray
    e_comp: np.ndarray
    round_delay: float
    v_trace: tuple[float, ...] = ()

    @property
    def participants(self) -> np.ndarray:
        return np.flatnonzero(self.assigned_channel >= 0)

    @property
    def assignment_matrix(self) -> np.ndarray:
        n = self.assigned_channel.shape[0]
        n_ch = 0 if self.assigned_channel.max(initial=-1) < 0 else self.assigned_channel.max() + 1
        mat = np.zeros((n, max(int(n_ch), 1)), dtype=np.int8)
        for i in self.participants:
            mat[i, self.assigned_channel[i]] = 1
        return mat


def update_queues(
    queues: VirtualQueues, decision: ScheduleDecision, beta: np.ndarray, d_avg: float
) -> VirtualQueues:
    """One-step queue recursion, clamped at zero.

    Participation credit grows by one for each scheduled client and drains by
    beta for everyone; delay debt grows by the round delay and drains by d_avg.
    """
    served = (decision.assigned_channel >= 0).astype(float)
    q_fa = np.maximum(queues.q_fa + served - beta, 0.0)
    q_de = max(queues.q_de + decision.round_delay - d_avg, 0.0)
    return VirtualQueues(q_fa=q_fa, q_de=q_de)


def _check_structure(
    ctx: RoundContext, assigned_channel: np.ndarray, s: np.ndarray, powers: np.ndarray
) -> np.ndarray:
    assigned = np.flatnonzero(assigned_channel >= 0)
    chans = assigned_channel[assigned]
    if len(np.unique(chans)) != len(chans):
        raise ValueError("assignment reuses a channel")
    if np.any(assigned_channel >= ctx.n_channels):
        raise ValueError("assignment names an unknown channel")
    eligible = set(int(i) for i in ctx.eligible)
    if any(int(i) not in eligible for i in assigned):
        raise ValueError("assignment schedules an ineligible client")
    for i in assigned:
        if not 0.0 < s[i] <= 1.0 + 1e-12:
            raise ValueError(f"rate out of range for client {i}")
        if not 0.0 < powers[i] <= ctx.radio.max_power_w * (1.0 + 1e-12):
            raise ValueError(f"power out of range for client {i}")
    return assigned


def drift_penalty_value(
    ctx: RoundContext,
    cfg: SchedulerConfig,
    queues: VirtualQueues,
    assigned_channel: np.ndarray,
    s: np.ndarray,
    powers: np.ndarray,
) -> float:
    """Drift-plus-penalty objective of a candidate decision.

    Uses the smooth payload model; energy feasibility is the callers'
    responsibility. An empty assignment scores q_de * (0 - d_avg).
    """
    assigned = _check_structure(ctx, assigned_channel, s, powers)
    value = 0.0
    worst = 0.0
    for i in assigned:
        value += queues.q_fa[i] - cfg.lam * ctx.weights[i] * s[i]
        worst = max(
            worst, ctx.smooth_delay(int(i), int(assigned_channel[i]), float(s[i]), float(powers[i]))
        )
    return value + queues.q_de * (worst - cfg.d_avg)


def _uplink_energy(
    ctx: RoundContext, client: int, channel: int, s: float, power_w: float
) -> float:
    rate = ctx.uplink_rate(client, channel, power_w)
    return power_w * wireless.payload_bits(ctx.model_dim, s) / rate


def feasible_edges(ctx: RoundContext, cfg: SchedulerConfig) -> np.ndarray:
    """Boolean [clients, channels] map of edges that can meet the energy cap.

    An edge is kept when the dense-payload transmit energy in the zero-power
    limit stays below the cap's headroom, so any rate in (0, 1] admits a
    feasible power on a kept edge.
    """
    mask = np.zeros((ctx.n_clients, ctx.n_channels), dtype=bool)
    noise_total = ctx.radio.interference_w + ctx.radio.noise_w
    dense_payload = wireless.payload_bits(ctx.model_dim, 1.0)
    for i in ctx.eligible:
        headroom = cfg.e_max_j - ctx.e_comp[i]
        if headroom <= 0:
            continue
        for j in range(ctx.n_channels):
            gain = ctx.channels.uplink_gains[i, j]
            if gain <= 0:
                continue
            limit_energy = dense_payload * math.log(2.0) * noise_total / (
                ctx.radio.bandwidth_hz * gain
            )
            if limit_energy * (1.0 + _ENERGY_MARGIN) < headroom:
                mask[i, j] = True
    return mask


def optimal_power(
    ctx: RoundContext, cfg: SchedulerConfig, assigned_channel: np.ndarray, s: np.ndarray
) -> np.ndarray:
    """Largest energy-feasible power per assigned client, capped at max power.

    The transmit energy is strictly increasing in power, so the cap binds at
    the root of e_comm(P) = e_max - e_comp, found by bisection that keeps the
    feasible side of the bracket.
    """
    powers = np.full(ctx.n_clients, ctx.radio.max_power_w)
    for i in np.flatnonzero(assigned_channel >= 0):
        j = int(assigned_channel[i])
        headroom = cfg.e_max_j - ctx.e_comp[i]
        if headroom <= 0:
            raise EnergyInfeasibleError(f"client {i}: compute energy alone exceeds the cap")
        if _uplink_energy(ctx, int(i), j, float(s[i]), ctx.radio.max_power_w) <= headroom:
            powers[i] = ctx.radio.max_power_w
            continue
        lo = ctx.radio.max_power_w * _POWER_FLOOR_FRACTION
        if _uplink_energy(ctx, int(i), j, float(s[i]), lo) > headroom:
            raise EnergyInfeasibleError(f"client {i}: energy cap unreachable at any power")
        hi = ctx.radio.max_power_w
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if _uplink_energy(ctx, int(i), j, float(s[i]), mid) <= headroom:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-15 * ctx.radio.max_power_w:
                break
        powers[i] = lo
    return powers


def _energy_rate_cap(
    ctx: RoundContext, cfg: SchedulerConfig, client: int, channel: int, power_w: float
) -> float:
    """Largest rate the client can send at this power within the energy cap.

    Solved from the payload's linearity in the rate, minus one bit of slack so
    the rounded payload stays feasible too. Never below s_th: any power the
    power step emits is feasible at the rate floor.
    """
    headroom = cfg.e_max_j - ctx.e_comp[client]
    rate = ctx.uplink_rate(client, channel, power_w)
    smooth = (headroom * rate / power_w - ctx.model_dim) / (32.0 * ctx.model_dim)
    return float(np.clip(smooth - 1.0 / (32.0 * ctx.model_dim), cfg.s_th, 1.0))


def optimal_sparsification(
    ctx: RoundContext,
    cfg: SchedulerConfig,
    queues: VirtualQueues,
    assigned_channel: np.ndarray,
    powers: np.ndarray,
) -> np.ndarray:
    """Exact rate vector minimizing the objective for a fixed assignment.

    With zero delay debt the objective strictly falls as any rate rises, so
    every assigned client sends as densely as its energy cap allows. Otherwise
    each assigned client's delay is linear in its rate, and the minimum is
    found by sweeping the round delay over the breakpoints where some client
    saturates at its rate ceiling: every client tracks the largest rate that
    keeps it no slower than the sweep level, making the objective a convex
    piecewise-linear function of the level whose minimizer sits on a
    breakpoint.
    """
    s = np.ones(ctx.n_clients)
    assigned = np.flatnonzero(assigned_channel >= 0)
    if assigned.size == 0:
        return s
    caps = np.array(
        [
            _energy_rate_cap(ctx, cfg, int(i), int(assigned_channel[i]), float(powers[i]))
            for i in assigned
        ]
    )
    if queues.q_de <= 0.0:
        s[assigned] = caps
        return s
    slopes = np.empty(assigned.size)
    offsets = np.empty(assigned.size)
    for pos, i in enumerate(assigned):
        rate = ctx.uplink_rate(int(i), int(assigned_channel[i]), float(powers[i]))
        slopes[pos] = 32.0 * ctx.model_dim / rate
        offsets[pos] = ctx.model_dim / rate + ctx.d_down[i] + ctx.d_local[i]
    level_lo = float(np.max(slopes * cfg.s_th + offsets))
    saturation = slopes * caps + offsets
    level_hi = float(np.max(saturation))
    levels = np.unique(
        np.concatenate([[level_lo, level_hi], saturation[saturation > level_lo]])
    )
    p = ctx.weights[assigned]
    best_value = math.inf
    best_level = level_lo
    for level in levels:
        rates = np.clip((level - offsets) / slopes, cfg.s_th, caps)
        value = -cfg.lam * float(p @ rates) + queues.q_de * level
        if value < best_value - 1e-15:
            best_value = value
            best_level = level
    s[assigned] = np.clip((best_level - offsets) / slopes, cfg.s_th, caps)
    return s


def optimal_assignment(
    ctx: RoundContext,
    cfg: SchedulerConfig,
    queues: VirtualQueues,
    s: np.ndarray,
    powers: np.ndarray,
    edges: np.ndarray,
) -> np.ndarray:
    """Best one-to-one assignment for fixed rates and powers.

    The per-client cost q_fa - lam * p * s does not depend on the channel, and
    the delay term couples clients only through the slowest one. Sweeping the
    candidate slowest-delay levels (one per distinct edge delay) and solving a
    Hungarian matching restricted to edges no slower than the level yields the
    exact minimizer. With zero delay debt one unrestricted matching suffices.
    As many clients are scheduled as the feasible edges allow, up to the
    channel count.
    """
    rows = [int(i) for i in ctx.eligible if edges[i].any()]
    if not rows:
        raise EmptyRoundError("no client has an energy-feasible channel")
    linear = {i: queues.q_fa[i] - cfg.lam * ctx.weights[i] * s[i] for i in rows}

    if queues.q_de <= 0.0:
        choice = _matching(ctx, rows, edges, linear, math.inf, None)
        if choice is None:
            raise EmptyRoundError("no feasible assignment")
        return choice[1]

    delays = {}
    for i in rows:
        for j in range(ctx.n_channels):
            if edges[i, j]:
                delays[(i, j)] = ctx.smooth_delay(i, j, float(s[i]), float(powers[i]))
    best_total = math.inf
    best = None
    for level in sorted(set(delays.values())):
        choice = _matching(ctx, rows, edges, linear, level, delays)
        if choice is None:
            continue
        linear_sum, assigned_channel = choice
        worst = max(
            delays[(int(i), int(assigned_channel[i]))]
            for i in np.flatnonzero(assigned_channel >= 0)
        )
        total = linear_sum + queues.q_de * worst
        if total < best_total - 1e-15:
            best_total = total
            best = assigned_channel
    if best is None:
        raise EmptyRoundError("no feasible assignment")
    return best


def _matching(
    ctx: RoundContext,
    rows: list[int],
    edges: np.ndarray,
    linear: dict[int, float],
    level: float,
    delays: dict | None,
) -> tuple[float, np.ndarray] | None:
    """Minimum-cost matching over edges within the delay level, or None.

    Returns the matching only when it schedules min(channels, len(rows))
    clients without touching an excluded edge.
    """
    required = min(ctx.n_channels, len(rows))
    cost = np.full((len(rows), ctx.n_channels), _BIG_COST)
    for r, i in enumerate(rows):
        for j in range(ctx.n_channels):
            if not edges[i, j]:
                continue
            if delays is not None and delays[(i, j)] > level:
                continue
            cost[r, j] = linear[i]
    row_ind, col_ind = linear_sum_assignment(cost)
    assigned_channel = np.full(ctx.n_clients, -1, dtype=int)
    linear_sum = 0.0
    used = 0
    for r, j in zip(row_ind, col_ind):
        if cost[r, j] >= _BIG_COST / 2:
            continue
        assigned_channel[rows[r]] = j
        linear_sum += cost[r, j]
        used += 1
    if used < required:
        return None
    return linear_sum, assigned_channel


def _optimize_given_assignment(
    ctx: RoundContext,
    cfg: SchedulerConfig,
    queues: VirtualQueues,
    assigned: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Alternate power and rates for a fixed assignment until V settles.

    Power never falls across iterations (the rate step keeps every client
    inside the energy cap at the current power), so the value trace is
    non-increasing.
    """
    s = np.ones(ctx.n_clients)
    powers = optimal_power(ctx, cfg, assigned, s)
    s = optimal_sparsification(ctx, cfg, queues, assigned, powers)
    value = drift_penalty_value(ctx, cfg, queues, assigned, s, powers)
    inner = [value]
    for _ in range(cfg.loop_max_iters):
        powers = optimal_power(ctx, cfg, assigned, s)
        s = optimal_sparsification(ctx, cfg, queues, assigned, powers)
        value = drift_penalty_value(ctx, cfg, queues, assigned, s, powers)
        if inner[-1] - value <= cfg.loop_tol:
            inner.append(min(value, inner[-1]))
            break
        inner.append(value)
    return s, powers, inner


def _exhaustive_schedule(
    ctx: RoundContext,
    cfg: SchedulerConfig,
    queues: VirtualQueues,
    edges: np.ndarray,
    rows: list[int],
    required: int,
) -> ScheduleDecision:
    """Optimize power and rates for every feasible assignment; keep the best."""
    best_value = math.inf
    best: tuple[np.ndarray, np.ndarray, np.ndarray, list[float]] | None = None
    for subset in itertools.combinations(rows, required):
        for perm in itertools.permutations(range(ctx.n_channels), required):
            if not all(edges[i, j] for i, j in zip(subset, perm)):
                continue
            assigned = np.full(ctx.n_clients, -1, dtype=int)
            for i, j in zip(subset, perm):
                assigned[i] = j
            s, powers, inner = _optimize_given_assignment(ctx, cfg, queues, assigned)
            if inner[-1] < best_value - 1e-15:
                best_value = inner[-1]
                best = (assigned, s, powers, inner)
    if best is None:
        raise EmptyRoundError("no feasible assignment")
    assigned, s, powers, inner = best
    powers = optimal_power(ctx, cfg, assigned, s)
    final = drift_penalty_value(ctx, cfg, queues, assigned, s, powers)
    inner.append(min(final, inner[-1]))
    return _build_decision(ctx, assigned, s, powers, tuple(inner))


def schedule_round(
    ctx: RoundContext, cfg: SchedulerConfig, queues: VirtualQueues
) -> ScheduleDecision:
    """Alternate the three block solvers until the objective settles.

    Instances small enough to enumerate every assignment are solved that way,
    which makes the result exactly optimal there. Otherwise, starts from a
    dense, full-power matching; each pass reruns assignment, power, then
    rates, and a pass is kept only if it improves the objective by more than
    the loop tolerance, so the recorded trace is non-increasing and the
    emitted decision is the best iterate seen. A reassignment can strand a
    client on a channel where its old power breaks the energy cap, and the
    repair can cost more delay than the reassignment saved; reverting such a
    pass keeps every iterate feasible. A closing power pass can only raise
    powers at the final rates, never the objective.
    """
    if ctx.eligible.size == 0:
        raise EmptyRoundError("no eligible clients")
    edges = feasible_edges(ctx, cfg)
    rows = [int(i) for i in ctx.eligible if edges[i].any()]
    if not rows:
        raise EmptyRoundError("no client has an energy-feasible channel")
    required = min(ctx.n_channels, len(rows))
    if math.comb(len(rows), required) * math.perm(ctx.n_channels, required) <= _EXHAUSTIVE_LIMIT:
        return _exhaustive_schedule(ctx, cfg, queues, edges, rows, required)
    s = np.ones(ctx.n_clients)
    powers = np.full(ctx.n_clients, ctx.radio.max_power_w)
    assigned = optimal_assignment(ctx, cfg, queues, s, powers, edges)
    powers = optimal_power(ctx, cfg, assigned, s)
    s = optimal_sparsification(ctx, cfg, queues, assigned, powers)
    value = drift_penalty_value(ctx, cfg, queues, assigned, s, powers)
    trace = [value]
    for _ in range(cfg.loop_max_iters):
        cand_assigned = optimal_assignment(ctx, cfg, queues, s, powers, edges)
        cand_powers = optimal_power(ctx, cfg, cand_assigned, s)
        cand_s = optimal_sparsification(ctx, cfg, queues, cand_assigned, cand_powers)
        cand_value = drift_penalty_value(
            ctx, cfg, queues, cand_assigned, cand_s, cand_powers
        )
        if cand_value >= value - cfg.loop_tol:
            break
        assigned, powers, s, value = cand_assigned, cand_powers, cand_s, cand_value
        trace.append(value)
    powers = optimal_power(ctx, cfg, assigned, s)
    final = drift_penalty_value(ctx, cfg, queues, assigned, s, powers)
    trace.append(min(final, value))
    return _build_decision(ctx, assigned, s, powers, tuple(trace))


def _build_decision(
    ctx: RoundContext,
    assigned_channel: np.ndarray,
    s: np.ndarray,
    powers: np.ndarray,
    v_trace: tuple[float, ...] = (),
) -> ScheduleDecision:
    n = ctx.n_clients
    out = {
        name: np.zeros(n)
        for name in ("d_down", "d_local", "d_up", "e_comm", "e_comp", "rates", "powers")
    }
    round_delay = 0.0
    for i in np.flatnonzero(assigned_channel >= 0):
        j = int(assigned_channel[i])
        costs = wireless.round_costs(
            ctx.model_dim,
            float(s[i]),
            float(powers[i]),
            float(ctx.channels.uplink_gains[i, j]),
            float(ctx.channels.downlink_gains[i]),
            int(ctx.dataset_sizes[i]),
            ctx.tau,
            ctx.radio,
            ctx.compute[i],
        )
        out["d_down"][i] = costs.d_down
        out["d_local"][i] = costs.d_local
        out["d_up"][i] = costs.d_up
        out["e_comm"][i] = costs.e_comm
        out["e_comp"][i] = costs.e_comp
        out["rates"][i] = s[i]
        out["powers"][i] = powers[i]
        round_delay = max(round_delay, costs.total_delay)
    return ScheduleDecision(
        assigned_channel=assigned_channel.copy(),
        rates=out["rates"],
        powers=out["powers"],
        d_down=out["d_down"],
        d_local=out["d_local"],
        d_up=out["d_up"],
        e_comm=out["e_comm"],
        e_comp=out["e_comp"],
        round_delay=round_delay,
        v_trace=v_trace,
    )


def validate_decision(
    ctx: RoundContext, cfg: SchedulerConfig, decision: ScheduleDecision, enforce_energy: bool
) -> None:
    """Assert the structural and, optionally, energy constraints of a decision."""
    _check_structure(ctx, decision.assigned_channel, decision.rates, decision.powers)
    for i in decision.participants:
        if decision.rates[i] < cfg.s_th - 1e-12:
            raise AssertionError(f"client {i} below the rate floor")
        if enforce_energy:
            total = decision.e_comm[i] + decision.e_comp[i]
            if total > cfg.e_max_j + 1e-9:
                raise AssertionError(f"client {i} exceeds the energy cap: {total}")


def baseline_schedule(
    ctx: RoundContext,
    policy: str,
    round_num: int,
    rng: np.random.Generator,
    s_value: float = 1.0,
) -> ScheduleDecision:
    """Dense reference policies: random, round_robin, or delay_min.

    All run at maximum power. round_robin walks fixed client groups of channel
    size in cyclic order, skipping ineligible members; delay_min greedily takes
    the lowest-delay client-channel pairs at the given rate.
    """
    if policy not in BASELINE_POLICIES:
        raise ValueError(f"unknown baseline policy {policy!r}")
    if ctx.eligible.size == 0:
        raise EmptyRoundError("no eligible clients")
    assigned_channel = np.full(ctx.n_clients, -1, dtype=int)
    p_max = ctx.radio.max_power_w
    if policy == "random":
        count = min(ctx.n_channels, ctx.eligible.size)
        chosen = rng.choice(ctx.eligible, size=count, replace=False)
        channels = rng.permutation(ctx.n_channels)[:count]
        for i, j in zip(chosen, channels):
            assigned_channel[i] = j
    elif policy == "round_robin":
        n_groups = math.ceil(ctx.n_clients / ctx.n_channels)
        group = round_num % n_groups
        members = range(group * ctx.n_channels, min((group + 1) * ctx.n_channels, ctx.n_clients))
        eligible = set(int(i) for i in ctx.eligible)
        j = 0
        for i in members:
            if i in eligible:
                assigned_channel[i] = j
                j += 1
    else:
        pairs = []
        for i in ctx.eligible:
            for j in range(ctx.n_channels):
                delay = ctx.smooth_delay(int(i), j, s_value, p_max)
                pairs.append((delay, int(i), j))
        pairs.sort()
        used_clients: set[int] = set()
        used_channels: set[int] = set()
        for _, i, j in pairs:
            if i in used_clients or j in used_channels:
                continue
            assigned_channel[i] = j
            used_clients.add(i)
            used_channels.add(j)
            if len(used_clients) == min(ctx.n_channels, ctx.eligible.size):
                break
    s = np.full(ctx.n_clients, s_value)
    powers = np.full(ctx.n_clients, p_max)
    return _build_decision(ctx, assigned_channel, s, powers)
