"""Independent brute-force and quadrature oracles.

Everything here re-derives a quantity the library computes elsewhere, by a
deliberately different method: trapezoid instead of Simpson quadrature,
exhaustive enumeration instead of Hungarian matching, grid search instead of
parametric sweeps. The oracles back the `verify` CLI subcommand and the
acceptance tests; they are slow by design and not part of the training path.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.special import logsumexp

from .accountant import accumulate_privacy, max_participation_rounds, per_step_rdp, RdpParams
from .scheduler import (
    RoundContext,
    SchedulerConfig,
    VirtualQueues,
    drift_penalty_value,
    feasible_edges,
    optimal_assignment,
    optimal_sparsification,
    schedule_round,
)
from .wireless import ChannelRealization, ComputeParams, RadioParams, channel_gain


def analytic_full_batch_log_moment(sigma_hat: float, alpha: float) -> float:
    """Closed-form log moment without subsampling: alpha(alpha-1)/(2 sigma^2)."""
    return alpha * (alpha - 1.0) / (2.0 * sigma_hat * sigma_hat)


def log_moment_trapezoid(
    q: float, sigma_hat: float, alpha: float, num_points: int = 2_000_001
) -> float:
    """Trapezoid-rule log moment of the subsampled Gaussian mechanism.

    Same integrand as the production accountant, different quadrature rule and
    node count, written from scratch so a shared discretization bug cannot
    hide.
    """
    if q == 0.0:
        return 0.0
    lo = -20.0 * sigma_hat
    hi = alpha + 20.0 * sigma_hat
    z = np.linspace(lo, hi, num_points)
    step = (hi - lo) / (num_points - 1)
    log_ratio = (2.0 * z - 1.0) / (2.0 * sigma_hat * sigma_hat)
    if q == 1.0:
        log_mixture = log_ratio
    else:
        log_mixture = np.logaddexp(math.log1p(-q), math.log(q) + log_ratio)
    log_density = -(z * z) / (2.0 * sigma_hat * sigma_hat) - math.log(
        sigma_hat * math.sqrt(2.0 * math.pi)
    )
    log_terms = alpha * log_mixture + log_density
    log_weights = np.full(num_points, math.log(step))
    log_weights[0] += math.log(0.5)
    log_weights[-1] += math.log(0.5)
    value = float(logsumexp(log_terms + log_weights))
    return max(value, 0.0)


def check_inversion(q: float, sigma_hat: float, eps_budget: float, tau: int = 1) -> bool:
    """accumulate(T) <= budget < accumulate(T + 1) for the inverted round count."""
    params = RdpParams(q=q, sigma_hat=sigma_hat, tau=tau)
    t_hat = max_participation_rounds(eps_budget, params)
    below, _ = accumulate_privacy(t_hat, params)
    above, _ = accumulate_privacy(t_hat + 1, params)
    return below <= eps_budget < above


def random_round_context(
    rng: np.random.Generator,
    n_clients: int,
    n_channels: int,
    model_dim: int = 50,
    tau: int = 2,
    e_max_j: float = 1e9,
    lam: float = 50.0,
    q_de: float | None = None,
    d_avg: float = 1.0,
) -> tuple[RoundContext, SchedulerConfig, VirtualQueues]:
    """A small random scheduling instance for oracle comparisons."""
    distances = rng.uniform(20.0, 300.0, n_clients)
    uplink = np.empty((n_clients, n_channels))
    downlink = np.empty(n_clients)
    for i in range(n_clients):
        for j in range(n_channels):
            uplink[i, j] = channel_gain(float(distances[i]), float(rng.exponential(1.0)))
        downlink[i] = channel_gain(float(distances[i]), float(rng.exponential(1.0)))
    radio = RadioParams(
        bandwidth_hz=float(rng.uniform(1e4, 3e4)),
        noise_w=10.0 ** (-107.0 / 10.0) * 1e-3,
        downlink_power_w=0.2,
        max_power_w=1.0,
    )
    sizes = rng.integers(20, 200, n_clients)
    compute = [
        ComputeParams(
            cycles_per_sample=1e4,
            cpu_freq_hz=float(rng.uniform(1.2e9, 2.4e9)),
            capacitance=1e-28,
        )
        for _ in range(n_clients)
    ]
    weights = sizes / sizes.sum()
    ctx = RoundContext(
        model_dim=model_dim,
        tau=tau,
        eligible=np.arange(n_clients),
        weights=weights,
        dataset_sizes=sizes,
        channels=ChannelRealization(uplink_gains=uplink, downlink_gains=downlink),
        radio=radio,
        compute=compute,
    )
    cfg = SchedulerConfig(lam=lam, d_avg=d_avg, e_max_j=e_max_j)
    queues = VirtualQueues(
        q_fa=rng.uniform(0.0, 5.0, n_clients),
        q_de=float(rng.uniform(0.0, 3.0)) if q_de is None else q_de,
    )
    return ctx, cfg, queues


def _smooth_delay(ctx: RoundContext, i: int, j: int, s: float, power_w: float) -> float:
    gain = float(ctx.channels.uplink_gains[i, j])
    snr = power_w * gain / (ctx.radio.interference_w + ctx.radio.noise_w)
    rate = ctx.radio.bandwidth_hz * math.log2(1.0 + snr)
    return (32.0 * s * ctx.model_dim + ctx.model_dim) / rate + float(
        ctx.d_down[i] + ctx.d_local[i]
    )


def brute_force_assignment(
    ctx: RoundContext,
    cfg: SchedulerConfig,
    queues: VirtualQueues,
    s: np.ndarray,
    powers: np.ndarray,
    edges: np.ndarray,
) -> tuple[float, np.ndarray] | None:
    """Exhaustive best assignment: every client subset times every channel order.

    Returns (objective value, assignment vector) or None when no client has a
    feasible edge. Only viable for a handful of clients and channels.
    """
    rows = [int(i) for i in ctx.eligible if edges[i].any()]
    if not rows:
        return None
    required = min(ctx.n_channels, len(rows))
    best_value = math.inf
    best = None
    for subset in itertools.combinations(rows, required):
        for perm in itertools.permutations(range(ctx.n_channels), required):
            if not all(edges[i, j] for i, j in zip(subset, perm)):
                continue
            value = 0.0
            worst = 0.0
            for i, j in zip(subset, perm):
                value += queues.q_fa[i] - cfg.lam * ctx.weights[i] * float(s[i])
                worst = max(worst, _smooth_delay(ctx, i, j, float(s[i]), float(powers[i])))
            value += queues.q_de * (worst - cfg.d_avg)
            if value < best_value - 1e-15:
                best_value = value
                best = np.full(ctx.n_clients, -1, dtype=int)
                for i, j in zip(subset, perm):
                    best[i] = j
    if best is None:
        return None
    return best_value, best


def _rate_grid(s_th: float, step: float) -> np.ndarray:
    count = int(math.floor((1.0 - s_th) / step + 1e-12)) + 1
    grid = s_th + step * np.arange(count)
    if grid[-1] < 1.0 - 1e-12:
        grid = np.append(grid, 1.0)
    return grid


def grid_search_sparsification(
    ctx: RoundContext,
    cfg: SchedulerConfig,
    queues: VirtualQueues,
    assigned_channel: np.ndarray,
    powers: np.ndarray,
    step: float = 1e-3,
) -> tuple[float, np.ndarray]:
    """Exact minimum of the objective over the per-client rate grid.

    Enumerates candidate straggler delays (every client's delay at every grid
    rate); at each candidate level every client takes the largest grid rate
    that stays at or below it. Any grid point's own level is among the
    candidates, so the sweep minimum equals the full grid-product minimum
    without enumerating the product.
    """
    assigned = np.flatnonzero(assigned_channel >= 0)
    grid = _rate_grid(cfg.s_th, step)
    base = float(queues.q_fa[assigned].sum()) - queues.q_de * cfg.d_avg
    if assigned.size == 0:
        s = np.ones(ctx.n_clients)
        return base, s
    delays = np.stack(
        [
            np.array(
                [
                    _smooth_delay(ctx, int(i), int(assigned_channel[i]), float(g), float(powers[i]))
                    for g in grid
                ]
            )
            for i in assigned
        ]
    )
    levels = np.unique(delays)
    p = ctx.weights[assigned]
    best_value = math.inf
    best_idx = None
    for level in levels:
        idx = np.array(
            [np.searchsorted(delays[k], level, side="right") - 1 for k in range(len(assigned))]
        )
        if np.any(idx < 0):
            continue
        chosen = grid[idx]
        realized = max(delays[k][idx[k]] for k in range(len(assigned)))
        value = base - cfg.lam * float(p @ chosen) + queues.q_de * realized
        if value < best_value - 1e-15:
            best_value = value
            best_idx = idx
    s = np.ones(ctx.n_clients)
    s[assigned] = grid[best_idx]
    return best_value, s


def enumerate_sparsification(
    ctx: RoundContext,
    cfg: SchedulerConfig,
    queues: VirtualQueues,
    assigned_channel: np.ndarray,
    powers: np.ndarray,
    step: float,
) -> float:
    """Dense product enumeration over the rate grid (coarse steps only)."""
    assigned = np.flatnonzero(assigned_channel >= 0)
    grid = _rate_grid(cfg.s_th, step)
    base = float(queues.q_fa[assigned].sum()) - queues.q_de * cfg.d_avg
    if assigned.size == 0:
        return base
    delays = [
        np.array(
            [
                _smooth_delay(ctx, int(i), int(assigned_channel[i]), float(g), float(powers[i]))
                for g in grid
            ]
        )
        for i in assigned
    ]
    p = ctx.weights[assigned]
    best = math.inf
    for combo in itertools.product(range(len(grid)), repeat=len(assigned)):
        value = base
        worst = 0.0
        for k, gi in enumerate(combo):
            value -= cfg.lam * p[k] * grid[gi]
            worst = max(worst, delays[k][gi])
        value += queues.q_de * worst
        best = min(best, value)
    return best


def brute_force_joint(
    ctx: RoundContext,
    cfg: SchedulerConfig,
    queues: VirtualQueues,
    step: float = 1e-3,
) -> float:
    """Joint assignment-and-rate minimum at full power by product enumeration.

    Callers must arrange a loose energy cap: the objective only improves with
    transmit power, so full power is then jointly optimal and the oracle needs
    to sweep only assignments and rates. The objective is piecewise linear in
    the rate vector, so a plain grid can sit a whole step away from the
    optimum; each client's axis is therefore augmented with the rates that
    equalize its delay against every member's delay at the boundary rates.
    Every vertex of the objective then lies on the product grid and the
    minimum is exact, not just step-accurate. Practical for two or three
    clients.
    """
    edges = feasible_edges(ctx, cfg)
    rows = [int(i) for i in ctx.eligible if edges[i].any()]
    if not rows:
        raise ValueError("no feasible client; loosen the instance")
    required = min(ctx.n_channels, len(rows))
    grid = _rate_grid(cfg.s_th, step)
    p_max = ctx.radio.max_power_w
    noise_total = ctx.radio.interference_w + ctx.radio.noise_w
    dim = ctx.model_dim
    best = math.inf
    for subset in itertools.combinations(rows, required):
        for perm in itertools.permutations(range(ctx.n_channels), required):
            if not all(edges[i, j] for i, j in zip(subset, perm)):
                continue
            rates = []
            fixed = []
            for i, j in zip(subset, perm):
                snr = p_max * float(ctx.channels.uplink_gains[i, j]) / noise_total
                rates.append(ctx.radio.bandwidth_hz * math.log2(1.0 + snr))
                fixed.append(float(ctx.d_down[i] + ctx.d_local[i]))
            levels = [
                (32.0 * bound * dim + dim) / rates[k] + fixed[k]
                for k in range(required)
                for bound in (cfg.s_th, 1.0)
            ]
            axes = []
            for k in range(required):
                crossings = [
                    ((level - fixed[k]) * rates[k] - dim) / (32.0 * dim) for level in levels
                ]
                extra = np.clip(np.array(crossings), cfg.s_th, 1.0)
                axes.append(np.unique(np.concatenate([grid, extra])))
            base = sum(queues.q_fa[i] for i in subset) - queues.q_de * cfg.d_avg
            linear = np.zeros(1)
            worst = np.zeros(1)
            for k, (i, j) in enumerate(zip(subset, perm)):
                axis_shape = [1] * required
                axis_shape[k] = axes[k].size
                delays = np.array(
                    [_smooth_delay(ctx, i, j, float(g), p_max) for g in axes[k]]
                ).reshape(axis_shape)
                contrib = (-cfg.lam * ctx.weights[i] * axes[k]).reshape(axis_shape)
                linear = linear + contrib
                worst = np.maximum(worst, delays)
            total = base + linear + queues.q_de * worst
            best = min(best, float(total.min()))
    return best


def run_verify() -> tuple[int, list[str]]:
    """Condensed oracle suite for the CLI; returns (failures, report lines)."""
    lines: list[str] = []
    failures = 0

    def record(name: str, ok: bool, detail: str) -> None:
        nonlocal failures
        failures += 0 if ok else 1
        lines.append(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")

    worst_rel = 0.0
    for alpha in (2.0, 4.0, 8.0, 16.0):
        for sigma in (0.4, 0.5, 0.6, 1.0):
            got = per_step_rdp(1.0, sigma, alpha)
            want = analytic_full_batch_log_moment(sigma, alpha)
            worst_rel = max(worst_rel, abs(got - want) / want)
    record("accountant-analytic", worst_rel < 1e-6, f"max relative error {worst_rel:.2e}")

    rng = np.random.default_rng(20260819)
    worst_abs = 0.0
    for _ in range(10):
        q = float(rng.uniform(0.01, 1.0))
        sigma = float(rng.uniform(0.4, 2.0))
        alpha = float(rng.integers(2, 33))
        got = per_step_rdp(q, sigma, alpha)
        ref = log_moment_trapezoid(q, sigma, alpha)
        worst_abs = max(worst_abs, abs(got - ref) / max(1.0, abs(ref)))
    record("accountant-quadrature", worst_abs < 1e-7, f"max mismatch {worst_abs:.2e}")

    bad = 0
    for _ in range(10):
        q = float(rng.uniform(0.01, 1.0))
        sigma = float(rng.uniform(0.4, 2.0))
        eps = float(rng.uniform(1.0, 20.0))
        if not check_inversion(q, sigma, eps):
            bad += 1
    record("accountant-inversion", bad == 0, f"{bad} of 10 budgets bracketed wrong")

    bad = 0
    for _ in range(100):
        n_cl = int(rng.integers(2, 7))
        n_ch = int(rng.integers(2, 6))
        ctx, cfg, queues = random_round_context(rng, n_cl, n_ch, q_de=0.0, e_max_j=0.05)
        edges = feasible_edges(ctx, cfg)
        s = np.ones(n_cl)
        powers = np.full(n_cl, ctx.radio.max_power_w)
        reference = brute_force_assignment(ctx, cfg, queues, s, powers, edges)
        if reference is None:
            continue
        try:
            assigned = optimal_assignment(ctx, cfg, queues, s, powers, edges)
        except Exception:
            bad += 1
            continue
        got = sum(queues.q_fa[i] - cfg.lam * ctx.weights[i] for i in np.flatnonzero(assigned >= 0))
        if abs(got - reference[0]) > 1e-9:
            bad += 1
    record("assignment-enumeration", bad == 0, f"{bad} of 100 instances mismatched")

    bad = 0
    for _ in range(10):
        ctx, cfg, queues = random_round_context(rng, 3, 3)
        powers = np.full(3, ctx.radio.max_power_w)
        assigned = np.array([0, 1, 2])
        s = optimal_sparsification(ctx, cfg, queues, assigned, powers)
        solver_v = drift_penalty_value(ctx, cfg, queues, assigned, s, powers)
        oracle_v, _ = grid_search_sparsification(ctx, cfg, queues, assigned, powers, step=1e-3)
        coarse_smart, _ = grid_search_sparsification(ctx, cfg, queues, assigned, powers, step=0.05)
        coarse_dense = enumerate_sparsification(ctx, cfg, queues, assigned, powers, step=0.05)
        if solver_v > oracle_v + 1e-6 or abs(coarse_smart - coarse_dense) > 1e-9:
            bad += 1
    record("sparsification-grid", bad == 0, f"{bad} of 10 instances mismatched")

    bad = 0
    for _ in range(5):
        ctx, cfg, queues = random_round_context(rng, 2, 2)
        decision = schedule_round(ctx, cfg, queues)
        oracle_v = brute_force_joint(ctx, cfg, queues, step=1e-3)
        if decision.v_trace[-1] > oracle_v + 1e-6:
            bad += 1
    record("joint-round", bad == 0, f"{bad} of 5 instances above the oracle")

    return failures, lines
