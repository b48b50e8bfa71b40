"""Monte Carlo simulation of the full queue-plus-server system.

Each replication draws from its own PCG64 stream derived from
``SeedSequence(seed, spawn_key=(replication,))``, so replications are
independent, reproducible and can run in any order.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from . import _kernel
from .aux_chain import stationary_distribution
from .errors import BadRange, NoVisits
from .model import (
    INITIAL_STATE,
    REST,
    WORK,
    Availability,
    Projection,
    ServerModel,
    SystemPolicy,
    SystemState,
    lift_threshold,
    state_index,
    state_label,
    threshold_aux_policy,
)

CHUNK = 1 << 16
MAX_COUNTER = 2**62
DEFAULT_RATIO_BOUND = 1.5


def rate_from_poisson(rate: float, delta: float) -> float:
    """Per-epoch arrival probability approximating a Poisson stream of ``rate`` for epochs of length ``delta``."""
    return delta * rate


def replication_stream(seed: int, replication: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(replication,))))


@dataclass(frozen=True)
class SimConfig:
    lam: float
    horizon: int
    seed: int = 0
    replications: int = 1
    initial_state: SystemState = INITIAL_STATE
    record_queue_path: bool = False
    burn_in: int | None = None
    path_stride: int = 1
    workers: int = 1

    def __post_init__(self):
        lam = float(self.lam)
        if not 0.0 < lam < 1.0:
            raise BadRange(f"arrival probability {lam!r} must lie in (0, 1)", field="lambda")
        object.__setattr__(self, "lam", lam)
        for name in ("horizon", "replications", "path_stride", "workers"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
                raise BadRange(f"{name} must be a positive integer, got {value!r}", field=name)
        if not isinstance(self.seed, (int, np.integer)) or not 0 <= self.seed < 2**64:
            raise BadRange(f"seed must be an unsigned 64-bit integer, got {self.seed!r}", field="seed")
        burn_in = self.horizon // 10 if self.burn_in is None else self.burn_in
        if isinstance(burn_in, bool) or not isinstance(burn_in, (int, np.integer)) or not 0 <= burn_in < self.horizon:
            raise BadRange(f"burn_in must satisfy 0 <= burn_in < horizon, got {burn_in!r}", field="burn_in")
        object.__setattr__(self, "burn_in", int(burn_in))
        if self.initial_state.q + self.horizon >= MAX_COUNTER:
            raise OverflowError("queue counter could overflow within the horizon")

    @property
    def steady_epochs(self) -> int:
        return self.horizon - self.burn_in


@dataclass(eq=False)
class SimStats:
    """Counters from one replication.

    Occupancy-style counters and ``departures_post_burn_in`` cover epochs
    ``burn_in .. horizon - 1`` and describe the state at the start of each
    epoch.  ``arrivals`` and ``departures`` cover the whole run.
    """

    replication: int
    horizon: int
    burn_in: int
    initial_queue: int
    arrivals: int
    departures: int
    departures_post_burn_in: int
    occupancy: np.ndarray
    empty_queue_occupancy: np.ndarray
    work_decisions: np.ndarray
    state_q_positive: np.ndarray
    final_queue: int
    final_state: tuple[int, int, int]
    max_queue: int
    max_queue_first_half: int
    max_queue_second_half: int
    queue_slope: float
    queue_path: np.ndarray | None = field(default=None, repr=False)
    path_stride: int = 1

    @property
    def steady_epochs(self) -> int:
        return self.horizon - self.burn_in

    @property
    def half_ratio(self) -> float:
        """Growth of the running queue maximum from the first half of the run to the second."""
        return (self.max_queue_second_half + 1) / (self.max_queue_first_half + 1)

    def to_dict(self) -> dict:
        n_s = self.occupancy.shape[0]

        def by_state(arr):
            return {state_label(state_index(s, w)): int(arr[s - 1, w]) for s in range(1, n_s + 1) for w in (0, 1)}

        return {
            "replication": self.replication,
            "horizon": self.horizon,
            "burn_in": self.burn_in,
            "initial_queue": self.initial_queue,
            "arrivals": self.arrivals,
            "departures": self.departures,
            "departures_post_burn_in": self.departures_post_burn_in,
            "departure_rate": departure_rate(self),
            "occupancy": by_state(self.occupancy),
            "empty_queue_occupancy": {str(s): int(self.empty_queue_occupancy[s - 1]) for s in range(1, n_s + 1)},
            "work_decisions": by_state(self.work_decisions),
            "state_q_positive": by_state(self.state_q_positive),
            "final_queue": self.final_queue,
            "final_state": {"s": self.final_state[0], "w": Availability(self.final_state[1]).name,
                            "q": self.final_state[2]},
            "max_queue": self.max_queue,
            "max_queue_first_half": self.max_queue_first_half,
            "max_queue_second_half": self.max_queue_second_half,
            "queue_slope": self.queue_slope,
        }

    def queue_path_csv(self) -> str:
        if self.queue_path is None:
            raise ValueError("queue path was not recorded")
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["epoch", "q"])
        for i, q in enumerate(self.queue_path):
            writer.writerow([i * self.path_stride, int(q)])
        return buf.getvalue()


def _model_arrays(model: ServerModel):
    return (
        np.asarray(model.mu, dtype=np.float64),
        np.asarray(model.rho_up + (0.0,), dtype=np.float64),
        np.asarray(model.rho_down + (0.0,), dtype=np.float64),
    )


def _check_inputs(model: ServerModel, policy: SystemPolicy, initial_state: SystemState):
    if policy.n_s != model.n_s:
        raise BadRange(f"policy covers {policy.n_s} states, model has {model.n_s}", field="policy")
    initial_state.server.check(model)


def simulate_replication(model: ServerModel, policy: SystemPolicy, cfg: SimConfig, replication: int) -> SimStats:
    """Run one replication of ``cfg.horizon`` epochs."""
    _check_inputs(model, policy, cfg.initial_state)
    rng = replication_stream(cfg.seed, replication)
    mu, rho_up, rho_down = _model_arrays(model)
    table = np.ascontiguousarray(policy.table)
    x0 = cfg.initial_state
    state = np.array([x0.server.s - 1, int(x0.server.w), x0.q], dtype=np.int64)
    counts, occ, empty_occ, work_dec, q_pos, slope_acc, maxes = _kernel.empty_outputs(model.n_s)
    H, burn_in, stride = cfg.horizon, cfg.burn_in, cfg.path_stride
    path = np.zeros(H // stride + 1 if cfg.record_queue_path else 0, dtype=np.int64)
    half = H // 2
    mid = (burn_in + H - 1) / 2.0
    k = 0
    while k < H:
        n = min(CHUNK, H - k)
        u = rng.random((n, 4))
        _kernel.advance(u, k, state, cfg.lam, mu, rho_up, rho_down, table, burn_in, half, mid, stride,
                        counts, occ, empty_occ, work_dec, q_pos, slope_acc, maxes, path)
        k += n
    q_final = int(state[2])
    if cfg.record_queue_path and H % stride == 0:
        path[H // stride] = q_final
    n = H - burn_in
    denom = n * (n * n - 1) / 12.0
    slope = float(slope_acc[0] / denom) if denom > 0 else 0.0
    stats = SimStats(
        replication=replication,
        horizon=H,
        burn_in=burn_in,
        initial_queue=x0.q,
        arrivals=int(counts[_kernel.ARRIVALS]),
        departures=int(counts[_kernel.DEPARTURES]),
        departures_post_burn_in=int(counts[_kernel.DEPARTURES_POST]),
        occupancy=occ,
        empty_queue_occupancy=empty_occ,
        work_decisions=work_dec,
        state_q_positive=q_pos,
        final_queue=q_final,
        final_state=(int(state[0]) + 1, int(state[1]), q_final),
        max_queue=max(int(maxes[_kernel.MAX_ALL]), q_final),
        max_queue_first_half=max(int(maxes[_kernel.MAX_FIRST]), 0),
        max_queue_second_half=max(int(maxes[_kernel.MAX_SECOND]), q_final),
        queue_slope=slope,
        queue_path=path if cfg.record_queue_path else None,
        path_stride=stride,
    )
    if stats.departures + stats.final_queue != stats.arrivals + stats.initial_queue:
        raise AssertionError("queue conservation violated")
    return stats


def simulate(model: ServerModel, policy: SystemPolicy, cfg: SimConfig) -> list[SimStats]:
    """Run every replication; results come back in replication order."""
    reps = range(cfg.replications)
    if cfg.workers == 1 or cfg.replications == 1:
        return [simulate_replication(model, policy, cfg, r) for r in reps]
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        return list(pool.map(lambda r: simulate_replication(model, policy, cfg, r), reps))


@dataclass(frozen=True)
class Epoch:
    k: int
    s: int
    w: Availability
    q: int
    action: object
    arrival: bool
    completed: bool


def simulate_trace(model: ServerModel, policy: SystemPolicy, lam: float, epochs: int, seed: int = 0,
                   replication: int = 0, initial_state: SystemState = INITIAL_STATE) -> tuple[list[Epoch], SystemState]:
    """Step-by-step reference simulation in plain Python.

    Consumes the same uniforms as :func:`simulate_replication` and returns
    one record per epoch plus the final state.  Meant for short runs.
    """
    _check_inputs(model, policy, initial_state)
    rng = replication_stream(seed, replication)
    u = rng.random((epochs, 4)) if epochs else np.zeros((0, 4))
    s, w, q = initial_state.server.s, initial_state.server.w, initial_state.q
    trace = []
    for k in range(epochs):
        ua, ux, uc, us = u[k]
        arrival = bool(ua < lam)
        if q == 0:
            action = REST
        elif w == Availability.B:
            action = WORK
        else:
            action = WORK if ux < policy.work_prob(s, w, q) else REST
        completed = False
        s_next = s
        if action == WORK:
            completed = bool(uc < model.mu_at(s))
            if s < model.n_s and us < model.rho_up_at(s):
                s_next = s + 1
        elif s > 1 and us < model.rho_down_at(s):
            s_next = s - 1
        trace.append(Epoch(k, s, w, q, action, arrival, completed))
        q = q + int(arrival) - int(completed)
        w = Availability.B if action == WORK and not completed else Availability.A
        s = s_next
    return trace, SystemState.of(s, w, q)


def _as_list(stats) -> list[SimStats]:
    return [stats] if isinstance(stats, SimStats) else list(stats)


def departure_rate(stats) -> float:
    """Completions per epoch after burn-in, pooled over replications."""
    runs = _as_list(stats)
    return sum(r.departures_post_burn_in for r in runs) / sum(r.steady_epochs for r in runs)


def estimate_projection(stats) -> Projection:
    """Empirical projection of the simulated policy onto server states.

    Each entry is the fraction of post-burn-in epochs spent in that server
    state on which the server worked; empty-queue epochs count as rest.
    Unvisited states are left undefined.
    """
    runs = _as_list(stats)
    occ = sum(r.occupancy for r in runs).reshape(-1).astype(float)
    work = sum(r.work_decisions for r in runs).reshape(-1).astype(float)
    values = np.full(occ.shape, np.nan)
    visited = occ > 0
    values[visited] = work[visited] / occ[visited]
    return Projection(values, NoVisits)


def empirical_server_pmf(stats) -> np.ndarray:
    """Fraction of post-burn-in epochs spent in each server state."""
    runs = _as_list(stats)
    occ = sum(r.occupancy for r in runs).reshape(-1).astype(float)
    return occ / sum(r.steady_epochs for r in runs)


class Verdict(str, Enum):
    STABLE = "Stable"
    UNSTABLE = "Unstable"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class StabilityReport:
    verdict: Verdict
    mean_slope: float
    slope_stderr: float
    eps_slope: float
    mean_half_ratio: float
    slopes: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "mean_slope": self.mean_slope,
            "slope_stderr": self.slope_stderr,
            "eps_slope": self.eps_slope,
            "mean_half_ratio": self.mean_half_ratio,
            "slopes": list(self.slopes),
        }


def stability_diagnostic(stats: Sequence[SimStats], eps_slope: float | None = None,
                         ratio_bound: float = DEFAULT_RATIO_BOUND) -> StabilityReport:
    """Classify queue behaviour from the least-squares drift of each replication.

    Stable: mean slope at most ``eps_slope`` and the running maximum grows
    by less than ``ratio_bound`` between the two halves of the run.
    Unstable: mean slope at least ``eps_slope`` and every replication drifts
    upward.  Anything else is Inconclusive.  By default ``eps_slope`` is
    ``10 / horizon`` plus three standard errors of the mean slope.
    """
    runs = _as_list(stats)
    if len(runs) < 2:
        raise ValueError("stability diagnostic needs at least two replications")
    slopes = np.array([r.queue_slope for r in runs])
    mean = float(slopes.mean())
    stderr = float(slopes.std(ddof=1) / math.sqrt(len(slopes)))
    if eps_slope is None:
        eps_slope = 10.0 / runs[0].horizon + 3.0 * stderr
    ratio = float(np.mean([r.half_ratio for r in runs]))
    if mean <= eps_slope and ratio <= ratio_bound:
        verdict = Verdict.STABLE
    elif mean >= eps_slope and bool(np.all(slopes > 0)):
        verdict = Verdict.UNSTABLE
    else:
        verdict = Verdict.INCONCLUSIVE
    return StabilityReport(verdict, mean, stderr, float(eps_slope), ratio, tuple(slopes.tolist()))


@dataclass(frozen=True)
class ProbeResult:
    checkpoints: tuple[int, ...]
    distances: tuple[float, ...]
    pmfs: np.ndarray
    target: np.ndarray

    def to_dict(self) -> dict:
        return {
            "checkpoints": list(self.checkpoints),
            "distances": list(self.distances),
            "target": {state_label(i): float(p) for i, p in enumerate(self.target)},
        }


def convergence_probe(model: ServerModel, tau: int, lam: float, checkpoints: Sequence[int] = (0, 100, 1000, 10000),
                      replications: int = 10_000, seed: int = 0,
                      initial_state: SystemState = INITIAL_STATE) -> ProbeResult:
    """L1 distance between the server-state distribution at each checkpoint and the stationary PMF of ``tau``.

    The distribution at epoch ``k`` is estimated from ``replications``
    independent runs under the lifted threshold policy.
    """
    checkpoints = tuple(sorted(set(int(c) for c in checkpoints)))
    if not checkpoints or checkpoints[0] < 0:
        raise BadRange("checkpoints must be nonnegative epochs", field="checkpoints")
    if not 0.0 < lam < 1.0:
        raise BadRange(f"arrival probability {lam!r} must lie in (0, 1)", field="lambda")
    policy = lift_threshold(tau, model.n_s)
    _check_inputs(model, policy, initial_state)
    target = stationary_distribution(model, threshold_aux_policy(tau, model.n_s))
    mu, rho_up, rho_down = _model_arrays(model)
    table = np.ascontiguousarray(policy.table)
    counts = np.zeros((len(checkpoints), model.n_states), dtype=np.int64)
    no_record = np.zeros(0, dtype=np.int64)
    never = np.iinfo(np.int64).max
    x0 = initial_state
    for r in range(replications):
        rng = replication_stream(seed, r)
        state = np.array([x0.server.s - 1, int(x0.server.w), x0.q], dtype=np.int64)
        scratch = _kernel.empty_outputs(model.n_s)
        k = 0
        for j, c in enumerate(checkpoints):
            while k < c:
                n = min(CHUNK, c - k)
                _kernel.advance(rng.random((n, 4)), k, state, lam, mu, rho_up, rho_down, table,
                                never, never, 0.0, 1, *scratch, no_record)
                k += n
            counts[j, 2 * state[0] + state[1]] += 1
    pmfs = counts / replications
    distances = tuple(float(np.abs(p - target).sum()) for p in pmfs)
    return ProbeResult(checkpoints, distances, pmfs, target)


__all__ = [
    "ProbeResult",
    "SimConfig",
    "SimStats",
    "StabilityReport",
    "Verdict",
    "convergence_probe",
    "departure_rate",
    "empirical_server_pmf",
    "estimate_projection",
    "rate_from_poisson",
    "simulate",
    "simulate_replication",
    "simulate_trace",
    "stability_diagnostic",
]
