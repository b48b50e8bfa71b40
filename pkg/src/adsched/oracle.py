"""Reference computations used to cross-check the chain solver and the simulator.

Two independent routes live here: plain power iteration for stationary
vectors, and a full-system chain with the queue truncated at ``q_max``
whose stationary PMF is solved directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order

from .errors import NoConvergence, SingularSystem, TooLarge, ZeroDenominator
from .model import (
    INITIAL_STATE,
    Availability,
    Projection,
    ServerModel,
    SystemPolicy,
    SystemState,
)

MAX_TRUNCATED_STATES = 6000
BOUNDARY_MASS_LIMIT = 0.01


def power_iteration_pmf(P: np.ndarray, tol: float = 1e-12, max_iters: int = 1_000_000) -> np.ndarray:
    """Stationary vector of an aperiodic irreducible chain by repeated ``v <- v P``.

    Starts from the uniform vector and stops once an update moves ``v`` by
    less than ``tol`` in L1.

    Raises
    ------
    NoConvergence
        ``max_iters`` updates were not enough.
    """
    P = np.asarray(P, dtype=float)
    v = np.full(P.shape[0], 1.0 / P.shape[0])
    for _ in range(max_iters):
        nxt = v @ P
        nxt /= nxt.sum()
        if np.abs(nxt - v).sum() < tol:
            return nxt
        v = nxt
    raise NoConvergence(f"power iteration did not reach tol={tol} in {max_iters} iterations")


@dataclass(frozen=True)
class TruncatedSystemChain:
    """Full system restricted to queues of at most ``q_max``.

    An arrival that would push the queue past ``q_max`` is discarded.
    ``states[i]`` is ``(s, w, q)``.
    """

    q_max: int
    states: tuple[tuple[int, int, int], ...]
    matrix: np.ndarray

    def index(self, s: int, w, q: int) -> int:
        return self._lookup[(s, int(w), q)]

    @property
    def _lookup(self) -> dict:
        cache = self.__dict__.get("_lookup_cache")
        if cache is None:
            cache = {x: i for i, x in enumerate(self.states)}
            object.__setattr__(self, "_lookup_cache", cache)
        return cache


def truncated_chain(model: ServerModel, policy: SystemPolicy, lam: float, q_max: int,
                    max_states: int = MAX_TRUNCATED_STATES) -> TruncatedSystemChain:
    """Transition matrix of the full system with the queue capped at ``q_max``."""
    if not 0.0 < lam < 1.0:
        raise ValueError(f"arrival probability {lam!r} must lie in (0, 1)")
    if q_max < 1:
        raise ValueError("q_max must be at least 1")
    n_s = model.n_s
    states = [(s, w, q) for q in range(q_max + 1) for s in range(1, n_s + 1) for w in (0, 1)
              if not (w == 1 and q == 0)]
    if len(states) > max_states:
        raise TooLarge(f"truncated chain has {len(states)} states, cap is {max_states}")
    index = {x: i for i, x in enumerate(states)}
    P = np.zeros((len(states), len(states)))
    for i, (s, w, q) in enumerate(states):
        if q == 0:
            p_work = 0.0
        elif w == 1:
            p_work = 1.0
        else:
            p_work = policy.work_prob(s, Availability.A, q)
        # (probability, next s) under each action
        if s < n_s:
            up = [(model.rho_up_at(s), s + 1), (1.0 - model.rho_up_at(s), s)]
        else:
            up = [(1.0, s)]
        if s > 1:
            down = [(model.rho_down_at(s), s - 1), (1.0 - model.rho_down_at(s), s)]
        else:
            down = [(1.0, s)]
        mu = model.mu_at(s)
        outcomes = []
        if p_work > 0.0:
            for p_s, s2 in up:
                for arrive, p_a in ((1, lam), (0, 1.0 - lam)):
                    outcomes.append((p_work * p_s * p_a * mu, s2, 0, q + arrive - 1))
                    outcomes.append((p_work * p_s * p_a * (1.0 - mu), s2, 1, q + arrive))
        if p_work < 1.0:
            for p_s, s2 in down:
                for arrive, p_a in ((1, lam), (0, 1.0 - lam)):
                    outcomes.append(((1.0 - p_work) * p_s * p_a, s2, 0, q + arrive))
        for p, s2, w2, q2 in outcomes:
            if p == 0.0:
                continue
            P[i, index[(s2, w2, min(q2, q_max))]] += p
    return TruncatedSystemChain(q_max, tuple(states), P)


@dataclass(frozen=True)
class TruncatedSolution:
    chain: TruncatedSystemChain
    pmf: np.ndarray
    server_marginal: np.ndarray
    boundary_mass: float
    service_rate: float

    @property
    def reliable(self) -> bool:
        return self.boundary_mass < BOUNDARY_MASS_LIMIT


def truncated_chain_stationary(model: ServerModel, policy: SystemPolicy, lam: float, q_max: int,
                               initial_state: SystemState = INITIAL_STATE,
                               max_states: int = MAX_TRUNCATED_STATES) -> TruncatedSolution:
    """Solve the truncated chain on the states reachable from ``initial_state``.

    Reports the server-state marginal, the mass sitting on ``q = q_max``
    and the stationary completion rate ``sum mu(s) pi(x) theta(x)``.

    Raises
    ------
    TooLarge
        The truncated state space exceeds ``max_states``.
    SingularSystem
        The reachable set holds more than one recurrent class.
    """
    chain = truncated_chain(model, policy, lam, q_max, max_states)
    P = chain.matrix
    x0 = chain.index(initial_state.server.s, initial_state.server.w, min(initial_state.q, q_max))
    reach = np.sort(breadth_first_order(csr_matrix(P > 0.0), x0, directed=True, return_predecessors=False))
    sub = P[np.ix_(reach, reach)]
    m = len(reach)
    lhs = sub.T - np.eye(m)
    lhs[-1, :] = 1.0
    rhs = np.zeros(m)
    rhs[-1] = 1.0
    try:
        x = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem("truncated chain has no unique stationary PMF") from exc
    pi = np.zeros(P.shape[0])
    pi[reach] = x
    if np.abs(pi @ P - pi).max() > 1e-9:
        raise SingularSystem("truncated stationary solve left a large residual")
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()

    marginal = np.zeros(model.n_states)
    boundary = 0.0
    rate = 0.0
    for (s, w, q), p in zip(chain.states, pi):
        marginal[2 * (s - 1) + w] += p
        if q == q_max:
            boundary += p
        rate += model.mu_at(s) * p * policy.work_prob(s, w, q)
    return TruncatedSolution(chain, pi, marginal, float(boundary), float(rate))


def exact_projection(model: ServerModel, policy: SystemPolicy, lam: float, q_max: int,
                     solution: TruncatedSolution | None = None) -> Projection:
    """Stationary-weighted average of the policy over queue sizes, per server state.

    Entries for server states without stationary mass are undefined;
    reading them raises :class:`ZeroDenominator`.
    """
    if solution is None:
        solution = truncated_chain_stationary(model, policy, lam, q_max)
    num = np.zeros(model.n_states)
    den = np.zeros(model.n_states)
    for (s, w, q), p in zip(solution.chain.states, solution.pmf):
        i = 2 * (s - 1) + w
        num[i] += policy.work_prob(s, w, q) * p
        den[i] += p
    values = np.full(model.n_states, np.nan)
    mass = den > 0.0
    values[mass] = np.clip(num[mass] / den[mass], 0.0, 1.0)
    return Projection(values, ZeroDenominator)
