"""Server model, system states and scheduling policies.

A server has an internal action-dependent state ``s`` in ``1..n_s`` that
tends to rise while it works and fall while it rests, plus an availability
flag (Available or Busy).  Per-epoch completion probability is ``mu(s)``.

Vectors and matrices over server states use the fixed ordering
``index(s, w) = 2 * (s - 1) + w`` with ``A = 0`` and ``B = 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import BadRange, BoundaryProbability, MissingEntry, ModelError, UndefinedEntry


class Availability(IntEnum):
    A = 0  # available
    B = 1  # busy

    @classmethod
    def parse(cls, value) -> "Availability":
        if isinstance(value, Availability):
            return value
        if isinstance(value, str):
            key = value.strip().upper()
            aliases = {"A": cls.A, "AVAILABLE": cls.A, "B": cls.B, "BUSY": cls.B}
            if key in aliases:
                return aliases[key]
        elif isinstance(value, (int, np.integer)) and int(value) in (0, 1):
            return cls(int(value))
        raise BadRange(f"unknown availability {value!r}", field="w")


class Action(Enum):
    REST = "rest"
    WORK = "work"


A = Availability.A
B = Availability.B
WORK = Action.WORK
REST = Action.REST


def state_index(s: int, w) -> int:
    """Position of server state ``(s, w)`` in vectors over server states."""
    return 2 * (s - 1) + int(w)


def state_label(index: int) -> str:
    s, w = divmod(index, 2)
    return f"({s + 1},{Availability(w).name})"


def _check_open_unit(value, field_name: str) -> float:
    try:
        p = float(value)
    except (TypeError, ValueError):
        raise BadRange(f"{field_name} must be a number, got {value!r}", field=field_name) from None
    if math.isnan(p) or p < 0.0 or p > 1.0:
        raise BadRange(f"{field_name}={p!r} is not a probability", field=field_name)
    if p == 0.0 or p == 1.0:
        raise BoundaryProbability(
            f"{field_name}={p!r}: probabilities must lie strictly inside (0, 1)",
            field=field_name,
        )
    return p


@dataclass(frozen=True)
class ServerModel:
    """Validated server parameters.

    ``rho_up[i]`` is the chance of moving from state ``i + 1`` to ``i + 2``
    during a work epoch, ``rho_down[i]`` the chance of moving from ``i + 2``
    to ``i + 1`` during a rest epoch and ``mu[i]`` the completion probability
    in state ``i + 1``.  Use :func:`validate_model` to build one from a
    per-state mapping.
    """

    n_s: int
    rho_up: tuple[float, ...]
    rho_down: tuple[float, ...]
    mu: tuple[float, ...]

    def __post_init__(self):
        if isinstance(self.n_s, bool) or not isinstance(self.n_s, (int, np.integer)) or self.n_s < 1:
            raise BadRange(f"n_s must be a positive integer, got {self.n_s!r}", field="n_s")
        object.__setattr__(self, "n_s", int(self.n_s))
        for name, expected in (("rho_up", self.n_s - 1), ("rho_down", self.n_s - 1), ("mu", self.n_s)):
            values = tuple(getattr(self, name))
            if len(values) < expected:
                raise MissingEntry(f"{name} needs {expected} entries, got {len(values)}", field=name)
            if len(values) > expected:
                raise BadRange(f"{name} needs {expected} entries, got {len(values)}", field=name)
            values = tuple(_check_open_unit(v, f"{name}[{i}]") for i, v in enumerate(values))
            object.__setattr__(self, name, values)

    @property
    def n_states(self) -> int:
        """Number of server states, ``2 * n_s``."""
        return 2 * self.n_s

    def rho_up_at(self, s: int) -> float:
        return self.rho_up[s - 1]

    def rho_down_at(self, s: int) -> float:
        return self.rho_down[s - 2]

    def mu_at(self, s: int) -> float:
        return self.mu[s - 1]

    def to_dict(self) -> dict:
        return {
            "n_s": self.n_s,
            "rho_up": {str(s): self.rho_up_at(s) for s in range(1, self.n_s)},
            "rho_down": {str(s): self.rho_down_at(s) for s in range(2, self.n_s + 1)},
            "mu": {str(s): self.mu_at(s) for s in range(1, self.n_s + 1)},
        }


def _table(raw, name: str, states: range) -> tuple[float, ...]:
    """Read a per-state table given as a mapping or as an ordered list."""
    if raw is None:
        raw = {}
    if isinstance(raw, Mapping):
        table = {}
        for key, value in raw.items():
            try:
                s = int(key)
            except (TypeError, ValueError):
                raise BadRange(f"{name} has non-integer state key {key!r}", field=name) from None
            if s not in states:
                raise BadRange(
                    f"{name} has entry for state {s}, expected states {states.start}..{states.stop - 1}",
                    field=name,
                )
            table[s] = value
        missing = [s for s in states if s not in table]
        if missing:
            raise MissingEntry(f"{name} is missing entries for states {missing}", field=name)
        return tuple(_check_open_unit(table[s], f"{name}[{s}]") for s in states)
    if isinstance(raw, (list, tuple)):
        if len(raw) < len(states):
            raise MissingEntry(f"{name} needs {len(states)} entries, got {len(raw)}", field=name)
        if len(raw) > len(states):
            raise BadRange(f"{name} needs {len(states)} entries, got {len(raw)}", field=name)
        return tuple(_check_open_unit(v, f"{name}[{s}]") for s, v in zip(states, raw))
    raise BadRange(f"{name} must be a mapping or list, got {type(raw).__name__}", field=name)


def validate_model(raw) -> ServerModel:
    """Build a :class:`ServerModel` from a candidate mapping.

    ``raw`` holds ``n_s`` and the per-state tables ``rho_up`` (states
    ``1..n_s-1``), ``rho_down`` (states ``2..n_s``) and ``mu`` (states
    ``1..n_s``).  Tables may be mappings keyed by state or plain lists.
    An existing :class:`ServerModel` is returned unchanged.

    Raises
    ------
    BoundaryProbability
        A parameter equals 0 or 1.
    MissingEntry
        A required field or table entry is absent.
    BadRange
        ``n_s`` is not a positive integer, a key is out of range or a value
        is not a probability.
    """
    if isinstance(raw, ServerModel):
        return raw
    if not isinstance(raw, Mapping):
        raise ModelError(f"model must be a mapping, got {type(raw).__name__}")
    if "n_s" not in raw:
        raise MissingEntry("model is missing n_s", field="n_s")
    n_s = raw["n_s"]
    if isinstance(n_s, bool) or not isinstance(n_s, (int, np.integer)) or n_s < 1:
        raise BadRange(f"n_s must be a positive integer, got {n_s!r}", field="n_s")
    n_s = int(n_s)
    if "mu" not in raw:
        raise MissingEntry("model is missing mu", field="mu")
    if n_s > 1:
        for key in ("rho_up", "rho_down"):
            if key not in raw:
                raise MissingEntry(f"model is missing {key}", field=key)
    return ServerModel(
        n_s=n_s,
        rho_up=_table(raw.get("rho_up"), "rho_up", range(1, n_s)),
        rho_down=_table(raw.get("rho_down"), "rho_down", range(2, n_s + 1)),
        mu=_table(raw["mu"], "mu", range(1, n_s + 1)),
    )


@dataclass(frozen=True)
class ServerState:
    s: int
    w: Availability = A

    def __post_init__(self):
        object.__setattr__(self, "w", Availability.parse(self.w))
        if isinstance(self.s, bool) or not isinstance(self.s, (int, np.integer)) or self.s < 1:
            raise BadRange(f"server state s={self.s!r} must be a positive integer", field="s")
        object.__setattr__(self, "s", int(self.s))

    def check(self, model: ServerModel) -> "ServerState":
        if self.s > model.n_s:
            raise BadRange(f"server state s={self.s} exceeds n_s={model.n_s}", field="s")
        return self

    @property
    def index(self) -> int:
        return state_index(self.s, self.w)


@dataclass(frozen=True)
class SystemState:
    server: ServerState
    q: int = 0

    def __post_init__(self):
        if isinstance(self.q, bool) or not isinstance(self.q, (int, np.integer)) or self.q < 0:
            raise BadRange(f"queue size q={self.q!r} must be a nonnegative integer", field="q")
        object.__setattr__(self, "q", int(self.q))
        if self.server.w == B and self.q == 0:
            raise BadRange("a busy server needs a nonempty queue", field="q")

    @classmethod
    def of(cls, s: int, w, q: int) -> "SystemState":
        return cls(ServerState(s, w), q)


INITIAL_STATE = SystemState.of(1, A, 0)


def admissible_actions(x: SystemState) -> frozenset:
    """Actions the scheduler may take in system state ``x``."""
    if x.q == 0:
        return frozenset({REST})
    if x.server.w == B:
        return frozenset({WORK})
    return frozenset({REST, WORK})


def aux_admissible_actions(w) -> frozenset:
    """Actions allowed when the queue is assumed never to run dry."""
    if Availability.parse(w) == B:
        return frozenset({WORK})
    return frozenset({REST, WORK})


def action_state_pmf(model: ServerModel, s: int, a: Action) -> dict[int, float]:
    """Distribution of the next action-dependent state given ``s`` and ``a``."""
    if not 1 <= s <= model.n_s:
        raise BadRange(f"state {s} outside 1..{model.n_s}", field="s")
    if a == WORK:
        if s == model.n_s:
            return {s: 1.0}
        p = model.rho_up_at(s)
        return {s + 1: p, s: 1.0 - p}
    if a == REST:
        if s == 1:
            return {1: 1.0}
        p = model.rho_down_at(s)
        return {s - 1: p, s: 1.0 - p}
    raise BadRange(f"unknown action {a!r}", field="a")


def _check_prob(p, what: str) -> float:
    p = float(p)
    if math.isnan(p) or p < 0.0 or p > 1.0:
        raise BadRange(f"{what}={p!r} is not a probability", field=what)
    return p


@dataclass(frozen=True)
class AuxPolicy:
    """Randomized policy for the server-only chain.

    Stores the work probability for every Available state; Busy states
    always work because the server cannot be preempted.
    """

    available: tuple[float, ...]

    def __post_init__(self):
        values = tuple(_check_prob(p, f"work_prob({s + 1},A)") for s, p in enumerate(self.available))
        if not values:
            raise BadRange("policy needs at least one state", field="available")
        object.__setattr__(self, "available", values)

    @property
    def n_s(self) -> int:
        return len(self.available)

    def work_prob(self, s: int, w) -> float:
        if Availability.parse(w) == B:
            return 1.0
        return self.available[s - 1]

    def vector(self) -> np.ndarray:
        """Work probabilities in server-state index order."""
        v = np.ones(2 * self.n_s)
        v[0::2] = self.available
        return v

    @classmethod
    def from_vector(cls, values: Sequence[float]) -> "AuxPolicy":
        values = np.asarray(values, dtype=float)
        if values.ndim != 1 or values.size % 2:
            raise BadRange("policy vector must have even length 2*n_s", field="work_prob")
        if not np.all(values[1::2] == 1.0):
            raise BadRange("busy states must work with probability 1", field="work_prob")
        return cls(tuple(values[0::2].tolist()))

    @property
    def is_deterministic(self) -> bool:
        return all(p in (0.0, 1.0) for p in self.available)

    @property
    def starts_from_rest(self) -> bool:
        """True when the policy can leave state ``(1, A)``."""
        return self.available[0] > 0.0


def threshold_aux_policy(tau: int, n_s: int) -> AuxPolicy:
    """Work from Available states below ``tau`` and rest from the others."""
    if isinstance(tau, bool) or not isinstance(tau, (int, np.integer)) or not 1 <= tau <= n_s + 1:
        raise BadRange(f"threshold {tau!r} outside 1..{n_s + 1}", field="tau")
    return AuxPolicy(tuple(1.0 if s < tau else 0.0 for s in range(1, n_s + 1)))


@dataclass(frozen=True, eq=False)
class SystemPolicy:
    """Randomized policy for the full system.

    ``table[s - 1, w, q]`` is the work probability for ``q <= q_cap``;
    larger queues reuse the ``q_cap`` column.  The empty-queue column is
    zero and Busy rows are one, whatever the caller supplied.
    """

    table: np.ndarray
    q_cap: int = field(init=False)

    def __post_init__(self):
        table = np.array(self.table, dtype=float)
        if table.ndim != 3 or table.shape[1] != 2 or table.shape[2] < 2:
            raise BadRange("policy table must have shape (n_s, 2, q_cap + 1) with q_cap >= 1", field="table")
        if np.isnan(table).any() or (table < 0).any() or (table > 1).any():
            raise BadRange("policy table entries must be probabilities", field="table")
        table[:, :, 0] = 0.0
        table[:, int(B), 1:] = 1.0
        table.setflags(write=False)
        object.__setattr__(self, "table", table)
        object.__setattr__(self, "q_cap", table.shape[2] - 1)

    @property
    def n_s(self) -> int:
        return self.table.shape[0]

    def work_prob(self, s: int, w, q: int) -> float:
        return float(self.table[s - 1, int(Availability.parse(w)), min(q, self.q_cap)])

    def __call__(self, x: SystemState) -> float:
        return self.work_prob(x.server.s, x.server.w, x.q)

    @classmethod
    def from_function(cls, n_s: int, q_cap: int, fn: Callable[[int, Availability, int], float]) -> "SystemPolicy":
        if q_cap < 1:
            raise BadRange("q_cap must be at least 1", field="q_cap")
        table = np.zeros((n_s, 2, q_cap + 1))
        for s in range(1, n_s + 1):
            for w in Availability:
                for q in range(1, q_cap + 1):
                    table[s - 1, w, q] = fn(s, w, q)
        return cls(table)

    @classmethod
    def from_available(cls, rows: Iterable[Sequence[float]]) -> "SystemPolicy":
        """Policy from per-state Available rows covering ``q = 1..q_cap``."""
        rows = [list(r) for r in rows]
        if not rows or any(len(r) != len(rows[0]) for r in rows) or not rows[0]:
            raise BadRange("table rows must be nonempty and equally long", field="table")
        table = np.zeros((len(rows), 2, len(rows[0]) + 1))
        table[:, int(A), 1:] = rows
        return cls(table)

    def equals(self, other: "SystemPolicy") -> bool:
        return self.q_cap == other.q_cap and np.array_equal(self.table, other.table)


def lift_aux_policy(phi: AuxPolicy) -> SystemPolicy:
    """Apply ``phi`` whenever the queue is nonempty and rest otherwise."""
    table = np.zeros((phi.n_s, 2, 2))
    table[:, int(A), 1] = phi.available
    return SystemPolicy(table)


def lift_threshold(tau: int, n_s: int) -> SystemPolicy:
    """Full-system threshold policy: work iff available, queue nonempty and ``s < tau``."""
    return lift_aux_policy(threshold_aux_policy(tau, n_s))


@dataclass(frozen=True, eq=False)
class Projection:
    """Auxiliary policy recovered from a full-system policy.

    ``values`` follows the server-state index order and holds ``nan`` for
    states that carry no weight, where the projection is undefined.
    """

    values: np.ndarray
    undefined_error: type = UndefinedEntry

    @property
    def defined(self) -> np.ndarray:
        return ~np.isnan(self.values)

    def work_prob(self, s: int, w) -> float:
        v = self.values[state_index(s, Availability.parse(w))]
        if np.isnan(v):
            raise self.undefined_error(f"projection undefined at ({s},{Availability.parse(w).name})")
        return float(v)

    def policy(self, fill: float = 0.0) -> AuxPolicy:
        """Auxiliary policy with undefined Available entries replaced by ``fill``."""
        available = np.where(np.isnan(self.values[0::2]), fill, self.values[0::2])
        return AuxPolicy(tuple(np.clip(available, 0.0, 1.0).tolist()))

    def to_dict(self) -> dict:
        return {state_label(i): (None if np.isnan(v) else float(v)) for i, v in enumerate(self.values)}
