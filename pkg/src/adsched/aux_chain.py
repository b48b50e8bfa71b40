"""Server-only Markov chain under an auxiliary policy.

When the queue never empties, the server state evolves on its own.  This
module builds that chain, finds its recurrent classes, solves the
stationary distribution on each class and evaluates the long-run service
rate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import InconsistentClassification, SingularSystem
from .model import REST, WORK, AuxPolicy, ServerModel, action_state_pmf, state_index, state_label

EDGE_EPS = 1e-15
ROW_SUM_TOL = 1e-12
RESIDUAL_TOL = 1e-10


def threshold_index(phi: AuxPolicy) -> int:
    """Largest ``s`` whose Available state works with probability exactly one, else 0."""
    ones = [s for s, p in enumerate(phi.available, start=1) if p == 1.0]
    return max(ones) if ones else 0


def work_matrix(model: ServerModel) -> np.ndarray:
    """Transition matrix when the server works in every state."""
    n = model.n_states
    P = np.zeros((n, n))
    for s in range(1, model.n_s + 1):
        mu = model.mu_at(s)
        for s_next, p in action_state_pmf(model, s, WORK).items():
            for w in (0, 1):
                row = state_index(s, w)
                P[row, state_index(s_next, 0)] += p * mu
                P[row, state_index(s_next, 1)] += p * (1.0 - mu)
    return P


def rest_matrix(model: ServerModel) -> np.ndarray:
    """Transition matrix when every state rests (Busy rows included, for completeness)."""
    n = model.n_states
    P = np.zeros((n, n))
    for s in range(1, model.n_s + 1):
        for s_next, p in action_state_pmf(model, s, REST).items():
            for w in (0, 1):
                P[state_index(s, w), state_index(s_next, 0)] += p
    return P


def build_matrix(model: ServerModel, phi: AuxPolicy) -> np.ndarray:
    """Row-stochastic transition matrix of the server chain under ``phi``."""
    if phi.n_s != model.n_s:
        raise ValueError(f"policy covers {phi.n_s} states, model has {model.n_s}")
    v = phi.vector()[:, None]
    return v * work_matrix(model) + (1.0 - v) * rest_matrix(model)


@dataclass(frozen=True)
class ClassStructure:
    recurrent_classes: tuple[tuple[int, ...], ...]
    transient: tuple[int, ...]
    threshold_index: int

    def labels(self) -> dict:
        return {
            "recurrent_classes": [[state_label(i) for i in c] for c in self.recurrent_classes],
            "transient": [state_label(i) for i in self.transient],
            "threshold_index": self.threshold_index,
        }


def recurrent_classes(P: np.ndarray, eps: float = EDGE_EPS) -> tuple[tuple[tuple[int, ...], ...], tuple[int, ...]]:
    """Closed communicating classes and transient states of a finite chain.

    Classes are sorted by their smallest state index.
    """
    adj = csr_matrix(P > eps)
    n_comp, labels = connected_components(adj, directed=True, connection="strong")
    closed = np.ones(n_comp, dtype=bool)
    rows, cols = adj.nonzero()
    leaving = labels[rows] != labels[cols]
    closed[np.unique(labels[rows[leaving]])] = False
    classes = []
    transient = []
    for c in range(n_comp):
        members = tuple(int(i) for i in np.flatnonzero(labels == c))
        if closed[c]:
            classes.append(members)
        else:
            transient.extend(members)
    classes.sort(key=min)
    return tuple(classes), tuple(sorted(transient))


def closed_form_classes(n_s: int, phi: AuxPolicy) -> tuple[tuple[int, ...], ...]:
    """Recurrent classes predicted from ``phi(1, A)`` and the threshold index."""
    t = threshold_index(phi)
    upper = tuple(i for i in range(2 * n_s) if i // 2 + 1 >= t)
    if phi.available[0] > 0.0:
        return (upper,)
    absorbing = (state_index(1, 0),)
    if t > 1:
        return (absorbing, upper)
    return (absorbing,)


def support_matrix(model: ServerModel, phi: AuxPolicy) -> np.ndarray:
    """Matrix with the same zero pattern as ``build_matrix(model, phi)`` and no tiny entries.

    Every model parameter becomes 1/2 and every fractional work probability
    becomes 1/2, so an entry is positive exactly when the true transition
    probability is, however small that probability is.
    """
    half = ServerModel(model.n_s, (0.5,) * (model.n_s - 1), (0.5,) * (model.n_s - 1), (0.5,) * model.n_s)
    pattern = AuxPolicy(tuple(p if p in (0.0, 1.0) else 0.5 for p in phi.available))
    return build_matrix(half, pattern)


def classify_states(model: ServerModel, phi: AuxPolicy) -> ClassStructure:
    """Recurrent/transient split of the server chain under ``phi``.

    Computed from the transition graph and cross-checked against the
    closed-form structure implied by ``phi(1, A)`` and the threshold index.

    Raises
    ------
    InconsistentClassification
        The two routes disagree.
    """
    classes, transient = recurrent_classes(support_matrix(model, phi))
    expected = closed_form_classes(model.n_s, phi)
    if classes != expected:
        raise InconsistentClassification(
            f"graph classes {classes} differ from closed-form classes {expected} for policy {phi.available}"
        )
    return ClassStructure(classes, transient, threshold_index(phi))


@dataclass(frozen=True)
class StationaryPMF:
    probabilities: np.ndarray
    support_class: tuple[int, ...]

    def as_dict(self) -> dict[str, float]:
        return {state_label(i): float(p) for i, p in enumerate(self.probabilities)}


def solve_class(P: np.ndarray, members) -> np.ndarray:
    """Stationary vector of ``P`` restricted to a closed class, embedded in full length.

    One balance equation is replaced by the normalization row.
    """
    members = list(members)
    sub = P[np.ix_(members, members)]
    m = len(members)
    lhs = sub.T - np.eye(m)
    lhs[-1, :] = 1.0
    rhs = np.zeros(m)
    rhs[-1] = 1.0
    try:
        x = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"balance equations singular on class {members}") from exc
    pi = np.zeros(P.shape[0])
    pi[members] = x
    residual = np.abs(pi @ P - pi).max()
    if residual > RESIDUAL_TOL or abs(pi.sum() - 1.0) > RESIDUAL_TOL:
        raise SingularSystem(f"stationary residual {residual:.3e} on class {members}")
    return pi


def stationary_pmf(P: np.ndarray, structure: ClassStructure) -> list[StationaryPMF]:
    """One stationary PMF per recurrent class."""
    out = []
    for members in structure.recurrent_classes:
        pi = solve_class(P, members)
        pi[pi < 0.0] = 0.0
        out.append(StationaryPMF(pi, members))
    return out


def service_rate_on(model: ServerModel, phi: AuxPolicy, pi: np.ndarray) -> float:
    """Expected completions per epoch under the server-state distribution ``pi``."""
    mu = np.repeat(np.asarray(model.mu), 2)
    return float(np.dot(mu * phi.vector(), pi))


def long_run_service_rate(model: ServerModel, phi: AuxPolicy, pmfs) -> float:
    """Best service rate over the stationary PMFs of ``phi``.

    Every stationary PMF mixes the per-class PMFs and the rate is linear in
    the PMF, so the supremum is the largest per-class rate.
    """
    return max(service_rate_on(model, phi, p.probabilities) for p in pmfs)


@dataclass(frozen=True)
class PolicyEvaluation:
    phi: AuxPolicy
    matrix: np.ndarray
    structure: ClassStructure
    pmfs: tuple[StationaryPMF, ...]
    nu_bar: float

    @property
    def pmf(self) -> np.ndarray:
        """The unique stationary PMF; only defined when there is one recurrent class."""
        if len(self.pmfs) != 1:
            raise SingularSystem(f"policy has {len(self.pmfs)} stationary PMFs, not a unique one")
        return self.pmfs[0].probabilities


def evaluate_policy(model: ServerModel, phi: AuxPolicy) -> PolicyEvaluation:
    """Build, classify and solve the chain for ``phi`` in one go."""
    P = build_matrix(model, phi)
    structure = classify_states(model, phi)
    pmfs = tuple(stationary_pmf(P, structure))
    return PolicyEvaluation(phi, P, structure, pmfs, long_run_service_rate(model, phi, pmfs))


def stationary_distribution(model: ServerModel, phi: AuxPolicy) -> np.ndarray:
    return evaluate_policy(model, phi).pmf
