"""Finite searches for the maximal stabilizable arrival rate."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .aux_chain import evaluate_policy
from .errors import TooLarge
from .model import AuxPolicy, ServerModel, state_label, threshold_aux_policy

ENUMERATION_CAP = 20
AGREEMENT_TOL = 1e-9


@dataclass(frozen=True)
class SweepRecord:
    tau: int
    pmf: np.ndarray
    nu_bar: float


@dataclass(frozen=True)
class ThresholdSweep:
    records: tuple[SweepRecord, ...]
    lambda_star: float
    tau_star: int

    def to_dict(self) -> dict:
        return {
            "lambda_star": self.lambda_star,
            "tau_star": self.tau_star,
            "sweep": [
                {
                    "tau": r.tau,
                    "nu_bar": r.nu_bar,
                    "pmf": {state_label(i): float(p) for i, p in enumerate(r.pmf)},
                }
                for r in self.records
            ],
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["tau", "nu_bar"])
        for r in self.records:
            writer.writerow([r.tau, f"{r.nu_bar:.12g}"])
        return buf.getvalue()


def lambda_star(model: ServerModel) -> ThresholdSweep:
    """Evaluate every threshold policy and keep the best one.

    Ties go to the smallest threshold.  The arrival rate plays no part.
    """
    records = []
    for tau in range(1, model.n_s + 2):
        ev = evaluate_policy(model, threshold_aux_policy(tau, model.n_s))
        records.append(SweepRecord(tau, ev.pmf, ev.nu_bar))
    best = records[0]
    for r in records[1:]:
        if r.nu_bar > best.nu_bar:
            best = r
    return ThresholdSweep(tuple(records), best.nu_bar, best.tau)


@dataclass(frozen=True)
class EnumerationReport:
    lambda_double_star: float
    argmax_policy: AuxPolicy
    policies_evaluated: int

    def to_dict(self) -> dict:
        return {
            "lambda_double_star": self.lambda_double_star,
            "argmax_policy": {"available": list(self.argmax_policy.available)},
            "policies_evaluated": self.policies_evaluated,
        }


def deterministic_policies(n_s: int):
    """All deterministic auxiliary policies, ordered by the bitmask ``sum(bit_s << (s-1))``."""
    for mask in range(2**n_s):
        yield AuxPolicy(tuple(float((mask >> i) & 1) for i in range(n_s)))


def enumerate_deterministic(model: ServerModel, cap: int = ENUMERATION_CAP) -> EnumerationReport:
    """Exhaustive search over the ``2**n_s`` deterministic policies.

    Raises
    ------
    TooLarge
        ``n_s`` exceeds ``cap``.
    """
    if model.n_s > cap:
        raise TooLarge(f"n_s={model.n_s} exceeds the enumeration cap {cap} (2**n_s policies)")
    best_nu, best_phi, count = -np.inf, None, 0
    for phi in deterministic_policies(model.n_s):
        nu = evaluate_policy(model, phi).nu_bar
        count += 1
        if nu > best_nu:
            best_nu, best_phi = nu, phi
    return EnumerationReport(best_nu, best_phi, count)


@dataclass(frozen=True)
class OptimalityReport:
    sweep: ThresholdSweep
    enumeration: EnumerationReport
    gap: float
    threshold_attains: bool

    def to_dict(self) -> dict:
        return {
            "lambda_star": self.sweep.lambda_star,
            "tau_star": self.sweep.tau_star,
            "lambda_double_star": self.enumeration.lambda_double_star,
            "gap": self.gap,
            "threshold_attains": self.threshold_attains,
            "argmax_policy": {"available": list(self.enumeration.argmax_policy.available)},
            "policies_evaluated": self.enumeration.policies_evaluated,
        }


def optimality_report(model: ServerModel, cap: int = ENUMERATION_CAP, tol: float = AGREEMENT_TOL) -> OptimalityReport:
    """Compare the threshold search with the exhaustive deterministic search."""
    sweep = lambda_star(model)
    enum = enumerate_deterministic(model, cap)
    gap = abs(sweep.lambda_star - enum.lambda_double_star)
    return OptimalityReport(sweep, enum, gap, gap <= tol)


def random_model(rng: np.random.Generator, n_s: int, low: float = 0.05, high: float = 0.95) -> ServerModel:
    """Model with every parameter drawn uniformly from ``(low, high)``."""
    def draw(k):
        return tuple(rng.uniform(low, high, size=k).tolist())

    return ServerModel(n_s, draw(n_s - 1), draw(n_s - 1), draw(n_s))


def threshold_policies(n_s: int):
    return [threshold_aux_policy(t, n_s) for t in range(1, n_s + 2)]


__all__ = [
    "ENUMERATION_CAP",
    "EnumerationReport",
    "OptimalityReport",
    "SweepRecord",
    "ThresholdSweep",
    "deterministic_policies",
    "enumerate_deterministic",
    "lambda_star",
    "optimality_report",
    "random_model",
    "threshold_policies",
]
