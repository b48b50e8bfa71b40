"""Named property checks run by ``adsched validate``.

Each property measures one number on a model and compares it with a
tolerance.  Most properties pass when the measurement is at most the
tolerance; a few (``aperiodicity``, ``lemma2``) pass when it is strictly
greater.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .aux_chain import (
    ROW_SUM_TOL,
    build_matrix,
    classify_states,
    evaluate_policy,
    solve_class,
    stationary_distribution,
    threshold_index,
)
from .errors import InconsistentClassification
from .model import AuxPolicy, ServerModel, lift_threshold, threshold_aux_policy
from .optimizer import ENUMERATION_CAP, deterministic_policies, lambda_star, optimality_report
from .oracle import exact_projection, power_iteration_pmf, truncated_chain_stationary

Z99 = 2.5758293035489004


@dataclass
class Context:
    model: ServerModel
    seed: int = 0
    q_max: int = 200
    horizon: int = 1_000_000
    replications: int = 20
    probe_replications: int = 10_000
    lam_stable: float | None = None
    lam_unstable: float | None = None
    enumeration_cap: int = ENUMERATION_CAP
    _cache: dict = field(default_factory=dict, repr=False)

    def cached(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    @property
    def sweep(self):
        return self.cached("sweep", lambda: lambda_star(self.model))

    @property
    def stable_rate(self) -> float:
        if self.lam_stable is not None:
            return self.lam_stable
        return 0.8 * self.sweep.lambda_star

    @property
    def unstable_rate(self) -> float:
        if self.lam_unstable is not None:
            return self.lam_unstable
        ls = self.sweep.lambda_star
        return min(1.25 * ls, 0.5 * (1.0 + ls))

    def policies(self) -> list[AuxPolicy]:
        """Threshold policies, deterministic policies (all, or a sample) and random randomized ones."""
        def build():
            n_s = self.model.n_s
            rng = np.random.default_rng(self.seed)
            out = [threshold_aux_policy(t, n_s) for t in range(1, n_s + 2)]
            if n_s <= 10:
                out += list(deterministic_policies(n_s))
            else:
                out += [AuxPolicy(tuple(rng.integers(0, 2, n_s).astype(float).tolist())) for _ in range(256)]
            out += [AuxPolicy(tuple(rng.uniform(0.0, 1.0, n_s).tolist())) for _ in range(64)]
            return out
        return self.cached("policies", build)

    def deterministic_with_start(self) -> list[AuxPolicy]:
        return [p for p in self.policies() if p.is_deterministic and p.available[0] == 1.0]

    def stable_sims(self):
        from .simulator import SimConfig, simulate

        def run():
            cfg = SimConfig(lam=self.stable_rate, horizon=self.horizon, seed=self.seed,
                            replications=self.replications)
            return simulate(self.model, lift_threshold(self.sweep.tau_star, self.model.n_s), cfg)
        return self.cached("stable_sims", run)

    def unstable_sims(self):
        from .simulator import SimConfig, simulate

        def run():
            cfg = SimConfig(lam=self.unstable_rate, horizon=self.horizon, seed=self.seed + 1,
                            replications=self.replications)
            return simulate(self.model, lift_threshold(self.sweep.tau_star, self.model.n_s), cfg)
        return self.cached("unstable_sims", run)

    def truncated(self, q_max=None):
        q_max = self.q_max if q_max is None else q_max
        theta = lift_threshold(self.sweep.tau_star, self.model.n_s)
        return self.cached(("trunc", q_max), lambda: truncated_chain_stationary(
            self.model, theta, self.stable_rate, q_max))


@dataclass(frozen=True)
class Property:
    name: str
    description: str
    tolerance: float
    measure: Callable[[Context], float]
    greater: bool = False

    def passes(self, measured: float, tol: float) -> bool:
        if math.isnan(measured):
            return False
        return measured > tol if self.greater else measured <= tol


@dataclass(frozen=True)
class Outcome:
    name: str
    measured: float
    tolerance: float
    passed: bool
    comparison: str

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: measured={self.measured:.6g} {self.comparison} tol={self.tolerance:.6g}"

    def to_dict(self) -> dict:
        return {"property": self.name, "measured": self.measured, "tolerance": self.tolerance,
                "comparison": self.comparison, "passed": self.passed}


def _row_sums(ctx):
    return max(float(np.abs(build_matrix(ctx.model, p).sum(axis=1) - 1.0).max()) for p in ctx.policies())


def _solver_crosscheck(ctx):
    worst = 0.0
    for phi in ctx.policies():
        ev = evaluate_policy(ctx.model, phi)
        for members in ev.structure.recurrent_classes:
            sub = ev.matrix[np.ix_(members, members)]
            direct = solve_class(ev.matrix, members)[list(members)]
            worst = max(worst, float(np.abs(power_iteration_pmf(sub) - direct).max()))
    return worst


def _classification(ctx):
    bad = 0
    for phi in ctx.policies():
        try:
            classify_states(ctx.model, phi)
        except InconsistentClassification:
            bad += 1
    return float(bad)


def _aperiodicity(ctx):
    worst = math.inf
    for phi in ctx.policies():
        ev = evaluate_policy(ctx.model, phi)
        for members in ev.structure.recurrent_classes:
            worst = min(worst, float(max(ev.matrix[i, i] for i in members)))
    return worst


def _lambda_equivalence(ctx):
    return optimality_report(ctx.model, ctx.enumeration_cap).gap


def _lemma5(ctx):
    worst = 0.0
    for phi in ctx.deterministic_with_start():
        ref = threshold_aux_policy(threshold_index(phi) + 1, ctx.model.n_s)
        worst = max(worst, abs(evaluate_policy(ctx.model, phi).nu_bar - evaluate_policy(ctx.model, ref).nu_bar))
    return worst


def _lemma6(ctx):
    worst = 0.0
    for phi in ctx.deterministic_with_start():
        ref = threshold_aux_policy(threshold_index(phi) + 1, ctx.model.n_s)
        diff = stationary_distribution(ctx.model, phi) - stationary_distribution(ctx.model, ref)
        worst = max(worst, float(np.abs(diff).max()))
    return worst


def _transient_mass(ctx):
    worst = 0.0
    for phi in ctx.deterministic_with_start():
        t = threshold_index(phi)
        pi = stationary_distribution(ctx.model, phi)
        if t > 1:
            worst = max(worst, float(pi[: 2 * (t - 1)].max()))
    return worst


def _lemma2(ctx):
    theta = lift_threshold(ctx.sweep.tau_star, ctx.model.n_s)
    values = []
    for frac in (0.25, 0.5, 0.8):
        lam = frac * ctx.sweep.lambda_star
        sol = truncated_chain_stationary(ctx.model, theta, lam, ctx.q_max)
        if sol.reliable:
            values.append(exact_projection(ctx.model, theta, lam, ctx.q_max, sol).work_prob(1, "A"))
    return min(values) if values else math.nan


def _projected_pmf(ctx, sol):
    theta = lift_threshold(ctx.sweep.tau_star, ctx.model.n_s)
    proj = exact_projection(ctx.model, theta, ctx.stable_rate, sol.chain.q_max, sol)
    return stationary_distribution(ctx.model, proj.policy())


def _lemma3(ctx):
    sol = ctx.truncated()
    return float(np.abs(_projected_pmf(ctx, sol) - sol.server_marginal).sum())


def _lemma4(ctx):
    return abs(ctx.truncated().service_rate - ctx.stable_rate)


def _truncation_doubling(ctx):
    a = ctx.truncated().server_marginal
    b = ctx.truncated(2 * ctx.q_max).server_marginal
    return float(np.abs(a - b).sum())


def _boundary_mass(ctx):
    return ctx.truncated().boundary_mass


def _conservation(ctx):
    runs = ctx.stable_sims() + ctx.unstable_sims()
    return float(max(abs(r.departures + r.final_queue - r.arrivals - r.initial_queue) for r in runs))


def _remark2(ctx):
    from .simulator import departure_rate

    runs = ctx.stable_sims()
    lam = ctx.stable_rate
    n = sum(r.steady_epochs for r in runs)
    # measured in units of the 99% binomial half-width
    return abs(departure_rate(runs) - lam) / (Z99 * math.sqrt(lam * (1.0 - lam) / n))


def _lemma3_mc(ctx):
    from .simulator import empirical_server_pmf, estimate_projection

    runs = ctx.stable_sims()
    target = stationary_distribution(ctx.model, estimate_projection(runs).policy())
    return float(np.abs(empirical_server_pmf(runs) - target).sum())


def _projection_crosscheck(ctx):
    from .simulator import estimate_projection

    theta = lift_threshold(ctx.sweep.tau_star, ctx.model.n_s)
    exact = exact_projection(ctx.model, theta, ctx.stable_rate, ctx.q_max, ctx.truncated())
    est = estimate_projection(ctx.stable_sims())
    both = exact.defined & est.defined
    return float(np.abs(exact.values[both] - est.values[both]).max())


def _stability(ctx):
    from .simulator import Verdict, stability_diagnostic

    report = stability_diagnostic(ctx.stable_sims())
    return 0.0 if report.verdict == Verdict.STABLE else 1.0


def _instability(ctx):
    from .simulator import Verdict, stability_diagnostic

    report = stability_diagnostic(ctx.unstable_sims())
    if report.verdict != Verdict.UNSTABLE:
        return math.inf
    return abs(report.mean_slope - (ctx.unstable_rate - ctx.sweep.lambda_star))


def _lemma8(ctx):
    from .simulator import convergence_probe

    probe = ctx.cached("probe", lambda: convergence_probe(
        ctx.model, ctx.sweep.tau_star, ctx.unstable_rate, checkpoints=(0, 100, 1000, 10000),
        replications=ctx.probe_replications, seed=ctx.seed))
    return probe.distances[-1]


PROPERTIES: dict[str, Property] = {
    p.name: p
    for p in [
        Property("row_sums", "transition matrix rows sum to one", ROW_SUM_TOL, _row_sums),
        Property("solver_crosscheck", "direct solve vs power iteration, max abs difference", 1e-8,
                 _solver_crosscheck),
        Property("classification", "graph classes disagreeing with the closed form (count)", 0.0,
                 _classification),
        Property("aperiodicity", "smallest self-loop probability available in a recurrent class", 0.0,
                 _aperiodicity, greater=True),
        Property("lambda_equivalence", "gap between threshold and exhaustive searches", 1e-9,
                 _lambda_equivalence),
        Property("lemma5", "service rate of deterministic policy vs its threshold equivalent", 1e-10, _lemma5),
        Property("lemma6", "stationary PMF of deterministic policy vs its threshold equivalent", 1e-10, _lemma6),
        Property("transient_mass", "stationary mass below the threshold index", 1e-12, _transient_mass),
        Property("lemma2", "smallest projected work probability at (1, A) over stable rates", 0.0, _lemma2,
                 greater=True),
        Property("lemma3", "truncated-chain server marginal vs projected auxiliary PMF (L1)", 1e-3, _lemma3),
        Property("lemma4", "truncated-chain service rate vs arrival rate", 1e-3, _lemma4),
        Property("truncation_doubling", "server marginal change when q_max doubles (L1)", 1e-3,
                 _truncation_doubling),
        Property("boundary_mass", "truncated-chain mass at q_max", 0.01, _boundary_mass),
        Property("conservation", "departures + final queue - arrivals - initial queue", 0.0, _conservation),
        Property("remark2", "departure rate error in 99% binomial half-widths", 1.0, _remark2),
        Property("lemma3_mc", "simulated server PMF vs PMF of estimated projection (L1)", 0.02, _lemma3_mc),
        Property("projection_crosscheck", "simulated vs exact projection, max abs difference", 0.01,
                 _projection_crosscheck),
        Property("stability", "threshold policy below the critical rate is not Stable (0/1)", 0.0, _stability),
        Property("instability", "drift above the critical rate vs its predicted value", 0.01, _instability),
        Property("lemma8", "L1 distance of the server distribution from the threshold PMF at epoch 1e4",
                 0.05, _lemma8),
    ]
}


def run_properties(ctx: Context, only=None, tolerances: dict | None = None) -> list[Outcome]:
    """Evaluate the selected properties in registry order."""
    tolerances = tolerances or {}
    unknown = [n for n in list(only or []) + list(tolerances) if n not in PROPERTIES]
    if unknown:
        raise KeyError(f"unknown properties: {', '.join(unknown)}")
    names = [n for n in PROPERTIES if not only or n in only]
    out = []
    for name in names:
        prop = PROPERTIES[name]
        tol = float(tolerances.get(name, prop.tolerance))
        measured = float(prop.measure(ctx))
        out.append(Outcome(name, measured, tol, prop.passes(measured, tol), ">" if prop.greater else "<="))
    return out
