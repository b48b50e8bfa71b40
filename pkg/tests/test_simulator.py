import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import adsched.simulator as simmod
from adsched.errors import BadRange, NoVisits
from adsched.model import A, B, REST, WORK, SystemPolicy, SystemState, lift_threshold, threshold_aux_policy
from adsched.aux_chain import stationary_distribution
from adsched.simulator import (
    SimConfig,
    Verdict,
    convergence_probe,
    departure_rate,
    empirical_server_pmf,
    estimate_projection,
    rate_from_poisson,
    simulate,
    simulate_replication,
    simulate_trace,
    stability_diagnostic,
)

from .strategies import models


def _kernel_vs_trace(model, policy, lam, epochs, seed, x0=SystemState.of(1, A, 0)):
    cfg = SimConfig(lam, epochs, seed=seed, burn_in=0, record_queue_path=True, initial_state=x0)
    stats = simulate_replication(model, policy, cfg, 0)
    trace, final = simulate_trace(model, policy, lam, epochs, seed=seed, initial_state=x0)
    assert stats.queue_path[:-1].tolist() == [e.q for e in trace]
    assert stats.final_state == (final.server.s, int(final.server.w), final.q)
    assert stats.arrivals == sum(e.arrival for e in trace)
    assert stats.departures == sum(e.completed for e in trace)
    occ = np.zeros_like(stats.occupancy)
    work = np.zeros_like(stats.work_decisions)
    for e in trace:
        occ[e.s - 1, int(e.w)] += 1
        work[e.s - 1, int(e.w)] += e.action == WORK
    assert np.array_equal(occ, stats.occupancy) and np.array_equal(work, stats.work_decisions)
    return trace


def test_kernel_matches_reference_stepper(m2):
    _kernel_vs_trace(m2, lift_threshold(2, 2), 0.3, 5000, seed=3)
    _kernel_vs_trace(m2, lift_threshold(3, 2), 0.45, 3000, seed=4, x0=SystemState.of(2, B, 5))


@settings(max_examples=25, deadline=None)
@given(models(max_states=4), st.floats(0.05, 0.95), st.integers(0, 2**32), st.data())
def test_trace_invariants(model, lam, seed, data):
    rows = data.draw(st.lists(st.lists(st.floats(0, 1), min_size=3, max_size=3),
                              min_size=model.n_s, max_size=model.n_s))
    policy = SystemPolicy.from_available(rows)
    trace = _kernel_vs_trace(model, policy, lam, 400, seed)
    for prev, nxt in zip(trace, trace[1:]):
        assert not (prev.w == B and prev.action == REST)
        assert not (prev.q == 0 and prev.action == WORK)
        assert not (prev.w == B and prev.q == 0)
        if prev.action == WORK:
            assert nxt.s >= prev.s
        else:
            assert nxt.s <= prev.s


def test_chunking_does_not_change_results(m2, monkeypatch):
    cfg = SimConfig(0.3, 200_000, seed=9)
    policy = lift_threshold(2, 2)
    whole = simulate_replication(m2, policy, cfg, 0).to_dict()
    monkeypatch.setattr(simmod, "CHUNK", 777)
    assert simulate_replication(m2, policy, cfg, 0).to_dict() == whole


def test_determinism_and_worker_independence(m2):
    policy = lift_threshold(2, 2)
    a = simulate(m2, policy, SimConfig(0.3, 50_000, seed=1, replications=4))
    b = simulate(m2, policy, SimConfig(0.3, 50_000, seed=1, replications=4, workers=3))
    assert [r.to_dict() for r in a] == [r.to_dict() for r in b]
    c = simulate(m2, policy, SimConfig(0.3, 50_000, seed=2, replications=4))
    assert [r.to_dict() for r in a] != [r.to_dict() for r in c]


def test_never_work_policy(m2):
    runs = simulate(m2, lift_threshold(1, 2), SimConfig(0.3, 20_000, seed=0, replications=2))
    for r in runs:
        assert r.departures == 0 and r.final_queue == r.arrivals
        assert r.occupancy[:, 1].sum() == 0
    assert departure_rate(runs) == 0.0
    assert empirical_server_pmf(runs).tolist() == [1.0, 0.0, 0.0, 0.0]
    with pytest.raises(NoVisits):
        estimate_projection(runs).work_prob(2, A)


def test_conservation_and_counters(m2):
    runs = simulate(m2, lift_threshold(2, 2), SimConfig(0.45, 100_000, seed=5, replications=3))
    for r in runs:
        assert r.departures + r.final_queue == r.arrivals + r.initial_queue
        assert r.occupancy.sum() == r.steady_epochs
        assert r.max_queue == max(r.max_queue_first_half, r.max_queue_second_half)
    assert empirical_server_pmf(runs).sum() == pytest.approx(1.0)


def test_queue_path_recording(m2):
    cfg = SimConfig(0.3, 1000, seed=0, record_queue_path=True, path_stride=100)
    r = simulate_replication(m2, lift_threshold(2, 2), cfg, 0)
    lines = r.queue_path_csv().splitlines()
    assert lines[0] == "epoch,q" and lines[1] == "0,0" and len(lines) == 12
    assert lines[-1] == f"1000,{r.final_queue}"


def test_config_validation():
    with pytest.raises(BadRange):
        SimConfig(1.2, 100)
    with pytest.raises(BadRange):
        SimConfig(0.3, 0)
    with pytest.raises(BadRange):
        SimConfig(0.3, 100, burn_in=100)
    with pytest.raises(BadRange):
        SimConfig(0.3, 100, seed=-1)
    assert SimConfig(0.3, 1000).burn_in == 100


def test_poisson_conversion():
    assert rate_from_poisson(3.0, 0.1) == pytest.approx(0.3)


def test_projection_estimate_m2(m2):
    runs = simulate(m2, lift_threshold(2, 2), SimConfig(0.3, 300_000, seed=7, replications=2))
    proj = estimate_projection(runs)
    assert proj.work_prob(2, A) == 0.0
    assert proj.work_prob(1, B) == 1.0 and proj.work_prob(2, B) == 1.0
    occ = sum(r.occupancy for r in runs)
    q_pos = sum(r.state_q_positive for r in runs)
    assert proj.work_prob(1, A) == pytest.approx(q_pos[0, 0] / occ[0, 0])
    assert 0.0 < proj.work_prob(1, A) < 1.0


def test_saturated_departure_rate(m2):
    runs = simulate(m2, lift_threshold(2, 2), SimConfig(0.45, 1_000_000, seed=42, replications=4))
    assert abs(departure_rate(runs) - 0.36) <= 0.005


def test_stability_verdicts(m2):
    stable = simulate(m2, lift_threshold(2, 2), SimConfig(0.3, 300_000, seed=1, replications=8))
    assert stability_diagnostic(stable).verdict == Verdict.STABLE
    unstable = simulate(m2, lift_threshold(2, 2), SimConfig(0.45, 300_000, seed=1, replications=8))
    report = stability_diagnostic(unstable)
    assert report.verdict == Verdict.UNSTABLE and abs(report.mean_slope - 0.09) <= 0.01
    with pytest.raises(ValueError):
        stability_diagnostic(stable[:1])


def test_stability_verdict_is_inconclusive_on_mixed_evidence(m2):
    runs = simulate(m2, lift_threshold(2, 2), SimConfig(0.3, 10_000, seed=1, replications=4))
    # a slope threshold below every plausible drift but a tight ratio bound
    report = stability_diagnostic(runs, eps_slope=-1.0, ratio_bound=0.0)
    assert report.verdict in (Verdict.UNSTABLE, Verdict.INCONCLUSIVE)
    report = stability_diagnostic(runs, eps_slope=1.0, ratio_bound=0.0)
    assert report.verdict == Verdict.INCONCLUSIVE


def test_convergence_probe_start_and_shape(m2):
    probe = convergence_probe(m2, 2, 0.45, checkpoints=(0, 50), replications=500, seed=3)
    target = stationary_distribution(m2, threshold_aux_policy(2, 2))
    assert probe.distances[0] == pytest.approx(np.abs(np.eye(4)[0] - target).sum(), abs=1e-15)
    assert probe.pmfs.shape == (2, 4) and np.allclose(probe.pmfs.sum(axis=1), 1.0)
    assert probe.distances[1] < probe.distances[0]
