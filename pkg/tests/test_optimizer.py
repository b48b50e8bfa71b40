import numpy as np
import pytest
from hypothesis import given, settings

from adsched.errors import TooLarge
from adsched.model import validate_model
from adsched.optimizer import (
    deterministic_policies,
    enumerate_deterministic,
    lambda_star,
    optimality_report,
    random_model,
    threshold_policies,
)

from .strategies import models


def test_single_state_optimum(m1):
    sweep = lambda_star(m1)
    assert sweep.lambda_star == pytest.approx(0.5, abs=1e-12) and sweep.tau_star == 2
    assert len(sweep.records) == 2


def test_m2_sweep(m2):
    sweep = lambda_star(m2)
    assert [r.tau for r in sweep.records] == [1, 2, 3]
    assert [r.nu_bar for r in sweep.records] == pytest.approx([0.0, 0.36, 0.2], abs=1e-12)
    assert sweep.lambda_star == pytest.approx(0.36, abs=1e-12) and sweep.tau_star == 2
    assert sweep.records[2].pmf == pytest.approx([0, 0, 0.2, 0.8], abs=1e-12)


def test_sweep_csv(m2):
    assert lambda_star(m2).to_csv().splitlines() == ["tau,nu_bar", "1,0", "2,0.36", "3,0.2"]


def test_m2_enumeration(m2):
    report = enumerate_deterministic(m2)
    assert report.policies_evaluated == 4
    assert report.lambda_double_star == pytest.approx(0.36, abs=1e-12)
    assert report.argmax_policy.available == (1.0, 0.0)


def test_single_state_enumeration(m1):
    report = enumerate_deterministic(m1)
    assert report.policies_evaluated == 2 and report.lambda_double_star == pytest.approx(0.5)


def test_enumeration_cap():
    big = validate_model({"n_s": 30, "rho_up": [0.5] * 29, "rho_down": [0.5] * 29, "mu": [0.5] * 30})
    with pytest.raises(TooLarge):
        enumerate_deterministic(big)


def test_policy_orderings():
    assert [p.available for p in deterministic_policies(2)] == [(0, 0), (1, 0), (0, 1), (1, 1)]
    assert [p.available for p in threshold_policies(2)] == [(0, 0), (1, 0), (1, 1)]


def test_ties_go_to_smallest_threshold(m2, monkeypatch):
    import adsched.optimizer as opt

    class Flat:
        pmf = np.full(4, 0.25)
        nu_bar = 0.3

    monkeypatch.setattr(opt, "evaluate_policy", lambda model, phi: Flat)
    assert lambda_star(m2).tau_star == 1


def test_sweep_is_repeatable():
    model = random_model(np.random.default_rng(5), 4)
    assert len({lambda_star(model).tau_star for _ in range(3)}) == 1


@settings(max_examples=100, deadline=None)
@given(models())
def test_threshold_search_matches_enumeration(model):
    report = optimality_report(model)
    assert report.gap <= 1e-9 and report.threshold_attains
    assert report.sweep.lambda_star > 0.0
    assert report.sweep.records[0].nu_bar == 0.0


def test_random_model_ranges():
    rng = np.random.default_rng(0)
    m = random_model(rng, 5)
    assert all(0.05 <= p <= 0.95 for p in m.rho_up + m.rho_down + m.mu)
