import numpy as np
import pytest

from adsched.aux_chain import build_matrix, stationary_distribution
from adsched.errors import NoConvergence, TooLarge, ZeroDenominator
from adsched.model import A, B, SystemPolicy, lift_threshold, threshold_aux_policy
from adsched.oracle import (
    exact_projection,
    power_iteration_pmf,
    truncated_chain,
    truncated_chain_stationary,
)


def test_power_iteration_examples(m1, m2):
    assert power_iteration_pmf(build_matrix(m1, threshold_aux_policy(2, 1))) == pytest.approx([0.5, 0.5], abs=1e-8)
    pi = power_iteration_pmf(build_matrix(m2, threshold_aux_policy(2, 2)))
    assert np.abs(pi - [0.36, 0.04, 0.40, 0.20]).max() <= 1e-8
    assert power_iteration_pmf(np.array([[1.0]])).tolist() == [1.0]


def test_power_iteration_gives_up_on_periodic_chain():
    with pytest.raises(NoConvergence):
        power_iteration_pmf(np.array([[0.0, 1.0, 0.0], [0.5, 0.0, 0.5], [0.0, 1.0, 0.0]]), max_iters=100)


def test_truncated_rows_are_stochastic(m2):
    chain = truncated_chain(m2, lift_threshold(2, 2), 0.3, 20)
    assert np.abs(chain.matrix.sum(axis=1) - 1.0).max() <= 1e-12
    assert len(chain.states) == 4 * 21 - 2


def test_truncated_chain_cap(m2):
    with pytest.raises(TooLarge):
        truncated_chain(m2, lift_threshold(2, 2), 0.3, 5000, max_states=1000)


def test_truncated_solution_m2(m2):
    theta = lift_threshold(2, 2)
    sol = truncated_chain_stationary(m2, theta, 0.3, 200)
    assert sol.reliable and sol.boundary_mass < 1e-10
    assert abs(sol.service_rate - 0.3) <= 1e-3
    proj = exact_projection(m2, theta, 0.3, 200, sol)
    assert proj.work_prob(2, A) == 0.0
    assert proj.work_prob(1, B) == 1.0 and proj.work_prob(2, B) == 1.0
    assert 0.0 < proj.work_prob(1, A) < 1.0
    target = stationary_distribution(m2, proj.policy())
    assert np.abs(target - sol.server_marginal).sum() <= 1e-3
    doubled = truncated_chain_stationary(m2, theta, 0.3, 400)
    assert np.abs(doubled.server_marginal - sol.server_marginal).sum() <= 1e-3


def test_never_work_fills_the_boundary(m2):
    sol = truncated_chain_stationary(m2, lift_threshold(1, 2), 0.3, 50)
    assert not sol.reliable and sol.boundary_mass > 0.01
    proj = exact_projection(m2, lift_threshold(1, 2), 0.3, 50, sol)
    with pytest.raises(ZeroDenominator):
        proj.work_prob(1, B)


def test_projection_of_queue_dependent_policy(m2):
    # work from (1,A) only when the queue holds at least two jobs
    pol = SystemPolicy.from_available([[0.0, 1.0], [0.0, 0.0]])
    sol = truncated_chain_stationary(m2, pol, 0.2, 150)
    proj = exact_projection(m2, pol, 0.2, 150, sol)
    assert 0.0 < proj.work_prob(1, A) < 1.0
    assert abs(sol.service_rate - 0.2) <= 1e-3
