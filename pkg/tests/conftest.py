"""Shared fixtures and an exact reference solver for the server-only chain.

The reference builds transitions straight from the dynamics with exact
fractions and solves the balance equations with sympy, sharing no code
with the package.
"""

from fractions import Fraction

import pytest
import sympy

from adsched import validate_model

M2_RAW = {"n_s": 2, "rho_up": {"1": 0.5}, "rho_down": {"2": 0.5}, "mu": {"1": 0.8, "2": 0.2}}


@pytest.fixture
def m2():
    return validate_model(M2_RAW)


@pytest.fixture
def m1():
    return validate_model({"n_s": 1, "mu": {"1": 0.5}})


def exact_aux_matrix(n_s, rho_up, rho_down, mu, work_avail):
    """Rows over (s, w) pairs ordered s-major, A before B; all inputs are Fractions.

    ``rho_up[s]``/``rho_down[s]``/``mu[s]``/``work_avail[s]`` are keyed by s.
    """
    states = [(s, w) for s in range(1, n_s + 1) for w in "AB"]
    pos = {x: i for i, x in enumerate(states)}
    P = [[Fraction(0)] * len(states) for _ in states]
    for (s, w) in states:
        p_work = Fraction(1) if w == "B" else work_avail[s]
        row = P[pos[(s, w)]]
        up = rho_up.get(s, Fraction(0))
        down = rho_down.get(s, Fraction(0))
        for s2, ps in ((s + 1, up), (s, 1 - up)):
            if ps:
                row[pos[(s2, "A")]] += p_work * ps * mu[s]
                row[pos[(s2, "B")]] += p_work * ps * (1 - mu[s])
        for s2, ps in ((s - 1, down), (s, 1 - down)):
            if ps:
                row[pos[(s2, "A")]] += (1 - p_work) * ps
    return P


def exact_stationary(P, members):
    """Stationary vector of the closed class ``members`` (indices), as Fractions."""
    sub = sympy.Matrix([[sympy.Rational(P[i][j]) for j in members] for i in members])
    m = len(members)
    lhs = (sub.T - sympy.eye(m)).row_insert(m, sympy.ones(1, m))
    rhs = sympy.zeros(m, 1).row_insert(m, sympy.Matrix([1]))
    sol, params = lhs.gauss_jordan_solve(rhs)
    assert not params, "class is not irreducible"
    return [Fraction(int(x.p), int(x.q)) for x in sol]


M2_EXACT = dict(
    n_s=2,
    rho_up={1: Fraction(1, 2)},
    rho_down={2: Fraction(1, 2)},
    mu={1: Fraction(4, 5), 2: Fraction(1, 5)},
)
