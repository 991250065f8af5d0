"""Utility pairs: conjugates, inverse marginals, elasticity diagnostics."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from duality_lab import (
    UtilityPair,
    ae_dual_bound_check,
    asymptotic_elasticity_estimate,
    conjugate_eval,
    log_utility,
    power_utility,
    table_utility,
)
from duality_lab.utility import conjugate_grid


def test_log_closed_forms():
    u = log_utility()
    # [TRIVIAL] V(1) = -1, I(1) = 1
    assert conjugate_eval(u, 1.0) == pytest.approx(-1.0)
    assert float(u.I(1.0)) == pytest.approx(1.0)
    # [DERIVED] V(y) = -ln y - 1 at y = 0.5 by hand
    assert conjugate_eval(u, 0.5) == pytest.approx(np.log(2.0) - 1.0)


def test_power_closed_forms():
    u = power_utility(0.5)
    # [DERIVED] V(y) = 1/y for p = 1/2 by hand conjugation
    assert conjugate_eval(u, 2.0) == pytest.approx(0.5)
    assert float(u.I(4.0)) == pytest.approx(1.0 / 16.0)


def test_power_rejects_bad_exponent():
    with pytest.raises(ValueError):
        power_utility(1.5)
    with pytest.raises(ValueError):
        power_utility(0.0)


@pytest.mark.parametrize("u_factory,y", [
    (log_utility, 0.3), (log_utility, 1.7),
    (lambda: power_utility(0.5), 0.4), (lambda: power_utility(0.8), 2.0),
])
def test_conjugate_against_grid_oracle(u_factory, y):
    """[DERIVED] closed-form V checked against the independent sup-grid."""
    u = u_factory()
    assert conjugate_eval(u, y) == pytest.approx(conjugate_grid(u, y), abs=1e-5)


def test_inverse_marginal_roundtrip():
    for u in (log_utility(), power_utility(0.3)):
        ys = np.geomspace(1e-3, 1e3, 11)
        assert np.allclose(u.Uprime(u.I(ys)), ys, rtol=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 0.95))
def test_power_elasticity_equals_p(p):
    u = power_utility(p)
    assert asymptotic_elasticity_estimate(u) == pytest.approx(p, abs=1e-9)


def test_log_elasticity_small():
    # tail ratios 1/ln(x) for x in {1e6, 1e7, 1e8}; the max is 1/ln(1e6)
    est = asymptotic_elasticity_estimate(log_utility())
    assert est == pytest.approx(1.0 / np.log(1e6), abs=1e-12)
    assert est < 0.1


def test_ae_dual_bound_power_saturates():
    u = power_utility(0.5)
    # [PAPER] the power family attains V(mu y) = mu^{-alpha} V(y) exactly
    for mu in (0.2, 0.5, 0.9):
        assert ae_dual_bound_check(u, mu, 1.0)
        lhs = conjugate_eval(u, mu * 1.0)
        rhs = mu ** (-u.alpha) * conjugate_eval(u, 1.0)
        assert lhs == pytest.approx(rhs, rel=1e-12)


def test_ae_dual_bound_log():
    u = log_utility()
    assert u.y0 == pytest.approx(np.exp(-2.0))
    for mu in (0.1, 0.5, 0.9):
        for y in (0.05, 0.1, u.y0):
            assert ae_dual_bound_check(u, mu, y)


def test_ae_dual_bound_rejects_bad_arguments():
    u = log_utility()
    with pytest.raises(ValueError, match="mu"):
        ae_dual_bound_check(u, 1.5, 0.1)
    with pytest.raises(ValueError, match="y0"):
        ae_dual_bound_check(u, 0.5, 10.0)


def _log_table():
    # spans the full validation range so no extrapolation is exercised
    xs = np.geomspace(1e-9, 1e9, 100)
    return np.stack([xs, np.log(xs)], axis=1)


def test_table_utility_tracks_log():
    u = table_utility(_log_table(), ae_bound=0.1)
    xs = np.geomspace(1e-2, 1e2, 11)
    # monotone-cubic error on the geometric knot spacing is ~1e-3
    assert np.allclose(u.U(xs), np.log(xs), atol=2e-3)
    ys = np.geomspace(0.05, 5, 9)
    # conjugate from the tabulated pair vs the log closed form
    assert np.allclose([conjugate_eval(u, y) for y in ys],
                       -np.log(ys) - 1.0, atol=5e-3)


def test_table_utility_rejects_bad_tables():
    with pytest.raises(ValueError, match="at least 4"):
        table_utility([[1.0, 0.0], [2.0, 1.0]])
    with pytest.raises(ValueError, match="increasing"):
        table_utility([[1.0, 0.0], [1.0, 0.5], [2.0, 1.0], [3.0, 2.0]])


def test_inada_violation_rejected():
    # bounded marginal utility at 0 fails the blow-up requirement
    with pytest.raises(ValueError, match="Inada|increasing|decreasing"):
        UtilityPair(
            name="affine-ish",
            U=lambda x: np.asarray(x, float),
            Uprime=lambda x: np.ones_like(np.asarray(x, float)),
            Uprime2=lambda x: np.zeros_like(np.asarray(x, float)),
            I=lambda y: np.ones_like(np.asarray(y, float)),
            Iprime=lambda y: np.zeros_like(np.asarray(y, float)),
            V=lambda y: np.zeros_like(np.asarray(y, float)),
            Vprime=lambda y: np.zeros_like(np.asarray(y, float)),
            ae_bound=0.9, alpha=9.0, y0=1.0,
        )


@settings(max_examples=20, deadline=None)
@given(st.floats(0.1, 0.9), st.floats(0.05, 5.0))
def test_fenchel_young_inequality(p, y):
    """U(x) <= V(y) + x y for all x, with equality at x = I(y)."""
    u = power_utility(p)
    xs = np.geomspace(1e-4, 1e4, 41)
    gap = float(u.V(y)) + xs * y - np.asarray(u.U(xs))
    assert gap.min() >= -1e-9
    xstar = float(u.I(y))
    eq_gap = float(u.V(y)) + xstar * y - float(u.U(xstar))
    assert abs(eq_gap) <= 1e-9 * max(1.0, abs(float(u.V(y))))
