"""Market-sequence stability: convergence rates, compactness, uniform sets."""

import numpy as np
import pytest

from duality_lab import (
    MarketError,
    MarketSequence,
    appropriate_convergence_check,
    log_utility,
    run_stability_experiment,
    sigma_algebra_at,
    uniform_convergence_on_set,
    v_compactness_check,
)
from duality_lab.analysis import ConvexCompactSet

LOG = log_utility()


def _seq(base, delta, decay, N):
    return MarketSequence(base, np.full(base.lam.shape, delta), decay, N)


# --- sequence plumbing ----------------------------------------------------

def test_sequence_validation(fix_b):
    with pytest.raises(ValueError, match="shape"):
        MarketSequence(fix_b, np.ones((2, 2)), "1/n", 4)
    with pytest.raises(ValueError, match="N_max"):
        _seq(fix_b, 0.5, "1/n", 0)
    with pytest.raises(ValueError, match="decay"):
        _seq(fix_b, 0.5, "1/sqrt(n)", 4)


def test_sequence_decay_rules(fix_b):
    assert _seq(fix_b, 1.0, "1/n", 4).g(4) == 0.25
    assert _seq(fix_b, 1.0, "1/n^2", 4).g(4) == 0.0625
    assert _seq(fix_b, 1.0, [0.5, 0.25, 0.125], 3).g(2) == 0.25
    assert _seq(fix_b, 1.0, lambda n: 2.0 ** -n, 4).g(3) == 0.125


def test_sequence_markets_cached_and_perturbed(fix_b):
    seq = _seq(fix_b, 0.5, "1/n", 4)
    m2 = seq.market(2)
    assert m2 is seq.market(2)
    assert np.allclose(m2.lam, fix_b.lam + 0.25)


def test_sequence_hits_arbitrage(fix_b):
    # lam_n = 1 + n crosses the arbitrage boundary lam = 10 (dS > 0 surely)
    seq = _seq(fix_b, 1.0, lambda n: float(n), 20)
    assert np.allclose(seq.market(5).lam, 6.0)
    with pytest.raises(MarketError):
        seq.market(12)


# --- convergence of the densities -----------------------------------------

def test_constant_sequence_distances_zero(fix_b2):
    dist, ok = appropriate_convergence_check(_seq(fix_b2, 0.0, "1/n", 8))
    assert ok and np.allclose(dist, 0.0, atol=1e-15)


@pytest.mark.parametrize("decay,slope", [("1/n", -1.0), ("1/n^2", -2.0)])
def test_density_distance_rate(fix_b2, decay, slope):
    # [DERIVED] dZ is first-order in the drift perturbation, so the log-log
    # slope of the Ky Fan distance matches the decay exponent
    seq = _seq(fix_b2, 0.1, decay, 16)
    dist, ok = appropriate_convergence_check(seq, tol=1e-2)
    assert ok
    ns = np.arange(4, 17)
    fit = np.polyfit(np.log(ns), np.log(dist[3:]), 1)[0]
    assert fit == pytest.approx(slope, abs=0.2)


# --- V-compactness envelope -----------------------------------------------

def test_v_compactness_bounded(fix_b2):
    rep = v_compactness_check(_seq(fix_b2, 0.5, "1/n", 8), LOG)
    assert rep.ok and np.isfinite(rep.bound) and not rep.growth_flag


def test_v_compactness_flags_blowup(fix_b):
    # lam_n = 10n/(n+1) drives one density branch to 1/(n+1), so E[V(Z)^2]
    # keeps growing by more than 5% per step over the trailing half
    seq = MarketSequence(
        fix_b, np.ones((1, 2)), lambda n: (9.0 * n - 1.0) / (n + 1.0), 6
    )
    rep = v_compactness_check(seq, LOG)
    assert rep.growth_flag and not rep.ok
    with pytest.raises(ValueError, match="compactness"):
        run_stability_experiment(seq, LOG, np.ones(2, dtype=int), 1.0, 1.0)


# --- the full experiment --------------------------------------------------

def test_stability_experiment_columns_shrink(fix_b2):
    seq = _seq(fix_b2, 0.1, "1/n", 16)
    tau = np.ones(4, dtype=int)
    rep = run_stability_experiment(seq, LOG, tau, 1.0, 1.0)
    cols = rep.columns()
    assert set(cols) == {"n", "dZ", "dXT", "dXtau", "du", "dv", "dvprime", "ducp"}
    assert all(len(c) == 16 for c in cols.values())
    assert rep.monotone_after(4)
    assert rep.final_below(2e-3)
    assert np.isfinite(rep.v_compactness_bound)
    # every distance column actually moved: n = 1 is the worst index
    for name in ("dZ", "dXT", "dXtau", "du", "dv"):
        assert cols[name][0] > cols[name][-1] > 0
    # the dual derivative of the log problem is -eta^-1 independently of the
    # market, so its column vanishes identically
    assert np.allclose(rep.dvprime, 0.0, atol=1e-9)


def test_stability_experiment_joint_wealth_perturbation(fix_b2):
    seq = _seq(fix_b2, 0.1, "1/n", 16)
    tau = np.ones(4, dtype=int)
    rep = run_stability_experiment(
        seq, LOG, tau, 1.0, 1.0, xi_seq=lambda n: 1.0 + 1.0 / n
    )
    # du now carries the wealth perturbation: about ln(1 + 1/n)
    assert rep.du[-1] == pytest.approx(np.log(1.0 + 1.0 / 16.0), abs=2e-2)
    assert rep.monotone_after(4)


def test_stability_experiment_rejects_vector_wealth(fix_b2):
    seq = _seq(fix_b2, 0.1, "1/n", 4)
    with pytest.raises(TypeError):
        run_stability_experiment(seq, LOG, np.ones(4, dtype=int), np.ones(4), 1.0)


# --- uniform convergence over a dual argument set -------------------------

def test_uniform_convergence_on_interval(fix_b2):
    seq = _seq(fix_b2, 0.1, "1/n", 8)
    tau = np.ones(4, dtype=int)
    G = sigma_algebra_at(fix_b2.space, tau)
    K = ConvexCompactSet.order_interval(fix_b2.space, G, 0.5, 2.0)
    rep = uniform_convergence_on_set(seq, LOG, tau, K, r=1e-2)
    assert rep.net_size <= 4
    assert rep.sup_gap_v[-1] < rep.sup_gap_v[0] / 4
    assert rep.sup_gap_vprime[-1] <= 1e-9  # log: v' is market-independent
    assert np.all(np.diff(rep.sup_gap_v[3:]) <= 1e-12)
    assert rep.lipschitz_uniform()
    assert np.isfinite(rep.min_value)


def test_uniform_convergence_rejects_set_touching_zero(fix_b2):
    seq = _seq(fix_b2, 0.1, "1/n", 4)
    tau = np.ones(4, dtype=int)
    G = sigma_algebra_at(fix_b2.space, tau)
    K = ConvexCompactSet.order_interval(fix_b2.space, G, 0.0, 2.0, positive=False)
    with pytest.raises(ValueError, match="0"):
        uniform_convergence_on_set(seq, LOG, tau, K)
