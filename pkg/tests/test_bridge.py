"""Grid-minimax reconciliation of truncated conjugates with the dual solver."""

import numpy as np
import pytest

from duality_lab import log_utility, reconcile_minimax

LOG = log_utility()


def test_fix_a_log_reconciles(fix_a):
    # [DERIVED] driftless market: Y = 1, v(1) = V(1) = -1; the optimizer
    # x = 1 sits at the n = 1 window edge (clipped only by the half-cell
    # grid offset) and is interior to every larger window
    tau = np.zeros(2, dtype=int)
    rep = reconcile_minimax(fix_a, LOG, tau, 1.0, steps=(0.02, 0.01))
    assert rep.dual_value[0] == pytest.approx(-1.0, abs=1e-8)
    assert rep.monotone_in_truncation()
    v1, v4, v16 = rep.v_trunc[0, -1, :]
    assert v4 == pytest.approx(v16, abs=1e-12)
    assert v1 == pytest.approx(v4, abs=1e-4)
    assert rep.reconciliation[0] <= 2 * 0.01


def test_fix_b_log_truncation_active(fix_b):
    # [DERIVED] eta = 0.5: the unconstrained maximizer of ln x - eta x y
    # sits at x = 1/(eta y), about 2 on both branches, so the n = 1 window
    # truncates strictly while n >= 4 does not
    tau = np.zeros(2, dtype=int)
    rep = reconcile_minimax(fix_b, LOG, tau, 0.5, steps=(0.02, 0.01))
    v1, v4, v16 = rep.v_trunc[0, -1, :]
    assert v1 < v4 - 1e-3
    assert v4 == pytest.approx(v16, abs=1e-12)
    assert rep.monotone_in_truncation()
    assert rep.reconciliation[0] <= 2 * 0.01


def test_defect_nonnegative_and_tiny(fix_b):
    tau = np.zeros(2, dtype=int)
    rep = reconcile_minimax(fix_b, LOG, tau, 1.0, steps=(0.02, 0.01))
    assert np.all(rep.defect >= -1e-12)
    assert np.all(rep.defect <= 1e-6)


def test_grid_error_halves_under_step_halving(fix_c):
    tau = np.zeros(3, dtype=int)
    rep = reconcile_minimax(fix_c, LOG, tau, 1.0, steps=(0.02, 0.01, 0.005))
    err = rep.grid_error()[0]
    assert err[0] > err[1] > err[2] > 0
    # linear in the step on half-cell-offset grids
    for coarse, fine in zip(err[:-1], err[1:]):
        assert 0.35 <= fine / coarse <= 0.65


def test_terminal_atoms_are_exact(fix_b2):
    # atoms at the horizon have the trivial deflator Y = 1; the truncated
    # value is just the decoupled sup, off the dual value only by the x grid
    tau = np.full(4, 2, dtype=int)
    rep = reconcile_minimax(fix_b2, LOG, tau, 1.0, steps=(0.01,),
                            truncations=(4,), gap_truncation=4)
    assert rep.v_trunc.shape == (4, 1, 1)
    assert np.all(rep.defect == 0.0)
    assert np.all(rep.reconciliation <= 2 * 0.01)
