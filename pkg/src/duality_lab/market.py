"""Discrete lambda-markets on a finite tree.

The price is S_t = 1 + sum ΔM_s + sum λ_s Δ⟨M⟩_s where ΔM is a
conditionally centered increment and Δ⟨M⟩ = E[(ΔM)^2 | previous node] its
predictable quadratic variation.  The density Z multiplies per-node minimal
martingale factors z = 1 - a (ΔS - E[ΔS]) with a = E[ΔS]/Var(ΔS), so that
E[z] = 1 and E[z ΔS] = 0 hold exactly at every node.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .space import FilteredSpace, sigma_algebra_at

__all__ = [
    "MarketError",
    "ArbitrageError",
    "MarketModel",
    "NodeConstraints",
    "DeflatorConstraintSet",
    "build_market",
    "build_density",
    "check_nflvr",
    "deflator_constraints",
    "position_endpoints",
]

_MART_TOL = 1e-10
_NFLVR_EPS = 1e-9


class MarketError(ValueError):
    pass


class ArbitrageError(MarketError):
    pass


@dataclass(frozen=True)
class MarketModel:
    space: FilteredSpace
    dM: np.ndarray   # (T, N), row t-1 is the increment over (t-1, t]
    lam: np.ndarray  # (T, N), predictable
    qv: np.ndarray = field(init=False)
    dS: np.ndarray = field(init=False)
    S: np.ndarray = field(init=False)   # (T+1, N)
    Z: np.ndarray = field(init=False)   # (T+1, N)

    def __init__(self, space, dM, lam):
        dM = np.atleast_2d(np.asarray(dM, dtype=float))
        lam = np.atleast_2d(np.asarray(lam, dtype=float))
        T, n = space.horizon, space.n_scenarios
        if dM.shape != (T, n) or lam.shape != (T, n):
            raise MarketError(f"dM and lam must have shape ({T}, {n})")
        qv = np.empty_like(dM)
        for t in range(T):
            for cell in space.partitions[t]:
                idx = list(cell)
                w = space.prob[idx]
                w = w / w.sum()
                mean = float(np.dot(w, dM[t, idx]))
                if abs(mean) > _MART_TOL:
                    raise MarketError(
                        f"E[dM|F_{t}] = {mean} != 0 on cell {cell}"
                    )
                if np.ptp(lam[t, idx]) > 1e-12:
                    raise MarketError(f"lam[{t}] is not predictable on cell {cell}")
                qv[t, idx] = float(np.dot(w, dM[t, idx] ** 2))
        dS = dM + lam * qv
        S = np.empty((T + 1, n))
        S[0] = 1.0
        S[1:] = 1.0 + np.cumsum(dS, axis=0)
        if np.any(S <= 0):
            raise MarketError("price path is not strictly positive")
        for arr in (dM, lam, qv, dS, S):
            arr.setflags(write=False)
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "dM", dM)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "qv", qv)
        object.__setattr__(self, "dS", dS)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "Z", _density_path(space, dS))

    @property
    def horizon(self) -> int:
        return self.space.horizon


def build_market(space: FilteredSpace, dM, lam) -> MarketModel:
    return MarketModel(space, dM, lam)


def _density_path(space: FilteredSpace, dS: np.ndarray) -> np.ndarray:
    T, n = dS.shape
    Z = np.empty((T + 1, n))
    Z[0] = 1.0
    for t in range(T):
        z = np.empty(n)
        for cell in space.partitions[t]:
            idx = list(cell)
            w = space.prob[idx]
            w = w / w.sum()
            ds = dS[t, idx]
            mean = float(np.dot(w, ds))
            var = float(np.dot(w, (ds - mean) ** 2))
            if var <= 1e-16:
                if abs(mean) > 1e-12:
                    raise ArbitrageError(
                        f"riskless node with nonzero drift at t={t}, cell {cell}"
                    )
                z[idx] = 1.0
            else:
                z[idx] = 1.0 - (mean / var) * (ds - mean)
        if np.any(z[np.isfinite(z)] <= 0) or not np.all(np.isfinite(z)):
            raise MarketError("density nonpositive")
        Z[t + 1] = Z[t] * z
    Z.setflags(write=False)
    return Z


def build_density(m: MarketModel) -> np.ndarray:
    """The density path Z (computed during construction; exposed for clarity)."""
    return m.Z


def check_nflvr(m: MarketModel) -> bool:
    """LP feasibility of a strictly positive martingale measure for S.

    Looks for weights q >= eps summing to 1 with zero conditional drift of
    dS at every node.
    """
    space = m.space
    n = space.n_scenarios
    rows = [np.ones(n)]
    rhs = [1.0]
    for t in range(m.horizon):
        for cell in space.partitions[t]:
            row = np.zeros(n)
            row[list(cell)] = m.dS[t, list(cell)]
            rows.append(row)
            rhs.append(0.0)
    res = linprog(
        c=np.zeros(n),
        A_eq=np.array(rows),
        b_eq=np.array(rhs),
        bounds=[(_NFLVR_EPS, 1.0)] * n,
        method="highs",
    )
    return bool(res.status == 0)


def position_endpoints(dS_children: np.ndarray) -> list[float]:
    """Finite endpoints of {H : 1 + H*dS >= 0 across the node's branches}."""
    ends = []
    pos = dS_children[dS_children > 0]
    neg = dS_children[dS_children < 0]
    if pos.size:
        ends.append(-1.0 / float(pos.max()))
    if neg.size:
        ends.append(1.0 / float(-neg.min()))
    return ends


@dataclass(frozen=True)
class NodeConstraints:
    """One tree node's linear deflator inequalities.

    For each position H in ``positions`` (always including 0):
        sum_c probs[c] * Y_child[c] * (1 + H * dS[c])  <=  Y_node.
    """

    time: int
    cell: tuple[int, ...]
    children: tuple[tuple[int, ...], ...]
    probs: np.ndarray        # conditional child probabilities
    dS: np.ndarray           # per-child price increment over (t, t+1]
    positions: tuple[float, ...]


@dataclass(frozen=True)
class DeflatorConstraintSet:
    """Node constraints for all tree nodes at times >= tau inside each atom."""

    atoms: tuple[tuple[int, ...], ...]
    atom_times: tuple[int, ...]
    # nodes[k] lists the NodeConstraints of the subtree rooted at atom k
    nodes: tuple[tuple[NodeConstraints, ...], ...]


def _node_constraints(m: MarketModel, t: int, cell) -> NodeConstraints:
    space = m.space
    children = [c for c in space.partitions[t + 1] if c[0] in cell]
    cp = np.array([space.cell_prob(c) for c in children])
    cp = cp / cp.sum()
    ds = np.array([m.dS[t, c[0]] for c in children])
    positions = [0.0] + position_endpoints(ds)
    if not np.all(np.isfinite(positions)):
        raise MarketError("non-finite constraint coefficients")
    return NodeConstraints(
        time=t, cell=tuple(cell), children=tuple(tuple(c) for c in children),
        probs=cp, dS=ds, positions=tuple(positions),
    )


def deflator_constraints(m: MarketModel, tau) -> DeflatorConstraintSet:
    """Supermartingale-deflator constraints on [tau, T], one block per F_tau atom."""
    space = m.space
    G = sigma_algebra_at(space, tau)
    tau = np.asarray(tau, dtype=int)
    atom_times = tuple(int(tau[a[0]]) for a in G.atoms)
    blocks = []
    for atom, t0 in zip(G.atoms, atom_times):
        nodes = []
        for t in range(t0, m.horizon):
            for cell in space.partitions[t]:
                # refinement makes cell either inside or disjoint from the atom
                if cell[0] in atom:
                    nodes.append(_node_constraints(m, t, cell))
        blocks.append(tuple(nodes))
    return DeflatorConstraintSet(
        atoms=G.atoms, atom_times=atom_times, nodes=tuple(blocks)
    )
