"""Conditional-analysis utilities.

Convergence-in-probability metric, pointwise limsup/liminf surrogates,
conditional uniform-integrability diagnostics, F_tau-convex and partition
sub-convex epsilon nets with sampled cover certificates, and a grid verifier
for the conditional minimax equality.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .market import MarketModel, deflator_constraints
from .space import FilteredSpace, SigmaAlgebra, _atom_values

__all__ = [
    "ky_fan",
    "p_lim_extremum",
    "UIReport",
    "cond_ui_check",
    "ConvexCompactSet",
    "ftau_convex_net",
    "partition_subconvex_net",
    "net_cover_certificate",
    "MinimaxGapReport",
    "conditional_minimax_verify",
    "deflator_frontier_grid",
]

_NET_MAX_ITER = 10_000
_MINIMAX_MAX_COMBOS = 20_000_000


def ky_fan(X, Y, prob) -> float:
    """E[min(|X - Y|, 1)]; metrizes convergence in probability."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    prob = np.asarray(prob, dtype=float)
    if X.shape != Y.shape or X.shape != prob.shape:
        raise ValueError("X, Y and prob must have equal length")
    return float(prob @ np.minimum(np.abs(X - Y), 1.0))


def p_lim_extremum(terms, mode: str, window: int | None = None) -> np.ndarray:
    """Pointwise limsup/liminf surrogate from a finite prefix.

    Takes the per-scenario max (limsup) or min (liminf) over the trailing
    ``window`` terms (default: latter half, at least 2).  Exact for
    eventually periodic sequences whose period divides the window; within
    the tail's sup-norm oscillation otherwise.  Non-finite inputs are
    rejected rather than modeled as extended values.
    """
    if mode not in ("limsup", "liminf"):
        raise ValueError("mode must be 'limsup' or 'liminf'")
    arr = np.stack([np.asarray(t, dtype=float) for t in terms])
    if not np.all(np.isfinite(arr)):
        raise ValueError("sequence terms must be finite-valued")
    if window is None:
        window = max(2, len(terms) // 2)
    tail = arr[-window:]
    return tail.max(axis=0) if mode == "limsup" else tail.min(axis=0)


@dataclass(frozen=True)
class UIReport:
    ok: bool
    bound: float
    per_member: np.ndarray  # max-over-atoms conditional moment, per family member
    growth_flag: bool


def cond_ui_check(family, G: SigmaAlgebra, growth, space: FilteredSpace,
                  growth_ratio: float = 1.05) -> UIReport:
    """Conditional de la Vallee-Poussin surrogate.

    Reports the per-atom bound sup over the family of E[growth(|X|) | G] and
    flags unbounded growth when the per-member bounds keep increasing by
    more than ``growth_ratio`` across the family's trailing members.
    """
    xs = np.geomspace(1.0, 1e4, 9)
    ratios = np.asarray(growth(xs), dtype=float) / xs
    if np.any(np.diff(ratios) <= 0) or ratios[-1] < 10.0 * ratios[0]:
        raise ValueError("growth function is not superlinear on the test grid")
    if not family:
        return UIReport(True, 0.0, np.zeros(0), False)
    per_member = np.empty(len(family))
    for j, X in enumerate(family):
        gx = np.asarray(growth(np.abs(np.asarray(X, dtype=float))))
        worst = 0.0
        for atom in G.atoms:
            idx = list(atom)
            w = space.prob[idx]
            worst = max(worst, float(w @ gx[idx] / w.sum()))
        per_member[j] = worst
    growth_flag = False
    if len(family) >= 4:
        tail = per_member[-4:]
        growth_flag = bool(np.all(tail[1:] > growth_ratio * tail[:-1]))
    return UIReport(not growth_flag, float(per_member.max()), per_member,
                    growth_flag)


@dataclass(frozen=True)
class ConvexCompactSet:
    """F_tau-convex hull of finitely many F_tau-measurable variables.

    Per atom the value set is the interval [lo, hi]; with positive=True the
    set is asserted to sit inside the strictly positive cone.
    """

    space: FilteredSpace
    G: SigmaAlgebra
    lo: np.ndarray  # per atom
    hi: np.ndarray  # per atom
    positive: bool = True

    def __post_init__(self):
        if self.lo.shape != self.hi.shape or len(self.lo) != self.G.n_atoms:
            raise ValueError("lo/hi must hold one value per atom")
        if np.any(self.lo > self.hi):
            raise ValueError("lo must not exceed hi")
        if self.positive and np.any(self.lo <= 0):
            raise ValueError("set flagged positive but lo touches 0")

    @classmethod
    def from_generators(cls, space, G, generators, positive=True):
        vals = np.stack([_atom_values(np.asarray(g, float), G) for g in generators])
        return cls(space, G, vals.min(axis=0), vals.max(axis=0), positive)

    @classmethod
    def order_interval(cls, space, G, a, b, positive=True):
        n = G.n_atoms
        return cls(space, G, np.full(n, float(a)), np.full(n, float(b)), positive)

    def atom_probs(self) -> np.ndarray:
        return np.array([self.space.prob[list(a)].sum() for a in self.G.atoms])

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """One member, as its per-atom value vector."""
        return self.lo + rng.random(len(self.lo)) * (self.hi - self.lo)

    def member_to_rv(self, member: np.ndarray) -> np.ndarray:
        out = np.empty(self.space.n_scenarios)
        for k, atom in enumerate(self.G.atoms):
            out[list(atom)] = member[k]
        return out


def _hull_distance(member, net, pa, mode: str) -> float:
    """Ky Fan distance from a member (per-atom values) to the net's hull.

    mode 'convex': per-atom interval [min, max] of the net values.
    mode 'partition': dominated splices reach everything below the per-atom
    net maximum, so only exceeding the top contributes.
    """
    net = np.asarray(net)
    top = net.max(axis=0)
    if mode == "convex":
        bot = net.min(axis=0)
        dist = np.maximum(np.maximum(bot - member, member - top), 0.0)
    else:
        dist = np.maximum(member - top, 0.0)
    return float(pa @ np.minimum(dist, 1.0))


def _greedy_net(K: ConvexCompactSet, r: float, mode: str, seed: int):
    if r <= 0:
        raise ValueError("r must be positive")
    if mode == "partition" and np.any(K.lo <= 0):
        raise ValueError("partition sub-convex nets need K inside the positive cone")
    pa = K.atom_probs()
    rng = np.random.default_rng(seed)
    net = []
    for it in range(_NET_MAX_ITER):
        if it == 0:
            cand = K.lo.copy()
        elif it == 1:
            cand = K.hi.copy()
        else:
            cand = K.sample(rng)
        if not net or _hull_distance(cand, net, pa, mode) > r:
            net.append(cand)
            if len(net) > 100:
                raise RuntimeError("net construction failed to terminate")
        # once the interval corners are in the hull the whole set is covered
        if it >= 1 and _hull_distance(K.hi, net, pa, mode) <= 1e-15 and (
            mode == "partition" or _hull_distance(K.lo, net, pa, mode) <= 1e-15
        ):
            break
    return net


def ftau_convex_net(K: ConvexCompactSet, r: float, seed: int = 0):
    """Finite list of members whose F_tau-convex hull is an r-cover of K.

    Greedy: append any candidate lying further than r (Ky Fan) from the
    current hull; candidates are the interval corners followed by seeded
    random members.
    """
    return _greedy_net(K, r, "convex", seed)


def partition_subconvex_net(K: ConvexCompactSet, r: float, seed: int = 0):
    """Net whose partition sub-convex hull (dominated splices) r-covers K."""
    return _greedy_net(K, r, "partition", seed)


def net_cover_certificate(K: ConvexCompactSet, net, r: float, mode: str = "convex",
                          n_samples: int = 10_000, seed: int = 12345):
    """Sampled cover check: (violations, worst distance) over random members."""
    pa = K.atom_probs()
    rng = np.random.default_rng(seed)
    worst = 0.0
    violations = 0
    for _ in range(n_samples):
        d = _hull_distance(K.sample(rng), net, pa, mode)
        worst = max(worst, d)
        if d > r:
            violations += 1
    return violations, worst


@dataclass(frozen=True)
class MinimaxGapReport:
    atoms: tuple
    sup_inf: np.ndarray  # per atom: sup_x inf_y of the kernel on the grids
    inf_sup: np.ndarray
    gap: np.ndarray      # inf_sup - sup_inf, nonnegative up to roundoff


def _pareto_hull_rows(Y: np.ndarray) -> np.ndarray:
    """Rows sufficient for maximizing linear functionals over the set Y.

    The maximum of a linear functional over a finite set is attained at a
    vertex of its convex hull, so the hull vertices are an exact reduction.
    Degenerate geometry falls back to the full row set.
    """
    if len(Y) > 16 and Y.shape[1] >= 2:
        try:
            from scipy.spatial import ConvexHull

            Y = Y[np.unique(ConvexHull(Y).vertices)]
        except Exception:
            pass
    return np.ascontiguousarray(Y)


def conditional_minimax_verify(space: FilteredSpace, G: SigmaAlgebra,
                               u, Y_atoms, x_lo: float, x_hi: float,
                               x_step: float, eta: float = 1.0) -> MinimaxGapReport:
    """Per-atom minimax gap of K(x, Y) = E[U(x) - eta x Y | atom] on grids.

    x ranges over the product grid [x_lo, x_hi] step ``x_step`` per scenario;
    Y over the supplied finite per-atom row sets.  inf-sup decouples per
    scenario; sup-inf enumerates the x grid against the componentwise-maximal
    hull vertices of the Y rows (an exact reduction for x >= 0).
    """
    xvals = np.arange(x_lo, x_hi + x_step / 2, x_step)
    uvals = np.asarray(u.U(xvals), dtype=float)
    sup_inf = np.empty(G.n_atoms)
    inf_sup = np.empty(G.n_atoms)
    for k, atom in enumerate(G.atoms):
        idx = list(atom)
        if len(idx) > 4:
            raise ValueError("minimax verifier handles at most 4 scenarios per atom")
        w = space.prob[idx]
        w = w / w.sum()
        Y = np.asarray(Y_atoms[k], dtype=float)
        if Y.ndim != 2 or Y.shape[1] != len(idx):
            raise ValueError("Y rows must match the atom's scenario count")
        if len(xvals) ** len(idx) > _MINIMAX_MAX_COMBOS:
            raise ValueError("x grid too large; refusing the enumeration")
        if len(Y) == 1:
            # no inner optimization; the outer sup decouples per scenario
            val = sum(
                w[i] * float((uvals - eta * xvals * Y[0, i]).max())
                for i in range(len(idx))
            )
            sup_inf[k] = inf_sup[k] = val
            continue
        if len(xvals) == 1:
            # single x; both orders reduce to the same min over Y
            ky = (w * (uvals[0] - eta * xvals[0] * Y)).sum(axis=1)
            sup_inf[k] = inf_sup[k] = float(ky.min())
            continue
        # inf over Y of the per-scenario decoupled sup
        best = np.inf
        for start in range(0, len(Y), 4096):
            chunk = Y[start:start + 4096]
            tot = np.zeros(len(chunk))
            for i in range(len(idx)):
                vals = uvals[:, None] - eta * np.outer(xvals, chunk[:, i])
                tot += w[i] * vals.max(axis=0)
            best = min(best, float(tot.min()))
        inf_sup[k] = best
        Yred = _pareto_hull_rows(Y) * eta
        sup_inf[k] = float(_kernels.maximin_value(w, xvals, uvals, Yred))
    return MinimaxGapReport(G.atoms, sup_inf, inf_sup, inf_sup - sup_inf)


def deflator_frontier_grid(m: MarketModel, tau, step: float,
                           y_max: float | None = None, offset: float = 0.0):
    """Per-atom grid rows on the deflator polytope's upper (Pareto) frontier.

    One-period atoms only: for each grid choice of the first k-1 terminal
    values the last is pushed to the largest feasible grid level.  The
    frontier is sufficient both for minimizing decreasing objectives and for
    maximizing nonnegative linear ones over the full grid polytope.

    ``offset`` (in cells, 0 <= offset < 1) shifts the grid to
    (k + offset) * step; a half-cell offset keeps exact optimizers off the
    grid so discretization error is visible rather than cancelled.
    """
    cs = deflator_constraints(m, tau)
    out = []
    for atom, t0, block in zip(cs.atoms, cs.atom_times, cs.nodes):
        if t0 == m.horizon:
            out.append(np.ones((1, len(atom))))
            continue
        if t0 != m.horizon - 1:
            raise ValueError("frontier grid handles one-period atoms only")
        (nc,) = block
        k = len(nc.children)
        if k > 4:
            raise ValueError("frontier grid handles at most 4 branches")
        # constraint rows a . Y <= 1, all coefficients nonnegative
        A = np.stack([nc.probs * (1.0 + H * nc.dS) for H in nc.positions])
        A = np.maximum(A, 0.0)
        ymax = y_max if y_max is not None else 1.0 / float(nc.probs.min())
        kmin = 1 if offset == 0.0 else 0
        grid = (np.arange(kmin, int(np.ceil(ymax / step)) + 1) + offset) * step
        grid = grid[(grid > 0) & (grid <= ymax + step / 2)]

        def floor_to_grid(vals):
            return (np.floor(vals / step - offset + 1e-9) + offset) * step

        if k == 1:
            top = float(floor_to_grid(np.array([1.0 / A[:, 0].max()]))[0])
            out.append(np.array([[top]]))
            continue
        mesh = np.meshgrid(*([grid] * (k - 1)), indexing="ij")
        head = np.stack([g.ravel() for g in mesh], axis=1)
        used = head @ A[:, :-1].T  # (combos, rows)
        last = A[:, -1]
        cap = np.full(len(head), ymax)
        ok = np.ones(len(head), dtype=bool)
        for r in range(len(A)):
            slack = 1.0 - used[:, r]
            if last[r] > 1e-14:
                cap = np.minimum(cap, slack / last[r])
            else:
                ok &= slack >= 0.0
        yk = floor_to_grid(cap)
        ok &= yk >= grid[0] - 1e-12
        rows = np.concatenate([head[ok], yk[ok, None]], axis=1)
        out.append(np.ascontiguousarray(rows))
    return out
