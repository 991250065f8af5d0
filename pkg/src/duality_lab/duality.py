"""Conditional primal and dual solvers on the tree, with verification helpers.

Each F_tau atom yields an independent small convex program.  The primal
maximizes expected utility of terminal wealth over per-node positions; the
dual minimizes the expected conjugate over the supermartingale-deflator
polytope.  Both are solved with a damped Newton log-barrier method
(mu-decrease x0.2) followed by a polish step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from . import _kernels
from .market import MarketModel, deflator_constraints, position_endpoints
from .space import sigma_algebra_at
from .utility import UtilityPair

__all__ = [
    "SolverError",
    "PrimalUnboundedError",
    "DualUnboundedError",
    "DualityResult",
    "primal_solve",
    "dual_solve",
    "dual_derivative",
    "DerivativeReport",
    "conjugacy_check",
    "dual_relation_check",
    "value_process",
    "brute_force_oracle",
    "dual_oracle",
]

_MU_SCHEDULE = tuple(0.2 ** k for k in range(17))  # 1.0 down to ~1.3e-12
# the strictly feasible start plus backtracking tolerates long mu jumps
_MU_FAST = (1e-2, 1e-5, 1e-8)
_GRAD_TOL = 1e-12
_MAX_NEWTON = 200


class SolverError(RuntimeError):
    pass


class PrimalUnboundedError(SolverError):
    pass


class DualUnboundedError(SolverError):
    pass


@dataclass
class DualityResult:
    """Per-atom values, optimizers and diagnostics of a conditional solve."""

    atoms: tuple
    atom_times: tuple
    atom_values_u: np.ndarray | None = None
    atom_values_v: np.ndarray | None = None
    X_hat: np.ndarray | None = None  # terminal optimal wealth, scenario-wise
    Y_hat: np.ndarray | None = None  # terminal optimal deflator, scenario-wise
    u_prime: np.ndarray | None = None
    v_prime: np.ndarray | None = None
    kkt_residual: float = 0.0
    wealth_path: np.ndarray | None = None    # (T+1, N); NaN before the atom time
    deflator_path: np.ndarray | None = None  # (T+1, N); NaN before the atom time

    def atom_vector(self, per_atom: np.ndarray, n: int) -> np.ndarray:
        """Spread per-atom values onto a scenario vector."""
        out = np.empty(n)
        for k, atom in enumerate(self.atoms):
            out[list(atom)] = per_atom[k]
        return out


def _per_atom_scalar(x, atoms, name: str) -> np.ndarray:
    """Scalar or F_tau-measurable vector -> one value per atom."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        vals = np.full(len(atoms), float(x))
    else:
        vals = np.empty(len(atoms))
        for k, atom in enumerate(atoms):
            chunk = x[list(atom)]
            if np.ptp(chunk) > 1e-12 * max(1.0, np.abs(chunk).max()):
                raise ValueError(f"{name} is not F_tau-measurable")
            vals[k] = chunk[0]
    if np.any(vals <= 0):
        raise ValueError(f"{name} must be strictly positive")
    return vals


class AtomProblem:
    """Geometry of the sub-tree rooted at one F_tau atom.

    Strategy variables live on the internal nodes (times t0..T-1); wealth at
    every later node is 1 + (row . H).  Terminal rows are ordered like the
    atom's scenarios.
    """

    def __init__(self, m: MarketModel, atom, t0: int):
        space = m.space
        self.m = m
        self.atom = tuple(atom)
        self.t0 = t0
        self.scen = list(atom)
        w = space.prob[self.scen]
        self.w = w / w.sum()
        T = m.horizon
        self.var_nodes = []  # (t, cell)
        var_index = {}
        for t in range(t0, T):
            for cell in space.partitions[t]:
                if cell[0] in self.atom:
                    var_index[(t, cell)] = len(self.var_nodes)
                    self.var_nodes.append((t, cell))
        self.dim = len(self.var_nodes)
        # wealth rows for every node strictly after t0
        self.wealth_nodes = []  # (t, cell)
        rows = []
        for t in range(t0 + 1, T + 1):
            for cell in space.partitions[t]:
                if cell[0] in self.atom:
                    row = np.zeros(self.dim)
                    rep = cell[0]
                    for s in range(t0, t):
                        parent = space.partitions[s][space.cell_index[s, rep]]
                        row[var_index[(s, parent)]] = m.dS[s, rep]
                    rows.append(row)
                    self.wealth_nodes.append((t, cell))
        self.C = np.array(rows) if rows else np.zeros((0, self.dim))
        # terminal rows in scenario order
        term_pos = {cell[0]: i for i, (t, cell) in enumerate(self.wealth_nodes)
                    if t == T}
        if self.dim:
            self.A = np.array([self.C[term_pos[i]] for i in self.scen])
        else:
            self.A = np.zeros((len(self.scen), 0))

    def wealth_at_nodes(self, h: np.ndarray) -> np.ndarray:
        return 1.0 + self.C @ h

    def terminal_wealth(self, h: np.ndarray) -> np.ndarray:
        return 1.0 + self.A @ h


def _newton(obj, x0, max_iter=_MAX_NEWTON, tol=_GRAD_TOL, big=1e10):
    """Minimize obj (callable returning value, grad, hess, feasible) by
    damped Newton with backtracking; the domain is enforced by obj returning
    feasible=False outside."""
    x = x0.copy()
    f, g, H = obj(x)
    for _ in range(max_iter):
        if np.max(np.abs(g)) <= tol:
            break
        try:
            step = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            step = -g
        alpha = 1.0
        accepted = False
        for _ in range(80):
            trial = x + alpha * step
            res = obj(trial)
            if res is not None and res[0] <= f - 1e-4 * alpha * max(
                0.0, -float(g @ step)
            ):
                x, (f, g, H) = trial, res
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        if not np.isfinite(f) or abs(f) > big or np.max(np.abs(x)) > big:
            raise SolverError("iterates diverged")
    return x, f, g


def _solve_primal_atom(prob: AtomProblem, u: UtilityPair, xi: float):
    """Returns (value, terminal wealth, node wealths, kkt residual, h)."""
    if prob.dim == 0:
        val = float(u.U(xi))
        return val, np.ones(len(prob.scen)), np.array([]), 0.0, np.zeros(0)

    w, A, C = prob.w, prob.A, prob.C

    def make_obj(mu):
        def obj(h):
            Wn = 1.0 + C @ h
            if np.any(Wn <= 0.0):
                return None
            x = xi * (1.0 + A @ h)
            # minimize the negated barrier objective
            f = -float(w @ u.U(x))
            g = -A.T @ (w * xi * np.asarray(u.Uprime(x)))
            H = -A.T @ (A * (w * xi ** 2 * np.asarray(u.Uprime2(x)))[:, None])
            if mu > 0.0:
                f -= mu * float(np.sum(np.log(Wn)))
                g -= mu * (C.T @ (1.0 / Wn))
                H += mu * (C.T @ (C / (Wn ** 2)[:, None]))
            return f, g, H

        return obj

    h = np.zeros(prob.dim)
    try:
        # U's own blow-up at zero wealth acts as the terminal barrier, so a
        # direct solve from the feasible start usually suffices
        h, f, g = _newton(make_obj(0.0), h)
        if np.max(np.abs(g)) > 1e-10:
            h = np.zeros(prob.dim)
            for mu in _MU_FAST:
                h, _, _ = _newton(make_obj(mu), h, max_iter=60,
                                  tol=max(1e-12, mu * 1e-3))
            h, f, g = _newton(make_obj(0.0), h)
    except SolverError as exc:
        raise PrimalUnboundedError("primal unbounded") from exc
    if np.max(np.abs(h)) > 1e8 or not np.isfinite(f):
        raise PrimalUnboundedError("primal unbounded")
    kkt = float(np.max(np.abs(g)))
    if kkt > 1e-8:
        raise SolverError(f"primal KKT residual {kkt} > 1e-8")
    return -f, prob.terminal_wealth(h), prob.wealth_at_nodes(h), kkt, h


def primal_solve(m: MarketModel, u: UtilityPair, tau, xi) -> DualityResult:
    """Conditional utility maximization at tau with F_tau-wealth xi."""
    space = m.space
    G = sigma_algebra_at(space, tau)
    tau = np.asarray(tau, dtype=int)
    atoms = G.atoms
    times = tuple(int(tau[a[0]]) for a in atoms)
    xi_atom = _per_atom_scalar(xi, atoms, "xi")
    n = space.n_scenarios
    values = np.empty(len(atoms))
    uprime = np.empty(len(atoms))
    X_hat = np.empty(n)
    path = np.full((m.horizon + 1, n), np.nan)
    kkt = 0.0
    for k, (atom, t0) in enumerate(zip(atoms, times)):
        prob = AtomProblem(m, atom, t0)
        val, xT, wn, res, _ = _solve_primal_atom(prob, u, xi_atom[k])
        values[k] = val
        X_hat[prob.scen] = xT
        kkt = max(kkt, res)
        uprime[k] = float(prob.w @ (xT * np.asarray(u.Uprime(xi_atom[k] * xT))))
        path[t0, prob.scen] = 1.0
        for (t, cell), wv in zip(prob.wealth_nodes, wn):
            path[t, list(cell)] = wv
    return DualityResult(
        atoms=atoms, atom_times=times, atom_values_u=values, X_hat=X_hat,
        u_prime=uprime, kkt_residual=kkt, wealth_path=path,
    )


def _dual_geometry(m: MarketModel, block, atom, t0):
    """Variable nodes (t > t0) and constraint rows for one atom's deflator set.

    Row semantics: a . Y <= b with the root value Y(atom, t0) fixed at 1.
    """
    space = m.space
    var_nodes = []
    var_index = {}
    for t in range(t0 + 1, m.horizon + 1):
        for cell in space.partitions[t]:
            if cell[0] in atom:
                var_index[(t, cell)] = len(var_nodes)
                var_nodes.append((t, cell))
    dim = len(var_nodes)
    rows, rhs = [], []
    for nc in block:
        for Hpos in nc.positions:
            a = np.zeros(dim)
            b = 0.0
            for c, pc, ds in zip(nc.children, nc.probs, nc.dS):
                a[var_index[(nc.time + 1, c)]] += pc * (1.0 + Hpos * ds)
            if nc.time == t0:
                b = 1.0
            else:
                a[var_index[(nc.time, nc.cell)]] -= 1.0
            rows.append(a)
            rhs.append(b)
    A = np.array(rows) if rows else np.zeros((0, dim))
    return var_nodes, var_index, A, np.array(rhs)


def _dual_start(m: MarketModel, var_nodes, atom, t0, shrink: float) -> np.ndarray:
    """Strictly feasible start: shrunk relative density path on the sub-tree."""
    y0 = np.empty(len(var_nodes))
    for j, (t, cell) in enumerate(var_nodes):
        rep = cell[0]
        y0[j] = shrink ** (t - t0) * m.Z[t, rep] / m.Z[t0, rep]
    return y0


def _solve_dual_atom(m: MarketModel, block, atom, t0, u: UtilityPair,
                     eta: float, shrink: float = 0.9):
    """Returns (value, terminal deflator, node values, var_nodes, kkt)."""
    space = m.space
    scen = list(atom)
    w = space.prob[scen]
    w = w / w.sum()
    if t0 == m.horizon:
        return float(u.V(eta)), np.ones(len(scen)), np.array([]), [], 0.0
    var_nodes, var_index, Amat, rhs = _dual_geometry(m, block, atom, t0)
    dim = len(var_nodes)
    term_rows = np.array([var_index[(m.horizon, (i,))] for i in scen])
    sel = np.zeros((len(scen), dim))
    sel[np.arange(len(scen)), term_rows] = 1.0

    def make_obj(mu):
        def obj(y):
            if np.any(y <= 0.0):
                return None
            s = rhs - Amat @ y
            if np.any(s <= 0.0):
                return None
            yT = y[term_rows]
            f = float(w @ u.V(eta * yT))
            g = sel.T @ (w * eta * np.asarray(u.Vprime(eta * yT)))
            # V'' = -I'
            H = sel.T @ (sel * (w * eta ** 2 * -np.asarray(u.Iprime(eta * yT)))[:, None])
            f -= mu * float(np.sum(np.log(s))) + mu * float(np.sum(np.log(y)))
            g += mu * (Amat.T @ (1.0 / s)) - mu / y
            H += mu * (Amat.T @ (Amat / (s ** 2)[:, None])) + np.diag(mu / y ** 2)
            return f, g, H

        return obj

    y = _dual_start(m, var_nodes, atom, t0, shrink)
    mu_final = 1e-11
    for mu in _MU_FAST:
        y, _, _ = _newton(make_obj(mu), y, max_iter=80, tol=max(1e-13, mu * 1e-4))
    y, f, g = _newton(make_obj(mu_final), y, tol=1e-13)
    if not np.isfinite(f) or f < -1e10:
        raise DualUnboundedError("dual unbounded below")
    yT = y[term_rows]
    val = float(w @ u.V(eta * yT))
    kkt = max(float(np.max(np.abs(g))), mu_final)
    return val, yT, y, var_nodes, kkt


def dual_solve(m: MarketModel, u: UtilityPair, tau, eta,
               shrink: float = 0.9) -> DualityResult:
    """Conditional dual minimization at tau over the deflator polytope.

    ``shrink`` only moves the strictly feasible starting point; the optimum
    does not depend on it (uniqueness check material).
    """
    space = m.space
    cs = deflator_constraints(m, tau)
    atoms, times = cs.atoms, cs.atom_times
    eta_atom = _per_atom_scalar(eta, atoms, "eta")
    n = space.n_scenarios
    values = np.empty(len(atoms))
    vprime = np.empty(len(atoms))
    Y_hat = np.empty(n)
    path = np.full((m.horizon + 1, n), np.nan)
    kkt = 0.0
    for k, (atom, t0, block) in enumerate(zip(atoms, times, cs.nodes)):
        val, yT, yn, var_nodes, res = _solve_dual_atom(
            m, block, atom, t0, u, eta_atom[k], shrink
        )
        scen = list(atom)
        w = space.prob[scen]
        w = w / w.sum()
        values[k] = val
        Y_hat[scen] = yT
        kkt = max(kkt, res)
        vprime[k] = -float(w @ (yT * np.asarray(u.I(eta_atom[k] * yT))))
        path[t0, scen] = 1.0
        for (t, cell), yv in zip(var_nodes, yn):
            path[t, list(cell)] = yv
    return DualityResult(
        atoms=atoms, atom_times=times, atom_values_v=values, Y_hat=Y_hat,
        v_prime=vprime, kkt_residual=kkt, deflator_path=path,
    )


@dataclass
class DerivativeReport:
    formula: np.ndarray       # per atom, -E[Y_hat I(eta Y_hat) | atom]
    finite_diff: np.ndarray   # central difference of the dual value
    max_rel_gap: float
    warning: str | None = None


def dual_derivative(m: MarketModel, u: UtilityPair, tau, eta,
                    rel_step: float = 1e-4) -> DerivativeReport:
    """Dual derivative by the optimizer formula and by central differences."""
    base = dual_solve(m, u, tau, eta)
    eta_atom = _per_atom_scalar(eta, base.atoms, "eta")
    up = dual_solve(m, u, tau, base.atom_vector(eta_atom * (1 + rel_step),
                                                m.space.n_scenarios))
    dn = dual_solve(m, u, tau, base.atom_vector(eta_atom * (1 - rel_step),
                                                m.space.n_scenarios))
    fd = (up.atom_values_v - dn.atom_values_v) / (2.0 * rel_step * eta_atom)
    denom = np.maximum(np.abs(base.v_prime), 1e-30)
    gap = float(np.max(np.abs(fd - base.v_prime) / denom))
    warning = "derivative inconsistency" if gap > 5e-3 else None
    return DerivativeReport(base.v_prime, fd, gap, warning)


def conjugacy_check(m: MarketModel, u: UtilityPair, tau, eta,
                    n_grid: int = 32, polish: bool = True) -> float:
    """Max per-atom residual |v(eta) - sup_xi (u(xi) - xi*eta)|.

    The sup runs over a geometric xi grid anchored at the inverse marginal;
    with ``polish`` the bracket around the grid argmax is refined by bounded
    scalar maximization (still using only primal solves).
    """
    dual = dual_solve(m, u, tau, eta)
    eta_atom = _per_atom_scalar(eta, dual.atoms, "eta")
    worst = 0.0
    for k, (atom, t0) in enumerate(zip(dual.atoms, dual.atom_times)):
        prob = AtomProblem(m, atom, t0)
        ev = eta_atom[k]
        grid = np.geomspace(float(u.I(ev * 1e3)), float(u.I(ev * 1e-3)), n_grid)

        def phi(xi):
            val, _, _, _, _ = _solve_primal_atom(prob, u, float(xi))
            return val - float(xi) * ev

        vals = np.array([phi(x) for x in grid])
        i = int(np.argmax(vals))
        best = float(vals[i])
        if polish:
            lo = grid[max(i - 1, 0)]
            hi = grid[min(i + 1, n_grid - 1)]
            res = minimize_scalar(
                lambda x: -phi(x), bounds=(lo, hi), method="bounded",
                options={"xatol": 1e-9 * grid[i]},
            )
            best = max(best, -float(res.fun))
        worst = max(worst, abs(dual.atom_values_v[k] - best))
    return worst


def dual_relation_check(m: MarketModel, u: UtilityPair, tau, xi) -> float:
    """Max relative residual of eta * Y_hat_T = U'(xi * X_hat_T), eta = u'(xi)."""
    primal = primal_solve(m, u, tau, xi)
    n = m.space.n_scenarios
    eta = primal.atom_vector(primal.u_prime, n)
    dual = dual_solve(m, u, tau, eta)
    xi_atom = _per_atom_scalar(xi, primal.atoms, "xi")
    xi_vec = primal.atom_vector(xi_atom, n)
    marg = np.asarray(u.Uprime(xi_vec * primal.X_hat))
    return float(np.max(np.abs(eta * dual.Y_hat - marg) / marg))


def value_process(m: MarketModel, u: UtilityPair, x: float):
    """The value process U_t = u_t(X_hat_t) along the time-0 optimal wealth.

    Returns (process array (T+1, N), max martingale residual), also checking
    u_t(X_hat_t) against E[U(X_hat_T) | F_t].
    """
    space = m.space
    n = space.n_scenarios
    T = m.horizon
    tau0 = np.zeros(n, dtype=int)
    res0 = primal_solve(m, u, tau0, float(x))
    W = res0.wealth_path * 0 + res0.wealth_path  # copy
    # absolute wealth: the atom problems are solved with unit start, scale by x
    W = x * res0.wealth_path
    UU = np.empty((T + 1, n))
    for t in range(T + 1):
        for cell in space.partitions[t]:
            rep = cell[0]
            wt = W[t, rep]
            prob = AtomProblem(m, cell, t)
            val, _, _, _, _ = _solve_primal_atom(prob, u, wt)
            UU[t, list(cell)] = val
    resid = 0.0
    term = np.asarray(u.U(W[T]))
    for t in range(T):
        for cell in space.partitions[t]:
            idx = list(cell)
            w = space.prob[idx]
            w = w / w.sum()
            resid = max(resid, abs(float(w @ UU[t + 1, idx]) - UU[t, idx[0]]))
            resid = max(resid, abs(float(w @ term[idx]) - UU[t, idx[0]]))
    return UU, float(resid)


def brute_force_oracle(m: MarketModel, u: UtilityPair, tau, xi, step: float,
                       bound_factor: float = 3.0, use_compiled: bool | None = None):
    """Exhaustive grid search over strategy variables, per atom.

    Independent of the Newton machinery; the returned values are within
    (Lipschitz * step) of the true optimum.  Refuses sub-trees with more
    than 4 strategy variables.
    """
    space = m.space
    G = sigma_algebra_at(space, tau)
    tau = np.asarray(tau, dtype=int)
    atoms = G.atoms
    times = [int(tau[a[0]]) for a in atoms]
    xi_atom = _per_atom_scalar(xi, atoms, "xi")
    if u.name == "log":
        code, param = 0, 0.0
    elif u.name.startswith("power["):
        code, param = 1, float(u.name[6:-1])
    else:
        raise ValueError("oracle supports the log and power built-ins only")
    if use_compiled is None:
        kern = _kernels.grid_search_max
    elif use_compiled:
        from ._kernels import _grid

        kern = _grid.grid_search_max
    else:
        kern = _kernels.fallback.grid_search_max
    out = np.empty(len(atoms))
    for k, (atom, t0) in enumerate(zip(atoms, times)):
        prob = AtomProblem(m, atom, t0)
        if prob.dim > 4:
            raise ValueError(f"oracle refuses dimension {prob.dim} > 4")
        if prob.dim == 0:
            out[k] = float(u.U(xi_atom[k]))
            continue
        lo = np.empty(prob.dim)
        hi = np.empty(prob.dim)
        for j, (t, cell) in enumerate(prob.var_nodes):
            children = [c for c in space.partitions[t + 1] if c[0] in cell]
            ds = np.array([m.dS[t, c[0]] for c in children])
            ends = position_endpoints(ds)
            lo[j] = bound_factor * min(ends) if ends else -bound_factor / step
            hi[j] = bound_factor * max(ends) if ends else bound_factor / step
        counts = np.maximum(np.floor((hi - lo) / step).astype(np.int64) + 1, 2)
        steps = np.full(prob.dim, step)
        val, _ = kern(prob.w, xi_atom[k], prob.A, prob.C, lo, steps, counts,
                      code, param)
        out[k] = val
    return out


def dual_oracle(m: MarketModel, u: UtilityPair, tau, eta, step: float,
                y_max: float | None = None):
    """Grid search over the deflator polytope; one-period atoms only.

    Verifies the dual solver on small fixtures; terminal deflator values are
    enumerated on a grid and checked against the node inequalities directly.
    """
    cs = deflator_constraints(m, tau)
    eta_atom = _per_atom_scalar(eta, cs.atoms, "eta")
    out = np.empty(len(cs.atoms))
    for k, (atom, t0, block) in enumerate(zip(cs.atoms, cs.atom_times, cs.nodes)):
        if t0 == m.horizon:
            out[k] = float(u.V(eta_atom[k]))
            continue
        if t0 != m.horizon - 1:
            raise ValueError("dual oracle handles one-period atoms only")
        (nc,) = block
        pc, ds = nc.probs, nc.dS
        nb = len(nc.children)
        ymax = y_max if y_max is not None else 1.0 / pc.min()
        grid = np.arange(step, ymax + step / 2, step)
        mesh = np.meshgrid(*([grid] * nb), indexing="ij")
        Y = np.stack([g.ravel() for g in mesh], axis=1)
        ok = np.ones(len(Y), dtype=bool)
        for H in nc.positions:
            ok &= Y @ (pc * (1.0 + H * ds)) <= 1.0 + 1e-12
        vals = np.asarray(u.V(eta_atom[k] * Y[ok])) @ pc
        out[k] = float(vals.min())
    return out
