"""Market-sequence stability experiments.

A perturbed family lam_n = lam + delta * g(n) of drifts around a base
market; the experiments track convergence of densities, value functions,
derivatives and optimal wealths back to the base quantities, plus uniform
convergence over convexly compact dual argument sets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .analysis import ConvexCompactSet, ftau_convex_net, ky_fan
from .duality import dual_solve, primal_solve, value_process
from .market import MarketModel, build_market, check_nflvr
from .utility import UtilityPair

__all__ = [
    "MarketSequence",
    "v_compactness_check",
    "CompactnessReport",
    "appropriate_convergence_check",
    "StabilityReport",
    "run_stability_experiment",
    "UniformConvergenceReport",
    "uniform_convergence_on_set",
]


def _decay_fn(decay):
    if callable(decay):
        return decay
    if decay == "1/n":
        return lambda n: 1.0 / n
    if decay == "1/n^2":
        return lambda n: 1.0 / n ** 2
    if isinstance(decay, (list, tuple, np.ndarray)):
        table = np.asarray(decay, dtype=float)
        return lambda n: float(table[n - 1])
    raise ValueError(f"unknown decay rule {decay!r}")


@dataclass
class MarketSequence:
    """Perturbed drifts lam_n = lam + delta * g(n), n = 1..N_max."""

    base: MarketModel
    delta: np.ndarray
    decay: object
    N_max: int
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.delta = np.asarray(self.delta, dtype=float)
        if self.delta.shape != self.base.lam.shape:
            raise ValueError("delta must match the base lam shape")
        self._g = _decay_fn(self.decay)
        if self.N_max < 1:
            raise ValueError("N_max must be at least 1")

    def g(self, n: int) -> float:
        return float(self._g(n))

    def market(self, n: int) -> MarketModel:
        """The n-th perturbed market (n >= 1); validated against arbitrage."""
        if n not in self._cache:
            m = build_market(
                self.base.space, self.base.dM, self.base.lam + self.delta * self.g(n)
            )
            if not check_nflvr(m):
                raise ValueError(f"perturbed market at n={n} admits arbitrage")
            self._cache[n] = m
        return self._cache[n]


@dataclass(frozen=True)
class CompactnessReport:
    ok: bool
    bound: float          # sup_n E[V(Z_T^n)^2]
    per_n: np.ndarray
    growth_flag: bool


def v_compactness_check(seq: MarketSequence, u: UtilityPair,
                        growth_ratio: float = 1.05) -> CompactnessReport:
    """Uniform-integrability surrogate for {V(Z_T^n)}: second-moment envelope.

    Passes iff the per-n bounds are finite and stop growing (ratio of
    successive running sups within ``growth_ratio`` over the trailing half).
    """
    prob = seq.base.space.prob
    per_n = np.empty(seq.N_max)
    for n in range(1, seq.N_max + 1):
        vz = np.asarray(u.V(seq.market(n).Z[-1]), dtype=float)
        per_n[n - 1] = float(prob @ vz ** 2)
    sups = np.maximum.accumulate(per_n)
    growth_flag = False
    half = max(1, seq.N_max // 2)
    tail = sups[-half:]
    if len(tail) > 1 and np.all(tail[1:] > growth_ratio * tail[:-1]):
        growth_flag = True
    return CompactnessReport(
        ok=bool(np.all(np.isfinite(per_n)) and not growth_flag),
        bound=float(sups[-1]), per_n=per_n, growth_flag=growth_flag,
    )


def appropriate_convergence_check(seq: MarketSequence, tol: float = 1e-3,
                                  burn_in: int = 4):
    """Ky Fan distances d(Z_T^n, Z_T) per n; pass iff they trend down to tol.

    The pass criterion is the finite-sequence surrogate: nonincreasing after
    ``burn_in`` and final value <= tol.
    """
    prob = seq.base.space.prob
    Z_lim = seq.base.Z[-1]
    dist = np.empty(seq.N_max)
    for n in range(1, seq.N_max + 1):
        dist[n - 1] = ky_fan(seq.market(n).Z[-1], Z_lim, prob)
    tail = dist[burn_in - 1:]
    ok = bool(np.all(np.diff(tail) <= 1e-15) and dist[-1] <= tol)
    return dist, ok


@dataclass
class StabilityReport:
    """Per-n distances between perturbed and base solutions.

    Columns: dZ (terminal densities), dXT / dXtau (terminal and time-tau
    optimal wealths of the time-0 problem), du / dv (per-atom value gaps at
    tau), dvprime (dual derivative gap), ducp (max node gap of the value
    processes).
    """

    n: np.ndarray
    dZ: np.ndarray
    dXT: np.ndarray
    dXtau: np.ndarray
    du: np.ndarray
    dv: np.ndarray
    dvprime: np.ndarray
    ducp: np.ndarray
    v_compactness_bound: float

    def columns(self):
        return {
            "n": self.n, "dZ": self.dZ, "dXT": self.dXT, "dXtau": self.dXtau,
            "du": self.du, "dv": self.dv, "dvprime": self.dvprime,
            "ducp": self.ducp,
        }

    def monotone_after(self, burn_in: int = 4) -> bool:
        ok = True
        for name, col in self.columns().items():
            if name == "n":
                continue
            tail = col[burn_in - 1:]
            ok = ok and bool(np.all(np.diff(tail) <= 1e-12))
        return ok

    def final_below(self, tol: float) -> bool:
        return bool(
            max(self.dZ[-1], self.dXT[-1], self.dXtau[-1], self.du[-1],
                self.dv[-1], self.dvprime[-1]) <= tol
        )


def _tau_wealth(m: MarketModel, wealth_path: np.ndarray, tau, x: float):
    tau = np.asarray(tau, dtype=int)
    n = m.space.n_scenarios
    return x * wealth_path[tau, np.arange(n)]


def run_stability_experiment(seq: MarketSequence, u: UtilityPair, tau, xi,
                             eta, xi_seq=None) -> StabilityReport:
    """Full per-n comparison of the perturbed solves against the base market.

    ``xi`` must be a scalar here (it doubles as the time-0 wealth of the
    value-process column); ``xi_seq`` optionally maps n to a perturbed wealth
    for the joint-continuity variant of the du column.
    """
    xi = float(xi)
    tau = np.asarray(tau, dtype=int)
    comp = v_compactness_check(seq, u)
    if not comp.ok:
        raise ValueError("V-compactness check failed for the sequence")
    _, conv_ok = appropriate_convergence_check(seq)
    if not conv_ok:
        raise ValueError("appropriate-convergence check failed for the sequence")
    base = seq.base
    space = base.space
    prob = space.prob
    tau0 = np.zeros(space.n_scenarios, dtype=int)

    p0 = primal_solve(base, u, tau0, xi)
    XT = xi * p0.wealth_path[-1]
    Xtau = _tau_wealth(base, p0.wealth_path, tau, xi)
    ptau = primal_solve(base, u, tau, xi)
    dtau = dual_solve(base, u, tau, eta)
    UU, _ = value_process(base, u, xi)

    cols = {k: np.empty(seq.N_max) for k in
            ("dZ", "dXT", "dXtau", "du", "dv", "dvprime", "ducp")}
    for n in range(1, seq.N_max + 1):
        m = seq.market(n)
        xin = xi if xi_seq is None else float(xi_seq(n))
        try:
            p0n = primal_solve(m, u, tau0, xin)
            ptn = primal_solve(m, u, tau, xin)
            dtn = dual_solve(m, u, tau, eta)
            UUn, _ = value_process(m, u, xin)
        except Exception as exc:
            raise RuntimeError(f"solver failure at sequence index n={n}") from exc
        cols["dZ"][n - 1] = ky_fan(m.Z[-1], base.Z[-1], prob)
        cols["dXT"][n - 1] = ky_fan(xin * p0n.wealth_path[-1], XT, prob)
        cols["dXtau"][n - 1] = ky_fan(
            _tau_wealth(m, p0n.wealth_path, tau, xin), Xtau, prob
        )
        cols["du"][n - 1] = float(np.max(np.abs(ptn.atom_values_u - ptau.atom_values_u)))
        cols["dv"][n - 1] = float(np.max(np.abs(dtn.atom_values_v - dtau.atom_values_v)))
        cols["dvprime"][n - 1] = float(np.max(np.abs(dtn.v_prime - dtau.v_prime)))
        cols["ducp"][n - 1] = float(np.nanmax(np.abs(UUn - UU)))
    return StabilityReport(
        n=np.arange(1, seq.N_max + 1), v_compactness_bound=comp.bound, **cols
    )


@dataclass
class UniformConvergenceReport:
    n: np.ndarray
    sup_gap_v: np.ndarray       # per n, sup over the net of per-atom |v^n - v|
    sup_gap_vprime: np.ndarray
    lipschitz: np.ndarray       # per n, empirical Lipschitz constant on the net
    min_value: float            # bounded-below constant over net and n
    net_size: int

    def lipschitz_uniform(self, slack: float = 1.10) -> bool:
        """A single constant certifies all n (max within slack of the median)."""
        med = float(np.median(self.lipschitz))
        return bool(self.lipschitz.max() <= slack * max(med, 1e-30))


def uniform_convergence_on_set(seq: MarketSequence, u: UtilityPair, tau,
                               K: ConvexCompactSet, r: float = 1e-2,
                               seed: int = 0) -> UniformConvergenceReport:
    """Sup over an F_tau-convex r-net of K of the dual value/derivative gaps.

    K must sit strictly inside the positive cone; its members are dual
    arguments eta.  The empirical Lipschitz constant of v^n on the net is
    reported so a single bound can certify equicontinuity across n.
    """
    if np.any(K.lo <= 0):
        raise ValueError("K must be bounded away from 0")
    net = ftau_convex_net(K, r, seed=seed)
    etas = [K.member_to_rv(mem) for mem in net]
    base_solves = [dual_solve(seq.base, u, tau, e) for e in etas]
    sup_v = np.empty(seq.N_max)
    sup_vp = np.empty(seq.N_max)
    lips = np.empty(seq.N_max)
    min_value = np.inf
    for n in range(1, seq.N_max + 1):
        m = seq.market(n)
        solves = [dual_solve(m, u, tau, e) for e in etas]
        sup_v[n - 1] = max(
            float(np.max(np.abs(s.atom_values_v - b.atom_values_v)))
            for s, b in zip(solves, base_solves)
        )
        sup_vp[n - 1] = max(
            float(np.max(np.abs(s.v_prime - b.v_prime)))
            for s, b in zip(solves, base_solves)
        )
        min_value = min(min_value, *(float(s.atom_values_v.min()) for s in solves))
        lip = 0.0
        for i in range(len(net)):
            for j in range(i + 1, len(net)):
                dx = np.abs(net[i] - net[j])
                dv = np.abs(solves[i].atom_values_v - solves[j].atom_values_v)
                mask = dx > 1e-12
                if mask.any():
                    lip = max(lip, float((dv[mask] / dx[mask]).max()))
        lips[n - 1] = lip
    return UniformConvergenceReport(
        n=np.arange(1, seq.N_max + 1), sup_gap_v=sup_v, sup_gap_vprime=sup_vp,
        lipschitz=lips, min_value=float(min_value), net_size=len(net),
    )
