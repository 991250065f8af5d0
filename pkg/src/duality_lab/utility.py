"""Utility/conjugate pairs with Inada and asymptotic-elasticity diagnostics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

__all__ = [
    "UtilityPair",
    "log_utility",
    "power_utility",
    "table_utility",
    "conjugate_eval",
    "conjugate_grid",
    "asymptotic_elasticity_estimate",
    "ae_dual_bound_check",
]

_AE_GRID = 10.0 ** np.arange(2, 9)  # x = 1e2 .. 1e8
_INADA_GRID = np.geomspace(1e-8, 1e8, 33)


@dataclass(frozen=True)
class UtilityPair:
    """A utility U on (0, inf) together with its dual data.

    I is the inverse marginal (U')^{-1}; V the convex conjugate
    V(y) = sup_x (U(x) - x y); ae_bound the claimed asymptotic elasticity;
    alpha the dual growth exponent with V(mu*y) < mu^(-alpha) V(y) near 0;
    y0 the largest dual argument at which that bound is asserted.
    """

    name: str
    U: Callable
    Uprime: Callable
    Uprime2: Callable
    I: Callable
    Iprime: Callable
    V: Callable
    Vprime: Callable
    ae_bound: float
    alpha: float
    y0: float

    def __post_init__(self):
        xs = _INADA_GRID
        u = self.U(xs)
        up = self.Uprime(xs)
        if np.any(np.diff(u) <= 0):
            raise ValueError(f"{self.name}: U is not strictly increasing on the grid")
        if np.any(np.diff(up) >= 0):
            raise ValueError(f"{self.name}: U' is not strictly decreasing on the grid")
        # Inada surrogate at the grid edges: the marginal crosses 1 strictly,
        # so the inverse marginal is interior on the working range (the full
        # blow-up/vanishing is only a limit statement, unobservable on a grid)
        if not (up[0] > 1.0 and up[-1] < 1.0):
            raise ValueError(f"{self.name}: Inada conditions fail on [1e-8, 1e8]")
        est = asymptotic_elasticity_estimate(self)
        if est >= 1.0:
            raise ValueError(f"{self.name}: asymptotic elasticity estimate {est} >= 1")
        if est > self.ae_bound + 1e-3:
            raise ValueError(
                f"{self.name}: elasticity estimate {est} exceeds claimed bound"
            )


def log_utility() -> UtilityPair:
    return UtilityPair(
        name="log",
        U=np.log,
        Uprime=lambda x: 1.0 / np.asarray(x, dtype=float),
        Uprime2=lambda x: -1.0 / np.asarray(x, dtype=float) ** 2,
        I=lambda y: 1.0 / np.asarray(y, dtype=float),
        Iprime=lambda y: -1.0 / np.asarray(y, dtype=float) ** 2,
        V=lambda y: -np.log(y) - 1.0,
        Vprime=lambda y: -1.0 / np.asarray(y, dtype=float),
        ae_bound=0.1,
        alpha=1.0,
        # V(mu y) <= V(y)/mu reduces to V(y) >= mu(-ln mu)/(1 - mu), whose
        # sup over mu in (0,1) is 1; V(y) >= 1 means y <= e^-2.
        y0=float(np.exp(-2.0)),
    )


def power_utility(p: float) -> UtilityPair:
    if not 0.0 < p < 1.0:
        raise ValueError("power exponent must lie in (0, 1)")
    q = p / (1.0 - p)  # V(y) = ((1-p)/p) * y^(-q)
    coef = (1.0 - p) / p

    return UtilityPair(
        name=f"power[{p}]",
        U=lambda x: np.asarray(x, dtype=float) ** p / p,
        Uprime=lambda x: np.asarray(x, dtype=float) ** (p - 1.0),
        Uprime2=lambda x: (p - 1.0) * np.asarray(x, dtype=float) ** (p - 2.0),
        I=lambda y: np.asarray(y, dtype=float) ** (1.0 / (p - 1.0)),
        Iprime=lambda y: (1.0 / (p - 1.0))
        * np.asarray(y, dtype=float) ** (1.0 / (p - 1.0) - 1.0),
        V=lambda y: coef * np.asarray(y, dtype=float) ** (-q),
        Vprime=lambda y: -np.asarray(y, dtype=float) ** (-q - 1.0),
        ae_bound=p,
        alpha=q,
        y0=np.inf,  # V > 0 everywhere, the growth bound holds for all y
    )


def table_utility(points, ae_bound: float = 0.9) -> UtilityPair:
    """Utility given as tabulated (x, U(x)) pairs, monotone-cubic interpolated.

    The table must span the working range (the validation grid reaches
    [1e-8, 1e8]); outside it the interpolant's own cubic extension applies
    and no shape guarantees are made.  The inverse marginal is solved inside
    the table and clamped at its edges.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 4:
        raise ValueError("need at least 4 (x, U) pairs")
    xs, us = pts[:, 0], pts[:, 1]
    if np.any(np.diff(xs) <= 0):
        raise ValueError("x grid must be strictly increasing")
    interp = PchipInterpolator(xs, us, extrapolate=True)
    dinterp = interp.derivative()
    d2interp = interp.derivative(2)

    def U(x):
        return interp(np.asarray(x, dtype=float))

    def Uprime(x):
        return dinterp(np.asarray(x, dtype=float))

    def Uprime2(x):
        return d2interp(np.asarray(x, dtype=float))

    def I(y):
        y = np.asarray(y, dtype=float)

        def solve_one(yv):
            lo, hi = xs[0], xs[-1]
            dlo, dhi = dinterp(lo), dinterp(hi)
            if yv >= dlo:
                return lo
            if yv <= dhi:
                return hi
            return brentq(lambda x: dinterp(x) - yv, lo, hi, xtol=1e-14)

        return np.vectorize(solve_one)(y) if y.ndim else float(solve_one(float(y)))

    def V(y):
        x = I(y)
        return U(x) - x * np.asarray(y, dtype=float)

    def Vprime(y):
        return -np.asarray(I(y), dtype=float)

    def Iprime(y):
        x = np.asarray(I(y), dtype=float)
        return 1.0 / d2interp(x)

    alpha = ae_bound / (1.0 - ae_bound)
    return UtilityPair(
        name="table", U=U, Uprime=Uprime, Uprime2=Uprime2, I=I, Iprime=Iprime,
        V=V, Vprime=Vprime,
        ae_bound=ae_bound, alpha=alpha, y0=_calibrate_y0(V, alpha),
    )


def _calibrate_y0(V, alpha: float) -> float:
    """Largest scanned y below which V(mu y) <= mu^-alpha V(y) verifies."""
    ys = np.geomspace(1e-8, 1e2, 101)
    mus = np.linspace(0.1, 0.95, 18)
    ok = np.ones(len(ys), dtype=bool)
    for j, y in enumerate(ys):
        vy = float(V(y))
        for mu in mus:
            if float(V(mu * y)) > mu ** (-alpha) * vy + 1e-12:
                ok[j] = False
                break
    good = np.where(~ok)[0]
    if good.size == 0:
        return float(ys[-1])
    first_bad = int(good[0])
    return float(ys[first_bad - 1]) if first_bad > 0 else 1e-8


def conjugate_eval(u: UtilityPair, y: float) -> float:
    """V(y) for y > 0."""
    if y <= 0:
        raise ValueError("conjugate argument must be positive")
    return float(u.V(y))


def conjugate_grid(u: UtilityPair, y: float, n: int = 4001) -> float:
    """Numerical sup_x (U(x) - x y) over a log grid; oracle for conjugate_eval."""
    if y <= 0:
        raise ValueError("conjugate argument must be positive")
    xs = np.geomspace(1e-8, 1e8, n)
    return float(np.max(u.U(xs) - xs * y))


def asymptotic_elasticity_estimate(u: UtilityPair) -> float:
    """Numerical limsup of x U'(x)/U(x): max of the ratio at the deep grid tail.

    Evaluated only where U > 0, per the x -> infinity nature of the limsup.
    """
    ratios = []
    for x in _AE_GRID:
        uval = float(u.U(x))
        if uval > 0:
            ratios.append(x * float(u.Uprime(x)) / uval)
    if not ratios:
        raise ValueError("U is nonpositive on the whole elasticity grid")
    return float(max(ratios[-3:])) if len(ratios) >= 3 else float(max(ratios))


def ae_dual_bound_check(u: UtilityPair, mu: float, y: float) -> bool:
    """True iff V(mu*y) <= mu^(-alpha) V(y), up to a 1e-9 boundary margin.

    The power family saturates the inequality, hence the tolerance.
    """
    if not 0.0 < mu < 1.0:
        raise ValueError("mu must lie in (0, 1)")
    if not 0.0 < y <= u.y0:
        raise ValueError(f"y must lie in (0, y0={u.y0}]")
    lhs = float(u.V(mu * y))
    rhs = mu ** (-u.alpha) * float(u.V(y))
    return lhs <= rhs + 1e-9 * max(1.0, abs(rhs))
