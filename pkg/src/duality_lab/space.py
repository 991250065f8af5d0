"""Finite filtered probability spaces: partitions, stopping times, conditioning.

Scenarios are indexed 0..N-1.  A sigma algebra is represented by a partition
of the index set; the filtration is a refining chain of partitions, one per
time step.  Random variables are plain float arrays of length N.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "FilteredSpace",
    "SigmaAlgebra",
    "cond_expect",
    "essential_extremum",
    "check_stopping_time",
    "sigma_algebra_at",
]

_PROB_TOL = 1e-12


def _as_cells(partition) -> tuple[tuple[int, ...], ...]:
    return tuple(tuple(int(i) for i in cell) for cell in partition)


@dataclass(frozen=True)
class FilteredSpace:
    """Finite scenario set with probabilities and a refining partition chain.

    ``partitions[t]`` lists the cells of the time-t sigma algebra.  The last
    partition must consist of singletons; the first one may be nontrivial.
    """

    prob: np.ndarray
    partitions: tuple[tuple[tuple[int, ...], ...], ...]
    # cell index of each scenario at each time, shape (T+1, N)
    cell_index: np.ndarray = field(init=False, repr=False, compare=False)

    def __init__(self, prob, partitions):
        prob = np.asarray(prob, dtype=float)
        partitions = tuple(_as_cells(p) for p in partitions)
        n = prob.size
        if np.any(prob <= 0):
            raise ValueError("probabilities must be strictly positive")
        if abs(prob.sum() - 1.0) > _PROB_TOL:
            raise ValueError(f"probabilities sum to {prob.sum()!r}, expected 1")
        if not partitions:
            raise ValueError("need at least the time-0 partition")
        for t, part in enumerate(partitions):
            seen = sorted(i for cell in part for i in cell)
            if seen != list(range(n)):
                raise ValueError(f"partitions[{t}] is not a partition of 0..{n - 1}")
        for t in range(len(partitions) - 1):
            if not _refines(partitions[t + 1], partitions[t]):
                raise ValueError(f"partitions[{t + 1}] does not refine partitions[{t}]")
        if sorted(partitions[-1]) != [(i,) for i in range(n)]:
            raise ValueError("terminal partition must consist of singletons")
        object.__setattr__(self, "prob", prob)
        object.__setattr__(self, "partitions", partitions)
        cidx = np.empty((len(partitions), n), dtype=np.intp)
        for t, part in enumerate(partitions):
            for k, cell in enumerate(part):
                cidx[t, list(cell)] = k
        cidx.setflags(write=False)
        prob.setflags(write=False)
        object.__setattr__(self, "cell_index", cidx)

    @property
    def n_scenarios(self) -> int:
        return self.prob.size

    @property
    def horizon(self) -> int:
        return len(self.partitions) - 1

    def cells(self, t: int) -> tuple[tuple[int, ...], ...]:
        return self.partitions[t]

    def cell_prob(self, cell) -> float:
        return float(self.prob[list(cell)].sum())


def _refines(fine, coarse) -> bool:
    owner = {}
    for k, cell in enumerate(coarse):
        for i in cell:
            owner[i] = k
    return all(len({owner[i] for i in cell}) == 1 for cell in fine)


@dataclass(frozen=True)
class SigmaAlgebra:
    """A sub-sigma-algebra given by its atoms (a partition of the index set)."""

    atoms: tuple[tuple[int, ...], ...]

    def __init__(self, atoms):
        object.__setattr__(self, "atoms", _as_cells(atoms))

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)


def check_stopping_time(space: FilteredSpace, tau) -> bool:
    """True iff {tau <= t} is a union of partitions[t] cells for every t."""
    tau = np.asarray(tau, dtype=int)
    if tau.size != space.n_scenarios:
        raise ValueError("tau has wrong length")
    if np.any(tau < 0) or np.any(tau > space.horizon):
        raise ValueError("tau entries must lie in [0, T]")
    for t in range(space.horizon + 1):
        event = tau <= t
        for cell in space.partitions[t]:
            vals = event[list(cell)]
            if vals.any() and not vals.all():
                return False
    return True


def sigma_algebra_at(space: FilteredSpace, tau) -> SigmaAlgebra:
    """The sigma algebra F_tau generated by a stopping time.

    Its atoms are the cells C of partitions[t] on which tau == t.  Also
    records nothing beyond the partition; the time of an atom is tau at any
    of its scenarios.
    """
    tau = np.asarray(tau, dtype=int)
    if not check_stopping_time(space, tau):
        raise ValueError("tau is not a stopping time for this filtration")
    atoms = []
    for t in range(space.horizon + 1):
        for cell in space.partitions[t]:
            if tau[cell[0]] == t:
                atoms.append(cell)
    atoms.sort(key=lambda c: c[0])
    return SigmaAlgebra(atoms)


def cond_expect(X, G: SigmaAlgebra, space: FilteredSpace) -> np.ndarray:
    """Conditional expectation E[X | G]: the prob-weighted average per atom."""
    X = np.asarray(X, dtype=float)
    if not np.all(np.isfinite(X)):
        raise ValueError("X must be finite-valued")
    out = np.empty_like(X)
    for atom in G.atoms:
        idx = list(atom)
        w = space.prob[idx]
        out[idx] = float(np.dot(w, X[idx]) / w.sum())
    return out


def _atom_values(X, G: SigmaAlgebra, tol=1e-12) -> np.ndarray:
    """Representative value of X on each atom; X must be constant per atom."""
    X = np.asarray(X, dtype=float)
    vals = np.empty(G.n_atoms)
    for k, atom in enumerate(G.atoms):
        chunk = X[list(atom)]
        scale = max(1.0, float(np.abs(chunk).max()))
        if chunk.max() - chunk.min() > tol * scale:
            raise ValueError("random variable is not G-measurable")
        vals[k] = chunk[0]
    return vals


def essential_extremum(family, G: SigmaAlgebra, mode: str,
                       space: FilteredSpace | None = None) -> np.ndarray:
    """Per-atom max (mode='sup') or min (mode='inf') of a finite family.

    Every family member must be G-measurable.  The essential extremum of a
    finite family of G-measurable variables is just the atom-wise extremum.
    """
    if mode not in ("sup", "inf"):
        raise ValueError("mode must be 'sup' or 'inf'")
    family = [np.asarray(f, dtype=float) for f in family]
    if not family:
        raise ValueError("empty family")
    per_atom = np.stack([_atom_values(f, G) for f in family])
    ext = per_atom.max(axis=0) if mode == "sup" else per_atom.min(axis=0)
    out = np.empty_like(family[0])
    for k, atom in enumerate(G.atoms):
        out[list(atom)] = ext[k]
    return out
