"""Periodic square-lattice geometry: distances, regions, fattenings and ribbons.

Sites are labelled by integers in row-major order over ``(x1, x2)``::

    index = x1 * L2 + x2

Distances use the periodic Chebyshev (l-infinity) metric throughout, so that a
fattening by ``r`` of a single site is a ``(2r+1) x (2r+1)`` square.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator

import numpy as np

from .errors import GeometryError


@dataclass(frozen=True)
class TorusGeometry:
    """Discrete torus with ``L1 x L2`` sites."""

    L1: int
    L2: int
    warnings: tuple[str, ...] = field(default=(), compare=False)

    @property
    def n_sites(self) -> int:
        return self.L1 * self.L2

    @property
    def shape(self) -> tuple[int, int]:
        return (self.L1, self.L2)

    @property
    def rectangular(self) -> bool:
        return self.L1 != self.L2

    @property
    def conforming(self) -> bool:
        """Square with even side length, as assumed for physics runs."""
        return self.L1 == self.L2 and self.L1 % 2 == 0

    def flags(self) -> dict:
        return {
            "L1": self.L1,
            "L2": self.L2,
            "rectangular": self.rectangular,
            "even": self.L1 % 2 == 0 and self.L2 % 2 == 0,
            "conforming": self.conforming,
            "warnings": list(self.warnings),
        }

    def index(self, x1: int, x2: int) -> int:
        return (x1 % self.L1) * self.L2 + (x2 % self.L2)

    def coords(self, i: int) -> tuple[int, int]:
        return divmod(int(i), self.L2)

    def site(self, x) -> int:
        """Accept either an integer index or an ``(x1, x2)`` pair."""
        if isinstance(x, (tuple, list, np.ndarray)):
            return self.index(int(x[0]), int(x[1]))
        i = int(x)
        if not 0 <= i < self.n_sites:
            raise GeometryError(f"site index {i} outside torus of {self.n_sites} sites")
        return i

    @cached_property
    def xy(self) -> np.ndarray:
        """``(n_sites, 2)`` array of coordinates."""
        i = np.arange(self.n_sites)
        return np.stack([i // self.L2, i % self.L2], axis=1)

    @cached_property
    def distance_matrix(self) -> np.ndarray:
        xy = self.xy
        d1 = np.abs(xy[:, None, 0] - xy[None, :, 0])
        d2 = np.abs(xy[:, None, 1] - xy[None, :, 1])
        d1 = np.minimum(d1, self.L1 - d1)
        d2 = np.minimum(d2, self.L2 - d2)
        return np.maximum(d1, d2)

    def region(self, sites: Iterable) -> "Region":
        return Region(self, frozenset(self.site(s) for s in sites))

    def full(self) -> "Region":
        return Region(self, frozenset(range(self.n_sites)))

    def empty(self) -> "Region":
        return Region(self, frozenset())

    def rows(self, x2_values: Iterable[int]) -> "Region":
        """All sites whose second coordinate lies in ``x2_values`` (mod L2)."""
        vals = {int(v) % self.L2 for v in x2_values}
        return Region(self, frozenset(int(i) for i in np.flatnonzero(np.isin(self.xy[:, 1], list(vals)))))

    def cols(self, x1_values: Iterable[int]) -> "Region":
        """All sites whose first coordinate lies in ``x1_values`` (mod L1)."""
        vals = {int(v) % self.L1 for v in x1_values}
        return Region(self, frozenset(int(i) for i in np.flatnonzero(np.isin(self.xy[:, 0], list(vals)))))


@dataclass(frozen=True)
class Region:
    """Set of sites of a given torus."""

    geometry: TorusGeometry = field(repr=False)
    sites: frozenset

    def __iter__(self) -> Iterator[int]:
        return iter(sorted(self.sites))

    def __len__(self) -> int:
        return len(self.sites)

    def __contains__(self, i) -> bool:
        return i in self.sites

    def _check(self, other: "Region") -> None:
        if other.geometry.shape != self.geometry.shape:
            raise GeometryError("regions live on different tori")

    def __or__(self, other: "Region") -> "Region":
        self._check(other)
        return Region(self.geometry, self.sites | other.sites)

    def __and__(self, other: "Region") -> "Region":
        self._check(other)
        return Region(self.geometry, self.sites & other.sites)

    def __sub__(self, other: "Region") -> "Region":
        self._check(other)
        return Region(self.geometry, self.sites - other.sites)

    def __eq__(self, other) -> bool:
        if isinstance(other, Region):
            return self.geometry.shape == other.geometry.shape and self.sites == other.sites
        return NotImplemented

    def __hash__(self) -> int:
        return hash((self.geometry.shape, self.sites))

    def complement(self) -> "Region":
        return Region(self.geometry, frozenset(range(self.geometry.n_sites)) - self.sites)

    def issubset(self, other) -> bool:
        return self.sites <= set(other)

    def sorted(self) -> list[int]:
        return sorted(self.sites)

    @property
    def mask(self) -> np.ndarray:
        m = np.zeros(self.geometry.n_sites, dtype=bool)
        m[list(self.sites)] = True
        return m

    def to_json(self) -> list[int]:
        return self.sorted()


def make_torus(L1: int, L2: int) -> TorusGeometry:
    """Build a torus. Non-conforming shapes are accepted but carry warnings."""
    if int(L1) != L1 or int(L2) != L2:
        raise GeometryError("torus dimensions must be integers")
    L1, L2 = int(L1), int(L2)
    if L1 < 2 or L2 < 2:
        raise GeometryError(f"torus dimensions must be >= 2, got ({L1}, {L2})")
    warns = []
    if L1 != L2:
        warns.append("rectangular torus: micro-test only")
    if L1 % 2 or L2 % 2:
        warns.append("odd side length: non-conforming for physics runs")
    return TorusGeometry(L1, L2, tuple(warns))


def distance(g: TorusGeometry, x, y) -> int:
    return int(g.distance_matrix[g.site(x), g.site(y)])


def dist_to_region(g: TorusGeometry, X) -> np.ndarray:
    """Distance from every site to the region ``X`` (``inf`` when ``X`` is empty)."""
    idx = sorted(set(X))
    if not idx:
        return np.full(g.n_sites, np.inf)
    return g.distance_matrix[:, idx].min(axis=1)


def region_distance(g: TorusGeometry, X, Y) -> float:
    x, y = sorted(set(X)), sorted(set(Y))
    if not x or not y:
        return np.inf
    return float(g.distance_matrix[np.ix_(x, y)].min())


def diam(g: TorusGeometry, X) -> int:
    idx = sorted(set(X))
    if len(idx) <= 1:
        return 0
    return int(g.distance_matrix[np.ix_(idx, idx)].max())


def _as_region(g: TorusGeometry, X) -> Region:
    return X if isinstance(X, Region) else g.region(X)


def fatten(g: TorusGeometry, X, r: int) -> Region:
    """``X^r = {x : dist(x, X) <= r}``."""
    if r < 0:
        raise GeometryError("fattening radius must be >= 0")
    d = dist_to_region(g, _as_region(g, X))
    return Region(g, frozenset(int(i) for i in np.flatnonzero(d <= r)))


def inner_ring(g: TorusGeometry, X, r: int) -> Region:
    """``X_r = {x : dist(x, complement of X) <= r}``."""
    if r < 0:
        raise GeometryError("ring radius must be >= 0")
    comp = _as_region(g, X).complement()
    d = dist_to_region(g, comp)
    return Region(g, frozenset(int(i) for i in np.flatnonzero(d <= r)))


def boundary_ribbon(g: TorusGeometry, X, r: int) -> Region:
    """``dX(r) = X^r & X_r``; empty when ``X`` is empty or the whole torus."""
    return fatten(g, X, r) & inner_ring(g, X, r)


def connected_components(g: TorusGeometry, X) -> list[Region]:
    """Components of ``X`` under nearest-neighbour (4-neighbour) adjacency."""
    remaining = set(_as_region(g, X).sites)
    comps = []
    while remaining:
        seed = remaining.pop()
        comp, stack = {seed}, [seed]
        while stack:
            x1, x2 = g.coords(stack.pop())
            for d1, d2 in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                j = g.index(x1 + d1, x2 + d2)
                if j in remaining:
                    remaining.remove(j)
                    comp.add(j)
                    stack.append(j)
        comps.append(Region(g, frozenset(comp)))
    return comps


def canonical_halves(g: TorusGeometry) -> tuple[Region, Region]:
    """``X1 = {0 <= x2 <= L2/2}`` and ``X2 = {0 <= x1 <= L1/2}``."""
    X1 = g.rows(range(0, g.L2 // 2 + 1))
    X2 = g.cols(range(0, g.L1 // 2 + 1))
    return X1, X2


@dataclass(frozen=True)
class SigmaDelta:
    """The twist regions built from the canonical halves and the range ``R``.

    ``minus[j]`` is the ribbon of width ``2R`` centred on the seam of ``X_j``
    between the last and the first row (column); ``plus[j]`` the one centred
    on the seam at ``L/2``.
    """

    R: int
    halves: tuple[Region, Region]
    minus: tuple[Region, Region]
    plus: tuple[Region, Region]
    sigma: Region
    delta: Region

    @property
    def ribbons_disjoint(self) -> bool:
        return all(not (m & p).sites for m, p in zip(self.minus, self.plus))

    def to_json(self) -> dict:
        return {
            "R": self.R,
            "sigma": self.sigma.to_json(),
            "delta": self.delta.to_json(),
            "minus1": self.minus[0].to_json(),
            "minus2": self.minus[1].to_json(),
            "ribbons_disjoint": self.ribbons_disjoint,
        }


def sigma_delta(g: TorusGeometry, R: int) -> SigmaDelta:
    if R < 1:
        raise GeometryError("range R must be >= 1")
    for L in g.shape:
        if not L / 2 > R:
            raise GeometryError(f"degenerate geometry: need L/2 > R, got L={L}, R={R}")
    X1, X2 = canonical_halves(g)
    # X1 is cut along x2 (rows), X2 along x1 (columns)
    m1 = g.rows(range(-R, R))
    p1 = g.rows(range(g.L2 // 2 - R + 1, g.L2 // 2 + R + 1))
    m2 = g.cols(range(-R, R))
    p2 = g.cols(range(g.L1 // 2 - R + 1, g.L1 // 2 + R + 1))
    return SigmaDelta(R, (X1, X2), (m1, m2), (p1, p2), m1 | m2, m1 & m2)
