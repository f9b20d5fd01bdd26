"""Total vertex orders and the precursor/successor partition.

An ordering orients every edge of the graph: the lower-ranked endpoint
is a precursor of the higher-ranked one.  Factorization quality depends
on the order, so construction is deterministic throughout.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import DuplicateCoordinates, NonRectangularGrid
from .system import SpdMSystem


class VertexOrdering:
    """Bijection between vertex ids and positions 0..n-1.

    ``rank[K]`` is the position of vertex K; ``perm[r]`` is the vertex
    at position r.  Both arrays are immutable.
    """

    __slots__ = ("rank", "perm")

    def __init__(self, rank):
        rank = np.asarray(rank, dtype=np.int64)
        n = rank.size
        perm = np.full(n, -1, dtype=np.int64)
        ok = (rank >= 0) & (rank < n)
        if not np.all(ok):
            raise DuplicateCoordinates("rank values outside 0..n-1")
        perm[rank] = np.arange(n)
        if np.any(perm < 0):
            raise DuplicateCoordinates("rank is not a permutation")
        self.rank = rank
        self.perm = perm
        self.rank.setflags(write=False)
        self.perm.setflags(write=False)

    @classmethod
    def from_perm(cls, perm) -> "VertexOrdering":
        perm = np.asarray(perm, dtype=np.int64)
        rank = np.empty_like(perm)
        rank[perm] = np.arange(perm.size)
        return cls(rank)

    @property
    def n(self) -> int:
        return self.rank.size

    def precedes(self, a: int, b: int) -> bool:
        return bool(self.rank[a] < self.rank[b])

    def to_json(self, path) -> None:
        with open(path, "w", encoding="ascii", newline="\n") as f:
            json.dump([int(v) for v in self.perm], f)
            f.write("\n")

    @classmethod
    def from_json(cls, path) -> "VertexOrdering":
        with open(path, "r", encoding="ascii") as f:
            perm = json.load(f)
        return cls.from_perm(np.asarray(perm, dtype=np.int64))


def _check_distinct(coords: np.ndarray) -> None:
    view = {tuple(int(x) for x in row) for row in coords}
    if len(view) != coords.shape[0]:
        raise DuplicateCoordinates("grid coordinates are not distinct")


def lexicographic_order(coords) -> VertexOrdering:
    """Last-axis-major lexicographic order on integer grid coordinates.

    In 2D with coords (i, j) the comparison key is (j, i): the first
    vertex is the one with minimal j, then minimal i.  On a full grid
    the precursors of an interior vertex are its -x, -y (and -z)
    neighbors.
    """
    coords = np.asarray(coords, dtype=np.int64)
    if coords.ndim != 2:
        raise DuplicateCoordinates("coords must be an (n, d) array")
    _check_distinct(coords)
    keys = tuple(coords[:, a] for a in range(coords.shape[1]))
    perm = np.lexsort(keys)  # last key is primary, so last axis is major
    return VertexOrdering.from_perm(perm)


def sector_order(coords, dims) -> VertexOrdering:
    """Sectored order: 2^d blocks, each directed toward the domain center.

    The grid is split at per-axis midpoints (the center line of an odd
    extent goes to the lower sector).  Within a sector, vertices are
    ordered lexicographically by distance from the sector's outer
    corner, so every step moves toward the center.  Sectors are
    concatenated in last-axis-major order of their corner coordinates.
    """
    coords = np.asarray(coords, dtype=np.int64)
    if coords.ndim != 2:
        raise NonRectangularGrid("coords must be an (n, d) array")
    d = coords.shape[1]
    dims = tuple(int(e) for e in dims)
    if len(dims) != d:
        raise NonRectangularGrid("dims length does not match coordinate dimension")
    n = coords.shape[0]
    if n != int(np.prod(dims)):
        raise NonRectangularGrid(
            f"{n} vertices cannot fill a full {dims} grid", dims=dims
        )
    _check_distinct(coords)
    for a, e in enumerate(dims):
        if coords[:, a].min() != 0 or coords[:, a].max() != e - 1:
            raise NonRectangularGrid("coordinates do not span 0..extent-1", axis=a)

    sector = np.zeros(n, dtype=np.int64)
    towards = np.empty_like(coords)
    for a, e in enumerate(dims):
        mid = (e + 1) // 2  # center line joins the lower sector
        upper = coords[:, a] >= mid
        sector += upper.astype(np.int64) << a
        towards[:, a] = np.where(upper, (e - 1) - coords[:, a], coords[:, a])
    keys = tuple(towards[:, a] for a in range(d)) + (sector,)
    perm = np.lexsort(keys)
    return VertexOrdering.from_perm(perm)


def partition(system: SpdMSystem, ordering: VertexOrdering, k: int):
    """Split the neighborhood of vertex k into (precursors, successors)."""
    nbrs, _ = system.neighbors(k)
    lower = ordering.rank[nbrs] < ordering.rank[k]
    return nbrs[lower], nbrs[~lower]


def successor_weight_sums(system: SpdMSystem, ordering: VertexOrdering) -> np.ndarray:
    """Per-vertex sum of edge weights toward higher-ranked neighbors."""
    rows = np.repeat(np.arange(system.n), np.diff(system.indptr))
    mask = ordering.rank[system.indices] > ordering.rank[rows]
    return np.bincount(rows[mask], weights=system.weights[mask], minlength=system.n)


class OrderingDiagnostics:
    """Validation result for an ordering against a system."""

    def __init__(self, bijective, starved_vertices):
        self.bijective = bijective
        # vertices with zero slack and no precursor: their local
        # condition estimate is infinite under this order
        self.starved_vertices = starved_vertices

    @property
    def ok(self) -> bool:
        return self.bijective and not self.starved_vertices


def validate_ordering(system: SpdMSystem, ordering: VertexOrdering) -> OrderingDiagnostics:
    """Check bijectivity and flag zero-slack vertices without precursors."""
    if ordering.n != system.n:
        return OrderingDiagnostics(False, [])
    starved = []
    for k in range(system.n):
        if system.slack[k] > 0:
            continue
        pre, _ = partition(system, ordering, k)
        if pre.size == 0:
            starved.append(k)
    return OrderingDiagnostics(True, starved)
