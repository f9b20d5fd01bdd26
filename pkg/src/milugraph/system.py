"""Sparse SPD M-matrix systems stored as weighted undirected graphs.

A system is parameterized by strictly positive off-diagonal edge weights
``c`` and per-vertex nonnegative diagonal slack ``b``.  The matrix it
represents has entries ``A[K, K'] = -c(K, K')`` off the diagonal and
``A[K, K] = sum_k c(K, k) + b[K]`` on it.  Only ``(c, b)`` are stored;
the diagonal is derived, which makes the M-matrix sign structure and the
row-sum identity ``A @ 1 == b`` structural facts rather than numerical
accidents.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import (
    AsymmetricInput,
    DimensionMismatch,
    DuplicateEdge,
    MalformedFile,
    NegativeWeight,
    OracleSizeExceeded,
    SelfLoopEdge,
)

DENSE_ORACLE_LIMIT = 200


class SpdMSystem:
    """Immutable weighted undirected graph with self-loops.

    Attributes
    ----------
    n : int
        Vertex count.
    indptr, indices, weights : ndarray
        CSR layout of the symmetric off-diagonal weights; ``indices`` is
        sorted within each row.
    slack : ndarray
        Per-vertex nonnegative diagonal slack ``b``.
    diag : ndarray
        Derived diagonal ``sum(c) + b`` per vertex.
    """

    __slots__ = ("n", "indptr", "indices", "weights", "slack", "diag", "_offdiag")

    def __init__(self, n, indptr, indices, weights, slack):
        self.n = int(n)
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.indices = np.asarray(indices, dtype=np.int64)
        self.weights = np.asarray(weights, dtype=np.float64)
        self.slack = np.asarray(slack, dtype=np.float64)
        for a in (self.indptr, self.indices, self.weights, self.slack):
            a.setflags(write=False)
        self._offdiag = sp.csr_matrix(
            (self.weights, self.indices, self.indptr), shape=(self.n, self.n)
        )
        rowsum = np.asarray(self._offdiag.sum(axis=1)).ravel()
        self.diag = rowsum + self.slack
        self.diag.setflags(write=False)

    # -- basic queries --------------------------------------------------

    @property
    def n_edges(self) -> int:
        return self.indices.size // 2

    def neighbors(self, k: int):
        """Return (neighbor ids, weights) of vertex ``k``, sorted by id."""
        lo, hi = self.indptr[k], self.indptr[k + 1]
        return self.indices[lo:hi], self.weights[lo:hi]

    def degree(self, k: int) -> int:
        return int(self.indptr[k + 1] - self.indptr[k])

    def matvec(self, v):
        """Compute ``A @ v`` with the derived diagonal."""
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.n,):
            raise DimensionMismatch(
                f"vector of length {v.shape} against system of size {self.n}",
                expected=self.n,
            )
        return self.diag * v - self._offdiag @ v

    def densify(self):
        """Dense copy of A for oracle computations (guarded by size)."""
        if self.n > DENSE_ORACLE_LIMIT:
            raise OracleSizeExceeded(
                f"densify limited to n <= {DENSE_ORACLE_LIMIT}, got {self.n}", n=self.n
            )
        dense = -self._offdiag.toarray()
        np.fill_diagonal(dense, self.diag)
        return dense

    def edge_list(self):
        """Edges as (K, K', c) with K < K', sorted; one row per edge."""
        rows = np.repeat(np.arange(self.n), np.diff(self.indptr))
        mask = rows < self.indices
        return rows[mask], self.indices[mask], self.weights[mask]

    def equals(self, other: "SpdMSystem") -> bool:
        return (
            self.n == other.n
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.slack, other.slack)
        )


def assemble(edges, slack) -> SpdMSystem:
    """Build a system from undirected edges and per-vertex slack.

    Parameters
    ----------
    edges : iterable of (K, K', c)
        Each undirected edge given once, either orientation; c > 0.
    slack : array-like
        Nonnegative diagonal slack; its length sets the vertex count.
    """
    b = np.asarray(list(slack) if not isinstance(slack, np.ndarray) else slack,
                   dtype=np.float64)
    n = b.size
    if np.any(b < 0):
        k = int(np.argmin(b))
        raise NegativeWeight(f"slack[{k}] = {b[k]} is negative", vertex=k)

    edges = list(edges) if not isinstance(edges, np.ndarray) else edges
    m = len(edges)
    if m == 0:
        empty = np.zeros(0, dtype=np.int64)
        return SpdMSystem(n, np.zeros(n + 1, dtype=np.int64), empty,
                          np.zeros(0), b)

    earr = np.asarray(edges, dtype=np.float64).reshape(m, 3)
    u = earr[:, 0].astype(np.int64)
    v = earr[:, 1].astype(np.int64)
    c = earr[:, 2]
    if not (np.all(earr[:, 0] == u) and np.all(earr[:, 1] == v)):
        raise MalformedFile("edge endpoints must be integers")
    if np.any(u == v):
        k = int(u[np.argmax(u == v)])
        raise SelfLoopEdge(f"self edge at vertex {k}; self-loops are derived", vertex=k)
    if np.any(c <= 0):
        i = int(np.argmax(c <= 0))
        raise NegativeWeight(
            f"edge ({u[i]},{v[i]}) has weight {c[i]}; weights must be > 0",
            edge=(int(u[i]), int(v[i])),
        )
    if np.any((u < 0) | (u >= n) | (v < 0) | (v >= n)):
        raise DimensionMismatch("edge endpoint out of range", n=n)

    lo = np.minimum(u, v)
    hi = np.maximum(u, v)
    key = lo * n + hi
    order = np.argsort(key, kind="stable")
    key_sorted = key[order]
    dup = key_sorted[1:] == key_sorted[:-1]
    if np.any(dup):
        i = int(np.argmax(dup))
        a, bidx = order[i], order[i + 1]
        pair = (int(lo[a]), int(hi[a]))
        if c[a] != c[bidx]:
            raise AsymmetricInput(
                f"edge {pair} supplied twice with weights {c[a]} and {c[bidx]}",
                edge=pair,
            )
        raise DuplicateEdge(f"edge {pair} supplied twice", edge=pair)

    # symmetric closure: store each edge in both rows
    rows = np.concatenate([u, v])
    cols = np.concatenate([v, u])
    vals = np.concatenate([c, c])
    perm = np.lexsort((cols, rows))
    rows, cols, vals = rows[perm], cols[perm], vals[perm]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    indptr = np.cumsum(indptr)
    return SpdMSystem(n, indptr, cols, vals, b)


def matvec(system: SpdMSystem, v):
    """Functional form of :meth:`SpdMSystem.matvec`."""
    return system.matvec(v)


def densify(system: SpdMSystem):
    """Functional form of :meth:`SpdMSystem.densify`."""
    return system.densify()


# -- validation ---------------------------------------------------------------

@dataclass
class SystemDiagnostics:
    """Read-only validation report; never mutates the system."""

    n: int
    n_edges: int
    symmetric: bool
    weights_positive: bool
    slack_nonnegative: bool
    n_components: int
    components_without_slack: list = field(default_factory=list)
    messages: list = field(default_factory=list)

    @property
    def spd_ok(self) -> bool:
        return (
            self.symmetric
            and self.weights_positive
            and self.slack_nonnegative
            and not self.components_without_slack
        )


def validate(system: SpdMSystem) -> SystemDiagnostics:
    """Check symmetry, signs, connectivity, and the positivity prerequisite.

    Every connected component must contain at least one vertex with
    strictly positive slack, otherwise the matrix restricted to that
    component is singular.
    """
    n = system.n
    messages = []

    sym = True
    offdiag = system._offdiag
    delta = (offdiag - offdiag.T).tocoo()
    if delta.nnz and np.max(np.abs(delta.data)) > 0:
        sym = False
        messages.append("adjacency storage is not symmetric")

    weights_positive = bool(np.all(system.weights > 0)) if system.weights.size else True
    if not weights_positive:
        messages.append("nonpositive edge weight present")
    slack_nonneg = bool(np.all(system.slack >= 0))
    if not slack_nonneg:
        messages.append("negative slack present")

    # connected components by BFS over the adjacency
    comp = np.full(n, -1, dtype=np.int64)
    n_comp = 0
    bad_components = []
    for start in range(n):
        if comp[start] >= 0:
            continue
        label = n_comp
        n_comp += 1
        stack = [start]
        comp[start] = label
        has_slack = False
        while stack:
            k = stack.pop()
            if system.slack[k] > 0:
                has_slack = True
            nbrs, _ = system.neighbors(k)
            for j in nbrs:
                if comp[j] < 0:
                    comp[j] = label
                    stack.append(int(j))
        if not has_slack:
            bad_components.append(label)
    if bad_components:
        messages.append(
            f"{len(bad_components)} component(s) have no strictly positive slack"
        )

    return SystemDiagnostics(
        n=n,
        n_edges=system.n_edges,
        symmetric=sym,
        weights_positive=weights_positive,
        slack_nonnegative=slack_nonneg,
        n_components=n_comp,
        components_without_slack=bad_components,
        messages=messages,
    )


# -- exchange formats ---------------------------------------------------------

def write_matrix_market(system: SpdMSystem, path) -> None:
    """Write the full matrix in Matrix Market coordinate symmetric format.

    The lower triangle including the diagonal is written with 17
    significant digits, which round-trips float64 exactly.
    """
    eu, ev, ec = system.edge_list()
    nnz = system.n + eu.size
    with open(path, "w", encoding="ascii", newline="\n") as f:
        f.write("%%MatrixMarket matrix coordinate real symmetric\n")
        f.write(f"{system.n} {system.n} {nnz}\n")
        for k in range(system.n):
            f.write(f"{k + 1} {k + 1} {system.diag[k]:.17g}\n")
        for a, b, c in zip(eu, ev, ec):
            # lower triangle: row > column
            f.write(f"{b + 1} {a + 1} {-c:.17g}\n")


def read_matrix_market(path) -> SpdMSystem:
    """Read a coordinate symmetric file back into a system.

    The off-diagonal entries must be nonpositive.  The slack is
    recovered as ``diag - sum(c)`` per row; values inside one ulp of
    zero are clamped to zero.
    """
    with open(path, "r", encoding="ascii") as f:
        header = f.readline()
        if not header.startswith("%%MatrixMarket"):
            raise MalformedFile("missing MatrixMarket header", path=str(path))
        tokens = header.split()
        if tokens[1:5] != ["matrix", "coordinate", "real", "symmetric"]:
            raise MalformedFile(
                "expected 'matrix coordinate real symmetric'", header=header.strip()
            )
        line = f.readline()
        while line.startswith("%"):
            line = f.readline()
        try:
            nrow, ncol, nnz = (int(t) for t in line.split())
        except ValueError as exc:
            raise MalformedFile("bad size line", line=line.strip()) from exc
        if nrow != ncol:
            raise MalformedFile("matrix is not square", shape=(nrow, ncol))
        n = nrow
        diag = np.zeros(n)
        diag_seen = np.zeros(n, dtype=bool)
        edges = []
        count = 0
        for line in f:
            line = line.strip()
            if not line or line.startswith("%"):
                continue
            parts = line.split()
            if len(parts) != 3:
                raise MalformedFile("bad entry line", line=line)
            try:
                i, j, val = int(parts[0]) - 1, int(parts[1]) - 1, float(parts[2])
            except ValueError as exc:
                raise MalformedFile("bad entry line", line=line) from exc
            if not (0 <= i < n and 0 <= j < n):
                raise MalformedFile("entry out of range", line=line)
            count += 1
            if i == j:
                if diag_seen[i]:
                    raise MalformedFile(f"duplicate diagonal entry {i + 1}")
                diag[i] = val
                diag_seen[i] = True
            else:
                if val > 0:
                    raise MalformedFile(
                        "positive off-diagonal entry; not an M-matrix",
                        entry=(i + 1, j + 1, val),
                    )
                if val != 0.0:
                    edges.append((i, j, -val))
        if count != nnz:
            raise MalformedFile(f"expected {nnz} entries, found {count}")

    csum = np.zeros(n)
    for i, j, c in edges:
        csum[i] += c
        csum[j] += c
    slack = diag - csum
    tiny = np.finfo(np.float64).eps * 4 * np.maximum(diag, 1.0)
    slack[(slack < 0) & (slack > -tiny)] = 0.0
    if np.any(slack < 0):
        k = int(np.argmin(slack))
        raise MalformedFile(
            f"row {k + 1} has diagonal below its off-diagonal sum", vertex=k
        )
    return assemble(edges, slack)


def write_json(system: SpdMSystem, path) -> None:
    """Write the sidecar JSON preserving the exact (c, b) decomposition."""
    eu, ev, ec = system.edge_list()
    obj = {
        "n": system.n,
        "edges": [[int(a), int(b), float(c)] for a, b, c in zip(eu, ev, ec)],
        "slack": [float(x) for x in system.slack],
    }
    with open(path, "w", encoding="ascii", newline="\n") as f:
        json.dump(obj, f)
        f.write("\n")


def read_json(path) -> SpdMSystem:
    """Read the sidecar JSON written by :func:`write_json`."""
    with open(path, "r", encoding="ascii") as f:
        try:
            obj = json.load(f)
        except json.JSONDecodeError as exc:
            raise MalformedFile("invalid JSON", path=str(path)) from exc
    try:
        n = int(obj["n"])
        edges = [(int(e[0]), int(e[1]), float(e[2])) for e in obj["edges"]]
        slack = np.asarray(obj["slack"], dtype=np.float64)
    except (KeyError, TypeError, IndexError) as exc:
        raise MalformedFile("missing or malformed field", path=str(path)) from exc
    if slack.size != n:
        raise MalformedFile("slack length does not match n", n=n)
    return assemble(edges, slack)
