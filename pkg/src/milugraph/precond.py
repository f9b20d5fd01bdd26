"""Preconditioners on ordered graphs: MILU, ILU(0), Jacobi, identity.

The MILU factorization keeps only a per-vertex diagonal ``e`` computed
in rank order.  Fill-in that falls outside the sparsity pattern is
lumped into the diagonal, which forces the residual matrix M - A to
have zero row sums.  ILU(0) uses the same pattern and ordering but
discards dropped fill, so its residual row sums are generally nonzero;
the contrast between the two is the point of keeping both.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DimensionMismatch, NonPositivePivot, OracleSizeExceeded, SystemNotSpd
from .ordering import VertexOrdering, successor_weight_sums
from .system import DENSE_ORACLE_LIMIT, SpdMSystem, validate

PIVOT_FLOOR = 1e-14


def _triangular_lu(t_csc):
    """LU object for a triangular matrix; no pivoting, no fill."""
    return spla.splu(
        t_csc, permc_spec="NATURAL", diag_pivot_thresh=0.0, options={"Equil": False}
    )


class Preconditioner:
    """Abstract SPD preconditioner.

    Implementations provide the inverse action ``apply_inverse`` (used
    by PCG and power iteration) and the forward action ``apply`` (the
    operator M itself, used by inverse iteration).
    """

    name = "abstract"

    def __init__(self, n: int):
        self.n = n

    def apply_inverse(self, r: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def apply(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _check(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=np.float64)
        if r.shape != (self.n,):
            raise DimensionMismatch(
                f"vector shape {r.shape} against preconditioner of size {self.n}"
            )
        return r


class IdentityPreconditioner(Preconditioner):
    name = "none"

    def apply_inverse(self, r):
        return self._check(r).copy()

    def apply(self, v):
        return self._check(v).copy()


class JacobiPreconditioner(Preconditioner):
    name = "jacobi"

    def __init__(self, diag):
        super().__init__(len(diag))
        self.diag = np.asarray(diag, dtype=np.float64)

    def apply_inverse(self, r):
        return self._check(r) / self.diag

    def apply(self, v):
        return self._check(v) * self.diag


def identity_preconditioner(system: SpdMSystem) -> IdentityPreconditioner:
    return IdentityPreconditioner(system.n)


def jacobi_factor(system: SpdMSystem) -> JacobiPreconditioner:
    """Diagonal preconditioner z = r / diag(A)."""
    if np.any(system.diag <= 0):
        k = int(np.argmin(system.diag))
        raise NonPositivePivot(f"diagonal entry {k} is {system.diag[k]}", vertex=k)
    return JacobiPreconditioner(system.diag)


# -- MILU ----------------------------------------------------------------------

class MiluFactorization:
    """Result of the MILU recursion: the diagonal of E plus its ordering.

    Attributes
    ----------
    ordering : VertexOrdering
    e : ndarray
        Positive pivot per vertex (the diagonal of E), original indexing.
    successor_weight_sum : ndarray
        Cached S(K), the sum of edge weights toward higher-ranked
        neighbors; the factorization and the local condition estimate
        both consume it.
    """

    def __init__(self, ordering, e, successor_weight_sum, lower_csc):
        self.ordering = ordering
        self.e = e
        self.successor_weight_sum = successor_weight_sum
        self.n = e.size
        self._lower = lower_csc  # (L + E) in rank-permuted indexing
        self._e_perm = e[ordering.perm]
        self._lu = _triangular_lu(lower_csc) if np.all(self._e_perm > 0) else None
        for a in (self.e, self.successor_weight_sum, self._e_perm):
            a.setflags(write=False)

    def e_to_json(self, path) -> None:
        """Dump the pivot vector for regression snapshots."""
        import json

        with open(path, "w", encoding="ascii", newline="\n") as f:
            json.dump([float(x) for x in self.e], f)
            f.write("\n")


def milu_factor(system: SpdMSystem, ordering: VertexOrdering) -> MiluFactorization:
    """Run the pivot recursion in rank order.

    For each vertex K, in increasing rank,

        e_K = A_KK - sum over precursors K1 of c(K,K1) * S(K1) / e_K1

    where S(K1) sums the weights from K1 to all of its successors, not
    just K.  That lumping is what zeroes the row sums of M - A.
    """
    if ordering.n != system.n:
        raise DimensionMismatch("ordering size does not match system")
    diag_check = validate(system)
    if not diag_check.spd_ok:
        raise SystemNotSpd(
            "system fails validation: " + "; ".join(diag_check.messages)
        )
    n = system.n
    rank = ordering.rank
    perm = ordering.perm
    indptr, indices, weights = system.indptr, system.indices, system.weights
    diag = system.diag
    s_sum = successor_weight_sums(system, ordering)

    e = np.zeros(n)
    for r in range(n):
        k = perm[r]
        acc = diag[k]
        for p in range(indptr[k], indptr[k + 1]):
            j = indices[p]
            if rank[j] < r:
                ej = e[j]
                if ej <= 0:
                    raise NonPositivePivot(
                        f"pivot {ej} at vertex {j} used as divisor", vertex=int(j)
                    )
                acc -= weights[p] * s_sum[j] / ej
        if s_sum[k] > 0:
            if acc < PIVOT_FLOOR * diag[k]:
                raise NonPositivePivot(
                    f"pivot {acc} at vertex {k} below {PIVOT_FLOOR} * diagonal",
                    vertex=int(k),
                )
        elif acc < 0:
            if acc < -PIVOT_FLOOR * diag[k]:
                raise NonPositivePivot(
                    f"negative pivot {acc} at terminal vertex {k}", vertex=int(k)
                )
            acc = 0.0
        e[k] = acc

    lower = _build_lower(system, ordering, e)
    return MiluFactorization(ordering, e, s_sum, lower)


def _build_lower(system, ordering, e):
    """Assemble (L + E) in rank-permuted indexing as CSC."""
    n = system.n
    rank = ordering.rank
    rows_orig = np.repeat(np.arange(n), np.diff(system.indptr))
    pr = rank[rows_orig]
    pc = rank[system.indices]
    mask = pc < pr
    rows = np.concatenate([pr[mask], np.arange(n)])
    cols = np.concatenate([pc[mask], np.arange(n)])
    vals = np.concatenate([-system.weights[mask], e[ordering.perm]])
    return sp.csc_matrix((vals, (rows, cols)), shape=(n, n))


def milu_apply_inverse(fact: MiluFactorization, system: SpdMSystem, r) -> np.ndarray:
    """Solve M z = r by forward substitution, scaling, back substitution."""
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (fact.n,) or system.n != fact.n:
        raise DimensionMismatch("right-hand side does not match factorization size")
    if fact._lu is None:
        raise NonPositivePivot("factorization has a zero pivot; M is singular")
    perm = fact.ordering.perm
    u = fact._lu.solve(r[perm])
    z = fact._lu.solve(fact._e_perm * u, trans="T")
    out = np.empty_like(z)
    out[perm] = z
    return out


def milu_matvec(fact: MiluFactorization, v) -> np.ndarray:
    """Forward product M v = (L+E) E^-1 (L+E)^T v."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (fact.n,):
        raise DimensionMismatch("vector does not match factorization size")
    if np.any(fact._e_perm <= 0):
        raise NonPositivePivot("factorization has a zero pivot; M is singular")
    perm = fact.ordering.perm
    t = fact._lower.T @ v[perm]
    w = fact._lower @ (t / fact._e_perm)
    out = np.empty_like(w)
    out[perm] = w
    return out


def milu_densify(fact: MiluFactorization, system: SpdMSystem) -> np.ndarray:
    """Dense M for oracle computations (n <= 200)."""
    if fact.n > DENSE_ORACLE_LIMIT:
        raise OracleSizeExceeded(
            f"densify limited to n <= {DENSE_ORACLE_LIMIT}, got {fact.n}"
        )
    if np.any(fact._e_perm <= 0):
        raise NonPositivePivot("factorization has a zero pivot; M is singular")
    t = fact._lower.toarray()
    m_perm = (t / fact._e_perm) @ t.T
    perm = fact.ordering.perm
    out = np.empty_like(m_perm)
    out[np.ix_(perm, perm)] = m_perm
    return out


def residual_rowsums(system: SpdMSystem, fact: MiluFactorization) -> np.ndarray:
    """Row sums of R = M - A; zero up to rounding by construction."""
    if system.n <= DENSE_ORACLE_LIMIT:
        m = milu_densify(fact, system)
        return m.sum(axis=1) - system.densify().sum(axis=1)
    ones = np.ones(system.n)
    return milu_matvec(fact, ones) - system.matvec(ones)


class MiluPreconditioner(Preconditioner):
    name = "milu"

    def __init__(self, fact: MiluFactorization, system: SpdMSystem):
        super().__init__(fact.n)
        self.factorization = fact
        self._system = system

    def apply_inverse(self, r):
        return milu_apply_inverse(self.factorization, self._system, r)

    def apply(self, v):
        return milu_matvec(self.factorization, v)


def milu_preconditioner(system: SpdMSystem, ordering: VertexOrdering) -> MiluPreconditioner:
    return MiluPreconditioner(milu_factor(system, ordering), system)


# -- ILU(0) ---------------------------------------------------------------------

class Ilu0Preconditioner(Preconditioner):
    """Zero-fill incomplete factorization M = L D L^T on A's pattern.

    Dropped fill is discarded, not lumped; pivots follow the supplied
    vertex ordering so comparisons against MILU are on equal footing.
    """

    name = "ilu0"

    def __init__(self, ordering, unit_lower_csc, d):
        super().__init__(d.size)
        self.ordering = ordering
        self.d = d
        self._lower = unit_lower_csc
        self._lu = _triangular_lu(unit_lower_csc)

    def apply_inverse(self, r):
        r = self._check(r)
        perm = self.ordering.perm
        y = self._lu.solve(r[perm])
        z = self._lu.solve(y / self.d, trans="T")
        out = np.empty_like(z)
        out[perm] = z
        return out

    def apply(self, v):
        v = self._check(v)
        perm = self.ordering.perm
        t = self._lower.T @ v[perm]
        w = self._lower @ (t * self.d)
        out = np.empty_like(w)
        out[perm] = w
        return out

    def densify(self):
        if self.n > DENSE_ORACLE_LIMIT:
            raise OracleSizeExceeded("densify limited to n <= 200")
        t = self._lower.toarray()
        m_perm = (t * self.d) @ t.T
        perm = self.ordering.perm
        out = np.empty_like(m_perm)
        out[np.ix_(perm, perm)] = m_perm
        return out


def ilu0_factor(system: SpdMSystem, ordering: VertexOrdering) -> Ilu0Preconditioner:
    """Incomplete LDL^T with zero fill-in, eliminating in rank order."""
    if ordering.n != system.n:
        raise DimensionMismatch("ordering size does not match system")
    n = system.n
    rank = ordering.rank
    perm = ordering.perm
    diag_perm = system.diag[perm]

    # adjacency relabeled to rank space
    lower_nbrs = [None] * n  # per row: {col rank: A value (= -c)}
    upper_nbrs = [None] * n  # per row: sorted list of higher ranks
    for r in range(n):
        k = perm[r]
        nbrs, wts = system.neighbors(k)
        lo, up = {}, []
        for j, w in zip(nbrs, wts):
            rj = rank[j]
            if rj < r:
                lo[int(rj)] = -w
            else:
                up.append(int(rj))
        up.sort()
        lower_nbrs[r] = lo
        upper_nbrs[r] = up

    d = np.empty(n)
    l_rows = [None] * n
    for r in range(n):
        row = lower_nbrs[r]
        drr = diag_perm[r]
        for k in sorted(row):
            lk = row[k] / d[k]
            row[k] = lk
            dk = d[k]
            for j in upper_nbrs[k]:
                if j > r:
                    break
                if j == r:
                    drr -= lk * lk * dk
                elif j in row:
                    row[j] -= lk * dk * l_rows[j][k]
        if drr <= 0:
            raise NonPositivePivot(
                f"ILU(0) pivot {drr} at rank {r}", vertex=int(perm[r])
            )
        d[r] = drr
        l_rows[r] = row

    rows, cols, vals = [], [], []
    for r in range(n):
        for k, lv in l_rows[r].items():
            rows.append(r)
            cols.append(k)
            vals.append(lv)
    rows.extend(range(n))
    cols.extend(range(n))
    vals.extend([1.0] * n)
    unit_lower = sp.csc_matrix(
        (np.asarray(vals), (np.asarray(rows), np.asarray(cols))), shape=(n, n)
    )
    return Ilu0Preconditioner(ordering, unit_lower, d)
