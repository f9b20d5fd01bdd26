"""Per-vertex local condition estimates for MILU-preconditioned systems.

The estimate at vertex K is tau_K = e_K / (e_K - S(K)) with S(K) the
successor weight sum.  Its maximum over the graph bounds the condition
number of the preconditioned operator from above, so the whole bound is
computable from local quantities.  tau is an extended real: a zero
denominator is reported as +inf, which diagnoses a bad ordering (a
zero-slack vertex without precursors) rather than raising.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidDimension
from .ordering import VertexOrdering, successor_weight_sums
from .precond import MiluFactorization
from .system import SpdMSystem

# denominators at or below this fraction of the successor weight sum are
# cancellation noise around an exact zero; both evaluation routes must
# classify them as infinite the same way
INF_DENOM_REL = 1e-12


@dataclass
class LecnReport:
    """Per-vertex tau values plus summary statistics."""

    tau: np.ndarray
    max_tau: float
    argmax: int
    num_infinite: int

    @classmethod
    def from_tau(cls, tau: np.ndarray) -> "LecnReport":
        argmax = int(np.argmax(tau))
        return cls(
            tau=tau,
            max_tau=float(tau[argmax]),
            argmax=argmax,
            num_infinite=int(np.sum(np.isinf(tau))),
        )


def tau_direct(system: SpdMSystem, fact: MiluFactorization) -> LecnReport:
    """Evaluate tau from an existing factorization.

    Vertices without successors have tau = 1 exactly; a nonpositive
    denominator (possible only at zero slack with starved precursors)
    yields +inf.
    """
    e = fact.e
    s = fact.successor_weight_sum
    denom = e - s
    with np.errstate(divide="ignore", invalid="ignore"):
        tau = np.where(
            s == 0.0, 1.0,
            np.where(denom > INF_DENOM_REL * s, e / denom, np.inf),
        )
    return LecnReport.from_tau(tau)


def tau_recursive(system: SpdMSystem, ordering: VertexOrdering) -> LecnReport:
    """Evaluate tau in rank order without computing the factorization.

    Uses the identity

        tau_K = 1 + S(K) / (b_K + sum over precursors K1 of c(K,K1)/tau_K1)

    which agrees with :func:`tau_direct` exactly in real arithmetic.
    Precursors with infinite tau contribute nothing to the denominator.
    """
    n = system.n
    rank = ordering.rank
    perm = ordering.perm
    indptr, indices, weights = system.indptr, system.indices, system.weights
    slack = system.slack
    s_sum = successor_weight_sums(system, ordering)

    tau = np.empty(n)
    for r in range(n):
        k = perm[r]
        if s_sum[k] == 0.0:
            tau[k] = 1.0
            continue
        den = slack[k]
        for p in range(indptr[k], indptr[k + 1]):
            j = indices[p]
            if rank[j] < r:
                tj = tau[j]
                if np.isfinite(tj):
                    den += weights[p] / tj
        if den > INF_DENOM_REL * s_sum[k]:
            tau[k] = 1.0 + s_sum[k] / den
        else:
            tau[k] = np.inf
    return LecnReport.from_tau(tau)


def lecn_bound(report: LecnReport) -> float:
    """Upper bound on kappa(M^-1 A): the maximum tau."""
    return report.max_tau


def theoretical_bound(kind: str, d: int, ell_max: float, h: float) -> float:
    """Closed-form bound for cut-cell grids on boxes.

    ``lex`` orderings give 1 + d + d*ell_max/h; sectored orderings halve
    the path length, giving 1 + d + d*ell_max/(2h).
    """
    if d not in (2, 3):
        raise InvalidDimension(f"d must be 2 or 3, got {d}", d=d)
    if h <= 0:
        raise InvalidDimension(f"h must be positive, got {h}", h=h)
    if kind == "lex":
        return 1.0 + d + d * ell_max / h
    if kind == "sector":
        return 1.0 + d + d * ell_max / (2.0 * h)
    raise InvalidDimension(f"unknown bound kind {kind!r}", kind=kind)


def write_tau_csv(report: LecnReport, path, coords=None) -> None:
    """Dump per-vertex tau (and coordinates when available) as CSV."""
    with open(path, "w", encoding="ascii", newline="\n") as f:
        if coords is None:
            f.write("vertex,tau\n")
            for k, t in enumerate(report.tau):
                f.write(f"{k},{_fmt(t)}\n")
        else:
            d = len(coords[0])
            axes = ",".join(f"x{a}" for a in range(d))
            f.write(f"vertex,{axes},tau\n")
            for k, t in enumerate(report.tau):
                pos = ",".join(str(int(c)) for c in coords[k])
                f.write(f"{k},{pos},{_fmt(t)}\n")


def _fmt(x: float) -> str:
    return "inf" if np.isinf(x) else repr(float(x))
