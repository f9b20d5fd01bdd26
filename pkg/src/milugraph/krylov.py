"""Preconditioned CG, spectral estimation, and a dense eigen-oracle.

The extremal eigenvalues of the preconditioned operator P^-1 A are
estimated with power iteration (largest) and inverse iteration
(smallest, each step solving A x = M v with an inner PCG).  Both track
the A-weighted Rayleigh quotient <A v, v> / <M v, v>, in which the
operator is self-adjoint.  The dense oracle factors M with Cholesky and
runs a cyclic Jacobi eigensolver on the congruence-transformed matrix;
it is deliberately independent of the iterative path it cross-checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    IndefinitePreconditioner,
    InnerSolveFailure,
    NotPositiveDefinite,
    OracleSizeExceeded,
)
from .precond import IdentityPreconditioner, Preconditioner
from .system import DENSE_ORACLE_LIMIT, SpdMSystem

START_VECTOR_SEED = 20260801
DEFAULT_PCG_TOL = 1e-14
DEFAULT_SPECTRAL_TOL = 1e-6


@dataclass
class SolveReport:
    """PCG outcome: solution, iteration count, and residual history."""

    x: np.ndarray
    iterations: int
    residuals: list
    converged: bool

    def to_json_obj(self) -> dict:
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "final_residual": self.residuals[-1] if self.residuals else 0.0,
        }

    def residuals_to_csv(self, path) -> None:
        with open(path, "w", encoding="ascii", newline="\n") as f:
            f.write("iteration,relative_residual\n")
            for k, r in enumerate(self.residuals):
                f.write(f"{k},{r!r}\n")


def pcg(system: SpdMSystem, rhs, precond: Preconditioner | None = None,
        tol: float = DEFAULT_PCG_TOL, max_iter: int | None = None,
        x0=None, callback=None) -> SolveReport:
    """Standard preconditioned conjugate gradients.

    Terminates when the relative residual ||b - A x|| / ||b|| drops to
    ``tol`` or the iteration cap is reached; the report's ``converged``
    flag distinguishes the two.  Raises IndefinitePreconditioner when
    <z, r> becomes nonpositive, which an SPD preconditioner forbids.
    """
    b = np.asarray(rhs, dtype=np.float64)
    if b.shape != (system.n,):
        raise DimensionMismatch("rhs does not match system size")
    if precond is None:
        precond = IdentityPreconditioner(system.n)
    if max_iter is None:
        max_iter = 50 * system.n

    nb = float(np.linalg.norm(b))
    if nb == 0.0:
        return SolveReport(np.zeros(system.n), 0, [0.0], True)
    x = np.zeros(system.n) if x0 is None else np.asarray(x0, dtype=np.float64).copy()
    r = b - system.matvec(x) if x0 is not None else b.copy()
    rel = float(np.linalg.norm(r)) / nb
    residuals = [rel]
    if rel <= tol:
        return SolveReport(x, 0, residuals, True)

    z = precond.apply_inverse(r)
    rz = float(r @ z)
    if rz <= 0.0:
        raise IndefinitePreconditioner(f"<z, r> = {rz} at start")
    d = z.copy()
    for k in range(1, max_iter + 1):
        q = system.matvec(d)
        dq = float(d @ q)
        if dq <= 0.0:
            raise NotPositiveDefinite(f"<d, A d> = {dq} during PCG")
        alpha = rz / dq
        x += alpha * d
        r -= alpha * q
        rel = float(np.linalg.norm(r)) / nb
        residuals.append(rel)
        if callback is not None:
            callback(k, x, rel)
        if rel <= tol:
            return SolveReport(x, k, residuals, True)
        z = precond.apply_inverse(r)
        rz_new = float(r @ z)
        if rz_new <= 0.0:
            raise IndefinitePreconditioner(f"<z, r> = {rz_new} at iteration {k}")
        d = z + (rz_new / rz) * d
        rz = rz_new
    return SolveReport(x, max_iter, residuals, False)


# -- spectral estimation -------------------------------------------------------

@dataclass
class PowerResult:
    value: float
    iterations: int
    converged: bool
    rel_change: float


def _start_vector(n: int) -> np.ndarray:
    rng = np.random.default_rng(START_VECTOR_SEED)
    v = np.ones(n) + 0.01 * rng.standard_normal(n)
    return v / np.linalg.norm(v)


def lambda_max_power(system: SpdMSystem, precond: Preconditioner | None = None,
                     tol: float = DEFAULT_SPECTRAL_TOL,
                     max_iter: int = 20000) -> PowerResult:
    """Largest eigenvalue of P^-1 A by power iteration.

    One matrix-vector product and one preconditioner solve per step;
    stops when the Rayleigh quotient's relative change drops to ``tol``.
    On hitting the cap the best estimate is returned flagged as not
    converged.
    """
    if precond is None:
        precond = IdentityPreconditioner(system.n)
    u = _start_vector(system.n)
    w = system.matvec(u)
    rho_prev = None
    rel = np.inf
    for k in range(1, max_iter + 1):
        v = precond.apply_inverse(w)
        av = system.matvec(v)
        den = float(w @ v)  # equals <M v, v> since w = A u = M v
        if den <= 0.0:
            raise NotPositiveDefinite(f"<M v, v> = {den} in power iteration")
        rho = float(av @ v) / den
        if rho_prev is not None:
            rel = abs(rho - rho_prev) / abs(rho)
            if rel <= tol:
                return PowerResult(rho, k, True, rel)
        rho_prev = rho
        nv = float(np.linalg.norm(v))
        u = v / nv
        w = av / nv
    return PowerResult(rho_prev, max_iter, False, rel)


def lambda_min_inverse(system: SpdMSystem, precond: Preconditioner | None = None,
                       tol: float = DEFAULT_SPECTRAL_TOL,
                       max_iter: int = 200,
                       inner_max_iter: int | None = None) -> PowerResult:
    """Smallest eigenvalue of P^-1 A by inverse iteration.

    Each step applies the inverse operator: m = M u, then A x = m
    solved by PCG with the same preconditioner at inner tolerance
    0.01 * tol.
    """
    if precond is None:
        precond = IdentityPreconditioner(system.n)
    u = _start_vector(system.n)
    x_prev = None
    rho_prev = None
    rel = np.inf
    for k in range(1, max_iter + 1):
        m = precond.apply(u)
        inner = pcg(system, m, precond, tol=0.01 * tol,
                    max_iter=inner_max_iter, x0=x_prev)
        if not inner.converged:
            raise InnerSolveFailure(
                f"inner PCG stalled at residual {inner.residuals[-1]}",
                outer_iteration=k,
            )
        x = inner.x
        ax = system.matvec(x)
        mx = precond.apply(x)
        den = float(mx @ x)
        if den <= 0.0:
            raise NotPositiveDefinite(f"<M x, x> = {den} in inverse iteration")
        rho = float(ax @ x) / den
        if rho_prev is not None:
            rel = abs(rho - rho_prev) / abs(rho)
            if rel <= tol:
                return PowerResult(rho, k, True, rel)
        rho_prev = rho
        nx = float(np.linalg.norm(x))
        u = x / nx
        x_prev = u
    return PowerResult(rho_prev, max_iter, False, rel)


@dataclass
class SpectralEstimate:
    """Extremal eigenvalue estimates and their ratio."""

    lambda_max: float
    lambda_min: float
    kappa: float
    power_iterations: int
    inverse_iterations: int
    power_converged: bool
    inverse_converged: bool
    power_rel_change: float
    inverse_rel_change: float

    def to_json_obj(self) -> dict:
        return {
            "lambda_max": self.lambda_max,
            "lambda_min": self.lambda_min,
            "kappa": self.kappa,
            "power_iterations": self.power_iterations,
            "inverse_iterations": self.inverse_iterations,
            "power_converged": self.power_converged,
            "inverse_converged": self.inverse_converged,
        }


def condition_number(system: SpdMSystem, precond: Preconditioner | None = None,
                     tol: float = DEFAULT_SPECTRAL_TOL,
                     max_iter: int = 20000,
                     inverse_max_iter: int = 200) -> SpectralEstimate:
    """kappa(P^-1 A) = lambda_max / lambda_min from the two estimators."""
    top = lambda_max_power(system, precond, tol=tol, max_iter=max_iter)
    bottom = lambda_min_inverse(system, precond, tol=tol, max_iter=inverse_max_iter)
    return SpectralEstimate(
        lambda_max=top.value,
        lambda_min=bottom.value,
        kappa=top.value / bottom.value,
        power_iterations=top.iterations,
        inverse_iterations=bottom.iterations,
        power_converged=top.converged,
        inverse_converged=bottom.converged,
        power_rel_change=top.rel_change,
        inverse_rel_change=bottom.rel_change,
    )


# -- dense oracle ----------------------------------------------------------------

def jacobi_eigenvalues(mat: np.ndarray, tol: float = 1e-14,
                       max_sweeps: int = 50) -> np.ndarray:
    """All eigenvalues of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps rotate away every off-diagonal entry above a per-sweep
    threshold; convergence is quadratic and the result is accurate to
    machine precision for well-scaled symmetric input.
    """
    a = np.array(mat, dtype=np.float64)
    n = a.shape[0]
    if n == 1:
        return a.ravel().copy()
    fro = float(np.linalg.norm(a))
    if fro == 0.0:
        return np.zeros(n)
    for _ in range(max_sweeps):
        off = float(np.linalg.norm(a - np.diag(np.diag(a))))
        if off <= tol * fro:
            break
        thresh = off / (n * n)
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= thresh:
                    continue
                app, aqq = a[p, p], a[q, q]
                theta = (aqq - app) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.hypot(1.0, theta))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.hypot(1.0, t)
                s = t * c
                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, p] = app - t * apq
                a[q, q] = aqq + t * apq
                a[p, q] = 0.0
                a[q, p] = 0.0
    return np.sort(np.diag(a))


def dense_eigen_oracle(a_dense: np.ndarray, m_dense: np.ndarray | None = None) -> np.ndarray:
    """Sorted generalized eigenvalues of the SPD pencil (A, M).

    M is factored as G G^T; the eigenvalues of G^-1 A G^-T are those of
    M^-1 A.  Restricted to n <= 200 so the O(n^3) Jacobi sweeps stay in
    oracle territory.
    """
    a = np.asarray(a_dense, dtype=np.float64)
    n = a.shape[0]
    if n > DENSE_ORACLE_LIMIT:
        raise OracleSizeExceeded(f"oracle limited to n <= {DENSE_ORACLE_LIMIT}, got {n}")
    if a.shape != (n, n):
        raise DimensionMismatch("matrix is not square")
    try:
        np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("A is not positive definite") from exc
    if m_dense is None:
        c = 0.5 * (a + a.T)
    else:
        m = np.asarray(m_dense, dtype=np.float64)
        if m.shape != (n, n):
            raise DimensionMismatch("preconditioner matrix shape mismatch")
        try:
            g = np.linalg.cholesky(m)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefinite("M is not positive definite") from exc
        from scipy.linalg import solve_triangular

        half = solve_triangular(g, a, lower=True)
        c = solve_triangular(g, half.T, lower=True).T
        c = 0.5 * (c + c.T)
    return jacobi_eigenvalues(c)
