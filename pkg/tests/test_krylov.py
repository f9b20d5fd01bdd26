import math

import numpy as np
import pytest
import scipy.linalg

import milugraph as mg
from milugraph.errors import (
    IndefinitePreconditioner,
    InnerSolveFailure,
    NotPositiveDefinite,
    OracleSizeExceeded,
)
from milugraph.precond import Preconditioner

from conftest import path_system, random_m_system, random_ordering


def test_pcg_identity_system_one_iteration(rng):
    sys_ = mg.assemble([], np.ones(12))
    rhs = rng.standard_normal(12)
    rep = mg.pcg(sys_, rhs, tol=1e-14)
    assert rep.converged and rep.iterations == 1
    np.testing.assert_allclose(rep.x, rhs, rtol=1e-14)


def test_pcg_finite_termination(rng):
    sys_ = random_m_system(rng, n=30, all_positive_slack=True)
    rhs = rng.standard_normal(30)
    rep = mg.pcg(sys_, rhs, tol=1e-14)
    assert rep.converged
    assert rep.iterations <= 35
    np.testing.assert_allclose(sys_.matvec(rep.x), rhs, atol=1e-12 * np.linalg.norm(rhs))


def test_pcg_zero_rhs():
    sys_ = path_system(5)
    rep = mg.pcg(sys_, np.zeros(5))
    assert rep.converged and rep.iterations == 0
    assert np.array_equal(rep.x, np.zeros(5))


def test_pcg_residual_history_recorded(rng):
    sys_ = random_m_system(rng, n=40, all_positive_slack=True)
    rhs = rng.standard_normal(40)
    rep = mg.pcg(sys_, rhs, tol=1e-12)
    assert len(rep.residuals) == rep.iterations + 1
    assert rep.residuals[-1] <= 1e-12


def test_pcg_energy_error_monotone(rng):
    sys_ = random_m_system(rng, n=60, all_positive_slack=True)
    dense = sys_.densify()
    rhs = rng.standard_normal(60)
    x_star = np.linalg.solve(dense, rhs)
    energies = []

    def track(k, x, rel):
        err = x - x_star
        energies.append(float(err @ (dense @ err)))

    mg.pcg(sys_, rhs, tol=1e-13, callback=track)
    energies = np.array(energies)
    assert np.all(energies[1:] <= energies[:-1] * (1 + 1e-10) + 1e-30)


def test_pcg_max_iter_flagged_not_raised(rng):
    sys_ = random_m_system(rng, n=50, all_positive_slack=False)
    rhs = rng.standard_normal(50)
    rep = mg.pcg(sys_, rhs, tol=1e-15, max_iter=2)
    assert not rep.converged and rep.iterations == 2


class _BrokenPreconditioner(Preconditioner):
    def apply_inverse(self, r):
        return -r

    def apply(self, v):
        return -v


def test_pcg_indefinite_preconditioner():
    sys_ = path_system(6)
    with pytest.raises(IndefinitePreconditioner):
        mg.pcg(sys_, np.ones(6), _BrokenPreconditioner(6))


def test_power_iteration_flags_non_convergence():
    sys_, _, _ = mg.gibou_matrix(mg.unit_box_spec(2, "1/12"))
    res = mg.lambda_max_power(sys_, max_iter=2, tol=1e-14)
    assert not res.converged and res.iterations == 2


def test_condition_number_diagonal_matrix():
    sys_ = mg.assemble([], [1.0, 4.0])
    est = mg.condition_number(sys_, tol=1e-12)
    assert est.kappa == pytest.approx(4.0, rel=1e-9)
    assert est.lambda_max == pytest.approx(4.0, rel=1e-9)
    assert est.lambda_min == pytest.approx(1.0, rel=1e-9)


def test_condition_number_path_graph_closed_form():
    n = 20
    sys_ = path_system(n)
    evals_exact = 4.0 * np.sin(np.arange(1, n + 1) * math.pi / (2 * (n + 1))) ** 2
    kappa_exact = evals_exact[-1] / evals_exact[0]
    est = mg.condition_number(sys_, tol=1e-10, max_iter=100000)
    assert est.kappa == pytest.approx(kappa_exact, rel=1e-6)


def test_jacobi_eigensolver_matches_lapack(rng):
    for n in (3, 12, 60):
        m = rng.standard_normal((n, n))
        sym = 0.5 * (m + m.T)
        ours = mg.jacobi_eigenvalues(sym)
        ref = np.linalg.eigvalsh(sym)
        np.testing.assert_allclose(ours, ref, rtol=1e-10, atol=1e-10)


def test_dense_oracle_generalized_matches_lapack(rng):
    for _ in range(5):
        sys_ = random_m_system(rng, n=25, all_positive_slack=True)
        ordv = random_ordering(rng, sys_.n)
        fact = mg.milu_factor(sys_, ordv)
        a = sys_.densify()
        m = mg.milu_densify(fact, sys_)
        ours = mg.dense_eigen_oracle(a, m)
        ref = scipy.linalg.eigh(a, m, eigvals_only=True)
        np.testing.assert_allclose(ours, ref, rtol=1e-9, atol=1e-11)


def test_dense_oracle_guards():
    big = np.eye(201)
    with pytest.raises(OracleSizeExceeded):
        mg.dense_eigen_oracle(big)
    with pytest.raises(NotPositiveDefinite):
        mg.dense_eigen_oracle(np.eye(4), -np.eye(4))
    with pytest.raises(NotPositiveDefinite):
        mg.dense_eigen_oracle(-np.eye(4))


def test_estimator_matches_oracle_identity_precond(rng):
    for _ in range(5):
        sys_ = random_m_system(rng, n=int(rng.integers(20, 101)),
                               all_positive_slack=True)
        est = mg.condition_number(sys_, tol=1e-9, max_iter=100000)
        evals = mg.dense_eigen_oracle(sys_.densify())
        kappa = evals[-1] / evals[0]
        assert est.kappa == pytest.approx(kappa, rel=1e-6)


def test_milu_lambda_min_floor(rng):
    for _ in range(10):
        sys_ = random_m_system(rng, n=40, all_positive_slack=True)
        ordv = random_ordering(rng, sys_.n)
        p = mg.milu_preconditioner(sys_, ordv)
        res = mg.lambda_min_inverse(sys_, p, tol=1e-8)
        assert res.value >= 1.0 - 1e-7


def test_inner_solve_failure():
    sys_, coords, _ = mg.gibou_matrix(mg.unit_box_spec(2, "1/12"))
    with pytest.raises(InnerSolveFailure):
        mg.lambda_min_inverse(sys_, tol=1e-8, inner_max_iter=1)


def test_solve_report_csv(tmp_path, rng):
    sys_ = random_m_system(rng, n=15, all_positive_slack=True)
    rep = mg.pcg(sys_, rng.standard_normal(15), tol=1e-12)
    path = tmp_path / "resid.csv"
    rep.residuals_to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "iteration,relative_residual"
    assert len(lines) == len(rep.residuals) + 1
