import numpy as np
import pytest

import milugraph as mg
from milugraph.errors import DimensionMismatch, NonPositivePivot, SystemNotSpd

from conftest import path_system, random_m_system, random_ordering


def dense_milu_reference(system, ordering):
    """Straightforward dense evaluation of the pivot recursion.

    Works in rank-permuted indexing and returns (e, m_dense) in the
    original indexing.  Kept independent of the sparse implementation.
    """
    n = system.n
    perm = ordering.perm
    a = system.densify()[np.ix_(perm, perm)]
    e = np.zeros(n)
    for r in range(n):
        acc = a[r, r]
        for k in range(r):
            if a[r, k] != 0.0:
                s_k = -sum(a[j, k] for j in range(k + 1, n))
                acc -= (-a[r, k]) * s_k / e[k]
        e[r] = acc
    lower = np.tril(a, k=-1) + np.diag(e)
    m_perm = lower @ np.diag(1.0 / e) @ lower.T
    m = np.empty_like(m_perm)
    m[np.ix_(perm, perm)] = m_perm
    e_orig = np.empty(n)
    e_orig[perm] = e
    return e_orig, m


def dense_ilu0_reference(system, ordering):
    """Dense Doolittle ILU(0): updates restricted to A's pattern."""
    n = system.n
    perm = ordering.perm
    a = system.densify()[np.ix_(perm, perm)]
    pattern = a != 0.0
    np.fill_diagonal(pattern, True)
    f = a.copy()
    for i in range(n):
        for k in range(i):
            if not pattern[i, k]:
                continue
            f[i, k] /= f[k, k]
            for j in range(k + 1, n):
                if pattern[k, j] and pattern[i, j]:
                    f[i, j] -= f[i, k] * f[k, j]
    lower = np.tril(f, k=-1) + np.eye(n)
    upper = np.triu(f)
    m_perm = lower @ upper
    m = np.empty_like(m_perm)
    m[np.ix_(perm, perm)] = m_perm
    return m


def two_vertex():
    sys_ = mg.assemble([(0, 1, 1.0)], [1.0, 0.0])
    ordv = mg.VertexOrdering(np.array([0, 1]))
    return sys_, ordv


def test_milu_two_vertex_pivots():
    sys_, ordv = two_vertex()
    fact = mg.milu_factor(sys_, ordv)
    assert fact.e.tolist() == [2.0, 0.5]
    assert fact.successor_weight_sum.tolist() == [1.0, 0.0]


def test_milu_single_vertex_is_exact():
    sys_ = mg.assemble([], [2.0])
    fact = mg.milu_factor(sys_, mg.VertexOrdering(np.array([0])))
    assert fact.e.tolist() == [2.0]
    assert np.array_equal(mg.milu_densify(fact, sys_), [[2.0]])
    z = mg.milu_apply_inverse(fact, sys_, [4.0])
    assert z.tolist() == [2.0]


def test_milu_matches_dense_reference(rng):
    for _ in range(15):
        sys_ = random_m_system(rng, n=int(rng.integers(5, 40)),
                               all_positive_slack=True)
        ordv = random_ordering(rng, sys_.n)
        fact = mg.milu_factor(sys_, ordv)
        e_ref, m_ref = dense_milu_reference(sys_, ordv)
        np.testing.assert_allclose(fact.e, e_ref, rtol=1e-12)
        np.testing.assert_allclose(
            mg.milu_densify(fact, sys_), m_ref, rtol=1e-11, atol=1e-11
        )


def test_milu_residual_rowsums_zero(rng):
    for _ in range(10):
        sys_ = random_m_system(rng)
        ordv = random_ordering(rng, sys_.n)
        fact = mg.milu_factor(sys_, ordv)
        rows = mg.residual_rowsums(sys_, fact)
        assert np.max(np.abs(rows)) <= 1e-12 * np.max(sys_.diag)


def test_milu_residual_rowsums_operator_path():
    # n > 200 exercises the matvec route instead of the dense one
    spec = mg.unit_box_spec(2, "1/24")
    sys_, coords, _ = mg.gibou_matrix(spec)
    assert sys_.n > 200
    fact = mg.milu_factor(sys_, mg.lexicographic_order(coords))
    rows = mg.residual_rowsums(sys_, fact)
    assert np.max(np.abs(rows)) <= 1e-12 * np.max(sys_.diag)


def test_milu_well_definedness_chain(rng):
    # pivot never falls below the successor weight sum
    for _ in range(100):
        sys_ = random_m_system(rng, n=int(rng.integers(3, 101)))
        ordv = random_ordering(rng, sys_.n)
        fact = mg.milu_factor(sys_, ordv)
        slackness = fact.e - fact.successor_weight_sum
        assert np.all(slackness >= -1e-10 * np.maximum(sys_.diag, 1.0))


def test_milu_apply_inverse_roundtrip():
    sys_, ordv = two_vertex()
    fact = mg.milu_factor(sys_, ordv)
    m = mg.milu_densify(fact, sys_)
    r = m @ np.array([1.0, 2.0])
    z = mg.milu_apply_inverse(fact, sys_, r)
    np.testing.assert_allclose(z, [1.0, 2.0], rtol=1e-13)


def test_milu_apply_inverse_zero_maps_to_zero(rng):
    sys_ = random_m_system(rng, n=12)
    fact = mg.milu_factor(sys_, random_ordering(rng, sys_.n))
    assert np.array_equal(mg.milu_apply_inverse(fact, sys_, np.zeros(12)), np.zeros(12))


def test_milu_apply_is_inverse_of_matvec(rng):
    for _ in range(10):
        sys_ = random_m_system(rng, n=int(rng.integers(5, 150)))
        ordv = random_ordering(rng, sys_.n)
        fact = mg.milu_factor(sys_, ordv)
        if np.any(fact.e == 0):
            continue
        v = rng.standard_normal(sys_.n)
        back = mg.milu_apply_inverse(fact, sys_, mg.milu_matvec(fact, v))
        assert np.linalg.norm(back - v) <= 1e-11 * np.linalg.norm(v)


def test_milu_residual_negative_semidefinite(rng):
    # A - M is positive semidefinite, so the preconditioned spectrum
    # sits at or above one
    for _ in range(50):
        sys_ = random_m_system(rng, n=int(rng.integers(4, 40)),
                               all_positive_slack=True)
        ordv = random_ordering(rng, sys_.n)
        fact = mg.milu_factor(sys_, ordv)
        evals = mg.dense_eigen_oracle(sys_.densify(), mg.milu_densify(fact, sys_))
        assert evals[0] >= 1.0 - 1e-8


def test_milu_rejects_invalid_system():
    bad = mg.assemble([(0, 1, 1.0)], [0.0, 0.0])
    with pytest.raises(SystemNotSpd):
        mg.milu_factor(bad, mg.VertexOrdering(np.array([0, 1])))


def test_milu_dimension_mismatch():
    sys_, ordv = two_vertex()
    fact = mg.milu_factor(sys_, ordv)
    with pytest.raises(DimensionMismatch):
        mg.milu_apply_inverse(fact, sys_, [1.0, 2.0, 3.0])
    with pytest.raises(DimensionMismatch):
        mg.milu_factor(sys_, mg.VertexOrdering(np.array([0, 1, 2])))


def test_milu_terminal_zero_pivot_allowed():
    # path u - K - v - w with slack only at w; the order below starves
    # K of finite precursors, driving its pivot to exactly zero
    sys_ = mg.assemble([(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)],
                       [0.0, 0.0, 0.0, 1.0])
    ordv = mg.VertexOrdering(np.array([0, 2, 1, 3]))
    fact = mg.milu_factor(sys_, ordv)
    np.testing.assert_allclose(fact.e, [1.0, 0.0, 2.0, 1.0], atol=1e-15)
    with pytest.raises(NonPositivePivot):
        mg.milu_apply_inverse(fact, sys_, np.ones(4))


def test_jacobi_soland_apply():
    sys_, _ = two_vertex()
    p = mg.jacobi_factor(sys_)
    np.testing.assert_allclose(p.apply_inverse([2.0, 1.0]), [1.0, 1.0])
    np.testing.assert_allclose(p.apply([1.0, 1.0]), [2.0, 1.0])


def test_ilu0_tridiagonal_is_exact():
    sys_ = path_system(12)
    ordv = mg.VertexOrdering(np.arange(12))
    p = mg.ilu0_factor(sys_, ordv)
    np.testing.assert_allclose(p.densify(), sys_.densify(), rtol=1e-13, atol=1e-13)
    evals = mg.dense_eigen_oracle(sys_.densify(), p.densify())
    assert evals[-1] / evals[0] <= 1.0 + 1e-10


def test_ilu0_matches_dense_reference(rng):
    for _ in range(10):
        sys_ = random_m_system(rng, n=int(rng.integers(5, 35)),
                               all_positive_slack=True)
        ordv = random_ordering(rng, sys_.n)
        p = mg.ilu0_factor(sys_, ordv)
        m_ref = dense_ilu0_reference(sys_, ordv)
        np.testing.assert_allclose(p.densify(), m_ref, rtol=1e-11, atol=1e-11)


def test_ilu0_apply_consistent_with_densify(rng):
    sys_ = random_m_system(rng, n=30, all_positive_slack=True)
    ordv = random_ordering(rng, sys_.n)
    p = mg.ilu0_factor(sys_, ordv)
    m = p.densify()
    v = rng.standard_normal(sys_.n)
    np.testing.assert_allclose(p.apply(v), m @ v, rtol=1e-11, atol=1e-12)
    np.testing.assert_allclose(
        p.apply_inverse(m @ v), v, rtol=1e-10, atol=1e-11
    )


def test_ilu0_drops_fill_milu_lumps_it():
    # on a 16x16 5-point grid MILU zeroes residual row sums, ILU(0)
    # leaves them visibly nonzero
    spec = mg.unit_box_spec(2, "1/17")
    sys_, coords, _ = mg.gibou_matrix(spec)
    assert sys_.n == 256
    ordv = mg.lexicographic_order(coords)
    fact = mg.milu_factor(sys_, ordv)
    milu_rows = mg.residual_rowsums(sys_, fact)
    assert np.max(np.abs(milu_rows)) <= 1e-12 * np.max(sys_.diag)
    p = mg.ilu0_factor(sys_, ordv)
    ones = np.ones(sys_.n)
    ilu_rows = p.apply(ones) - sys_.matvec(ones)
    assert np.max(np.abs(ilu_rows)) > 1e-2 / (spec.h * spec.h) * 0.01


def test_identity_preconditioner_passthrough(rng):
    sys_ = random_m_system(rng, n=9)
    p = mg.identity_preconditioner(sys_)
    v = rng.standard_normal(9)
    assert np.array_equal(p.apply_inverse(v), v)
    assert np.array_equal(p.apply(v), v)


def test_milu_e_vector_snapshot(tmp_path):
    sys_, ordv = two_vertex()
    fact = mg.milu_factor(sys_, ordv)
    path = tmp_path / "e.json"
    fact.e_to_json(path)
    import json

    assert json.loads(path.read_text()) == [2.0, 0.5]
