import numpy as np
import pytest

import milugraph as mg
from milugraph.errors import InvalidDimension

from conftest import random_m_system, random_ordering


def tau_pair(system, ordering):
    fact = mg.milu_factor(system, ordering)
    return mg.tau_direct(system, fact), mg.tau_recursive(system, ordering)


def assert_tau_equal(a, b, rtol=1e-10):
    inf_a, inf_b = np.isinf(a.tau), np.isinf(b.tau)
    assert np.array_equal(inf_a, inf_b)
    fin = ~inf_a
    np.testing.assert_allclose(a.tau[fin], b.tau[fin], rtol=rtol)


def test_two_vertex_values():
    sys_ = mg.assemble([(0, 1, 1.0)], [1.0, 0.0])
    ordv = mg.VertexOrdering(np.array([0, 1]))
    direct, rec = tau_pair(sys_, ordv)
    assert direct.tau.tolist() == [2.0, 1.0]
    assert rec.tau.tolist() == [2.0, 1.0]
    assert direct.max_tau == 2.0 and direct.argmax == 0
    assert mg.lecn_bound(direct) == 2.0


def test_tau_one_exactly_when_no_successors(rng):
    for _ in range(10):
        sys_ = random_m_system(rng)
        ordv = random_ordering(rng, sys_.n)
        fact = mg.milu_factor(sys_, ordv)
        rep = mg.tau_direct(sys_, fact)
        for k in range(sys_.n):
            _, suc = mg.partition(sys_, ordv, k)
            if suc.size == 0:
                assert rep.tau[k] == 1.0
            else:
                assert rep.tau[k] > 1.0 or np.isinf(rep.tau[k])


def test_infinite_tau_from_starved_vertex():
    # zero-slack vertex ranked first: infinite on both evaluation routes
    sys_ = mg.assemble([(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)],
                       [0.0, 0.0, 0.0, 1.0])
    ordv = mg.VertexOrdering(np.array([0, 2, 1, 3]))
    direct, rec = tau_pair(sys_, ordv)
    assert np.isinf(direct.tau[0]) and np.isinf(direct.tau[2])
    assert direct.tau[1] == 1.0 and direct.tau[3] == 1.0
    assert_tau_equal(direct, rec)
    assert direct.num_infinite == 2
    assert np.isinf(direct.max_tau)


def test_identity_on_random_systems(rng):
    for _ in range(40):
        sys_ = random_m_system(rng, n=int(rng.integers(3, 101)))
        ordv = random_ordering(rng, sys_.n)
        direct, rec = tau_pair(sys_, ordv)
        assert_tau_equal(direct, rec)


def test_finite_floor(rng):
    for _ in range(20):
        sys_ = random_m_system(rng)
        ordv = random_ordering(rng, sys_.n)
        rep = mg.tau_direct(sys_, mg.milu_factor(sys_, ordv))
        fin = np.isfinite(rep.tau)
        assert np.all(rep.tau[fin] >= 1.0 - 1e-12)


def test_gibou_square_lex_bound_h16():
    spec = mg.unit_box_spec(2, "1/16")
    sys_, coords, _ = mg.gibou_matrix(spec)
    ordv = mg.lexicographic_order(coords)
    rep = mg.tau_direct(sys_, mg.milu_factor(sys_, ordv))
    assert rep.max_tau <= 3.0 + 2.0 * 16.0


@pytest.mark.parametrize("kind,expected", [("lex", 23.0), ("sector", 13.0)])
def test_theoretical_bound_2d(kind, expected):
    assert mg.theoretical_bound(kind, 2, 1.0, 0.1) == pytest.approx(expected)


def test_theoretical_bound_3d_unit():
    assert mg.theoretical_bound("lex", 3, 1.0, 1.0) == pytest.approx(7.0)


def test_theoretical_bound_rejects_bad_input():
    with pytest.raises(InvalidDimension):
        mg.theoretical_bound("lex", 4, 1.0, 0.1)
    with pytest.raises(InvalidDimension):
        mg.theoretical_bound("lex", 2, 1.0, 0.0)
    with pytest.raises(InvalidDimension):
        mg.theoretical_bound("diagonal", 2, 1.0, 0.1)


@pytest.mark.parametrize("h_str,kind", [
    ("1/8", "lex"), ("1/16", "lex"), ("1/32", "lex"), ("1/64", "lex"),
    ("1/8", "sector"), ("1/16", "sector"), ("1/32", "sector"), ("1/64", "sector"),
])
def test_box_2d_max_tau_within_bound(h_str, kind):
    spec = mg.unit_box_spec(2, h_str)
    sys_, coords, _ = mg.gibou_matrix(spec)
    if kind == "lex":
        ordv = mg.lexicographic_order(coords)
    else:
        dims = tuple(e - 2 for e in spec.extents)
        ordv = mg.sector_order(coords - 1, dims)
    rep = mg.tau_direct(sys_, mg.milu_factor(sys_, ordv))
    assert rep.max_tau <= mg.theoretical_bound(kind, 2, 1.0, spec.h)


@pytest.mark.parametrize("h_str,kind", [
    ("1/8", "lex"), ("1/16", "lex"), ("1/32", "lex"),
    ("1/8", "sector"), ("1/16", "sector"), ("1/32", "sector"),
])
def test_box_3d_max_tau_within_bound(h_str, kind):
    spec = mg.unit_box_spec(3, h_str)
    sys_, coords, _ = mg.gibou_matrix(spec)
    if kind == "lex":
        ordv = mg.lexicographic_order(coords)
    else:
        dims = tuple(e - 2 for e in spec.extents)
        ordv = mg.sector_order(coords - 1, dims)
    rep = mg.tau_direct(sys_, mg.milu_factor(sys_, ordv))
    assert rep.max_tau <= mg.theoretical_bound(kind, 3, 1.0, spec.h)


def test_bound_dominates_oracle_kappa(rng):
    for _ in range(20):
        sys_ = random_m_system(rng, n=30, all_positive_slack=True)
        ordv = random_ordering(rng, sys_.n)
        fact = mg.milu_factor(sys_, ordv)
        rep = mg.tau_direct(sys_, fact)
        evals = mg.dense_eigen_oracle(sys_.densify(), mg.milu_densify(fact, sys_))
        kappa = evals[-1] / evals[0]
        assert kappa <= rep.max_tau * (1.0 + 1e-8)


def test_tau_csv_export(tmp_path):
    sys_ = mg.assemble([(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)],
                       [0.0, 0.0, 0.0, 1.0])
    ordv = mg.VertexOrdering(np.array([0, 2, 1, 3]))
    rep = mg.tau_direct(sys_, mg.milu_factor(sys_, ordv))
    path = tmp_path / "tau.csv"
    mg.write_tau_csv(rep, path, coords=[(k, 0) for k in range(4)])
    lines = path.read_text().splitlines()
    assert lines[0] == "vertex,x0,x1,tau"
    assert lines[1] == "0,0,0,inf"
    assert lines[2] == "1,1,0,1.0"
    assert len(lines) == 5
