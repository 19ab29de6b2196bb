import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cgcut.covariance import build_model_covariance
from cgcut.graph import Clustering, build_grid, global_design, individual_design, tiling_partition
from cgcut.mse import (
    cut_loss,
    da_term,
    decompose,
    exact_variance_oracle,
    sigma1_squared,
    surrogate_general,
    surrogate_interference_term,
    surrogate_two,
    weight_matrix,
)
from cgcut.estimators import FunctionOutcomeModel

from conftest import random_partition, random_psd, set_partitions, sutva_graph


def left_right(g):
    return Clustering((g.coords[:, 0] >= g.coords[:, 0].mean()).astype(int))


def test_sutva_individual_identity_is_4R():
    for R in (1, 3, 7):
        assert sigma1_squared(sutva_graph(R), individual_design(R), np.eye(R)) == 4 * R


def test_global_identity_R4_is_16():
    g = build_grid("square", side=2)
    assert sigma1_squared(g, global_design(4), np.eye(4)) == 16


def test_formula_matches_oracle_on_3x3_left_right():
    g = build_grid("square", side=3)
    c = left_right(g)
    S = build_model_covariance("exponential", 0.5, 9)
    assert sigma1_squared(g, c, S) == pytest.approx(exact_variance_oracle(g, c, S), rel=1e-10)


def test_n_scaling():
    g = build_grid("square", side=3)
    S = build_model_covariance("exponential", 0.5, 9)
    c = left_right(g)
    assert sigma1_squared(g, c, S, N=10) == pytest.approx(sigma1_squared(g, c, S) / 10, rel=1e-14)


def test_oracle_examples():
    g = build_grid("rectangle", width=2, height=1)
    assert exact_variance_oracle(g, global_design(2), np.eye(2)) == pytest.approx(8.0)
    assert exact_variance_oracle(sutva_graph(3), individual_design(3), np.eye(3)) == pytest.approx(12.0)
    g4 = build_grid("square", side=2)
    c = Clustering([0, 0, 1, 1])
    S = build_model_covariance("exponential", 0.7, 4)
    assert exact_variance_oracle(g4, c, S) == pytest.approx(sigma1_squared(g4, c, S), rel=1e-12)


def test_oracle_refuses_large_m():
    with pytest.raises(ValueError):
        exact_variance_oracle(sutva_graph(21), individual_design(21), np.eye(21))


def test_general_p_matches_oracle(rng):
    g = build_grid("square", side=3)
    c = random_partition(rng, 9, 4)
    S = random_psd(rng, 9)
    for p in (0.2, 0.5, 0.8):
        assert sigma1_squared(g, c, S, p=p) == pytest.approx(exact_variance_oracle(g, c, S, p=p), rel=1e-10)


def test_decompose_global_design():
    g = build_grid("square", side=3)
    S = build_model_covariance("exponential", 0.6, 9).values
    b = decompose(g, global_design(9), S, N=2)
    assert b.i1 == b.j1 == b.j2 == b.j3 == 0
    assert b.sc == pytest.approx(4 * S.sum() / 2)
    assert b.total == b.sigma1_sq


def test_decompose_sutva_has_only_sc(rng):
    g = sutva_graph(6)
    S = random_psd(rng, 6)
    for m in (1, 3, 6):
        b = decompose(g, random_partition(rng, 6, m), S)
        assert b.i1 == b.j1 == b.j2 == b.j3 == 0
        assert b.sc == pytest.approx(b.sigma1_sq, rel=1e-12)


def test_decompose_identity_3x3_left_right():
    g = build_grid("square", side=3)
    b = decompose(g, left_right(g), build_model_covariance("exponential", 0.5, 9))
    assert b.sc + b.i1 + b.i2 == pytest.approx(b.sigma1_sq, rel=1e-10)
    assert b.i1 > 0


def test_breakdown_row_has_csv_columns():
    g = build_grid("square", side=2)
    row = decompose(g, global_design(4), np.eye(4), da=1.5).as_row()
    assert list(row) == ["da", "sc", "i1", "j1", "j2", "j3", "sigma1_sq", "total"]
    assert row["total"] == 17.5


def test_surrogate_two_adjacent_pair():
    g = build_grid("rectangle", width=2, height=1)
    rho = 0.3
    S = np.array([[1, rho], [rho, 1]])
    assert surrogate_two(g, S, Clustering([0, 1])) == pytest.approx(8 * rho)


def test_surrogate_global_is_zero():
    g = build_grid("square", side=3)
    assert surrogate_general(g, np.ones((9, 9)), global_design(9)) == 0.0


def test_surrogate_two_requires_two_clusters():
    g = build_grid("square", side=2)
    with pytest.raises(ValueError):
        surrogate_two(g, np.eye(4), global_design(4))


def test_first_surrogate_term_bounds_i1_on_3x3():
    g = build_grid("square", side=3)
    S = build_model_covariance("exponential", 0.5, 9)
    c = left_right(g)
    assert surrogate_interference_term(g, c, S) >= decompose(g, c, S).i1


def test_surrogate_individual_sutva_is_minimum():
    R = 5
    g = sutva_graph(R)
    rng = np.random.default_rng(3)
    S = np.abs(random_psd(rng, R))
    S = 0.5 * (S + S.T)
    ind = surrogate_general(g, S, individual_design(R))
    assert ind == pytest.approx(-8 * np.sum(np.triu(S, 1)))
    for labels in set_partitions(R):
        assert surrogate_general(g, S, Clustering(labels)) >= ind - 1e-12


def test_weight_matrix_examples():
    g = build_grid("square", side=2)
    S = np.eye(4)
    S[0, 3] = S[3, 0] = 0.3  # (0,0) and (1,1) are not adjacent
    S[0, 1] = S[1, 0] = 0.5
    Om = weight_matrix(g, S, 2)
    assert Om[0, 3] == pytest.approx(-0.3)
    assert Om[0, 1] == pytest.approx(4 * 0.5 - 0.5)
    assert np.all(np.diagonal(Om) == 0)
    assert np.array_equal(Om, Om.T)


def test_da_term_examples():
    g = build_grid("rectangle", width=2, height=1)
    const = FunctionOutcomeModel(lambda A, O: A)
    assert da_term(const, g, np.random.default_rng(0).random((5, 2))) == 0.0
    # CATE(O) = sum_i O_i, samples with CATE 0 and 2
    lin = FunctionOutcomeModel(lambda A, O: A * O)
    assert da_term(lin, g, np.array([[0.0, 0.0], [1.0, 1.0]])) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        da_term(lin, g, np.array([[1.0, 1.0]]))


small_grids = st.sampled_from([(1, 2), (2, 2), (3, 1), (3, 2), (3, 3), (4, 1), (4, 2), (4, 4), (2, 5)])


@settings(max_examples=80, deadline=None)
@given(small_grids, st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_formula_equals_enumeration(wh, m, seed):
    rng = np.random.default_rng(seed)
    g = build_grid("rectangle", width=wh[0], height=wh[1])
    R = g.region_count
    c = random_partition(rng, R, min(m, R))
    S = random_psd(rng, R)
    N = int(rng.integers(1, 5))
    assert N * sigma1_squared(g, c, S, N) == pytest.approx(exact_variance_oracle(g, c, S), rel=1e-10, abs=1e-12)


@settings(max_examples=80, deadline=None)
@given(small_grids, st.integers(1, 16), st.integers(0, 2**32 - 1), st.floats(0.01, 50))
def test_decomposition_identity_and_linearity(wh, m, seed, alpha):
    rng = np.random.default_rng(seed)
    g = build_grid("rectangle", width=wh[0], height=wh[1])
    R = g.region_count
    c = random_partition(rng, R, min(m, R))
    X = rng.standard_normal((R, R))
    S = X + X.T  # indefinite on purpose: formulas are linear in S
    b = decompose(g, c, S)
    parts = b.sc + b.i1 + b.j1 + b.j2 + b.j3
    assert parts == pytest.approx(b.sigma1_sq, rel=1e-9, abs=1e-9 * np.abs(S).sum())
    b2 = decompose(g, c, alpha * S)
    for name in ("sc", "i1", "j1", "j2", "j3", "sigma1_sq"):
        assert getattr(b2, name) == pytest.approx(alpha * getattr(b, name), rel=1e-9, abs=1e-9 * alpha * np.abs(S).sum())
    sg = surrogate_general(g, alpha * S, c)
    assert sg == pytest.approx(alpha * surrogate_general(g, S, c), rel=1e-9, abs=1e-9 * alpha * np.abs(S).sum())


@settings(max_examples=50, deadline=None)
@given(small_grids, st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_cut_loss_matches_surrogate(wh, m, seed):
    rng = np.random.default_rng(seed)
    g = build_grid("rectangle", width=wh[0], height=wh[1])
    R = g.region_count
    c = random_partition(rng, R, min(m, R))
    S = random_psd(rng, R)
    if c.cluster_count < 2:
        return
    Om = weight_matrix(g, S, c.cluster_count)
    assert cut_loss(Om, c) == pytest.approx(surrogate_general(g, S, c) / 8, rel=1e-12, abs=1e-12)
    if c.cluster_count == 2:
        assert surrogate_general(g, S, c) == surrogate_two(g, S, c)


def test_global_design_with_tiling_matches_formula():
    g = build_grid("square", side=4)
    S = build_model_covariance("exponential", 0.8, 16)
    c = tiling_partition(g, 2)
    assert sigma1_squared(g, c, S) == pytest.approx(exact_variance_oracle(g, c, S), rel=1e-10)
