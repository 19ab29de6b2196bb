import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cgcut.covariance import (
    CovarianceMatrix,
    build_model_covariance,
    check_decaying,
    correlation_ratio,
    empirical_covariance,
    factorize_for_sampling,
    positive_part,
    read_covariance_csv,
    write_covariance_csv,
)
from cgcut.graph import build_grid

from conftest import path_graph


def test_exponential_example():
    S = build_model_covariance("exponential", 0.5, 3).values
    assert np.allclose(S, [[1, 0.5, 0.25], [0.5, 1, 0.5], [0.25, 0.5, 1]], atol=0, rtol=0)


def test_constant_example():
    S = build_model_covariance("constant", 0.9, 2).values
    assert np.array_equal(S, [[1, 0.9], [0.9, 1]])


def test_truncated_constant_cuts_off_far_pairs():
    S = build_model_covariance("truncated-constant", 0.5, 4).values
    assert S[0, 3] == 0.0
    assert S[0, 1] == pytest.approx(0.5 - 1 / 4)
    assert S[0, 2] == pytest.approx(0.5 - 2 / 4)
    assert np.all(np.diagonal(S) == 1.0)


@pytest.mark.parametrize("rho", [0.0, -0.1, 1.5])
def test_rho_out_of_range(rho):
    with pytest.raises(ValueError):
        build_model_covariance("exponential", rho, 3)


def test_unknown_model():
    with pytest.raises(ValueError):
        build_model_covariance("matern", 0.5, 3)


def test_covariance_matrix_invariants():
    with pytest.raises(ValueError):
        CovarianceMatrix(np.array([[1.0, 0.2], [0.3, 1.0]]))
    with pytest.raises(ValueError):
        CovarianceMatrix(np.array([[0.0, 0.0], [0.0, 1.0]]))


def test_positive_part_examples():
    S = np.array([[1.0, 0.2], [0.2, 1.0]])
    assert np.array_equal(positive_part(S), S)
    assert positive_part(np.array([[1.0, -0.3], [-0.3, 1.0]]))[0, 1] == 0.0
    assert not positive_part(np.zeros((3, 3))).any()


def test_empirical_covariance_single_sample():
    S = empirical_covariance(np.array([[1.0, -1.0]]), 0.0).values
    assert np.array_equal(S, [[1, -1], [-1, 1]])


def test_full_shrinkage_keeps_only_the_diagonal(rng):
    E = rng.standard_normal((7, 4))
    S = empirical_covariance(E, 1.0).values
    assert np.allclose(S, np.diag((E**2).mean(axis=0)))


def test_empirical_covariance_rejects_empty():
    with pytest.raises(ValueError):
        empirical_covariance(np.zeros((0, 3)))


def test_empirical_covariance_converges(rng):
    S = build_model_covariance("exponential", 0.5, 5).values
    F = factorize_for_sampling(S)
    E = rng.standard_normal((100_000, 5)) @ F.T
    est = empirical_covariance(E, 0.0).values
    assert np.all(np.abs(est - S) <= 0.05 * np.abs(S))


def test_empirical_covariance_recovers_population_exactly():
    # the population {+sqrt(R) f_k, -sqrt(R) f_k} has second moment F F^T
    S = build_model_covariance("exponential", 0.6, 4).values
    F = np.linalg.cholesky(S)
    rows = np.sqrt(4) * F.T
    E = np.vstack([rows, -rows])
    assert np.allclose(empirical_covariance(E, 0.0).values, S, atol=1e-13)


def test_check_decaying_examples():
    g = path_graph(6)
    assert check_decaying(g, build_model_covariance("exponential", 0.5, 6))
    assert check_decaying(g, build_model_covariance("constant", 0.4, 6))
    g4 = path_graph(4)
    bad4 = np.eye(4)
    bad4[0, 1] = bad4[1, 0] = 0.1
    bad4[0, 3] = bad4[3, 0] = 0.9
    assert not check_decaying(g4, bad4)


def test_check_decaying_dimension_mismatch():
    with pytest.raises(ValueError):
        check_decaying(path_graph(3), np.eye(4))


def test_factorize_identity():
    assert np.array_equal(factorize_for_sampling(np.eye(3)), np.eye(3))


def test_factorize_exponential():
    S = build_model_covariance("exponential", 0.5, 3).values
    F = factorize_for_sampling(S)
    assert np.allclose(F @ F.T, S, atol=1e-10)


def test_factorize_indefinite_matrix():
    # the unit-diagonal truncated-constant models stay PSD in practice, so use a
    # banded matrix with a negative eigenvalue (1 - 0.9*sqrt(2))
    S = np.array([[1.0, 0.9, 0.0], [0.9, 1.0, 0.9], [0.0, 0.9, 1.0]])
    vals, vecs = np.linalg.eigh(S)
    assert vals[0] < 0
    F = factorize_for_sampling(S)
    projection = (vecs * np.clip(vals, 0, None)) @ vecs.T
    assert np.allclose(F @ F.T, projection, atol=1e-10)
    assert np.linalg.eigvalsh(F @ F.T)[0] >= -1e-10


def test_correlation_ratio():
    S = np.array([[1.0, 0.5], [0.5, 2.0]])
    assert correlation_ratio(S) == pytest.approx(0.5 / 0.5)
    with pytest.raises(ValueError):
        correlation_ratio(np.eye(2))


def test_csv_roundtrip_is_exact(tmp_path, rng):
    S = np.cov(rng.standard_normal((5, 20)))
    write_covariance_csv(tmp_path / "s.csv", S)
    assert np.array_equal(read_covariance_csv(tmp_path / "s.csv").values, S)


def test_missing_csv_names_path(tmp_path):
    with pytest.raises(FileNotFoundError, match="nope.csv"):
        read_covariance_csv(tmp_path / "nope.csv")


models = st.sampled_from(["constant", "truncated-constant", "exponential"])


@settings(max_examples=50, deadline=None)
@given(models, st.floats(0.01, 0.99), st.integers(1, 30))
def test_model_matrices_symmetric_unit_diagonal(model, rho, R):
    S = build_model_covariance(model, rho, R).values
    assert np.array_equal(S, S.T)
    assert np.all(np.diagonal(S) == 1.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 100.0))
def test_positive_part_and_decaying_scale_properties(seed, alpha):
    rng = np.random.default_rng(seed)
    g = build_grid("square", side=3)
    X = rng.standard_normal((9, 9))
    S = X + X.T
    P = positive_part(S)
    assert np.all(P >= S) and np.all(P >= 0)
    assert np.array_equal(positive_part(P), P)
    assert check_decaying(g, S) == check_decaying(g, alpha * S)
