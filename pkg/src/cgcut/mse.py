"""Exact MSE of the doubly-robust ATE estimator under cluster randomization.

All formulas take the residual covariance as given (no PSD requirement) and
are linear in it. ``N`` is the number of independent repetitions.
"""

import itertools
from dataclasses import dataclass

import numpy as np

from ._validation import check_positive_int, check_probability
from .covariance import as_array, positive_part
from .graph import boundary_mask, cluster_touch_counts, shared_cluster_counts, touch_matrix

__all__ = [
    "MseBreakdown",
    "sigma1_squared",
    "decompose",
    "exact_variance_oracle",
    "surrogate_two",
    "surrogate_general",
    "surrogate_interference_term",
    "weight_matrix",
    "cut_loss",
    "da_term",
]

ORACLE_MAX_CLUSTERS = 20


@dataclass(frozen=True)
class MseBreakdown:
    da: float
    sc: float
    i1: float
    j1: float
    j2: float
    j3: float
    sigma1_sq: float

    @property
    def i2(self):
        return self.j1 + self.j2 + self.j3

    @property
    def total(self):
        return self.da + self.sigma1_sq

    def as_row(self):
        return {
            "da": self.da,
            "sc": self.sc,
            "i1": self.i1,
            "j1": self.j1,
            "j2": self.j2,
            "j3": self.j3,
            "sigma1_sq": self.sigma1_sq,
            "total": self.total,
        }


def _covariance_for(g, S):
    return as_array(S, n=g.region_count)


def sigma1_squared(g, c, S, N=1, p=0.5):
    """Randomization variance of the DR estimator with known outcome functions.

    ``(1/N) sum_{i,i'} (p^-m + (1-p)^-m) S_ii' 1(m > 0)`` with ``m = m_ii'`` the
    number of clusters touched by both closed neighbourhoods.
    """
    S = _covariance_for(g, S)
    N = check_positive_int(N, "N")
    p = check_probability(p)
    M = shared_cluster_counts(g, c)
    weight = np.where(M > 0, p ** (-M.astype(float)) + (1 - p) ** (-M.astype(float)), 0.0)
    return float(np.sum(weight * S) / N)


def decompose(g, c, S, N=1, da=0.0):
    """Split sigma_1^2 (p = 0.5) into within-cluster and boundary terms.

    SC collects within-cluster covariance; I1 pairs any region with a boundary
    region of another cluster that touches it; J1-J3 are the second-order
    boundary corrections. ``sigma1_sq`` is evaluated independently by
    :func:`sigma1_squared`, so ``sc + i1 + j1 + j2 + j3`` checks it.
    """
    p = 0.5
    S = _covariance_for(g, S)
    N = check_positive_int(N, "N")
    a = c.assignment
    same = a[:, None] == a[None, :]
    diff = ~same
    b = boundary_mask(g, c)
    bb = b[:, None] & b[None, :]
    T = touch_matrix(g, c)
    # adj[i, i'] = N_i' meets the cluster of i
    adj = T[:, a].T
    M = shared_cluster_counts(g, c).astype(float)
    inv = p ** -(M + 1.0)

    sc = 4.0 * np.sum(S[same]) / N
    i1 = 8.0 * np.sum(S * (diff & b[None, :] & adj)) / N
    j1_mask = same & bb
    j1 = np.sum((S * (1.0 - p ** (M - 1.0)) * inv)[j1_mask]) / N
    cross = diff & bb
    j2 = np.sum(((S * inv - 2.0 * S / p**2) * adj)[cross]) / N
    j3 = np.sum((S * inv * ((M > 0).astype(float) - adj))[cross]) / N
    return MseBreakdown(
        da=float(da),
        sc=float(sc),
        i1=float(i1),
        j1=float(j1),
        j2=float(j2),
        j3=float(j3),
        sigma1_sq=sigma1_squared(g, c, S, N, p),
    )


def exact_variance_oracle(g, c, S, p=0.5):
    """Per-experiment variance by enumerating all 2^m cluster assignments.

    For each assignment the DR error is ``q^T e`` with
    ``q_i = T_i(1)/p^{c_i} - T_i(0)/(1-p)^{c_i}``; returns ``E[q^T S q]``.
    """
    S = _covariance_for(g, S)
    p = check_probability(p)
    m = c.cluster_count
    if m > ORACLE_MAX_CLUSTERS:
        raise ValueError(f"enumeration over 2^{m} assignments is too large (m <= {ORACLE_MAX_CLUSTERS})")
    closed = g.closed_adjacency
    ci = cluster_touch_counts(g, c)
    e1 = p**ci
    e0 = (1 - p) ** ci
    size = closed.sum(axis=1)
    total = 0.0
    for coins in itertools.product((0, 1), repeat=m):
        coins = np.array(coins)
        A = coins[c.assignment]
        treated = closed @ A
        q = (treated == size) / e1 - (treated == 0) / e0
        k = int(coins.sum())
        total += p**k * (1 - p) ** (m - k) * float(q @ S @ q)
    return total


def surrogate_interference_term(g, c, S, N=1):
    """First surrogate term for two clusters: ``(8R/N) sum_cross W S+``."""
    if c.cluster_count != 2:
        raise ValueError(f"needs exactly 2 clusters, got {c.cluster_count}")
    S = _covariance_for(g, S)
    a = c.assignment
    cross = a[:, None] < a[None, :]
    return float(8.0 * g.region_count * np.sum((g.adjacency * positive_part(S))[cross]) / N)


def surrogate_two(g, S, c, N=1):
    """Graph-cut surrogate for a two-cluster design."""
    if c.cluster_count != 2:
        raise ValueError(f"surrogate_two needs exactly 2 clusters, got {c.cluster_count}")
    return surrogate_general(g, S, c, N)


def surrogate_general(g, S, c, N=1):
    """``(8/N) sum_{j<k} sum_{C_j x C_k} [(2R/m) W S+ - S]``; zero for one cluster."""
    S = _covariance_for(g, S)
    N = check_positive_int(N, "N")
    m = c.cluster_count
    if m == 1:
        return 0.0
    return 8.0 * cut_loss(weight_matrix(g, S, m), c) / N


def weight_matrix(g, S, m):
    """Pairwise loss for separating two regions: ``(2R/m) W S+ - S``, zero diagonal."""
    S = _covariance_for(g, S)
    if m < 2:
        raise ValueError(f"weights need m >= 2, got {m}")
    R = g.region_count
    Om = (2.0 * R / m) * g.adjacency * positive_part(S) - S
    Om = 0.5 * (Om + Om.T)
    np.fill_diagonal(Om, 0.0)
    return Om


def cut_loss(Om, c):
    """Total weight over unordered pairs placed in different clusters."""
    a = c.assignment
    return float(np.sum(np.triu(Om, 1)[a[:, None] != a[None, :]]))


def da_term(model, g, covariates, N=1):
    """Design-agnostic term: sample variance of the fitted CATE across covariate draws, over N."""
    O = np.atleast_2d(np.asarray(covariates, dtype=float))
    if O.shape[0] < 2:
        raise ValueError("the DA term needs at least two covariate samples")
    N = check_positive_int(N, "N")
    ones = np.ones_like(O)
    cate = (model.predict(ones, O) - model.predict(np.zeros_like(O), O)).sum(axis=1)
    return float(np.var(cate, ddof=1) / N)
