"""Spectral minimisation of the graph-cut surrogate and exact-MSE model selection."""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_positive_int, check_symmetric_matrix
from .covariance import as_array, empirical_covariance
from .graph import Clustering, global_design, individual_design
from .mse import sigma1_squared, weight_matrix

__all__ = [
    "SpectralConfig",
    "DesignSelection",
    "laplacian",
    "spectral_embed",
    "kmeans",
    "cut_partition",
    "select_design",
    "default_m_max",
    "derive_seed",
    "CausalGraphCut",
    "adjacency_spectral_design",
]


@dataclass(frozen=True)
class SpectralConfig:
    eigen_tolerance: float = 1e-9
    zero_eigen_threshold: float = 1e-8
    kmeans_restarts: int = 10
    kmeans_max_iters: int = 100
    rng_seed: int = 0

    def __post_init__(self):
        if self.eigen_tolerance <= 0 or self.zero_eigen_threshold <= 0:
            raise ValueError("spectral tolerances must be positive")
        if self.kmeans_restarts < 1 or self.kmeans_max_iters < 1:
            raise ValueError("k-means restarts and iterations must be at least 1")


@dataclass(frozen=True)
class DesignSelection:
    """The chosen design plus the estimated MSE of every candidate.

    ``per_m_mse`` holds ``(m, sigma1_sq)`` for every candidate that was scored,
    in sweep order; ``candidates`` keeps the matching clusterings.
    """

    clustering: Clustering
    chosen_m: int
    per_m_mse: list
    candidates: list = field(default_factory=list, repr=False)

    @property
    def sigma1_sq(self):
        return dict(self.per_m_mse)[self.chosen_m]


def derive_seed(seed, *keys):
    """Independent 32-bit seed for a sub-task, stable across runs and thread counts."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *map(int, keys)])
    return int(ss.generate_state(1)[0])


def default_m_max(R):
    return max(1, math.ceil(R ** (2.0 / 3.0) - 1e-9))


def laplacian(Om):
    """``L = D - Om`` with D the row sums; may be indefinite for signed weights."""
    Om = check_symmetric_matrix(Om, name="weight matrix", atol=1e-9)
    Om = 0.5 * (Om + Om.T)
    return np.diag(Om.sum(axis=1)) - Om


def _fix_signs(V):
    V = V.copy()
    for col in range(V.shape[1]):
        k = int(np.argmax(np.abs(V[:, col])))
        if V[k, col] < 0:
            V[:, col] = -V[:, col]
    return V


def spectral_embed(L, m, cfg=SpectralConfig()):
    """Coordinates from the k = max(1, ceil(log2 m)) lowest eigenvectors of L.

    L always annihilates the constant vector. If that zero is the bottom of the
    spectrum the constant direction is skipped (Fiedler-style); if L has a
    clearly negative eigenvalue the lowest eigenvectors are used as they are.
    """
    L = check_symmetric_matrix(L, name="Laplacian", atol=1e-9)
    L = 0.5 * (L + L.T)
    R = L.shape[0]
    if m < 2:
        raise ValueError(f"spectral embedding needs m >= 2, got {m}")
    k = max(1, math.ceil(math.log2(m) - 1e-12))
    vals, vecs = np.linalg.eigh(L)
    norm = max(float(np.max(np.abs(vals))), 0.0)
    threshold = cfg.zero_eigen_threshold * max(norm, 1.0)
    if vals[0] >= -threshold:
        # deflate the constant vector so it sorts last; L and 11^T commute
        J = np.full((R, R), 1.0 / R)
        shifted = L + (norm + 1.0) * J
        vals, vecs = np.linalg.eigh(shifted)
        k = min(k, max(R - 1, 1))
    else:
        k = min(k, R)
    V = _fix_signs(vecs[:, :k])
    lam = vals[:k]
    scale = max(float(np.linalg.norm(L, 2)), 1.0)
    resid = np.linalg.norm(L @ V - V * lam, axis=0)
    if R > 1 and np.any(resid > cfg.eigen_tolerance * scale):
        raise np.linalg.LinAlgError(
            f"eigenpairs failed the residual check (max {resid.max():.3g} > {cfg.eigen_tolerance * scale:.3g})"
        )
    return V


def _sq_dist(X, C):
    return ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)


def _plusplus_init(X, m, rng):
    R = X.shape[0]
    centers = [X[rng.integers(R)]]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, m):
        total = d2.sum()
        idx = rng.integers(R) if total <= 0 else rng.choice(R, p=d2 / total)
        centers.append(X[idx])
        d2 = np.minimum(d2, ((X - X[idx]) ** 2).sum(axis=1))
    return np.array(centers)


def _repair_empty(X, labels, C, m):
    """Give every empty cluster the point farthest from its own centroid."""
    for j in range(m):
        if np.any(labels == j):
            continue
        sizes = np.bincount(labels, minlength=m)
        d = ((X - C[labels]) ** 2).sum(axis=1)
        d[sizes[labels] < 2] = -np.inf
        k = int(np.argmax(d))
        if not np.isfinite(d[k]):
            break
        labels[k] = j
        C[j] = X[k]
    return labels


def _lloyd(X, C, max_iters):
    m = C.shape[0]
    labels = np.argmin(_sq_dist(X, C), axis=1)
    for _ in range(max_iters):
        labels = _repair_empty(X, labels, C, m)
        C_new = C.copy()
        for j in range(m):
            mask = labels == j
            if mask.any():
                C_new[j] = X[mask].mean(axis=0)
        new_labels = np.argmin(_sq_dist(X, C_new), axis=1)
        C = C_new
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    labels = _repair_empty(X, labels, C, m)
    inertia = float(((X - C[labels]) ** 2).sum())
    return labels, inertia


def kmeans(points, m, cfg=SpectralConfig()):
    """Best-of-restarts Lloyd k-means with k-means++ seeding.

    Empty clusters take the point farthest from its centroid. Labels are
    canonicalised by first occurrence. Fewer than m clusters come back only
    when the points have fewer than m distinct locations.
    """
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    R = X.shape[0]
    m = check_positive_int(m, "m")
    if m > R:
        raise ValueError(f"cannot form {m} clusters from {R} points")
    if m == 1:
        return global_design(R)
    if m == R:
        return individual_design(R)
    rng = np.random.default_rng(cfg.rng_seed)
    best, best_inertia = None, np.inf
    for _ in range(cfg.kmeans_restarts):
        labels, inertia = _lloyd(X, _plusplus_init(X, m, rng), cfg.kmeans_max_iters)
        if inertia < best_inertia:
            best, best_inertia = labels, inertia
    return Clustering.from_labels(best)


def cut_partition(g, S, m, N=1, cfg=SpectralConfig()):
    """Approximate surrogate minimiser with m clusters (may return fewer)."""
    R = g.region_count
    if not 2 <= m <= R:
        raise ValueError(f"m must lie in [2, {R}], got {m}")
    L = laplacian(weight_matrix(g, S, m))
    return kmeans(spectral_embed(L, m, cfg), m, cfg)


def adjacency_spectral_design(g, m=None, cfg=SpectralConfig()):
    """Covariance-free spectral clustering of the adjacency graph into m parts."""
    R = g.region_count
    m = default_m_max(R) if m is None else int(m)
    if m <= 1:
        return global_design(R)
    if m >= R:
        return individual_design(R)
    L = laplacian(g.adjacency.astype(float))
    return kmeans(spectral_embed(L, m, cfg), m, cfg)


def select_design(
    g,
    S,
    N=1,
    m_max=None,
    cfg=SpectralConfig(),
    include_individual=True,
    exclude_global=False,
    threads=1,
):
    """Sweep m = 1..m_max, cut for each m, and keep the lowest exact sigma_1^2.

    The individual design is appended as an extra candidate when it is not
    already in the sweep. Ties go to the smaller m.
    """
    S = as_array(S, n=g.region_count)
    R = g.region_count
    m_max = default_m_max(R) if m_max is None else check_positive_int(m_max, "m_max")
    m_max = min(m_max, R)
    ms = [m for m in range(1, m_max + 1) if not (exclude_global and m == 1)]

    def candidate(m):
        if m == 1:
            return global_design(R)
        if m == R:
            return individual_design(R)
        sub = SpectralConfig(
            cfg.eigen_tolerance,
            cfg.zero_eigen_threshold,
            cfg.kmeans_restarts,
            cfg.kmeans_max_iters,
            derive_seed(cfg.rng_seed, m),
        )
        return cut_partition(g, S, m, N, sub)

    if threads > 1 and len(ms) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            designs = list(pool.map(candidate, ms))
    else:
        designs = [candidate(m) for m in ms]
    if include_individual and m_max < R:
        ms.append(R)
        designs.append(individual_design(R))
    if not ms:
        raise ValueError("no candidate designs to compare")
    scores = [sigma1_squared(g, d, S, N, 0.5) for d in designs]
    best = min(range(len(ms)), key=lambda k: (scores[k], ms[k]))
    return DesignSelection(
        clustering=designs[best],
        chosen_m=ms[best],
        per_m_mse=list(zip(ms, scores)),
        candidates=designs,
    )


class CausalGraphCut(ClusterMixin, BaseEstimator):
    """Cluster-randomized design chosen by spectral graph cut and exact-MSE selection.

    ``fit`` takes an n x R matrix of outcome residuals, or an R x R covariance
    matrix when ``covariance="precomputed"``.

    Parameters
    ----------
    graph : RegionGraph
    n_repetitions : int
        Number of repetitions N used in the MSE formula.
    m_max : int or None
        Largest swept cluster count; defaults to ceil(R^(2/3)).
    covariance : {"empirical", "precomputed"}
    shrinkage : float
        Shrinkage toward the diagonal for the empirical covariance.

    Attributes
    ----------
    labels_ : ndarray of shape (R,)
    n_clusters_ : int
    mse_path_ : list of (m, sigma1_sq)
    covariance_ : ndarray of shape (R, R)
    selection_ : DesignSelection
    """

    def __init__(
        self,
        graph=None,
        n_repetitions=1,
        m_max=None,
        covariance="empirical",
        shrinkage=0.0,
        include_individual=True,
        exclude_global=False,
        eigen_tolerance=1e-9,
        zero_eigen_threshold=1e-8,
        kmeans_restarts=10,
        kmeans_max_iters=100,
        random_state=0,
        n_jobs=1,
    ):
        self.graph = graph
        self.n_repetitions = n_repetitions
        self.m_max = m_max
        self.covariance = covariance
        self.shrinkage = shrinkage
        self.include_individual = include_individual
        self.exclude_global = exclude_global
        self.eigen_tolerance = eigen_tolerance
        self.zero_eigen_threshold = zero_eigen_threshold
        self.kmeans_restarts = kmeans_restarts
        self.kmeans_max_iters = kmeans_max_iters
        self.random_state = random_state
        self.n_jobs = n_jobs

    def _spectral_config(self):
        return SpectralConfig(
            eigen_tolerance=self.eigen_tolerance,
            zero_eigen_threshold=self.zero_eigen_threshold,
            kmeans_restarts=self.kmeans_restarts,
            kmeans_max_iters=self.kmeans_max_iters,
            rng_seed=int(self.random_state or 0),
        )

    def fit(self, X, y=None):
        if self.graph is None:
            raise ValueError("CausalGraphCut needs a RegionGraph")
        R = self.graph.region_count
        if self.covariance == "precomputed":
            S = as_array(X, n=R)
        elif self.covariance == "empirical":
            X = np.asarray(X, dtype=float)
            if X.ndim != 2 or X.shape[1] != R:
                raise ValueError(f"residuals must have shape (n, {R}), got {X.shape}")
            S = empirical_covariance(X, self.shrinkage).values
        else:
            raise ValueError(f"covariance must be 'empirical' or 'precomputed', got {self.covariance!r}")
        self.covariance_ = np.array(S)
        self.selection_ = select_design(
            self.graph,
            S,
            N=self.n_repetitions,
            m_max=self.m_max,
            cfg=self._spectral_config(),
            include_individual=self.include_individual,
            exclude_global=self.exclude_global,
            threads=self.n_jobs or 1,
        )
        self.clustering_ = self.selection_.clustering
        self.labels_ = np.array(self.clustering_.assignment)
        self.n_clusters_ = self.clustering_.cluster_count
        self.mse_path_ = list(self.selection_.per_m_mse)
        return self

    def score(self, X=None, y=None):
        """Negative estimated MSE of the chosen design (higher is better)."""
        check_is_fitted(self, "labels_")
        return -self.selection_.sigma1_sq
