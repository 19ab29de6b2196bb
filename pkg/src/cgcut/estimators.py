"""IS and doubly-robust ATE estimators for cluster-randomized experiment batches."""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.linear_model import Ridge
from sklearn.utils.validation import check_is_fitted

from ._validation import check_panel, check_positive_int, check_probability
from .graph import Clustering, cluster_touch_counts

__all__ = [
    "ExperimentBatch",
    "ZeroOutcomeModel",
    "FunctionOutcomeModel",
    "PooledRidgeOutcomeModel",
    "neighbor_average",
    "neighborhood_features",
    "exposure_indicator",
    "exposure_indicators",
    "exposure_probability",
    "exposure_probabilities",
    "is_estimate",
    "dr_estimate",
    "dr_contributions",
    "fit_outcome_model",
    "residuals",
    "crossfit_dr",
    "read_batch_csv",
    "write_batch_csv",
]


@dataclass(frozen=True, eq=False)
class ExperimentBatch:
    """n repetitions of (covariates O, treatments A, outcomes Y) over all R regions.

    ``design`` is the clustering the treatments were drawn under; every row of
    A must be constant within each of its clusters.
    """

    graph: object
    design: Clustering
    O: np.ndarray
    A: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        R = self.graph.region_count
        if self.design.region_count != R:
            raise ValueError("design and graph disagree on the number of regions")
        O = check_panel(self.O, "O")
        A = check_panel(self.A, "A", shape=O.shape)
        Y = check_panel(self.Y, "Y", shape=O.shape)
        if O.shape[1] != R:
            raise ValueError(f"batch has {O.shape[1]} regions, graph has {R}")
        if not np.isin(A, (0.0, 1.0)).all():
            raise ValueError("treatments must be binary")
        for name, arr in (("O", O), ("A", A), ("Y", Y)):
            arr = np.array(arr)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        self.check_design()

    @property
    def n(self):
        return self.O.shape[0]

    def check_design(self):
        a = self.design.assignment
        for j in range(self.design.cluster_count):
            block = self.A[:, a == j]
            if (block != block[:, :1]).any():
                raise ValueError(
                    f"treatments vary within cluster {j}: batch was not drawn from this design"
                )

    def rows(self, idx):
        idx = np.asarray(idx)
        return ExperimentBatch(self.graph, self.design, self.O[idx], self.A[idx], self.Y[idx])


def neighbor_average(graph, A):
    """Average treatment over each region's neighbours, excluding itself; 0 when isolated."""
    A = check_panel(A, "A")
    W = graph.adjacency.astype(float)
    deg = W.sum(axis=1)
    total = A @ W.T
    return np.divide(total, deg, out=np.zeros_like(total), where=deg > 0)


def neighborhood_features(graph, A, O):
    """Pooled design matrix, one row per (repetition, region), without the constant.

    Columns: O_i, A_i, Abar_i, O_i A_i, O_i Abar_i, l_x, l_y,
    O_i sin(l_x + l_y), O_i cos(l_x + l_y).
    """
    A = check_panel(A, "A")
    O = check_panel(O, "O", shape=A.shape)
    Abar = neighbor_average(graph, A)
    n = A.shape[0]
    lx = np.broadcast_to(graph.coords[:, 0], A.shape)
    ly = np.broadcast_to(graph.coords[:, 1], A.shape)
    phase = lx + ly
    cols = [O, A, Abar, O * A, O * Abar, lx, ly, O * np.sin(phase), O * np.cos(phase)]
    return np.stack([c.reshape(n * graph.region_count) for c in cols], axis=1)


class ZeroOutcomeModel:
    """Predicts zero everywhere; turns the DR estimator into IS."""

    descriptor = {"kind": "zero"}

    def predict(self, A, O):
        return np.zeros_like(check_panel(O, "O"))


class FunctionOutcomeModel:
    """Wraps a fixed callable ``f(A, O) -> n x R`` (an oracle or a deliberately wrong model)."""

    def __init__(self, func, name="function"):
        self.func = func
        self.descriptor = {"kind": "oracle" if name == "oracle" else name}

    def predict(self, A, O):
        A = check_panel(A, "A")
        O = check_panel(O, "O", shape=A.shape)
        return np.asarray(self.func(A, O), dtype=float).reshape(A.shape)


class PooledRidgeOutcomeModel(RegressorMixin, BaseEstimator):
    """One ridge regression shared by all regions, with coordinates as features.

    Features depend on treatments only through the closed neighbourhood, so
    predictions respect neighbourhood interference by construction.
    """

    def __init__(self, graph=None, alpha=1.0):
        self.graph = graph
        self.alpha = alpha

    @property
    def descriptor(self):
        return {"kind": "ridge", "penalty": self.alpha}

    def fit(self, A, O, Y):
        if self.alpha <= 0:
            raise ValueError("ridge penalty must be positive")
        A = check_panel(A, "A")
        O = check_panel(O, "O", shape=A.shape)
        Y = check_panel(Y, "Y", shape=A.shape)
        X = neighborhood_features(self.graph, A, O)
        self.ridge_ = Ridge(alpha=self.alpha, fit_intercept=True, solver="cholesky")
        self.ridge_.fit(X, Y.reshape(-1))
        self.coef_ = self.ridge_.coef_
        self.intercept_ = self.ridge_.intercept_
        return self

    def predict(self, A, O):
        check_is_fitted(self, "ridge_")
        A = check_panel(A, "A")
        X = neighborhood_features(self.graph, A, O)
        return self.ridge_.predict(X).reshape(A.shape)


def exposure_indicators(graph, A):
    """(T1, T0): whether each closed neighbourhood is entirely treated / entirely control."""
    A = check_panel(A, "A")
    closed = graph.closed_adjacency.astype(float)
    treated = A @ closed.T
    size = closed.sum(axis=1)
    return treated == size, treated == 0


def exposure_indicator(batch, i, t, a):
    """1 iff every region in N_i has treatment ``a`` (1 or 0) in repetition t."""
    T1, T0 = exposure_indicators(batch.graph, batch.A[t : t + 1])
    return int((T1 if a == 1 else T0)[0, i])


def exposure_probabilities(graph, design, p=0.5):
    """(P[T_i(1) = 1], P[T_i(0) = 1]) = (p^c_i, (1-p)^c_i) with c_i clusters touching N_i."""
    p = check_probability(p)
    c = cluster_touch_counts(graph, design)
    return p**c, (1 - p) ** c


def exposure_probability(graph, design, i, a, p=0.5):
    e1, e0 = exposure_probabilities(graph, design, p)
    return float((e1 if a == 1 else e0)[i])


def _average_total(contrib):
    """Mean over repetitions of the per-repetition sum over regions."""
    return float(contrib.sum(axis=1).sum() / contrib.shape[0])


def is_estimate(batch, p=0.5):
    T1, T0 = exposure_indicators(batch.graph, batch.A)
    e1, e0 = exposure_probabilities(batch.graph, batch.design, p)
    contrib = (T1 / e1 - T0 / e0) * batch.Y
    return _average_total(contrib)


def dr_contributions(batch, model, p=0.5):
    """Per-(repetition, region) terms nu(1) - nu(0) of the DR estimator."""
    batch.check_design()
    T1, T0 = exposure_indicators(batch.graph, batch.A)
    e1, e0 = exposure_probabilities(batch.graph, batch.design, p)
    ones = np.ones_like(batch.A)
    g1 = model.predict(ones, batch.O)
    g0 = model.predict(np.zeros_like(batch.A), batch.O)
    nu1 = g1 + (T1 / e1) * (batch.Y - g1)
    nu0 = g0 + (T0 / e0) * (batch.Y - g0)
    return nu1 - nu0


def dr_estimate(batch, model, p=0.5):
    return _average_total(dr_contributions(batch, model, p))


def _stack(batches):
    return (
        np.vstack([b.A for b in batches]),
        np.vstack([b.O for b in batches]),
        np.vstack([b.Y for b in batches]),
    )


def fit_outcome_model(batches, kind="ridge", penalty=1.0):
    """Fit ``"zero"`` or pooled ``"ridge"`` on every row of the given batches."""
    if isinstance(batches, ExperimentBatch):
        batches = [batches]
    if kind == "zero":
        return ZeroOutcomeModel()
    if kind != "ridge":
        raise ValueError(f"unknown regression kind {kind!r}")
    batches = list(batches)
    if not batches or sum(b.n for b in batches) < 1:
        raise ValueError("ridge regression needs at least one repetition")
    A, O, Y = _stack(batches)
    return PooledRidgeOutcomeModel(batches[0].graph, alpha=penalty).fit(A, O, Y)


def residuals(batch, model):
    return batch.Y - model.predict(batch.A, batch.O)


def crossfit_dr(batches, K=2, kind="ridge", penalty=1.0, history=(), p=0.5):
    """K-fold cross-fitted DR estimate over the repetitions of ``batches``.

    Repetitions are numbered in order across batches and fold k holds those
    with index ``t % K == k``. Each fold is scored with a model fitted on the
    other folds plus ``history`` (earlier batches that are not scored).
    """
    if isinstance(batches, ExperimentBatch):
        batches = [batches]
    batches = list(batches)
    K = check_positive_int(K, "K")
    total = sum(b.n for b in batches)
    if K < 2:
        raise ValueError("cross-fitting needs K >= 2")
    if total < K:
        raise ValueError(f"{total} repetitions cannot fill {K} folds")
    offsets = np.cumsum([0] + [b.n for b in batches])
    contrib = [None] * len(batches)
    for k in range(K):
        train, test = list(history), []
        for b, start in zip(batches, offsets):
            t = start + np.arange(b.n)
            out_fold = np.flatnonzero(t % K != k)
            in_fold = np.flatnonzero(t % K == k)
            if out_fold.size:
                train.append(b.rows(out_fold))
            test.append(in_fold)
        model = fit_outcome_model(train, kind, penalty)
        for idx, (b, rows) in enumerate(zip(batches, test)):
            if rows.size == 0:
                continue
            if contrib[idx] is None:
                contrib[idx] = np.zeros_like(b.Y)
            contrib[idx][rows] = dr_contributions(b.rows(rows), model, p)
    stacked = np.vstack([c for c in contrib if c is not None])
    return float(stacked.sum(axis=1).sum() / total)


def write_batch_csv(path, batch, t_offset=0):
    """CSV with header ``t,i,O,A,Y``, one row per (repetition, region)."""
    lines = ["t,i,O,A,Y"]
    for t in range(batch.n):
        for i in range(batch.graph.region_count):
            lines.append(
                f"{t + t_offset},{i},{float(batch.O[t, i])!r},{int(batch.A[t, i])},{float(batch.Y[t, i])!r}"
            )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_batch_csv(path, graph, design):
    data = np.genfromtxt(path, delimiter=",", names=True, ndmin=1)
    missing = {"t", "i", "O", "A", "Y"} - set(data.dtype.names or ())
    if missing:
        raise ValueError(f"{path}: missing columns {sorted(missing)}")
    t = data["t"].astype(int)
    i = data["i"].astype(int)
    ts = np.unique(t)
    R = graph.region_count
    if i.min() < 0 or i.max() >= R:
        raise ValueError(f"{path}: region index out of range for R={R}")
    row = np.searchsorted(ts, t)
    shape = (ts.size, R)
    O, A, Y = np.full(shape, np.nan), np.full(shape, np.nan), np.full(shape, np.nan)
    O[row, i], A[row, i], Y[row, i] = data["O"], data["A"], data["Y"]
    if np.isnan(O).any():
        raise ValueError(f"{path}: every repetition needs a row for each of the {R} regions")
    return ExperimentBatch(graph, design, O, A, Y)
