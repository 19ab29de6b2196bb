"""Residual covariance models, empirical estimation and sampling factors."""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._validation import check_panel, check_square_matrix, check_symmetric_matrix

__all__ = [
    "CovarianceMatrix",
    "COVARIANCE_MODELS",
    "build_model_covariance",
    "positive_part",
    "empirical_covariance",
    "check_decaying",
    "factorize_for_sampling",
    "correlation_ratio",
    "write_covariance_csv",
    "read_covariance_csv",
    "as_array",
]

COVARIANCE_MODELS = ("constant", "truncated-constant", "exponential")


@dataclass(frozen=True, eq=False)
class CovarianceMatrix:
    """Symmetric R x R residual covariance with a record of where it came from.

    ``origin`` is a small dict, e.g. ``{"model": "exponential", "rho": 0.5}``
    or ``{"model": "empirical", "samples": 40, "shrinkage": 0.1}``.
    """

    values: np.ndarray
    origin: dict = field(default_factory=dict)

    def __post_init__(self):
        S = check_symmetric_matrix(self.values, name="covariance", atol=1e-12)
        if not np.all(np.diagonal(S) > 0):
            raise ValueError("covariance diagonal must be strictly positive")
        S = np.array(S, dtype=float)
        S.setflags(write=False)
        object.__setattr__(self, "values", S)
        object.__setattr__(self, "origin", dict(self.origin))

    @property
    def size(self):
        return self.values.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


def as_array(S, n=None):
    if isinstance(S, CovarianceMatrix):
        S = S.values
    return check_square_matrix(S, name="covariance", n=n)


def build_model_covariance(model, rho, R):
    """One of the three synthetic covariance models over region index distance.

    constant: rho for every off-diagonal pair; truncated-constant:
    ``rho - |i-j|/R`` while ``|i-j| <= rho*R`` and 0 beyond; exponential:
    ``rho**|i-j|``. All have unit diagonal.
    """
    rho = float(rho)
    R = int(R)
    if not 0.0 < rho <= 1.0:
        raise ValueError(f"rho must lie in (0, 1], got {rho}")
    if R < 1:
        raise ValueError(f"R must be positive, got {R}")
    idx = np.arange(R)
    dist = np.abs(idx[:, None] - idx[None, :]).astype(float)
    if model == "constant":
        S = np.full((R, R), rho)
    elif model == "truncated-constant":
        S = (rho - dist / R) * (dist <= rho * R)
    elif model == "exponential":
        S = rho**dist
    else:
        raise ValueError(f"unknown covariance model {model!r}; expected one of {COVARIANCE_MODELS}")
    np.fill_diagonal(S, 1.0)
    return CovarianceMatrix(S, {"model": model, "rho": rho})


def positive_part(S):
    return np.maximum(as_array(S), 0.0)


def empirical_covariance(residuals, shrinkage=0.0):
    """Uncentred second-moment estimate, shrunk toward its own diagonal.

    Residuals are mean-zero by construction, so no centring is applied. The
    result is ``(1 - shrinkage) * S + shrinkage * diag(S)``.
    """
    E = check_panel(residuals, "residuals")
    n = E.shape[0]
    if n == 0:
        raise ValueError("need at least one residual row")
    lam = float(shrinkage)
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"shrinkage must lie in [0, 1], got {lam}")
    S = E.T @ E / n
    S = 0.5 * (S + S.T)
    S = (1.0 - lam) * S + lam * np.diag(np.diagonal(S))
    # a region with identically zero residuals would break the positive diagonal
    d = np.diagonal(S).copy()
    tiny = d <= 0
    if tiny.any():
        S[tiny, tiny] = max(float(d[~tiny].min()) if (~tiny).any() else 1.0, 1e-12) * 1e-6
    return CovarianceMatrix(S, {"model": "empirical", "samples": n, "shrinkage": lam})


def check_decaying(g, S):
    """Whether neighbours are never less correlated than a third, unrelated region.

    For every ordered pair of neighbours (i1, i2) and every i3 adjacent to
    neither, require ``S[i1, i2] >= S[i1, i3]``. Invariant to positive scaling.
    """
    S = as_array(S)
    R = g.region_count
    if S.shape != (R, R):
        raise ValueError(f"covariance is {S.shape[0]} x {S.shape[0]} but the graph has {R} regions")
    W = g.adjacency > 0
    closed = W | np.eye(R, dtype=bool)
    for i1 in range(R):
        for i2 in np.flatnonzero(W[i1]):
            others = ~(closed[i1] | closed[i2])
            if others.any() and S[i1, others].max() > S[i1, i2]:
                return False
    return True


def correlation_ratio(S):
    """``max_{i != i'} S / min_{i, i'} S``; defined when every entry is positive."""
    S = as_array(S)
    lo = S.min()
    if lo <= 0:
        raise ValueError("the ratio needs a strictly positive covariance")
    R = S.shape[0]
    off = S[~np.eye(R, dtype=bool)]
    hi = off.max() if off.size else S.max()
    return float(hi / lo)


def factorize_for_sampling(S):
    """Return F with ``F @ F.T`` equal to S, or to its PSD projection if S is indefinite."""
    S = as_array(S)
    S = 0.5 * (S + S.T)
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(S)
        return vecs * np.sqrt(np.clip(vals, 0.0, None))


def write_covariance_csv(path, S):
    S = as_array(S)
    lines = [",".join(repr(float(v)) for v in row) for row in S]
    Path(path).write_text("\n".join(lines) + "\n")


def read_covariance_csv(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"covariance file not found: {path}")
    S = np.loadtxt(path, delimiter=",", ndmin=2)
    return CovarianceMatrix(S, {"model": "file", "path": str(path)})
