"""Input validation helpers shared across modules."""

import numpy as np


def check_square_matrix(M, name="matrix", n=None):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be a square 2-D array, got shape {M.shape}")
    if n is not None and M.shape[0] != n:
        raise ValueError(f"{name} has size {M.shape[0]}, expected {n}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} contains non-finite values")
    return M


def check_symmetric_matrix(M, name="matrix", n=None, atol=1e-9):
    M = check_square_matrix(M, name=name, n=n)
    if not np.allclose(M, M.T, rtol=0.0, atol=atol):
        raise ValueError(f"{name} is not symmetric (atol={atol})")
    return M


def check_probability(p, name="p"):
    p = float(p)
    if not 0.0 < p < 1.0:
        raise ValueError(f"{name} must lie in (0, 1), got {p}")
    return p


def check_positive_int(value, name):
    if isinstance(value, bool) or int(value) != value or int(value) < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_panel(X, name, shape=None):
    """Validate an n x R array of per-repetition, per-region values."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise ValueError(f"{name} must be 2-D (repetitions x regions), got shape {X.shape}")
    if shape is not None and X.shape != tuple(shape):
        raise ValueError(f"{name} has shape {X.shape}, expected {tuple(shape)}")
    return X
