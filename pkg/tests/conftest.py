import itertools

import numpy as np
import pytest

from cgcut.graph import Clustering, RegionGraph, build_grid


def sutva_graph(R):
    """R isolated regions on a row (no adjacency)."""
    coords = np.column_stack([np.arange(R) * 2.0, np.zeros(R)])
    return RegionGraph(coords, np.zeros((R, R), dtype=int))


def path_graph(R):
    return build_grid("rectangle", width=R, height=1)


def set_partitions(n):
    """All set partitions of range(n) as restricted-growth label arrays."""

    def grow(prefix, top):
        if len(prefix) == n:
            yield np.array(prefix)
            return
        for lab in range(top + 2):
            yield from grow(prefix + [lab], max(top, lab))

    yield from grow([0], 0)


def random_partition(rng, R, m):
    labels = np.concatenate([np.arange(m), rng.integers(0, m, R - m)])
    rng.shuffle(labels)
    return Clustering.from_labels(labels)


def random_psd(rng, R):
    X = rng.standard_normal((R, R + 2))
    S = X @ X.T / (R + 2)
    return 0.5 * (S + S.T)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


__all__ = ["sutva_graph", "path_graph", "set_partitions", "random_partition", "random_psd", "itertools", "ACCEPTANCE_LINES"]
