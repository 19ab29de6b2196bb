"""Spatial region graphs, cluster partitions and the combinatorial quantities
(boundaries, cluster-touch counts, shared-cluster counts) used by the MSE
formulas.

Regions are lattice cells indexed row-major (by ``(l_y, l_x)``). Two cells are
neighbours when they share an edge (4-connectivity). Neighbourhoods are closed:
every region belongs to its own neighbourhood.
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "RegionGraph",
    "Clustering",
    "build_grid",
    "graph_from_coords",
    "boundary_regions",
    "cluster_touch_count",
    "cluster_touch_counts",
    "shared_cluster_count",
    "shared_cluster_counts",
    "touch_matrix",
    "tiling_partition",
    "global_design",
    "individual_design",
    "write_clustering",
    "read_clustering",
]

GRID_SHAPES = ("square", "rectangle", "circle", "fan")


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class RegionGraph:
    """R regions with lattice coordinates and a symmetric 0/1 adjacency.

    ``shape`` and ``dims`` record how the graph was built (``None`` for graphs
    read from coordinates or an explicit edge list); tilings need them.
    """

    coords: np.ndarray
    adjacency: np.ndarray
    shape: str | None = None
    dims: dict = field(default_factory=dict)

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        W = np.asarray(self.adjacency)
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise ValueError(f"coords must have shape (R, 2), got {coords.shape}")
        R = coords.shape[0]
        if R < 1:
            raise ValueError("a region graph needs at least one region")
        if W.shape != (R, R):
            raise ValueError(f"adjacency must have shape ({R}, {R}), got {W.shape}")
        if not np.isin(W, (0, 1)).all():
            raise ValueError("adjacency must be binary")
        if (W != W.T).any():
            raise ValueError("adjacency must be symmetric")
        if np.diagonal(W).any():
            raise ValueError("adjacency must have a zero diagonal")
        if len({tuple(c) for c in coords.tolist()}) != R:
            raise ValueError("region coordinates must be unique")
        object.__setattr__(self, "coords", _frozen(coords, float))
        object.__setattr__(self, "adjacency", _frozen(W, np.int8))
        object.__setattr__(self, "dims", dict(self.dims))

    @property
    def region_count(self):
        return self.coords.shape[0]

    @property
    def degrees(self):
        return self.adjacency.sum(axis=1).astype(int)

    @property
    def d_max(self):
        return int(self.degrees.max())

    @property
    def closed_adjacency(self):
        """Adjacency with ones on the diagonal: row i is the indicator of N_i."""
        return self.adjacency.astype(np.int64) + np.eye(self.region_count, dtype=np.int64)

    @property
    def neighborhoods(self):
        return [np.flatnonzero(row) for row in self.closed_adjacency]

    def neighborhood(self, i):
        self._check_region(i)
        return np.flatnonzero(self.closed_adjacency[i])

    def _check_region(self, i):
        if not 0 <= int(i) < self.region_count:
            raise IndexError(f"region index {i} out of range [0, {self.region_count})")

    def __repr__(self):
        return f"RegionGraph(R={self.region_count}, edges={int(self.adjacency.sum()) // 2}, shape={self.shape!r})"


@dataclass(frozen=True, eq=False)
class Clustering:
    """A partition of regions: ``assignment[i]`` is the cluster of region i."""

    assignment: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.assignment)
        if labels.ndim != 1 or labels.size == 0:
            raise ValueError("assignment must be a non-empty 1-D array")
        if not np.issubdtype(labels.dtype, np.integer):
            if not np.all(labels == np.round(labels)):
                raise ValueError("cluster labels must be integers")
        labels = labels.astype(np.int64)
        m = int(labels.max()) + 1
        if labels.min() < 0 or np.unique(labels).size != m:
            raise ValueError("cluster labels must cover 0..m-1 with no empty cluster")
        object.__setattr__(self, "assignment", _frozen(labels, np.int64))

    @classmethod
    def from_labels(cls, labels):
        """Relabel arbitrary labels to 0..m-1 in order of first occurrence."""
        labels = np.asarray(labels)
        _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
        order = np.argsort(np.argsort(first))
        return cls(order[inverse.ravel()])

    @property
    def cluster_count(self):
        return int(self.assignment.max()) + 1

    @property
    def region_count(self):
        return self.assignment.size

    def members(self, j):
        return np.flatnonzero(self.assignment == j)

    def onehot(self):
        return np.eye(self.cluster_count, dtype=np.int64)[self.assignment]

    def __eq__(self, other):
        return isinstance(other, Clustering) and np.array_equal(self.assignment, other.assignment)

    def __hash__(self):
        return hash(self.assignment.tobytes())

    def __repr__(self):
        return f"Clustering(R={self.region_count}, m={self.cluster_count})"


def global_design(R):
    return Clustering(np.zeros(R, dtype=np.int64))


def individual_design(R):
    return Clustering(np.arange(R))


def graph_from_coords(coords, shape=None, dims=None):
    """Build a 4-connectivity graph over lattice cells, indexed row-major."""
    coords = np.asarray(coords, dtype=float).reshape(-1, 2)
    order = np.lexsort((coords[:, 0], coords[:, 1]))
    coords = coords[order]
    diff = np.abs(coords[:, None, :] - coords[None, :, :]).sum(axis=2)
    W = (np.abs(diff - 1.0) < 1e-9).astype(np.int8)
    return RegionGraph(coords, W, shape=shape, dims=dims or {})


def build_grid(shape, **dims):
    """Lattice region graph for one of the four synthetic layouts.

    square(side), rectangle(width, height), circle(radius),
    fan(radius, sectors=4). Circles keep cells with x^2 + y^2 <= r^2 around
    the origin; fans additionally drop a one-cell-wide band along each of the
    ``sectors`` boundary rays, leaving ``sectors`` separated wedges.
    """
    if shape == "square":
        side = int(dims["side"])
        xs, ys = np.meshgrid(np.arange(side), np.arange(side))
        dims = {"side": side}
    elif shape == "rectangle":
        width, height = int(dims["width"]), int(dims["height"])
        xs, ys = np.meshgrid(np.arange(width), np.arange(height))
        dims = {"width": width, "height": height}
    elif shape in ("circle", "fan"):
        r = float(dims["radius"])
        span = np.arange(-int(np.floor(r)), int(np.floor(r)) + 1)
        xs, ys = np.meshgrid(span, span)
        keep = xs**2 + ys**2 <= r * r
        if shape == "fan":
            sectors = int(dims.get("sectors", 4))
            if sectors < 2:
                raise ValueError("a fan needs at least 2 sectors")
            for j in range(sectors):
                theta = 2 * np.pi * j / sectors
                along = xs * np.cos(theta) + ys * np.sin(theta)
                perp = -xs * np.sin(theta) + ys * np.cos(theta)
                keep &= ~((along >= -0.5) & (np.abs(perp) < 0.5 + 1e-9))
            dims = {"radius": r, "sectors": sectors}
        else:
            dims = {"radius": r}
        xs, ys = xs[keep], ys[keep]
    else:
        raise ValueError(f"unknown grid shape {shape!r}; expected one of {GRID_SHAPES}")
    coords = np.column_stack([np.ravel(xs), np.ravel(ys)])
    if coords.shape[0] == 0:
        raise ValueError(f"{shape} grid with {dims} has no regions")
    return graph_from_coords(coords, shape=shape, dims=dims)


def _check_pair(g, c):
    if c.region_count != g.region_count:
        raise ValueError(
            f"clustering covers {c.region_count} regions but the graph has {g.region_count}"
        )


def touch_matrix(g, c):
    """R x m boolean matrix: entry (i, j) is whether N_i meets cluster j."""
    _check_pair(g, c)
    return (g.closed_adjacency @ c.onehot()) > 0


def cluster_touch_counts(g, c):
    return touch_matrix(g, c).sum(axis=1).astype(np.int64)


def cluster_touch_count(g, c, i):
    """Number of distinct clusters meeting the closed neighbourhood of i."""
    g._check_region(i)
    return int(cluster_touch_counts(g, c)[i])


def shared_cluster_counts(g, c):
    """R x R matrix of m_{ii'}: clusters met by both N_i and N_i'."""
    T = touch_matrix(g, c).astype(np.int64)
    return T @ T.T


def shared_cluster_count(g, c, i, i2):
    g._check_region(i)
    g._check_region(i2)
    T = touch_matrix(g, c)
    return int(np.sum(T[i] & T[i2]))


def boundary_mask(g, c):
    """Regions with at least one neighbour in a different cluster."""
    _check_pair(g, c)
    a = c.assignment
    return ((g.adjacency > 0) & (a[:, None] != a[None, :])).any(axis=1)


def boundary_regions(g, c, j):
    if not 0 <= int(j) < c.cluster_count:
        raise ValueError(f"cluster label {j} out of range [0, {c.cluster_count})")
    return np.flatnonzero(boundary_mask(g, c) & (c.assignment == j))


def interior_regions(g, c, j):
    if not 0 <= int(j) < c.cluster_count:
        raise ValueError(f"cluster label {j} out of range [0, {c.cluster_count})")
    return np.flatnonzero(~boundary_mask(g, c) & (c.assignment == j))


def _tile_index(offset, extent, tiles):
    size = extent // tiles
    return np.minimum(offset // size, tiles - 1)


def tiling_partition(g, tiles_per_side):
    """Split a square/rectangle grid into ``tiles_per_side**2`` axis-aligned tiles.

    When a side is not divisible, the last tile row/column absorbs the
    remainder.
    """
    t = int(tiles_per_side)
    if g.shape not in ("square", "rectangle"):
        raise ValueError(f"tiling needs a square or rectangle grid, got shape {g.shape!r}")
    if g.shape == "square":
        width = height = g.dims["side"]
    else:
        width, height = g.dims["width"], g.dims["height"]
    if t < 1 or t > min(width, height):
        raise ValueError(f"tiles_per_side must be in [1, {min(width, height)}], got {t}")
    x = g.coords[:, 0].astype(int)
    y = g.coords[:, 1].astype(int)
    labels = _tile_index(y, height, t) * t + _tile_index(x, width, t)
    return Clustering.from_labels(labels)


def _fmt(v):
    v = float(v)
    return str(int(v)) if v.is_integer() else repr(v)


def write_clustering(path, g, c=None, edges=False):
    """Write ``R m`` then ``index l_x l_y label`` lines, plus an optional edge list."""
    c = global_design(g.region_count) if c is None else c
    _check_pair(g, c)
    lines = [f"{g.region_count} {c.cluster_count}"]
    for i, ((x, y), lab) in enumerate(zip(g.coords, c.assignment)):
        lines.append(f"{i} {_fmt(x)} {_fmt(y)} {int(lab)}")
    if edges:
        pairs = np.argwhere(np.triu(g.adjacency) > 0)
        lines.append(f"edges {len(pairs)}")
        lines.extend(f"{i} {j}" for i, j in pairs)
    Path(path).write_text("\n".join(lines) + "\n")


def _infer_lattice(coords):
    """Recognise a full ``w x h`` lattice anchored at the origin."""
    if not np.all(coords == np.round(coords)) or coords.min() != 0:
        return None, {}
    w, h = int(coords[:, 0].max()) + 1, int(coords[:, 1].max()) + 1
    if w * h != coords.shape[0]:
        return None, {}
    if w == h:
        return "square", {"side": w}
    return "rectangle", {"width": w, "height": h}


def read_clustering(path):
    """Inverse of :func:`write_clustering`; returns ``(graph, clustering)``."""
    path = Path(path)
    rows = [ln.split() for ln in path.read_text().splitlines() if ln.strip()]
    if not rows or len(rows[0]) != 2:
        raise ValueError(f"{path}: expected header 'R m'")
    R, m = int(rows[0][0]), int(rows[0][1])
    body = rows[1 : R + 1]
    if len(body) != R or any(len(r) != 4 for r in body):
        raise ValueError(f"{path}: expected {R} lines of 'index l_x l_y label'")
    idx = np.array([int(r[0]) for r in body])
    if not np.array_equal(np.sort(idx), np.arange(R)):
        raise ValueError(f"{path}: region indices must be 0..{R - 1}")
    coords = np.empty((R, 2))
    labels = np.empty(R, dtype=np.int64)
    for r in body:
        coords[int(r[0])] = float(r[1]), float(r[2])
        labels[int(r[0])] = int(r[3])
    rest = rows[R + 1 :]
    if rest:
        if rest[0][0] != "edges":
            raise ValueError(f"{path}: unexpected content after region lines")
        E = int(rest[0][1])
        W = np.zeros((R, R), dtype=np.int8)
        for i, j in rest[1 : E + 1]:
            W[int(i), int(j)] = W[int(j), int(i)] = 1
        g = RegionGraph(coords, W)
    else:
        diff = np.abs(coords[:, None, :] - coords[None, :, :]).sum(axis=2)
        W = (np.abs(diff - 1.0) < 1e-9).astype(np.int8)
        shape, dims = _infer_lattice(coords)
        g = RegionGraph(coords, W, shape=shape, dims=dims)
    c = Clustering(labels)
    if c.cluster_count != m:
        raise ValueError(f"{path}: header says m={m} but labels use {c.cluster_count} clusters")
    return g, c
