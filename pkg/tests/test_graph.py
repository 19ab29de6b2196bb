import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cgcut.graph import (
    Clustering,
    RegionGraph,
    boundary_regions,
    build_grid,
    cluster_touch_count,
    cluster_touch_counts,
    global_design,
    individual_design,
    interior_regions,
    read_clustering,
    shared_cluster_count,
    shared_cluster_counts,
    tiling_partition,
    write_clustering,
)

from conftest import path_graph


def test_square_12_has_144_regions_and_interior_neighbourhoods_of_five():
    g = build_grid("square", side=12)
    assert g.region_count == 144
    sizes = np.array([len(n) for n in g.neighborhoods])
    x, y = g.coords.T
    interior = (x > 0) & (x < 11) & (y > 0) & (y < 11)
    assert np.all(sizes[interior] == 5)


def test_single_cell_grid():
    g = build_grid("square", side=1)
    assert g.region_count == 1
    assert list(g.neighborhood(0)) == [0]
    assert not g.adjacency.any()


def test_three_by_three_degrees():
    g = build_grid("square", side=3)
    deg = g.degrees.reshape(3, 3)
    assert deg[1, 1] == 4
    assert deg[0, 0] == deg[0, 2] == deg[2, 0] == deg[2, 2] == 2


def test_row_major_indexing():
    g = build_grid("rectangle", width=3, height=2)
    assert g.coords.tolist() == [[0, 0], [1, 0], [2, 0], [0, 1], [1, 1], [2, 1]]


@pytest.mark.parametrize(
    "shape,dims",
    [("square", {"side": 0}), ("rectangle", {"width": 0, "height": 3}), ("circle", {"radius": -1})],
)
def test_empty_grids_are_rejected(shape, dims):
    with pytest.raises(ValueError):
        build_grid(shape, **dims)


def test_circle_keeps_cells_inside_radius():
    g = build_grid("circle", radius=3)
    assert np.all((g.coords**2).sum(axis=1) <= 9)
    span = np.arange(-3, 4)
    expected = sum(1 for x in span for y in span if x * x + y * y <= 9)
    assert g.region_count == expected


def test_fan_splits_circle_into_sector_pieces():
    import networkx as nx

    g = build_grid("fan", radius=5, sectors=4)
    circle = build_grid("circle", radius=5)
    assert 0 < g.region_count < circle.region_count
    G = nx.from_numpy_array(np.asarray(g.adjacency))
    assert nx.number_connected_components(G) == 4


def test_graph_invariants_rejected():
    with pytest.raises(ValueError):
        RegionGraph(np.zeros((2, 2)), np.zeros((2, 2), dtype=int))  # duplicate coords
    with pytest.raises(ValueError):
        RegionGraph([[0, 0], [1, 0]], [[0, 1], [0, 0]])
    with pytest.raises(ValueError):
        RegionGraph([[0, 0], [1, 0]], [[1, 0], [0, 0]])


def test_clustering_rejects_empty_labels():
    with pytest.raises(ValueError):
        Clustering(np.array([0, 2, 2]))
    assert Clustering.from_labels([7, 7, 3, 9]).assignment.tolist() == [0, 0, 1, 2]


def test_boundary_of_global_and_individual_designs():
    g = build_grid("square", side=4)
    assert boundary_regions(g, global_design(16), 0).size == 0
    g2 = build_grid("square", side=2)
    c = individual_design(4)
    assert all(boundary_regions(g2, c, j).tolist() == [j] for j in range(4))


def test_four_tiles_of_12_grid_have_11_boundary_cells_each():
    g = build_grid("square", side=12)
    c = tiling_partition(g, 2)
    # independent count: a cell of a 6x6 tile is on the boundary iff it sits on
    # the tile edge facing another tile; two 6-cell edges share one corner
    for j in range(4):
        assert boundary_regions(g, c, j).size == 11
        assert interior_regions(g, c, j).size == 25
        assert np.intersect1d(boundary_regions(g, c, j), interior_regions(g, c, j)).size == 0


def test_cluster_touch_count_examples():
    g = build_grid("square", side=3)
    assert np.all(cluster_touch_counts(g, global_design(9)) == 1)
    g5 = build_grid("square", side=5)
    assert cluster_touch_count(g5, individual_design(25), 12) == 5
    left_right = Clustering((g.coords[:, 0] >= 2).astype(int))
    assert cluster_touch_count(g, left_right, 4) == 2


def test_shared_cluster_count_examples():
    g = build_grid("square", side=4)
    assert np.all(shared_cluster_counts(g, global_design(16)) == 1)
    # (0,0) and (3,3) have disjoint closed neighbourhoods
    assert shared_cluster_count(g, individual_design(16), 0, 15) == 0
    p = path_graph(5)
    assert shared_cluster_count(p, individual_design(5), 1, 2) == 2


def test_tiling_examples():
    g = build_grid("square", side=12)
    c = tiling_partition(g, 2)
    assert c.cluster_count == 4
    assert np.all(np.bincount(c.assignment) == 36)
    assert tiling_partition(g, 1) == global_design(144)
    g4 = build_grid("square", side=4)
    assert tiling_partition(g4, 4).cluster_count == 16
    assert len(set(tiling_partition(g4, 4).assignment)) == 16


def test_tiling_remainder_goes_to_last_tile():
    g = build_grid("square", side=5)
    c = tiling_partition(g, 2)
    assert sorted(np.bincount(c.assignment)) == [4, 6, 6, 9]


def test_tiling_rejects_non_grid():
    with pytest.raises(ValueError):
        tiling_partition(build_grid("circle", radius=2), 2)


def test_clustering_file_roundtrip(tmp_path):
    g = build_grid("rectangle", width=4, height=3)
    c = tiling_partition(g, 2)
    write_clustering(tmp_path / "c.txt", g, c)
    g2, c2 = read_clustering(tmp_path / "c.txt")
    assert c2 == c
    assert np.array_equal(g2.adjacency, g.adjacency)
    assert g2.shape == "rectangle" and tiling_partition(g2, 2) == c


def test_clustering_file_with_edge_list(tmp_path):
    g = RegionGraph([[0, 0], [5, 5], [9, 1]], [[0, 1, 0], [1, 0, 0], [0, 0, 0]])
    write_clustering(tmp_path / "c.txt", g, Clustering([0, 0, 1]), edges=True)
    g2, c2 = read_clustering(tmp_path / "c.txt")
    assert np.array_equal(g2.adjacency, g.adjacency)
    assert c2.assignment.tolist() == [0, 0, 1]


grids = st.sampled_from([(1, 1), (2, 2), (3, 2), (3, 3), (4, 3), (5, 5)])


@settings(max_examples=60, deadline=None)
@given(grids, st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_neighbourhood_and_partition_properties(wh, m, seed):
    w, h = wh
    g = build_grid("rectangle", width=w, height=h)
    R = g.region_count
    m = min(m, R)
    rng = np.random.default_rng(seed)
    labels = np.concatenate([np.arange(m), rng.integers(0, m, R - m)])
    c = Clustering.from_labels(rng.permutation(labels))
    closed = g.closed_adjacency
    assert np.all(np.diagonal(closed) == 1)
    assert np.array_equal(closed, closed.T)
    assert sum(c.members(j).size for j in range(c.cluster_count)) == R
    for j in range(c.cluster_count):
        b, inner = boundary_regions(g, c, j), interior_regions(g, c, j)
        assert np.intersect1d(b, inner).size == 0
        assert sorted(np.concatenate([b, inner]).tolist()) == c.members(j).tolist()
    M = shared_cluster_counts(g, c)
    assert np.array_equal(M, M.T)
    assert np.array_equal(np.diagonal(M), cluster_touch_counts(g, c))
    overlap = (closed @ closed.T) > 0
    assert np.all(M[overlap] > 0)
    # brute-force touch count: distinct labels over the closed neighbourhood
    brute = [len(set(c.assignment[g.neighborhood(i)])) for i in range(R)]
    assert cluster_touch_counts(g, c).tolist() == brute
    assert np.all(cluster_touch_counts(g, c) <= np.minimum(c.cluster_count, closed.sum(axis=1)))
