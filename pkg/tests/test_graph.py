import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tbgcn.generators import gen_tree
from tbgcn.graph import (
    GraphError,
    aggregation_matrix,
    build_graph,
    one_hot_features,
    read_edge_list,
    read_features,
    read_labels,
    write_edge_list,
)


def test_dedup_and_self_loops_dropped():
    g = build_graph(2, [(0, 1), (1, 0), (0, 0)])
    assert g.num_edges == 1
    assert g.dropped_self_loops == 1
    assert g.dropped_duplicates == 1


def test_path_degrees():
    g = build_graph(3, [(0, 1), (1, 2)])
    assert g.degrees().tolist() == [1, 2, 1]


def test_tree_edge_count():
    assert gen_tree(1000, 10).num_edges == 999


def test_out_of_range_names_entry():
    with pytest.raises(GraphError, match="edge 1"):
        build_graph(3, [(0, 1), (1, 3)])


def test_feature_and_label_length_checked():
    with pytest.raises(GraphError):
        build_graph(3, [], features=np.zeros((2, 4)))
    with pytest.raises(GraphError):
        build_graph(3, [], labels=[0, 1])
    with pytest.raises(GraphError):
        build_graph(2, [], labels=[0, 2], num_classes=2)


def test_graph_is_immutable():
    g = build_graph(3, [(0, 1)], features=np.ones((3, 2)))
    with pytest.raises(ValueError):
        g.edges[0, 0] = 2
    with pytest.raises(ValueError):
        g.features[0, 0] = 5.0


@pytest.mark.parametrize("n", [1, 3, 5])
def test_one_hot(n):
    x = one_hot_features(build_graph(n, []))
    assert np.array_equal(x, np.eye(n))
    assert np.all(x.sum(axis=1) == 1)


def test_one_hot_row():
    assert one_hot_features(build_graph(5, []))[2].tolist() == [0, 0, 1, 0, 0]


def test_aggregation_isolated_node():
    assert aggregation_matrix(build_graph(1, [])).tolist() == [[1.0]]


def test_aggregation_single_edge():
    assert np.allclose(aggregation_matrix(build_graph(2, [(0, 1)])), 0.5)


def test_aggregation_star():
    # K_{1,3}: hub degree 3 -> 4 with self loop, leaves 1 -> 2
    a = aggregation_matrix(build_graph(4, [(0, 1), (0, 2), (0, 3)]))
    assert a[0, 0] == pytest.approx(1 / 4)
    for j in (1, 2, 3):
        assert a[0, j] == pytest.approx(1 / (2 * np.sqrt(2)))
        assert a[j, j] == pytest.approx(1 / 2)
    assert a[1, 2] == 0.0


@st.composite
def random_graphs(draw):
    n = draw(st.integers(1, 50))
    pairs = st.tuples(st.integers(0, n - 1), st.integers(0, n - 1))
    return build_graph(n, draw(st.lists(pairs, max_size=150)))


@settings(max_examples=100, deadline=None)
@given(random_graphs())
def test_aggregation_symmetric_with_adjacency_support(g):
    a = aggregation_matrix(g)
    assert np.array_equal(a, a.T)
    support = g.adjacency() + np.eye(g.num_nodes)
    assert np.array_equal(a > 0, support > 0)
    assert (a >= 0).all()


def test_edge_list_roundtrip(tmp_path):
    g = build_graph(6, [(0, 1), (2, 3)])
    path = tmp_path / "g.txt"
    write_edge_list(g, path)
    h = read_edge_list(path)
    assert h.num_nodes == 6
    assert np.array_equal(h.edges, g.edges)


def test_edge_list_comments_and_errors(tmp_path):
    path = tmp_path / "g.txt"
    path.write_text("# a comment\n0 1\n\n1 2\n")
    assert read_edge_list(path).num_edges == 2
    path.write_text("0 1\n1 x\n")
    with pytest.raises(GraphError, match="line 2"):
        read_edge_list(path)
    path.write_text("0 1\n1 2 3\n")
    with pytest.raises(GraphError, match="line 2"):
        read_edge_list(path)
    path.write_text("0 1\n1 9\n")
    with pytest.raises(GraphError, match="line 2"):
        read_edge_list(path, num_nodes=3)


def test_feature_and_label_files(tmp_path):
    fpath = tmp_path / "f.csv"
    fpath.write_text("node_id,a,b\n1,0.5,2\n0,1,1\n")
    x = read_features(fpath, 3)
    assert x.tolist() == [[1, 1], [0.5, 2], [0, 0]]
    lpath = tmp_path / "l.csv"
    lpath.write_text("node_id,class_id\n0,1\n1,0\n2,1\n")
    assert read_labels(lpath, 3).tolist() == [1, 0, 1]
    lpath.write_text("node_id,class_id\n0,1\n")
    with pytest.raises(GraphError, match="no label for node 1"):
        read_labels(lpath, 3)
