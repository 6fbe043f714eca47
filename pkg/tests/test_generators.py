import math
from collections import deque
from pathlib import Path

import numpy as np
import pytest

from oracles import disc_distance_cdf
from tbgcn.generators import (
    FAMILIES,
    RGG_RADIUS,
    GeneratorSpec,
    gen_pa,
    gen_rgg,
    gen_sbm,
    gen_tree,
    gen_tree_lattice,
    gen_tree_rgg,
    gen_ws,
    generate,
)
from tbgcn.graph import GraphError, read_edge_list

GOLDEN_DIR = Path(__file__).parent / "golden"
SEEDS = range(30)


def _is_tree(g):
    seen = {0}
    todo = deque([0])
    nbrs = g.neighbors()
    while todo:
        u = todo.popleft()
        for v in nbrs[u].tolist():
            if v not in seen:
                seen.add(v)
                todo.append(v)
    return len(seen) == g.num_nodes and g.num_edges == g.num_nodes - 1


@pytest.mark.parametrize("family", FAMILIES)
def test_golden(family):
    import sys
    sys.path.insert(0, str(Path(__file__).parent.parent / "scripts"))
    from make_golden import GOLDEN

    g = generate(GeneratorSpec(family, GOLDEN[family], seed=7))
    frozen = read_edge_list(GOLDEN_DIR / f"{family}.txt")
    assert g.num_nodes == frozen.num_nodes
    assert np.array_equal(g.edges, frozen.edges)


@pytest.mark.parametrize("family", FAMILIES)
def test_determinism_at_default_scale(family):
    a = generate(GeneratorSpec(family, seed=99))
    b = generate(GeneratorSpec(family, seed=99))
    assert np.array_equal(a.edges, b.edges)


def test_unknown_family():
    with pytest.raises(GraphError, match="unknown family"):
        generate(GeneratorSpec("lattice"))


# --- Watts-Strogatz ---

def test_ws_table_size():
    g = gen_ws(1600, 4, 0.1, 1234)
    assert (g.num_nodes, g.num_edges) == (1600, 3200)


def test_ws_no_rewiring_is_cycle():
    g = gen_ws(10, 2, 0.0, 3)
    assert g.num_edges == 10
    assert set(g.degrees().tolist()) == {2}
    assert _is_tree(g.with_edges(g.edges[1:]))  # cycle minus one edge is a path


@pytest.mark.parametrize("seed", range(10))
def test_ws_full_rewiring_keeps_edge_count(seed):
    g = gen_ws(20, 4, 1.0, seed)
    assert g.num_edges == 40
    assert g.degrees().mean() == 4.0


def test_ws_rejects_bad_k():
    with pytest.raises(GraphError):
        gen_ws(4, 4, 0.1, 0)
    with pytest.raises(GraphError):
        gen_ws(10, 3, 0.1, 0)


# --- preferential attachment ---

def test_pa_edge_count():
    assert gen_pa(1000, 7, 1234).num_edges == 7 * 993


def test_pa_forced_single_edge():
    assert gen_pa(2, 1, 0).edges.tolist() == [[0, 1]]


def test_pa_rich_get_richer():
    # the hub should almost always be one of the first 10 of 100 nodes
    hits = sum(int(np.argmax(gen_pa(100, 3, s).degrees())) < 10 for s in range(100))
    assert hits > 90


# --- stochastic block model ---

def test_sbm_table_edge_count_3_sigma():
    pairs_in = 2 * math.comb(500, 2)
    pairs_out = 500 * 500
    mean = pairs_in * 0.2 + pairs_out * 0.01
    sigma = math.sqrt(pairs_in * 0.2 * 0.8 + pairs_out * 0.01 * 0.99)
    assert mean == pytest.approx(52400)
    counts = np.array([gen_sbm([500, 500], 0.2, 0.01, s).num_edges for s in SEEDS])
    # per-draw 3-sigma would fail ~8% of the time over 30 draws; test the mean
    assert abs(counts.mean() - mean) <= 3 * sigma / math.sqrt(len(counts))


def test_sbm_disjoint_blocks():
    g = gen_sbm([2, 2], 1.0, 0.0, 5)
    assert g.edges.tolist() == [[0, 1], [2, 3]]
    assert g.labels.tolist() == [0, 0, 1, 1]


def test_sbm_single_block_triangle():
    assert gen_sbm([3], 1.0, 0.0, 5).num_edges == 3


# --- random geometric graph ---

def test_rgg_edge_count_matches_disc_distance_law():
    n = 1000
    expected = math.comb(n, 2) * disc_distance_cdf(RGG_RADIUS)
    counts = np.array([gen_rgg(n, RGG_RADIUS, s).num_edges for s in SEEDS])
    assert abs(counts.mean() - expected) <= 3 * counts.std(ddof=1) / math.sqrt(len(counts))
    assert abs(expected - 14233) / 14233 < 0.01


def test_rgg_points_in_disc_and_edges_short():
    g = gen_rgg(300, 0.2, 11)
    assert np.all(np.hypot(g.coords[:, 0], g.coords[:, 1]) <= 1.0)
    d = np.linalg.norm(g.coords[g.edges[:, 0]] - g.coords[g.edges[:, 1]], axis=1)
    assert np.all(d < 0.2)


def test_rgg_huge_radius_and_tiny_radius():
    assert gen_rgg(2, 3.0, 0).num_edges == 1
    assert gen_rgg(200, 1e-9, 0).num_edges == 0


# --- trees and overlays ---

def test_tree_sizes():
    assert gen_tree(1000, 10).num_edges == 999
    assert gen_tree(1, 10).num_edges == 0
    assert _is_tree(gen_tree(1000, 10))
    assert _is_tree(gen_tree(57, 3))


def test_tree_three_levels():
    deg = gen_tree(111, 10).degrees()
    assert deg[0] == 10
    assert np.all(deg[1:11] == 11)
    assert np.all(deg[11:] == 1)


@pytest.mark.parametrize("seed", range(5))
def test_tree_lattice_bounds(seed):
    g = gen_tree_lattice(1000, 10, (10, 10), seed)
    assert 999 <= g.num_edges <= 999 + 180
    tree = gen_tree(1000, 10).edge_set()
    assert tree <= g.edge_set()


def test_tree_lattice_small():
    assert gen_tree_lattice(4, 2, (2, 2), 0).num_edges >= 3
    with pytest.raises(GraphError):
        gen_tree_lattice(4, 2, (3, 3), 0)


def test_tree_rgg_calibrated_mean():
    counts = np.array([gen_tree_rgg(1000, 10, seed=s).num_edges for s in range(100, 130)])
    assert abs(counts.mean() - 2407) <= 3 * counts.std(ddof=1) / math.sqrt(len(counts))


def test_tree_rgg_edge_cases():
    assert gen_tree_rgg(1, 10, 0.5, 0).num_edges == 0
    g = gen_tree_rgg(500, 10, 1e-9, 0)
    assert np.array_equal(g.edges, gen_tree(500, 10).edges)
