"""Seeded generators for the synthetic benchmark networks.

Every stochastic generator draws from ``numpy.random.default_rng(seed)`` and
nothing else, so identical arguments give identical edge arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.spatial.distance import pdist

from .graph import Graph, GraphError, build_graph

# Radii calibrated by Monte-Carlo (scripts/calibrate_radii.py) so the mean edge
# counts match the reference table: RGG ~14233 edges, TREE+RGG ~2407 edges.
RGG_RADIUS = 0.1753
TREE_RGG_RADIUS = 0.0537

FAMILIES = ("ws", "pa", "sbm", "rgg", "tree", "tree_lattice", "tree_rgg")


def _check_prob(name: str, p: float) -> None:
    if not 0.0 <= p <= 1.0:
        raise GraphError(f"{name} must be a probability in [0, 1], got {p}")


def _check_count(name: str, k: int, minimum: int = 1) -> None:
    if int(k) != k or k < minimum:
        raise GraphError(f"{name} must be an integer >= {minimum}, got {k}")


def gen_ws(n: int, k: int, p: float, seed: int) -> Graph:
    """Watts-Strogatz ring: each node joined to its ``k/2`` nearest neighbours
    per side, then every lattice edge ``(u, u+j)`` rewired to ``(u, w)`` with
    probability ``p`` (``w`` uniform, avoiding loops and duplicates).

    Rewiring moves edges rather than adding them, so there are always
    ``n*k/2`` edges.
    """
    _check_count("n", n)
    _check_count("k", k, 0)
    _check_prob("p", p)
    if k % 2:
        raise GraphError(f"k must be even, got {k}")
    if k >= n:
        raise GraphError(f"k must be smaller than n, got k={k}, n={n}")
    rng = np.random.default_rng(seed)
    adj: list[set[int]] = [set() for _ in range(n)]
    for u in range(n):
        for j in range(1, k // 2 + 1):
            v = (u + j) % n
            adj[u].add(v)
            adj[v].add(u)
    for j in range(1, k // 2 + 1):
        for u in range(n):
            if rng.random() >= p:
                continue
            v = (u + j) % n
            if v not in adj[u] or len(adj[u]) >= n - 1:
                continue
            w = int(rng.integers(n))
            while w == u or w in adj[u]:
                w = int(rng.integers(n))
            adj[u].remove(v)
            adj[v].remove(u)
            adj[u].add(w)
            adj[w].add(u)
    edges = [(u, v) for u in range(n) for v in adj[u] if u < v]
    return build_graph(n, edges)


def gen_pa(n: int, m: int, seed: int) -> Graph:
    """Preferential attachment (Barabasi-Albert).

    Starts from a star on nodes ``0..m``; every later node attaches to ``m``
    distinct existing nodes chosen with probability proportional to degree.
    The result has exactly ``m * (n - m)`` edges.
    """
    _check_count("n", n)
    _check_count("m", m)
    if m >= n:
        raise GraphError(f"m must be smaller than n, got m={m}, n={n}")
    rng = np.random.default_rng(seed)
    edges = [(0, v) for v in range(1, m + 1)]
    # each node appears once per incident edge end: uniform draws are degree-weighted
    ends = [0] * m + list(range(1, m + 1))
    for source in range(m + 1, n):
        targets: set[int] = set()
        while len(targets) < m:
            targets.add(ends[int(rng.integers(len(ends)))])
        for t in sorted(targets):
            edges.append((t, source))
            ends.append(t)
        ends.extend([source] * m)
    return build_graph(n, edges)


def gen_sbm(block_sizes, p_in: float, p_out: float, seed: int) -> Graph:
    """Stochastic block model; node labels are the block ids."""
    _check_prob("p_in", p_in)
    _check_prob("p_out", p_out)
    sizes = [int(s) for s in block_sizes]
    for s in sizes:
        _check_count("block size", s)
    n = sum(sizes)
    blocks = np.repeat(np.arange(len(sizes)), sizes)
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(blocks[iu] == blocks[ju], p_in, p_out)
    keep = rng.random(iu.size) < prob
    edges = np.stack([iu[keep], ju[keep]], axis=1)
    return build_graph(n, edges, labels=blocks, num_classes=len(sizes))


def _disc_points(n: int, rng: np.random.Generator) -> np.ndarray:
    r = np.sqrt(rng.random(n))
    theta = 2.0 * np.pi * rng.random(n)
    return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)


def _rgg_edges(coords: np.ndarray, radius: float) -> np.ndarray:
    n = coords.shape[0]
    if n < 2:
        return np.zeros((0, 2), dtype=np.int64)
    iu, ju = np.triu_indices(n, k=1)
    close = pdist(coords) < radius
    return np.stack([iu[close], ju[close]], axis=1)


def gen_rgg(n: int, radius: float = RGG_RADIUS, seed: int = 0) -> Graph:
    """Random geometric graph on ``n`` uniform points in the unit disc.

    Nodes closer than ``radius`` are joined. Coordinates are kept on
    ``Graph.coords``.
    """
    _check_count("n", n)
    if not radius > 0:
        raise GraphError(f"radius must be positive, got {radius}")
    rng = np.random.default_rng(seed)
    coords = _disc_points(n, rng)
    return build_graph(n, _rgg_edges(coords, radius), coords=coords)


def tree_edges(n: int, branching: int) -> np.ndarray:
    child = np.arange(1, n, dtype=np.int64)
    return np.stack([(child - 1) // branching, child], axis=1)


def gen_tree(n: int, branching: int) -> Graph:
    """Complete ``branching``-ary tree cut off at ``n`` nodes, numbered breadth-first."""
    _check_count("n", n)
    _check_count("branching", branching)
    return build_graph(n, tree_edges(n, branching))


def grid_edges(rows: int, cols: int) -> np.ndarray:
    cell = np.arange(rows * cols).reshape(rows, cols)
    horiz = np.stack([cell[:, :-1].ravel(), cell[:, 1:].ravel()], axis=1)
    vert = np.stack([cell[:-1, :].ravel(), cell[1:, :].ravel()], axis=1)
    return np.concatenate([horiz, vert])


def gen_tree_lattice(n: int, branching: int, grid_dims=(10, 10), seed: int = 0) -> Graph:
    """Tree plus a 2-D grid laid over a random subset of the nodes.

    Grid cells are injected into node ids by a seeded permutation; grid edges
    that coincide with tree edges collapse.
    """
    rows, cols = (int(d) for d in grid_dims)
    _check_count("grid rows", rows)
    _check_count("grid cols", cols)
    _check_count("n", n)
    if rows * cols > n:
        raise GraphError(f"grid {rows}x{cols} does not fit into {n} nodes")
    rng = np.random.default_rng(seed)
    cell_to_node = rng.permutation(n)[: rows * cols]
    grid = cell_to_node[grid_edges(rows, cols)]
    return build_graph(n, np.concatenate([tree_edges(n, branching), grid]))


def gen_tree_rgg(n: int, branching: int, radius: float = TREE_RGG_RADIUS, seed: int = 0) -> Graph:
    """Union of :func:`gen_tree` and :func:`gen_rgg` on the same node ids."""
    _check_count("n", n)
    _check_count("branching", branching)
    if not radius > 0:
        raise GraphError(f"radius must be positive, got {radius}")
    rng = np.random.default_rng(seed)
    coords = _disc_points(n, rng)
    edges = np.concatenate([tree_edges(n, branching), _rgg_edges(coords, radius)])
    return build_graph(n, edges, coords=coords)


@dataclass(frozen=True)
class GeneratorSpec:
    family: str
    params: dict[str, Any] = field(default_factory=dict)
    seed: int = 1234

    def to_dict(self) -> dict[str, Any]:
        return {"family": self.family, "params": dict(self.params), "seed": self.seed}


# defaults reproduce the node/edge counts of the reference synthetic suite
DEFAULT_PARAMS: dict[str, dict[str, Any]] = {
    "ws": {"n": 1600, "k": 4, "p": 0.1},
    "pa": {"n": 1000, "m": 7},
    "sbm": {"block_sizes": [500, 500], "p_in": 0.2, "p_out": 0.01},
    "rgg": {"n": 1000, "radius": RGG_RADIUS},
    "tree": {"n": 1000, "branching": 10},
    "tree_lattice": {"n": 1000, "branching": 10, "grid_dims": [10, 10]},
    "tree_rgg": {"n": 1000, "branching": 10, "radius": TREE_RGG_RADIUS},
}

_SEEDED = {"ws": gen_ws, "pa": gen_pa, "sbm": gen_sbm, "rgg": gen_rgg,
           "tree_lattice": gen_tree_lattice, "tree_rgg": gen_tree_rgg}


def generate(spec: GeneratorSpec) -> Graph:
    """Dispatch a :class:`GeneratorSpec`; missing params fall back to the defaults."""
    if spec.family not in FAMILIES:
        raise GraphError(f"unknown family {spec.family!r}; expected one of {', '.join(FAMILIES)}")
    params = {**DEFAULT_PARAMS[spec.family], **spec.params}
    if spec.family == "tree":
        return gen_tree(**params)
    return _SEEDED[spec.family](**params, seed=spec.seed)
