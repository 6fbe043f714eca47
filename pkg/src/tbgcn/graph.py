"""Undirected graph container, aggregation matrix and plain-text I/O."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class GraphError(ValueError):
    """Malformed graph input (bad ids, mismatched feature/label lengths, bad files)."""


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable simple undirected graph.

    ``edges`` is an ``(E, 2)`` int array with ``u < v`` in every row, sorted
    lexicographically. Use :func:`build_graph` rather than the constructor.
    """

    num_nodes: int
    edges: np.ndarray
    features: np.ndarray | None = None
    labels: np.ndarray | None = None
    num_classes: int = 0
    dropped_self_loops: int = 0
    dropped_duplicates: int = 0
    coords: np.ndarray | None = field(default=None, repr=False)

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.num_nodes, dtype=np.int64)
        if self.num_edges:
            np.add.at(deg, self.edges[:, 0], 1)
            np.add.at(deg, self.edges[:, 1], 1)
        return deg

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.num_nodes, self.num_nodes))
        if self.num_edges:
            a[self.edges[:, 0], self.edges[:, 1]] = 1.0
            a[self.edges[:, 1], self.edges[:, 0]] = 1.0
        return a

    def neighbors(self) -> list[np.ndarray]:
        nbrs: list[list[int]] = [[] for _ in range(self.num_nodes)]
        for u, v in self.edges.tolist():
            nbrs[u].append(v)
            nbrs[v].append(u)
        return [np.asarray(n, dtype=np.int64) for n in nbrs]

    def edge_set(self) -> set[tuple[int, int]]:
        return set(map(tuple, self.edges.tolist()))

    def edge_keys(self) -> np.ndarray:
        """Unique integer key ``u * N + v`` per edge (``u < v``), sorted."""
        return self.edges[:, 0] * self.num_nodes + self.edges[:, 1]

    def with_edges(self, edges: np.ndarray) -> "Graph":
        """Same nodes, features and labels over a different edge set."""
        return build_graph(self.num_nodes, edges, self.features, self.labels, self.num_classes or None)


def _canonical_edges(num_nodes: int, edge_list) -> tuple[np.ndarray, int, int]:
    arr = np.asarray(edge_list, dtype=np.int64) if len(edge_list) else np.zeros((0, 2), np.int64)
    arr = arr.reshape(-1, 2)
    bad = np.flatnonzero((arr < 0).any(axis=1) | (arr >= num_nodes).any(axis=1))
    if bad.size:
        i = int(bad[0])
        raise GraphError(
            f"edge {i} ({arr[i, 0]}, {arr[i, 1]}): node id out of range [0, {num_nodes})"
        )
    loops = arr[:, 0] == arr[:, 1]
    arr = np.sort(arr[~loops], axis=1)
    uniq = np.unique(arr, axis=0) if arr.size else arr
    return uniq, int(loops.sum()), int(arr.shape[0] - uniq.shape[0])


def build_graph(
    num_nodes: int,
    edge_list: Sequence[tuple[int, int]] | np.ndarray,
    features: np.ndarray | None = None,
    labels: Sequence[int] | np.ndarray | None = None,
    num_classes: int | None = None,
    coords: np.ndarray | None = None,
) -> Graph:
    """Validate and canonicalize an edge list into a :class:`Graph`.

    Self-loops and repeated pairs (in either orientation) are dropped and
    counted. Out-of-range ids raise :class:`GraphError` naming the entry.
    """
    if num_nodes < 0:
        raise GraphError(f"num_nodes must be non-negative, got {num_nodes}")
    edges, n_loops, n_dups = _canonical_edges(num_nodes, edge_list)

    if features is not None:
        features = np.array(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] != num_nodes:
            raise GraphError(f"features have shape {features.shape}, expected ({num_nodes}, d)")
        features.setflags(write=False)

    n_cls = 0
    if labels is not None:
        labels = np.array(labels, dtype=np.int64)
        if labels.shape != (num_nodes,):
            raise GraphError(f"labels have shape {labels.shape}, expected ({num_nodes},)")
        n_cls = int(num_classes) if num_classes is not None else int(labels.max(initial=-1)) + 1
        if labels.size and (labels.min() < 0 or labels.max() >= n_cls):
            raise GraphError(f"labels must lie in [0, {n_cls})")
        labels.setflags(write=False)

    edges.setflags(write=False)
    return Graph(num_nodes, edges, features, labels, n_cls, n_loops, n_dups, coords)


def one_hot_features(g: Graph) -> np.ndarray:
    return np.eye(g.num_nodes)


def aggregation_matrix(g: Graph) -> np.ndarray:
    """Symmetric normalized adjacency ``D^-1/2 (A + I) D^-1/2``.

    ``D`` holds the self-loop-augmented degrees, so it is never zero and an
    isolated node gets a 1 on the diagonal.
    """
    a = g.adjacency()
    a[np.diag_indices_from(a)] = 1.0
    d_inv_sqrt = 1.0 / np.sqrt(a.sum(axis=1))
    return d_inv_sqrt[:, None] * a * d_inv_sqrt[None, :]


# --- file formats ---------------------------------------------------------


def parse_edge_lines(lines: Iterable[str]) -> list[tuple[int, int]]:
    edges = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise GraphError(f"line {lineno}: expected two node ids, got {line!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise GraphError(f"line {lineno}: node ids must be integers, got {line!r}") from None
        if u < 0 or v < 0:
            raise GraphError(f"line {lineno}: negative node id in {line!r}")
        edges.append((u, v))
    return edges


def read_edge_list(path: str | Path, num_nodes: int | None = None, **kwargs) -> Graph:
    """Load a whitespace-separated edge list; ``num_nodes`` defaults to max id + 1.

    A ``# nodes: N`` header comment, as written by :func:`write_edge_list`,
    also fixes the node count so trailing isolated nodes survive a round trip.
    """
    text = Path(path).read_text(encoding="utf-8").splitlines()
    edges = parse_edge_lines(text)
    if num_nodes is None:
        for line in text:
            if line.startswith("# nodes:"):
                num_nodes = int(line.split(":", 1)[1])
                break
    if num_nodes is None:
        num_nodes = 1 + max((max(e) for e in edges), default=-1)
    for lineno, raw in enumerate(text, start=1):
        s = raw.strip()
        if s and not s.startswith("#") and max(map(int, s.split())) >= num_nodes:
            raise GraphError(f"line {lineno}: node id out of range [0, {num_nodes}) in {s!r}")
    return build_graph(num_nodes, edges, **kwargs)


def write_edge_list(g: Graph, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# nodes: {g.num_nodes}\n")
        for u, v in g.edges.tolist():
            fh.write(f"{u} {v}\n")


def _data_rows(path: str | Path):
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                int(row[0])
            except ValueError:
                if lineno == 1:  # header
                    continue
                raise GraphError(f"{path}:{lineno}: bad node id {row[0]!r}") from None
            yield lineno, row


def read_features(path: str | Path, num_nodes: int) -> np.ndarray:
    """CSV rows ``node_id,f1,f2,...``; nodes without a row get zeros."""
    rows = list(_data_rows(path))
    if not rows:
        raise GraphError(f"{path}: no feature rows")
    dim = len(rows[0][1]) - 1
    x = np.zeros((num_nodes, dim))
    for lineno, row in rows:
        node = int(row[0])
        if not 0 <= node < num_nodes:
            raise GraphError(f"{path}:{lineno}: node id {node} out of range [0, {num_nodes})")
        if len(row) - 1 != dim:
            raise GraphError(f"{path}:{lineno}: expected {dim} features, got {len(row) - 1}")
        try:
            x[node] = [float(v) for v in row[1:]]
        except ValueError:
            raise GraphError(f"{path}:{lineno}: non-numeric feature") from None
    return x


def read_labels(path: str | Path, num_nodes: int) -> np.ndarray:
    """CSV rows ``node_id,class_id``; every node must be labeled."""
    y = np.full(num_nodes, -1, dtype=np.int64)
    for lineno, row in _data_rows(path):
        if len(row) != 2:
            raise GraphError(f"{path}:{lineno}: expected node_id,class_id")
        node, cls = int(row[0]), int(row[1])
        if not 0 <= node < num_nodes:
            raise GraphError(f"{path}:{lineno}: node id {node} out of range [0, {num_nodes})")
        y[node] = cls
    if (y < 0).any():
        missing = int(np.flatnonzero(y < 0)[0])
        raise GraphError(f"{path}: no label for node {missing}")
    return y


def write_labels(labels: np.ndarray, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["node_id", "class_id"])
        for i, c in enumerate(np.asarray(labels).tolist()):
            w.writerow([i, c])
