"""Degree statistics: histogram, degree assortativity and the N(k) curve."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graph import Graph, GraphError

# Marker for a zero-variance (e.g. regular) graph whose assortativity is undefined.
UNDEFINED = None


def degree_histogram(g: Graph) -> dict[int, int]:
    deg, counts = np.unique(g.degrees(), return_counts=True)
    return {int(d): int(c) for d, c in zip(deg, counts)}


def assortativity(g: Graph) -> float | None:
    """Pearson correlation of endpoint degrees over both orientations of each edge.

    Returns ``None`` when all edge endpoints share one degree (zero variance).
    """
    if g.num_edges == 0:
        raise GraphError("assortativity needs at least one edge")
    deg = g.degrees().astype(np.float64)
    u, v = g.edges[:, 0], g.edges[:, 1]
    x = np.concatenate([deg[u], deg[v]])
    y = np.concatenate([deg[v], deg[u]])
    # both orientations make x and y share one marginal
    xc = x - x.mean()
    var = float(xc @ xc)
    if var <= 1e-12 * max(1.0, float(x @ x)):
        return UNDEFINED
    r = float(xc @ (y - y.mean())) / var
    return min(1.0, max(-1.0, r))


def nk_curve(g: Graph) -> dict[int, float]:
    """Map degree ``k`` to the average, over degree-``k`` nodes, of their mean neighbour degree."""
    deg = g.degrees()
    if g.num_edges == 0:
        return {}
    nbr_sum = np.zeros(g.num_nodes)
    np.add.at(nbr_sum, g.edges[:, 0], deg[g.edges[:, 1]])
    np.add.at(nbr_sum, g.edges[:, 1], deg[g.edges[:, 0]])
    has = deg > 0
    mean_nbr = nbr_sum[has] / deg[has]
    out = {}
    for k in np.unique(deg[has]):
        out[int(k)] = float(mean_nbr[deg[has] == k].mean())
    return out


@dataclass(frozen=True)
class DegreeStats:
    histogram: dict[int, int]
    assortativity: float | None
    nk_curve: dict[int, float]

    def to_json(self) -> dict:
        r = self.assortativity
        return {
            "assortativity": "undefined" if r is None or math.isnan(r) else r,
            "degree_histogram": {str(k): c for k, c in self.histogram.items()},
            "nk_curve": {str(k): v for k, v in self.nk_curve.items()},
        }


def degree_stats(g: Graph) -> DegreeStats:
    r = assortativity(g) if g.num_edges else UNDEFINED
    return DegreeStats(degree_histogram(g), r, nk_curve(g))
