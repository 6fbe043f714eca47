"""Trivial-bundle graph convolutional networks on a small numpy autodiff engine."""

from .config import ExperimentConfig
from .graph import Graph, build_graph, read_edge_list

__version__ = "0.1.0"

__all__ = ["ExperimentConfig", "Graph", "build_graph", "read_edge_list", "__version__"]
