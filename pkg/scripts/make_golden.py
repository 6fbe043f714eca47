"""Regenerate the frozen small-graph fixtures in tests/golden/ (one per family)."""

from pathlib import Path

from tbgcn.generators import GeneratorSpec, generate
from tbgcn.graph import write_edge_list

GOLDEN = {
    "ws": {"n": 30, "k": 4, "p": 0.3},
    "pa": {"n": 30, "m": 2},
    "sbm": {"block_sizes": [10, 10], "p_in": 0.5, "p_out": 0.05},
    "rgg": {"n": 30, "radius": 0.4},
    "tree": {"n": 30, "branching": 3},
    "tree_lattice": {"n": 30, "branching": 3, "grid_dims": [3, 3]},
    "tree_rgg": {"n": 30, "branching": 3, "radius": 0.3},
}

if __name__ == "__main__":
    out = Path(__file__).resolve().parent.parent / "tests" / "golden"
    out.mkdir(exist_ok=True)
    for family, params in GOLDEN.items():
        write_edge_list(generate(GeneratorSpec(family, params, seed=7)), out / f"{family}.txt")
