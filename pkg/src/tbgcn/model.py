"""Dual-channel GCN encoder, trivial-bundle link decoder and node-classification heads.

Embeddings live in a product ``B x F``: a base channel ``X`` and a fiber
channel ``Y`` propagated by independent GCN stacks over the same aggregation
matrix. A pair's link score multiplies the squared base distance by the
squared norm of the fiber *sum*, so a pair can be likely either because the
base coordinates agree (assortative) or because the fiber coordinates cancel
(disassortative).

The Euclidean baseline is the same machinery with one channel of width
``m + n`` and a plain squared-distance score.
"""

from __future__ import annotations

import json
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import ExperimentConfig

@dataclass
class ModelParams:
    """Ordered named parameter tensors plus the architecture they encode.

    Names: ``layer{l}.w_base``, ``layer{l}.b_base``, ``layer{l}.w_fiber``,
    ``layer{l}.b_fiber`` (fiber absent for the baseline), ``cls.w``, ``cls.b``.
    """

    tensors: "OrderedDict[str, Tensor]"
    variant: str  # tb | baseline
    num_layers: int
    nc_decoder: str | None = None
    final_relu: bool = False

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __iter__(self):
        return iter(self.tensors.values())

    def items(self):
        return self.tensors.items()

    @property
    def has_fiber(self) -> bool:
        return self.variant == "tb"

    @property
    def has_head(self) -> bool:
        return "cls.w" in self.tensors

    def zero_grad(self) -> None:
        for t in self:
            t.grad = None

    def copy(self) -> "ModelParams":
        return ModelParams(
            OrderedDict((k, Tensor(v.data, requires_grad=v.requires_grad)) for k, v in self.items()),
            self.variant, self.num_layers, self.nc_decoder, self.final_relu,
        )

    def state(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for k, v in self.items():
            v.data = np.array(state[k], dtype=np.float64)

    def save(self, path: str | Path) -> None:
        """JSON checkpoint: architecture header plus an ordered list of named tensors."""
        record = {
            "format": "tbgcn-checkpoint/1",
            "variant": self.variant,
            "num_layers": self.num_layers,
            "nc_decoder": self.nc_decoder,
            "final_relu": self.final_relu,
            "tensors": [
                {"name": k, "shape": list(v.shape), "data": v.data.ravel().tolist()}
                for k, v in self.items()
            ],
        }
        Path(path).write_text(json.dumps(record))

    @classmethod
    def load(cls, path: str | Path) -> "ModelParams":
        record = json.loads(Path(path).read_text())
        if record.get("format") != "tbgcn-checkpoint/1":
            raise ValueError(f"{path}: not a tbgcn checkpoint")
        tensors = OrderedDict(
            (t["name"], Tensor(np.array(t["data"], dtype=np.float64).reshape(t["shape"]), requires_grad=True))
            for t in record["tensors"]
        )
        return cls(tensors, record["variant"], record["num_layers"], record["nc_decoder"],
                   record.get("final_relu", False))


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=(fan_in, fan_out))


def layer_widths(config: ExperimentConfig, in_base: int, in_fiber: int) -> tuple[list[int], list[int]]:
    if config.model == "baseline":
        width = config.dim_base + config.dim_fiber
        return [in_base] + [width] * config.num_layers, []
    return ([in_base] + [config.dim_base] * config.num_layers,
            [in_fiber] + [config.dim_fiber] * config.num_layers)


def init_params(
    config: ExperimentConfig,
    in_dim: int,
    seed: int,
    num_classes: int = 0,
    fiber_in_dim: int | None = None,
) -> ModelParams:
    """Glorot-uniform weights and zero biases, deterministic in ``seed``.

    A classification head ``cls.w``/``cls.b`` is added when ``num_classes > 0``.
    """
    rng = np.random.default_rng(seed)
    base, fiber = layer_widths(config, in_dim, fiber_in_dim or in_dim)
    tensors: OrderedDict[str, Tensor] = OrderedDict()
    for l in range(config.num_layers):
        tensors[f"layer{l}.w_base"] = Tensor(glorot_uniform(rng, base[l], base[l + 1]), requires_grad=True)
        tensors[f"layer{l}.b_base"] = Tensor(np.zeros((1, base[l + 1])), requires_grad=True)
        if fiber:
            tensors[f"layer{l}.w_fiber"] = Tensor(glorot_uniform(rng, fiber[l], fiber[l + 1]), requires_grad=True)
            tensors[f"layer{l}.b_fiber"] = Tensor(np.zeros((1, fiber[l + 1])), requires_grad=True)
    if num_classes:
        width = base[-1]
        tensors["cls.w"] = Tensor(glorot_uniform(rng, width, num_classes), requires_grad=True)
        tensors["cls.b"] = Tensor(np.zeros((1, num_classes)), requires_grad=True)
    variant = "tb" if config.model == "tb" else "baseline"
    nc = config.nc_decoder if num_classes and variant == "tb" else None
    return ModelParams(tensors, variant, config.num_layers, nc, config.final_relu)


# --- encoder --------------------------------------------------------------------


def _channel(params, agg, h0, kind, dropconnect_p=0.0, rng=None) -> Tensor:
    """One GCN stack; ``h0 is None`` means one-hot input, so ``h0 @ W == W``."""
    h = h0
    for l in range(params.num_layers):
        w = params[f"layer{l}.w_{kind}"]
        if dropconnect_p:
            w = ad.dropconnect_mask(w, dropconnect_p, rng)
        if h is None:
            if w.shape[0] != agg.shape[0]:
                raise ad.ShapeError(f"one-hot input needs {agg.shape[0]} input rows, weight has {w.shape}")
            lin = w
        else:
            lin = ad.matmul(h, w)
        h = ad.matmul(agg, ad.add_bias(lin, params[f"layer{l}.b_{kind}"]))
        if l < params.num_layers - 1 or params.final_relu:
            h = ad.relu(h)
    return h


def encode(
    params: ModelParams,
    agg,
    x0=None,
    y0=None,
    dropconnect_p: float = 0.0,
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, Tensor | None]:
    """Propagate both channels: ``H <- relu(A~ (H W + b))``, last layer linear unless ``final_relu``.

    ``x0``/``y0`` are the base/fiber input features; ``None`` stands for the
    one-hot identity, and ``y0`` defaults to ``x0``. Returns ``(X, Y)``, with
    ``Y`` ``None`` for the baseline.
    """
    agg = agg if isinstance(agg, Tensor) else Tensor(agg)
    x0 = None if x0 is None else ad._as_tensor(x0)
    y0 = x0 if y0 is None else ad._as_tensor(y0)
    for h in (x0, y0):
        if h is not None and h.shape[0] != agg.shape[0]:
            raise ad.ShapeError(f"features have {h.shape[0]} rows, aggregation matrix {agg.shape}")
    if dropconnect_p and rng is None:
        rng = np.random.default_rng()
    x = _channel(params, agg, x0, "base", dropconnect_p, rng)
    y = _channel(params, agg, y0, "fiber", dropconnect_p, rng) if params.has_fiber else None
    return x, y


# --- link decoders ------------------------------------------------------------


def tb_score(xp, xq, yp, yq) -> Tensor:
    """Row-wise ``|x_p - x_q|^2 * |y_p + y_q|^2`` over a batch of pairs."""
    base = ad.row_sum(ad.square(ad.elem_sub(xp, xq)))
    fiber = ad.row_sum(ad.square(ad.elem_add(yp, yq)))
    return ad.elem_mul(base, fiber)


def baseline_score(xp, xq) -> Tensor:
    return ad.row_sum(ad.square(ad.elem_sub(xp, xq)))


def fermi_dirac(d, r: float = 2.0, t: float = 1.0) -> Tensor:
    """``1 / (exp((d - r) / t) + 1)``, evaluated as ``sigmoid((r - d) / t)``."""
    return ad.sigmoid(ad.affine(d, -1.0 / t, r / t))


def pair_scores(emb: tuple[Tensor, Tensor | None], pairs: np.ndarray) -> Tensor:
    x, y = emb
    p, q = pairs[:, 0], pairs[:, 1]
    xp, xq = ad.take_rows(x, p), ad.take_rows(x, q)
    if y is None:
        return baseline_score(xp, xq)
    return tb_score(xp, xq, ad.take_rows(y, p), ad.take_rows(y, q))


def link_probs(emb, pairs: np.ndarray, r: float = 2.0, t: float = 1.0) -> Tensor:
    """``(len(pairs), 1)`` edge probabilities."""
    return fermi_dirac(pair_scores(emb, pairs), r, t)


# --- node decoders -------------------------------------------------------------


def combine_channels(x, y, variant: str) -> Tensor:
    if variant == "sub":
        return ad.elem_sub(x, y)
    if variant == "div":
        return ad.elem_div(x, y)
    if variant == "mul":
        return ad.elem_mul(x, y)
    raise ValueError(f"unknown node decoder {variant!r}")


def nc_decode(x, y, variant: str | None, head_w, head_b) -> Tensor:
    """Class log-probabilities from multinomial logistic regression on the combined channels.

    ``variant is None`` (baseline) feeds ``x`` to the head directly.
    """
    z = ad._as_tensor(x) if variant is None else combine_channels(x, y, variant)
    return ad.log_softmax_rows(ad.add_bias(ad.matmul(z, head_w), head_b))


def node_log_probs(params: ModelParams, emb) -> Tensor:
    x, y = emb
    return nc_decode(x, y, params.nc_decoder if params.has_fiber else None,
                     params["cls.w"], params["cls.b"])
