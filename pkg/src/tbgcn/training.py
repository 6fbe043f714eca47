"""Splits, negative sampling, losses, Adam and the early-stopped training loops."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import DivergenceError, Tensor
from .config import ExperimentConfig
from .graph import Graph, GraphError, aggregation_matrix
from .metrics import average_precision, f1, roc_auc
from .model import ModelParams, encode, init_params, link_probs, node_log_probs

log = logging.getLogger(__name__)

PROB_CLAMP = 1e-12


class SplitError(ValueError):
    pass


class TrainingDiverged(DivergenceError):
    """Raised when the loss or a gradient turns non-finite; carries the partial run."""

    def __init__(self, epoch: int, history: list[dict], best_params: ModelParams, cause: Exception):
        super().__init__(f"training diverged at epoch {epoch}: {cause}")
        self.epoch = epoch
        self.history = history
        self.best_params = best_params


# --- splits ---------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SplitPlan:
    """Frozen train/val/test partition of edges (``lp``) or nodes (``nc``)."""

    task: str
    fractions: tuple[float, float, float]
    split_seed: int
    train_pos: np.ndarray | None = None
    val_pos: np.ndarray | None = None
    test_pos: np.ndarray | None = None
    val_neg: np.ndarray | None = None
    test_neg: np.ndarray | None = None
    train_graph: Graph | None = None
    train_nodes: np.ndarray | None = None
    val_nodes: np.ndarray | None = None
    test_nodes: np.ndarray | None = None


def _part_sizes(total: int, fractions) -> tuple[int, int, int]:
    f_train, f_val, f_test = fractions
    n_val = int(round(f_val * total))
    n_test = int(round(f_test * total))
    n_train = total - n_val - n_test
    for name, frac, size in (("train", f_train, n_train), ("val", f_val, n_val), ("test", f_test, n_test)):
        if frac > 0 and size <= 0:
            raise SplitError(f"{total} items are too few for a non-empty {name} part at fractions {tuple(fractions)}")
    return n_train, n_val, n_test


def _pair_keys(pairs: np.ndarray, n: int) -> np.ndarray:
    lo = np.minimum(pairs[:, 0], pairs[:, 1])
    hi = np.maximum(pairs[:, 0], pairs[:, 1])
    return lo * n + hi


def _keys_to_pairs(keys: np.ndarray, n: int) -> np.ndarray:
    return np.stack([keys // n, keys % n], axis=1).astype(np.int64)


def _sample_non_edge_keys(n: int, forbidden: np.ndarray, k: int, rng: np.random.Generator,
                          distinct: bool) -> np.ndarray:
    """``k`` uniform keys of unordered pairs ``u < v`` absent from sorted ``forbidden``."""
    total = n * (n - 1) // 2
    available = total - forbidden.size
    if available <= 0:
        raise SplitError("graph is complete: there are no non-edges to sample")
    if distinct and k > available:
        raise SplitError(f"asked for {k} distinct non-edges but only {available} exist")
    if available < 4 * k:
        # dense graph: enumerate the complement
        iu, ju = np.triu_indices(n, k=1)
        keys = iu * n + ju
        keys = keys[~np.isin(keys, forbidden)]
        idx = rng.choice(keys.size, size=k, replace=not distinct)
        return keys[idx]
    out: list[np.ndarray] = []
    got = 0
    seen = np.zeros(0, dtype=np.int64)
    while got < k:
        u = rng.integers(n, size=2 * (k - got) + 8)
        v = rng.integers(n, size=u.size)
        ok = u != v
        keys = np.minimum(u, v)[ok] * n + np.maximum(u, v)[ok]
        keys = keys[~np.isin(keys, forbidden)]
        if distinct:
            _, first = np.unique(keys, return_index=True)
            keys = keys[np.sort(first)]
            keys = keys[~np.isin(keys, seen)]
            seen = np.concatenate([seen, keys])
        out.append(keys)
        got += keys.size
    return np.concatenate(out)[:k]


def split_lp(g: Graph, fractions=(0.85, 0.05, 0.10), seed: int = 1234) -> SplitPlan:
    """Random edge split plus frozen validation/test negatives.

    Negatives are distinct non-edges of the full graph, one per held-out
    positive. The returned plan carries the graph restricted to training edges.
    """
    n_train, n_val, n_test = _part_sizes(g.num_edges, fractions)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(g.num_edges)
    edges = g.edges[perm]
    train = edges[:n_train]
    val = edges[n_train:n_train + n_val]
    test = edges[n_train + n_val:]
    neg_keys = _sample_non_edge_keys(g.num_nodes, np.sort(g.edge_keys()), n_val + n_test, rng, distinct=True)
    negs = _keys_to_pairs(neg_keys, g.num_nodes)
    return SplitPlan(
        "lp", tuple(fractions), seed,
        train_pos=train, val_pos=val, test_pos=test,
        val_neg=negs[:n_val], test_neg=negs[n_val:],
        train_graph=g.with_edges(train),
    )


def split_nc(g: Graph, fractions=(0.70, 0.15, 0.15), seed: int = 1234) -> SplitPlan:
    if g.labels is None:
        raise SplitError("node classification needs node labels")
    n_train, n_val, _ = _part_sizes(g.num_nodes, fractions)
    perm = np.random.default_rng(seed).permutation(g.num_nodes)
    return SplitPlan(
        "nc", tuple(fractions), seed,
        train_nodes=np.sort(perm[:n_train]),
        val_nodes=np.sort(perm[n_train:n_train + n_val]),
        test_nodes=np.sort(perm[n_train + n_val:]),
    )


def sample_train_negatives(g: Graph, k: int, epoch_seed, exclude: np.ndarray | None = None) -> np.ndarray:
    """``k`` uniform draws (with replacement) from the non-edges of ``g``.

    ``exclude`` lists extra pairs that must not be drawn, e.g. frozen
    evaluation negatives.
    """
    if k < 1:
        raise SplitError(f"k must be >= 1, got {k}")
    forbidden = g.edge_keys()
    if exclude is not None and len(exclude):
        forbidden = np.union1d(forbidden, _pair_keys(np.asarray(exclude), g.num_nodes))
    rng = epoch_seed if isinstance(epoch_seed, np.random.Generator) else np.random.default_rng(epoch_seed)
    keys = _sample_non_edge_keys(g.num_nodes, np.sort(forbidden), k, rng, distinct=False)
    return _keys_to_pairs(keys, g.num_nodes)


# --- losses ----------------------------------------------------------------------


def loss_lp(p_pos, p_neg) -> Tensor:
    """Cross-entropy ``-mean(log P+) - mean(log(1 - P-))`` with probabilities clamped away from 0 and 1."""
    p_pos = ad.clip(p_pos, PROB_CLAMP, 1.0 - PROB_CLAMP)
    p_neg = ad.clip(p_neg, PROB_CLAMP, 1.0 - PROB_CLAMP)
    pos_term = ad.mean_all(ad.log(p_pos))
    neg_term = ad.mean_all(ad.log(ad.affine(p_neg, -1.0, 1.0)))
    return ad.affine(ad.elem_add(pos_term, neg_term), -1.0)


def loss_nc(log_probs, labels, train_nodes) -> Tensor:
    """Mean negative log-likelihood of the true class over ``train_nodes``."""
    log_probs = ad._as_tensor(log_probs)
    nodes = np.asarray(train_nodes, dtype=np.int64)
    if nodes.size == 0:
        raise SplitError("loss_nc needs at least one training node")
    y = np.asarray(labels, dtype=np.int64)[nodes]
    n_cls = log_probs.shape[1]
    if y.min() < 0 or y.max() >= n_cls:
        raise GraphError(f"labels must lie in [0, {n_cls})")
    return ad.affine(ad.mean_all(ad.pick(log_probs, nodes, y)), -1.0)


def loss_combined(l_cn, l_lp, gamma: float) -> Tensor:
    """``(1 - gamma) * l_cn + gamma * l_lp``: ``gamma`` is the weight of the structure term."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    return ad.elem_add(ad.affine(l_cn, 1.0 - gamma), ad.affine(l_lp, gamma))


# --- optimizer -------------------------------------------------------------------


@dataclass
class OptimizerState:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_step(state: OptimizerState, params: list[np.ndarray], grads: list[np.ndarray | None]) -> None:
    """One bias-corrected Adam update, in place. ``None`` gradients count as zero.

    Weight decay is added to the gradient as ``weight_decay * w``.
    """
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    grads = [np.zeros_like(p) if g is None else g for p, g in zip(params, grads)]
    # check everything first so a failed step leaves the parameters untouched
    if not all(np.isfinite(g).all() for g in grads):
        raise DivergenceError(f"non-finite gradient at optimizer step {state.step + 1}")
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if state.weight_decay:
            g = g + state.weight_decay * p
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


class Adam:
    def __init__(self, params: ModelParams, config: ExperimentConfig):
        self.params = params
        self.state = OptimizerState(config.lr, config.beta1, config.beta2, config.adam_eps, config.weight_decay)

    def step(self) -> None:
        tensors = list(self.params)
        adam_step(self.state, [t.data for t in tensors], [t.grad for t in tensors])


# --- training loops ---------------------------------------------------------------


class EarlyStopper:
    """Tracks the best validation metric (higher is better) and its parameters."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = -math.inf
        self.best_epoch = 0
        self.best_state: dict[str, np.ndarray] | None = None

    def update(self, epoch: int, metric: float, params: ModelParams) -> bool:
        """Record ``metric`` for ``epoch``; return True when training should stop."""
        if metric > self.best:
            self.best, self.best_epoch = metric, epoch
            self.best_state = params.state()
            return False
        return epoch - self.best_epoch >= self.patience


@dataclass
class TrainResult:
    params: ModelParams
    history: list[dict]
    best_epoch: int
    best_val: float

    def __iter__(self):
        yield self.params
        yield self.history


@dataclass
class TaskData:
    """Everything the loop needs, prepared once per (graph, plan)."""

    graph: Graph
    plan: SplitPlan
    agg: Tensor
    x0: Tensor | None
    y0: Tensor | None
    in_dim: int
    fiber_in_dim: int
    num_classes: int
    neg_exclude: np.ndarray | None
    train_pos: np.ndarray


def prepare(graph: Graph, plan: SplitPlan, config: ExperimentConfig,
            fiber_features: np.ndarray | None = None) -> TaskData:
    if plan.task != config.task:
        raise SplitError(f"split plan is for {plan.task!r}, config asks for {config.task!r}")
    if plan.task == "lp":
        agg = aggregation_matrix(plan.train_graph)
        exclude = np.concatenate([plan.val_neg, plan.test_neg])
        train_pos = plan.train_pos
    else:
        if graph.labels is None:
            raise SplitError("node classification needs node labels")
        agg = aggregation_matrix(graph)
        exclude = None
        train_pos = graph.edges
    x0 = None if graph.features is None else Tensor(graph.features)
    y0 = x0
    if config.multi_view:
        if fiber_features is None:
            raise SplitError("multi_view needs separate fiber features")
        y0 = Tensor(fiber_features)
    in_dim = graph.num_nodes if x0 is None else x0.shape[1]
    fiber_in = graph.num_nodes if y0 is None else y0.shape[1]
    n_cls = graph.num_classes if plan.task == "nc" else 0
    return TaskData(graph, plan, ad.constant(agg), x0, y0, in_dim, fiber_in, n_cls, exclude, train_pos)


def embed(params: ModelParams, data: TaskData, config: ExperimentConfig | None = None, rng=None):
    p = config.dropconnect_p if config is not None else 0.0
    return encode(params, data.agg, data.x0, data.y0, dropconnect_p=p, rng=rng)


def _lp_loss(params, emb, data, config, epoch_rng) -> Tensor:
    neg = sample_train_negatives(data.graph, len(data.train_pos), epoch_rng, data.neg_exclude)
    p_pos = link_probs(emb, data.train_pos, config.r, config.t)
    p_neg = link_probs(emb, neg, config.r, config.t)
    return loss_lp(p_pos, p_neg)


def objective(params: ModelParams, data: TaskData, config: ExperimentConfig, epoch_rng, dc_rng=None):
    """Training loss for one full-batch epoch; returns ``(loss, embeddings)``."""
    emb = embed(params, data, config, dc_rng)
    if data.plan.task == "lp":
        return _lp_loss(params, emb, data, config, epoch_rng), emb
    g = config.gamma
    parts = []
    if g < 1.0:
        parts.append(ad.affine(loss_nc(node_log_probs(params, emb), data.graph.labels, data.plan.train_nodes), 1.0 - g))
    if g > 0.0:
        parts.append(ad.affine(_lp_loss(params, emb, data, config, epoch_rng), g))
    loss = parts[0] if len(parts) == 1 else ad.elem_add(parts[0], parts[1])
    return loss, emb


def evaluate_lp(params: ModelParams, data: TaskData, config: ExperimentConfig, split: str = "test",
                emb=None) -> dict[str, float]:
    with ad.no_grad():
        emb = emb or embed(params, data)
        pos = link_probs(emb, getattr(data.plan, f"{split}_pos"), config.r, config.t).data
        neg = link_probs(emb, getattr(data.plan, f"{split}_neg"), config.r, config.t).data
    return {"auc": roc_auc(pos, neg), "ap": average_precision(pos, neg)}


def evaluate_nc(params: ModelParams, data: TaskData, config: ExperimentConfig, split: str = "test",
                emb=None) -> dict[str, float]:
    nodes = getattr(data.plan, f"{split}_nodes")
    with ad.no_grad():
        emb = emb or embed(params, data)
        pred = node_log_probs(params, emb).data[nodes].argmax(axis=1)
    true = data.graph.labels[nodes]
    return {"f1_micro": f1(pred, true, "micro"), "f1_macro": f1(pred, true, "macro")}


def evaluate(params, data, config, split="test", emb=None) -> dict[str, float]:
    fn = evaluate_lp if data.plan.task == "lp" else evaluate_nc
    return fn(params, data, config, split, emb)


def validation_metric(params, data, config, emb=None) -> float:
    m = evaluate(params, data, config, "val", emb)
    return m["auc"] if data.plan.task == "lp" else m["f1_micro"]


def epoch_rng(model_seed: int, epoch: int) -> np.random.Generator:
    return np.random.default_rng([model_seed, epoch])


def train(config: ExperimentConfig, graph: Graph, plan: SplitPlan,
          fiber_features: np.ndarray | None = None, data: TaskData | None = None) -> TrainResult:
    """Full-batch training with early stopping on the validation metric.

    The validation metric is AUC for link prediction and micro-F1 for node
    classification. The returned parameters are those of the best epoch.
    """
    data = data or prepare(graph, plan, config, fiber_features)
    params = init_params(config, data.in_dim, config.model_seed, data.num_classes, data.fiber_in_dim)
    opt = Adam(params, config)
    stopper = EarlyStopper(config.patience)
    dc_rng = np.random.default_rng([config.model_seed, 2**31]) if config.dropconnect_p else None
    history: list[dict] = []
    for epoch in range(1, config.max_epochs + 1):
        # score the parameters entering this epoch, then take one step
        try:
            params.zero_grad()
            loss, emb = objective(params, data, config, epoch_rng(config.model_seed, epoch), dc_rng)
            metric = validation_metric(params, data, config, None if dc_rng else emb)
            stop = stopper.update(epoch, metric, params)
            history.append({"epoch": epoch, "loss": loss.item(), "val_metric": metric})
            if stop:
                break
            ad.backward(loss)
            opt.step()
        except DivergenceError as exc:
            best = params.copy()
            if stopper.best_state is not None:
                best.load_state(stopper.best_state)
            raise TrainingDiverged(epoch, history, best, exc) from exc
    if stopper.best_state is not None:
        params.load_state(stopper.best_state)
    return TrainResult(params, history, stopper.best_epoch, stopper.best)


# --- experiment driver -------------------------------------------------------------


def make_split(graph: Graph, config: ExperimentConfig) -> SplitPlan:
    if config.task == "lp":
        return split_lp(graph, config.lp_fractions, config.split_seed)
    return split_nc(graph, config.nc_fractions, config.split_seed)


def run_experiment(config: ExperimentConfig, graph: Graph,
                   fiber_features: np.ndarray | None = None) -> dict:
    """Split, train and score on the test part; returns a JSON-ready report row."""
    start = time.perf_counter()
    plan = make_split(graph, config)
    data = prepare(graph, plan, config, fiber_features)
    result = train(config, graph, plan, data=data)
    metrics = evaluate(result.params, data, config, "test")
    log.info("split_seed=%d model_seed=%d best_epoch=%d %s", config.split_seed, config.model_seed,
             result.best_epoch, metrics)
    return {
        "config": config.to_dict(),
        "split_seed": config.split_seed,
        "model_seed": config.model_seed,
        "best_epoch": result.best_epoch,
        "epochs_run": len(result.history),
        "wall_time_s": time.perf_counter() - start,
        "metrics": metrics,
        "_result": result,
    }
