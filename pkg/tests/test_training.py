import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import central_difference, rel_error
from tbgcn import autodiff as ad
from tbgcn.autodiff import DivergenceError, Tensor
from tbgcn.config import ConfigError, ExperimentConfig
from tbgcn.generators import gen_sbm
from tbgcn.graph import build_graph
from tbgcn.model import init_params
from tbgcn.training import (
    EarlyStopper,
    OptimizerState,
    SplitError,
    adam_step,
    epoch_rng,
    loss_combined,
    loss_lp,
    loss_nc,
    objective,
    prepare,
    run_experiment,
    sample_train_negatives,
    split_lp,
    split_nc,
    train,
)


def _random_graph(n, m, seed):
    rng = np.random.default_rng(seed)
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n)]
    idx = rng.choice(len(pairs), size=m, replace=False)
    return build_graph(n, [pairs[i] for i in idx])


# --- splits ---

def test_split_sizes_and_determinism():
    g = _random_graph(40, 100, 0)
    a = split_lp(g, (0.85, 0.05, 0.10), seed=3)
    assert (len(a.train_pos), len(a.val_pos), len(a.test_pos)) == (85, 5, 10)
    assert len(a.val_neg) == 5 and len(a.test_neg) == 10
    b = split_lp(g, (0.85, 0.05, 0.10), seed=3)
    for f in ("train_pos", "val_pos", "test_pos", "val_neg", "test_neg"):
        assert np.array_equal(getattr(a, f), getattr(b, f))


def test_split_partitions_edges_and_negatives_are_non_edges():
    g = _random_graph(30, 120, 1)
    plan = split_lp(g, (0.85, 0.05, 0.10), seed=9)
    parts = [set(map(tuple, getattr(plan, f).tolist())) for f in ("train_pos", "val_pos", "test_pos")]
    assert set().union(*parts) == g.edge_set()
    assert sum(map(len, parts)) == g.num_edges
    # exhaustive membership check against every pair of the 30-node graph
    edges = g.edge_set()
    all_pairs = set(itertools.combinations(range(30), 2))
    negs = [tuple(sorted(p)) for p in np.concatenate([plan.val_neg, plan.test_neg]).tolist()]
    assert len(set(negs)) == len(negs)
    assert all(p in all_pairs and p not in edges for p in negs)
    assert plan.train_graph.edge_set() == parts[0]


def test_split_too_small():
    with pytest.raises(SplitError):
        split_lp(build_graph(3, [(0, 1), (1, 2)]), (0.85, 0.05, 0.10), seed=0)


def test_split_nc_partitions_nodes():
    g = gen_sbm([20, 20], 0.5, 0.05, seed=0)
    plan = split_nc(g, (0.70, 0.15, 0.15), seed=1)
    nodes = np.concatenate([plan.train_nodes, plan.val_nodes, plan.test_nodes])
    assert sorted(nodes.tolist()) == list(range(40))
    assert len(plan.train_nodes) == 28


def test_negatives_forced_pair():
    k4_minus = build_graph(4, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3)])
    assert sample_train_negatives(k4_minus, 1, 0).tolist() == [[2, 3]]


def test_negatives_complete_graph_rejected():
    k3 = build_graph(3, [(0, 1), (0, 2), (1, 2)])
    with pytest.raises(SplitError):
        sample_train_negatives(k3, 1, 0)


def test_negatives_disjoint_from_edges_and_exclusions():
    g = _random_graph(25, 60, 2)
    exclude = sample_train_negatives(g, 5, 99)
    neg = sample_train_negatives(g, g.num_edges, 7, exclude=exclude)
    keys = set(map(tuple, neg.tolist()))
    assert len(neg) == g.num_edges
    assert not keys & g.edge_set()
    assert not keys & set(map(tuple, exclude.tolist()))
    assert (neg[:, 0] < neg[:, 1]).all()


def test_negatives_vary_across_epochs():
    g = _random_graph(50, 60, 3)
    same = sum(
        np.array_equal(sample_train_negatives(g, 60, epoch_rng(t, 1)), sample_train_negatives(g, 60, epoch_rng(t, 2)))
        for t in range(100)
    )
    assert same == 0


# --- losses ---

def test_loss_lp_values():
    assert loss_lp([[0.5]], [[0.5]]).item() == pytest.approx(2 * math.log(2))
    assert loss_lp([[1 - 1e-15]], [[1e-15]]).item() < 1e-11
    a = loss_lp([[0.7], [0.2]], [[0.3]]).item()
    b = loss_lp([[0.7], [0.2]], [[0.3], [0.3]]).item()
    assert a == pytest.approx(b)
    assert math.isfinite(loss_lp([[0.0]], [[1.0]]).item())


def test_loss_nc_values():
    uniform = np.log(np.full((5, 4), 0.25))
    assert loss_nc(uniform, [0, 1, 2, 3, 0], [0, 1, 2]).item() == pytest.approx(math.log(4))
    perfect = np.log(np.clip(np.eye(3), 1e-12, 1))
    assert loss_nc(perfect, [0, 1, 2], [0, 1, 2]).item() == pytest.approx(0.0, abs=1e-9)
    lp = np.log(np.array([[0.9, 0.1], [0.2, 0.8]]))
    assert loss_nc(lp, [0, 0], [1]).item() == pytest.approx(-math.log(0.2))
    with pytest.raises(ValueError):
        loss_nc(lp, [0, 5], [0, 1])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.01, 0.99), min_size=1, max_size=12), st.randoms())
def test_loss_lp_permutation_invariant(values, rnd):
    shuffled = list(values)
    rnd.shuffle(shuffled)
    col = lambda v: np.array(v)[:, None]
    assert loss_lp(col(values), col(values[::-1])).item() == pytest.approx(
        loss_lp(col(shuffled), col(shuffled)).item())


def test_loss_combined():
    assert loss_combined(Tensor([[2.0]]), Tensor([[4.0]]), 0.5).item() == 3.0
    assert loss_combined(Tensor([[2.0]]), Tensor([[4.0]]), 0.0).item() == 2.0
    assert loss_combined(Tensor([[2.0]]), Tensor([[4.0]]), 1.0).item() == 4.0


def test_config_gamma_range():
    with pytest.raises(ConfigError):
        ExperimentConfig(gamma=1.5)


# --- optimizer ---

def test_adam_first_step():
    p = [np.array([[0.0]])]
    adam_step(OptimizerState(lr=0.1), p, [np.array([[1.0]])])
    assert p[0][0, 0] == pytest.approx(-0.1, rel=1e-6)


def test_adam_zero_grad_only_weight_decay():
    p = [np.array([[1.0, -2.0]])]
    adam_step(OptimizerState(lr=0.1), p, [np.zeros((1, 2))])
    assert p[0].tolist() == [[1.0, -2.0]]
    q = [np.array([[1.0, -2.0]])]
    adam_step(OptimizerState(lr=0.1, weight_decay=0.5), q, [None])
    assert q[0][0, 0] < 1.0 and q[0][0, 1] > -2.0


def test_adam_decreases_quadratic():
    w = np.array([[3.0, -1.0]])
    state = OptimizerState(lr=0.01)
    losses = []
    for _ in range(50):
        losses.append(float((w ** 2).sum()))
        adam_step(state, [w], [2 * w])
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_adam_non_finite_leaves_params_untouched():
    a, b = np.array([[1.0]]), np.array([[2.0]])
    with pytest.raises(DivergenceError):
        adam_step(OptimizerState(), [a, b], [np.array([[1.0]]), np.array([[np.inf]])])
    assert a[0, 0] == 1.0 and b[0, 0] == 2.0


# --- early stopping and the loop ---

def test_early_stopper_mechanics():
    cfg = ExperimentConfig(dim_base=2, dim_fiber=2)
    p = init_params(cfg, 3, seed=0)
    s = EarlyStopper(patience=1)
    assert not s.update(1, 0.9, p)
    assert s.update(2, 0.8, p)
    assert s.best_epoch == 1


def _small_lp(**kw):
    g = gen_sbm([10, 10], 0.9, 0.05, seed=4)
    cfg = ExperimentConfig(dim_base=8, dim_fiber=8, **kw)
    return cfg, g, split_lp(g, cfg.lp_fractions, cfg.split_seed)


def test_train_zero_epochs_returns_initial_params():
    cfg, g, plan = _small_lp(max_epochs=0)
    result = train(cfg, g, plan)
    assert result.history == []
    init = init_params(cfg, g.num_nodes, cfg.model_seed)
    for (_, a), (_, b) in zip(result.params.items(), init.items()):
        assert np.array_equal(a.data, b.data)


def test_train_returns_best_epoch_params():
    cfg, g, plan = _small_lp(max_epochs=60, patience=10)
    result = train(cfg, g, plan)
    best = max(result.history, key=lambda h: h["val_metric"])
    assert result.best_epoch == best["epoch"]
    assert result.best_val == best["val_metric"]


def test_train_bitwise_reproducible():
    cfg, g, plan = _small_lp(max_epochs=30, dropconnect_p=0.3)
    a, b = train(cfg, g, plan), train(cfg, g, plan)
    assert a.history == b.history
    for (_, x), (_, y) in zip(a.params.items(), b.params.items()):
        assert np.array_equal(x.data, y.data)


def test_easy_sbm_link_prediction():
    g = gen_sbm([10, 10], 0.9, 0.05, seed=11)
    cfg = ExperimentConfig(max_epochs=500, patience=500)
    assert run_experiment(cfg, g)["metrics"]["auc"] > 0.8


def test_nc_training_runs_and_beats_chance():
    g = gen_sbm([30, 30], 0.4, 0.02, seed=5)
    cfg = ExperimentConfig(task="nc", dim_base=16, dim_fiber=16, max_epochs=200, patience=200)
    assert run_experiment(cfg, g)["metrics"]["f1_micro"] > 0.7


@pytest.mark.parametrize("task,model", [("lp", "tb"), ("lp", "baseline"), ("nc", "tb"), ("nc", "baseline")])
def test_objective_gradient_matches_finite_differences(task, model):
    g = gen_sbm([5, 5], 0.7, 0.2, seed=2)
    cfg = ExperimentConfig(task=task, model=model, dim_base=3, dim_fiber=3, gamma=0.5)
    plan = split_lp(g, cfg.lp_fractions, 0) if task == "lp" else split_nc(g, cfg.nc_fractions, 0)
    data = prepare(g, plan, cfg)
    params = init_params(cfg, g.num_nodes, 1, data.num_classes)

    def value():
        with ad.no_grad():
            return objective(params, data, cfg, epoch_rng(0, 1))[0].item()

    params.zero_grad()
    ad.backward(objective(params, data, cfg, epoch_rng(0, 1))[0])
    tensors = list(params)
    numeric = central_difference(value, [t.data for t in tensors])
    for t, num in zip(tensors, numeric):
        assert rel_error(t.grad, num) <= 1e-4
