import numpy as np
import pytest

from modules import cgnn, datasets, graph_core
from modules.commute import ProximityWeights
from modules.errors import ConfigError, ConvergenceError, DatasetFormatError, GraphError


def _random_weights(g, seed):
    rng = np.random.default_rng(seed)
    c_out = {(i, j): float(rng.uniform(0.1, 1.0)) for i, j in g.edges}
    c_in = {(j, i): float(rng.uniform(0.1, 1.0)) for i, j in g.edges}
    return ProximityWeights(num_nodes=g.num_nodes, c_in=c_in, c_out=c_out)


def _instance(seed, n=8, d=3, k=3, hidden=4, layers=2, p=0.3):
    rng = np.random.default_rng(seed)
    hits = rng.random((n, n)) < p
    g = graph_core.build_digraph(n, zip(*np.nonzero(hits)))
    x = rng.standard_normal((n, d))
    labels = rng.integers(0, k, size=n)
    params = cgnn.init_params([d] + [hidden] * layers + [k], seed=seed)
    return g, x, labels, params, _random_weights(g, seed)


def _naive_forward(params, g, x, w):
    """Loop-by-loop evaluation of the layer definition, used as an independent reference."""
    h = np.asarray(x, dtype=float)
    last = len(params.layers) - 1
    for k, lp in enumerate(params.layers):
        out = np.zeros((g.num_nodes, lp.W_self.shape[1]))
        for i in range(g.num_nodes):
            parts = [h[i] @ lp.W_self]
            ins = [j for (j, t) in g.edges if t == i]
            outs = [t for (s, t) in g.edges if s == i]
            if ins:
                parts.append(sum(w.c_in[(i, j)] * (h[j] @ lp.W_in) for j in ins) / len(ins))
            if outs:
                parts.append(sum(w.c_out[(i, j)] * (h[j] @ lp.W_out) for j in outs) / len(outs))
            out[i] = sum(parts) / len(parts) + lp.b
        h = np.maximum(out, 0.0) if k < last else out
    return h @ params.W_head + params.b_head


# ---- layer ----
def test_isolated_node_keeps_only_the_self_term():
    g = graph_core.build_digraph(2, [])
    rng = np.random.default_rng(0)
    lp = cgnn.init_params([3, 2, 2], seed=0).layers[0]
    h = rng.standard_normal((2, 3))
    z = cgnn.cgnn_layer(h, g, ProximityWeights.uniform(g), lp)
    np.testing.assert_allclose(z, h @ lp.W_self + lp.b)


def test_single_in_neighbor_is_scaled_by_its_weight():
    g = graph_core.build_digraph(2, [(1, 0)])
    w = ProximityWeights(num_nodes=2, c_in={(0, 1): 0.25}, c_out={(1, 0): 1.0})
    lp = cgnn.init_params([2, 2, 2], seed=1).layers[0]
    h = np.array([[1.0, 2.0], [-1.0, 0.5]])
    z = cgnn.cgnn_layer(h, g, w, lp)
    expected = (h[0] @ lp.W_self + 0.25 * (h[1] @ lp.W_in)) / 2 + lp.b
    np.testing.assert_allclose(z[0], expected, atol=1e-15)


def test_layer_rejects_mismatched_weights():
    g = graph_core.build_digraph(2, [(0, 1)])
    lp = cgnn.init_params([2, 2, 2]).layers[0]
    with pytest.raises(GraphError):
        cgnn.cgnn_layer(np.ones((2, 2)), g, ProximityWeights(2, c_in={}, c_out={(0, 1): 1.0}), lp)
    with pytest.raises(GraphError):
        cgnn.cgnn_layer(np.ones((2, 3)), g, ProximityWeights.uniform(g), lp)


# ---- forward ----
def test_identity_network_on_isolated_node_reduces_to_head():
    g = graph_core.build_digraph(1, [])
    eye = np.eye(3)
    params = cgnn.ModelParams(
        layers=[cgnn.LayerParams(W_in=eye.copy(), W_out=eye.copy(), W_self=eye.copy(), b=np.zeros(3))],
        W_head=np.arange(6.0).reshape(3, 2), b_head=np.array([0.5, -0.5]), activation="identity")
    x = np.array([[1.0, -2.0, 3.0]])
    np.testing.assert_allclose(cgnn.forward(params, g, x, ProximityWeights.uniform(g)),
                               x @ params.W_head + params.b_head)


@pytest.mark.parametrize("seed", range(5))
def test_forward_matches_naive_evaluator(seed):
    g, x, _, params, w = _instance(seed)
    np.testing.assert_allclose(cgnn.forward(params, g, x, w), _naive_forward(params, g, x, w),
                               atol=1e-10, rtol=0)


def test_forward_matches_naive_evaluator_on_two_block():
    ds = datasets.generate_synthetic("two_block", 30, {"p_in": 0.3, "p_out": 0.05}, seed=2)
    w = _random_weights(ds.graph, 2)
    params = cgnn.init_params([ds.features.shape[1], 8, 8, 2], seed=2)
    np.testing.assert_allclose(cgnn.forward(params, ds.graph, ds.features, w),
                               _naive_forward(params, ds.graph, ds.features, w), atol=1e-10, rtol=0)


@pytest.mark.parametrize("seed", range(5))
def test_unit_weights_reduce_to_dirgnn(seed):
    g, x, _, params, _ = _instance(seed)
    ones = ProximityWeights.uniform(g, 1.0)
    out = cgnn.forward(params, g, x, ones)
    np.testing.assert_array_equal(out, cgnn.dirgnn_forward(params, g, x))
    np.testing.assert_allclose(out, _naive_forward(params, g, x, ones), atol=1e-12, rtol=0)


def test_forward_is_permutation_equivariant():
    g, x, _, params, w = _instance(3)
    perm = np.random.default_rng(3).permutation(g.num_nodes)
    h = graph_core.permute(g, node_perm=perm)
    w_h = ProximityWeights(num_nodes=g.num_nodes,
                           c_in={(int(perm[a]), int(perm[b])): v for (a, b), v in w.c_in.items()},
                           c_out={(int(perm[a]), int(perm[b])): v for (a, b), v in w.c_out.items()})
    x_h = np.empty_like(x)
    x_h[perm] = x
    np.testing.assert_allclose(cgnn.forward(params, h, x_h, w_h)[perm], cgnn.forward(params, g, x, w),
                               atol=1e-12)


def test_forward_shape_mismatch():
    g, x, _, params, w = _instance(0)
    with pytest.raises(GraphError):
        cgnn.forward(params, g, x[:, :2], w)


# ---- gradients ----
@pytest.mark.parametrize("seed", range(10))
def test_gradient_check(seed):
    g, x, labels, params, w = _instance(seed)
    assert cgnn.gradient_check(params, g, x, labels, np.arange(g.num_nodes), w) < 1e-4


def test_zero_features_give_zero_neighbor_gradients():
    g, x, labels, params, w = _instance(4, layers=1)
    agg = cgnn.Aggregation.build(g, w)
    _, grads = cgnn.loss_and_grads(params, agg, np.zeros_like(x), labels, np.arange(g.num_nodes))
    np.testing.assert_array_equal(grads.layers[0].W_in, 0.0)
    np.testing.assert_array_equal(grads.layers[0].W_out, 0.0)


def test_zero_weights_leave_only_the_self_path():
    g, x, labels, params, _ = _instance(5)
    zero = ProximityWeights.uniform(g, 0.0)
    agg = cgnn.Aggregation.build(g, zero)
    _, grads = cgnn.loss_and_grads(params, agg, x, labels, np.arange(g.num_nodes))
    for lp in grads.layers:
        np.testing.assert_array_equal(lp.W_in, 0.0)
        np.testing.assert_array_equal(lp.W_out, 0.0)
        assert np.abs(lp.W_self).sum() > 0
    assert cgnn.gradient_check(params, g, x, labels, np.arange(g.num_nodes), zero) < 1e-4


# ---- training ----
def _separable(n=40, seed=0):
    return datasets.generate_synthetic("two_block", n, {"p_in": 0.3, "p_out": 0.0, "noise": 0.1}, seed=seed)


def test_separable_task_is_learned():
    ds = _separable()
    w = ProximityWeights.uniform(ds.graph)
    cfg = cgnn.TrainConfig(layers=2, hidden=16, lr=0.05, epochs=200, seed=0)
    params, history = cgnn.train(ds.graph, ds.features, ds.labels, ds.splits, w, cfg)
    assert len(history) == 200
    assert history[-1]["train_acc"] == 1.0
    # the returned parameters are the best-validation ones
    best_val = max(h["val_acc"] for h in history)
    assert cgnn.evaluate(params, ds.graph, ds.features, ds.labels, ds.splits.val, w) == best_val


def test_zero_learning_rate_keeps_parameters():
    ds = _separable(20)
    w = ProximityWeights.uniform(ds.graph)
    cfg = cgnn.TrainConfig(hidden=4, lr=0.0, epochs=5, seed=1)
    params, history = cgnn.train(ds.graph, ds.features, ds.labels, ds.splits, w, cfg)
    init = cgnn.init_params([ds.features.shape[1], 4, 4, 2], seed=1)
    for (_, a), (_, b) in zip(params.blocks(), init.blocks()):
        np.testing.assert_array_equal(a, b)
    assert len({h["train_loss"] for h in history}) == 1


@pytest.mark.parametrize("seed", range(3))
def test_first_step_with_small_lr_does_not_increase_loss(seed):
    g, x, labels, params, w = _instance(seed, n=12)
    agg = cgnn.Aggregation.build(g, w)
    idx = np.arange(g.num_nodes)
    before, grads = cgnn.loss_and_grads(params, agg, x, labels, idx)
    cgnn._apply_update(params, grads, 1e-4, 0.0)
    after, _ = cgnn.loss_and_grads(params, agg, x, labels, idx)
    assert after <= before


def test_training_is_deterministic():
    ds = _separable(24, seed=3)
    w = ProximityWeights.uniform(ds.graph)
    cfg = cgnn.TrainConfig(hidden=8, epochs=20, seed=5, weight_decay=5e-4)
    a, ha = cgnn.train(ds.graph, ds.features, ds.labels, ds.splits, w, cfg)
    b, hb = cgnn.train(ds.graph, ds.features, ds.labels, ds.splits, w, cfg)
    assert ha == hb
    for (_, x), (_, y) in zip(a.blocks(), b.blocks()):
        assert x.tobytes() == y.tobytes()


def test_empty_train_split_is_an_error():
    ds = _separable(10)
    empty = datasets.SplitAssignment(train=np.array([], dtype=np.int64), val=ds.splits.val,
                                     test=ds.splits.test)
    with pytest.raises(GraphError):
        cgnn.train(ds.graph, ds.features, ds.labels, empty, ProximityWeights.uniform(ds.graph),
                   cgnn.TrainConfig(epochs=1))


def test_non_finite_parameters_stop_training(monkeypatch):
    ds = _separable(12)
    real_update = cgnn._apply_update

    def update_then_poison(params, grads, lr, wd):
        real_update(params, grads, lr, wd)
        params.W_head[0, 0] = np.inf

    monkeypatch.setattr(cgnn, "_apply_update", update_then_poison)
    with pytest.raises(ConvergenceError, match="diverged at epoch 1"):
        cgnn.train(ds.graph, ds.features, ds.labels, ds.splits, ProximityWeights.uniform(ds.graph),
                   cgnn.TrainConfig(hidden=4, epochs=3))


def test_is_finite_sees_every_block():
    params = cgnn.init_params([3, 4, 2], seed=0)
    assert params.is_finite()
    params.layers[0].b[1] = np.nan
    assert not params.is_finite()


@pytest.mark.parametrize("kwargs", [{"layers": 0}, {"epochs": 0}, {"lr": -0.1}, {"activation": "tanh"}])
def test_train_config_validation(kwargs):
    with pytest.raises(ConfigError):
        cgnn.TrainConfig(**kwargs)


# ---- evaluation ----
def _fixed_predictor(logit_row_for_node, n, k):
    """Head-only network whose logits are a given function of a one-hot node feature."""
    table = np.array([logit_row_for_node(i) for i in range(n)], dtype=float)
    layer = cgnn.LayerParams(W_in=np.zeros((n, n)), W_out=np.zeros((n, n)), W_self=np.eye(n), b=np.zeros(n))
    return cgnn.ModelParams(layers=[layer], W_head=table, b_head=np.zeros(k), activation="identity")


def test_evaluate_perfect_and_constant_predictors():
    n = 6
    g = graph_core.build_digraph(n, [])
    x = np.eye(n)
    labels = np.array([0, 1, 0, 1, 0, 1])
    w = ProximityWeights.uniform(g)
    perfect = _fixed_predictor(lambda i: [1.0, 0.0] if labels[i] == 0 else [0.0, 1.0], n, 2)
    constant = _fixed_predictor(lambda i: [0.0, 0.0], n, 2)  # ties pick class 0
    assert cgnn.evaluate(perfect, g, x, labels, np.arange(n), w) == 1.0
    assert cgnn.evaluate(constant, g, x, labels, np.arange(n), w) == 0.5
    with pytest.raises(GraphError):
        cgnn.evaluate(perfect, g, x, labels, [], w)


# ---- checkpoint ----
def test_checkpoint_round_trip(tmp_path):
    params = cgnn.init_params([3, 5, 4, 2], seed=7)
    path = tmp_path / "ckpt.txt"
    cgnn.save_checkpoint(str(path), params)
    assert path.read_text().splitlines()[0] == "cgnn-checkpoint v1 seed=7 dims=3,5,4,2 activation=relu"
    loaded = cgnn.load_checkpoint(str(path))
    assert loaded.dims == [3, 5, 4, 2] and loaded.seed == 7
    for (na, a), (nb, b) in zip(params.blocks(), loaded.blocks()):
        assert na == nb
        np.testing.assert_array_equal(a, b)


def test_checkpoint_errors_carry_line_numbers(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("not a checkpoint\n")
    with pytest.raises(DatasetFormatError):
        cgnn.load_checkpoint(str(path))

    params = cgnn.init_params([2, 2, 2], seed=0)
    cgnn.save_checkpoint(str(path), params)
    lines = path.read_text().splitlines()
    lines[2] = "1.0"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(DatasetFormatError) as err:
        cgnn.load_checkpoint(str(path))
    assert err.value.line == 3
