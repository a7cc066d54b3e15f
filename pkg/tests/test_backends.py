import numpy as np
import pytest

from modules import backends, commute, graph_core, oracle, spectral
from modules.errors import DenseCapError, GraphError


def test_calibration_report_records_both_closed_forms():
    rep = backends.calibration_report()
    assert rep["dilap_h01"] == pytest.approx(1.0, abs=1e-10)
    assert rep["dilap_c01"] == pytest.approx(2.0, abs=1e-10)
    assert rep["dense_oracle_h01"] == pytest.approx(2.0, abs=1e-10)
    assert rep["dense_oracle_c01"] == pytest.approx(4.0, abs=1e-10)
    assert rep["oracle_to_dilap_ratio"] == pytest.approx(2.0, abs=1e-9)


def test_each_backend_matches_its_own_closed_form(two_node_loops):
    pairs = [(0, 1)]
    c_dilap = backends.commute_for_graph(two_node_loops, pairs, backend="dilap", rank_q=None)
    c_oracle = backends.commute_for_graph(two_node_loops, pairs, backend="dense_oracle")
    np.testing.assert_allclose(c_dilap, [2.0], atol=1e-10)
    np.testing.assert_allclose(c_oracle, [4.0], atol=1e-10)
    # the walk simulator agrees with the oracle, not with the closed form
    p = graph_core.transition_matrix(two_node_loops)
    mc = oracle.monte_carlo_hitting(p, 0, 1, walks=50_000, seed=0)
    assert abs(mc.values["hitting"] - c_oracle[0] / 2) <= mc.error_bound
    assert abs(mc.values["hitting"] - c_dilap[0] / 2) > mc.error_bound


def test_dilap_backend_at_full_rank_matches_dense_path(make_rewired):
    g = make_rewired(7, 25, 0.15)
    p = graph_core.transition_matrix(g)
    pi = spectral.perron_vector(p)
    factors = spectral.pseudoinverse_factors(spectral.dilap(g, p), g.num_nodes)
    dense = commute.hitting_commute_closed_form(factors, pi).commute
    values = backends.commute_for_graph(g, g.edges, backend="dilap", rank_q=None, seed=3)
    np.testing.assert_allclose(values, commute.edge_values_from_dense(dense, g.edges), rtol=1e-8)


def test_oracle_backends_are_capped(make_rewired):
    g = make_rewired(0, 30, 0.1)
    for backend in ("dense_oracle", "ppr"):
        with pytest.raises(DenseCapError):
            backends.commute_for_graph(g, g.edges, backend=backend, dense_cap=20)


def test_ppr_backend_runs_on_graphs_with_absorbing_nodes():
    # 2 has no out-edge; the self-loop and teleport keep the chain ergodic
    g = graph_core.build_digraph(3, [(0, 1), (1, 2)])
    values = backends.commute_for_graph(g, g.edges, backend="ppr")
    assert values.shape == (2,)
    assert (values > 0).all()


def test_unknown_backend():
    g = graph_core.build_digraph(2, [(0, 1), (1, 0)])
    with pytest.raises(GraphError):
        backends.commute_for_graph(g, g.edges, backend="resistance")


def test_commute_change_report_on_strongly_connected_graph(make_random_digraph):
    g = make_random_digraph(1, 15, 0.3)
    x = np.random.default_rng(1).standard_normal((15, 3))
    rep = backends.commute_change_report(g, x)
    assert rep["component_nodes"] <= 15
    assert rep["pairs"] > 0
    assert 0.0 <= rep["delta"] < 1.0


def test_commute_change_report_needs_a_cycle():
    g = graph_core.build_digraph(3, [(0, 1), (1, 2)])
    with pytest.raises(GraphError):
        backends.commute_change_report(g, np.eye(3))
