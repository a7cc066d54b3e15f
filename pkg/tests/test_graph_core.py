import networkx as nx
import numpy as np
import pytest

from modules import graph_core
from modules.errors import AbsorbingNodeError, GraphError


def test_build_drops_duplicates_keeping_first():
    g = graph_core.build_digraph(3, [(0, 1), (1, 2), (0, 1), (2, 0)])
    assert g.edges == ((0, 1), (1, 2), (2, 0))
    assert g.num_edges == 3


@pytest.mark.parametrize("edges", [[(0, 3)], [(-1, 0)]])
def test_build_rejects_out_of_range_ids(edges):
    with pytest.raises(GraphError):
        graph_core.build_digraph(3, edges)


def test_build_rejects_empty_node_set():
    with pytest.raises(GraphError):
        graph_core.build_digraph(0, [])


def test_degrees_and_adjacency():
    g = graph_core.build_digraph(3, [(0, 1), (0, 2), (2, 2)])
    np.testing.assert_array_equal(g.out_degrees(), [2, 0, 1])
    np.testing.assert_array_equal(g.in_degrees(), [0, 1, 2])
    np.testing.assert_array_equal(graph_core.adjacency(g).toarray(),
                                  [[0, 1, 1], [0, 0, 0], [0, 0, 1]])


def test_transition_matrix_rows_are_stochastic(make_random_digraph):
    g = graph_core.add_self_loops(make_random_digraph(3, 15, 0.2))
    p = graph_core.transition_matrix(g)
    np.testing.assert_allclose(p.dense().sum(axis=1), 1.0, atol=1e-12)
    assert p.matrix.nnz == g.num_edges


def test_transition_matrix_reports_absorbing_nodes():
    g = graph_core.build_digraph(3, [(0, 1), (1, 0)])
    with pytest.raises(AbsorbingNodeError) as err:
        graph_core.transition_matrix(g)
    assert err.value.nodes == [2]


def test_incidence_columns_skip_self_loops():
    g = graph_core.build_digraph(2, [(0, 1), (1, 1)])
    b = graph_core.incidence_matrix(g).matrix.toarray()
    np.testing.assert_array_equal(b, [[1, 0], [-1, 0]])


def test_add_self_loops_is_idempotent(two_node_loops):
    assert graph_core.add_self_loops(two_node_loops) is two_node_loops
    g = graph_core.add_self_loops(graph_core.build_digraph(3, [(0, 1)]))
    assert g.has_self_loop.all()
    assert g.edges[0] == (0, 1)


def test_symmetrize_adds_reverse_edges():
    g = graph_core.symmetrize(graph_core.build_digraph(3, [(0, 1), (1, 0), (1, 2)]))
    assert g.edges == ((0, 1), (1, 0), (1, 2), (2, 1))


@pytest.mark.parametrize("seed", range(5))
def test_strong_components_match_networkx(make_random_digraph, seed):
    g = make_random_digraph(seed, 25, 0.06)
    n_comp, _ = graph_core.strong_components(g)
    ref = nx.DiGraph()
    ref.add_nodes_from(range(g.num_nodes))
    ref.add_edges_from(g.edges)
    assert n_comp == nx.number_strongly_connected_components(ref)


def test_largest_strong_component_relabels_in_id_order():
    # {1, 3, 4} is a 3-cycle; 0 and 2 hang off it
    g = graph_core.build_digraph(5, [(0, 1), (1, 3), (3, 4), (4, 1), (4, 2)])
    sub, node_map = graph_core.largest_strong_component(g)
    np.testing.assert_array_equal(node_map, [1, 3, 4])
    assert set(sub.edges) == {(0, 1), (1, 2), (2, 0)}


def test_remove_absorbing_prunes_repeatedly():
    # 2 is absorbing; once it goes, 1 becomes absorbing too
    g = graph_core.build_digraph(4, [(0, 3), (3, 0), (0, 1), (1, 2)])
    core, node_map = graph_core.remove_absorbing(g)
    np.testing.assert_array_equal(node_map, [0, 3])
    assert set(core.edges) == {(0, 1), (1, 0)}


def test_remove_absorbing_all_nodes_is_an_error():
    with pytest.raises(GraphError):
        graph_core.remove_absorbing(graph_core.build_digraph(2, [(0, 1)]))


def test_permute_relabels_nodes_and_reorders_edges():
    g = graph_core.build_digraph(3, [(0, 1), (1, 2)])
    h = graph_core.permute(g, node_perm=[2, 0, 1], edge_perm=[1, 0])
    assert h.edges == ((0, 1), (2, 0))


def test_permute_rejects_non_bijection():
    g = graph_core.build_digraph(3, [(0, 1)])
    with pytest.raises(GraphError):
        graph_core.permute(g, node_perm=[0, 0, 1])


def test_transition_matrix_of_two_cycle(two_cycle):
    np.testing.assert_array_equal(graph_core.transition_matrix(two_cycle).dense(), [[0, 1], [1, 0]])
    looped = graph_core.add_self_loops(two_cycle)
    assert looped.num_edges == 4
    np.testing.assert_allclose(graph_core.transition_matrix(looped).dense(), [[0.5, 0.5], [0.5, 0.5]])


def test_incidence_of_two_cycle_follows_edge_order(two_cycle):
    b = graph_core.incidence_matrix(two_cycle).matrix.toarray()
    np.testing.assert_array_equal(b, [[1, -1], [-1, 1]])
    rev = graph_core.permute(two_cycle, edge_perm=[1, 0])
    np.testing.assert_array_equal(graph_core.incidence_matrix(rev).matrix.toarray(), b[:, ::-1])


@pytest.mark.parametrize("n, edges, expected", [
    (2, [(0, 1), (1, 0)], (True, 1)),
    (2, [(0, 1)], (False, 2)),
    (1, [], (True, 1)),
])
def test_strongly_connected(n, edges, expected):
    assert graph_core.strongly_connected(graph_core.build_digraph(n, edges)) == expected


def test_strongly_connected_is_invariant_under_relabeling(make_random_digraph):
    g = make_random_digraph(11, 20, 0.1)
    perm = np.random.default_rng(0).permutation(20)
    assert graph_core.strongly_connected(graph_core.permute(g, node_perm=perm)) == graph_core.strongly_connected(g)


def test_identity_permutation_is_identity(make_random_digraph):
    g = make_random_digraph(2, 10, 0.3)
    assert graph_core.permute(g, np.arange(10), np.arange(g.num_edges)) == g
