import json

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roadgp._linalg import jittered_cholesky
from roadgp.generate import random_network
from roadgp.network import (
    Embedding,
    KernelHyper,
    NetworkError,
    RoadNetwork,
    choose_dimension,
    edge_weight,
    embedding_stress,
    kernel,
    mds_embed,
    prior_covariance,
    se_kernel,
    shortest_path_distances,
    symmetrize_distances,
)


def chain(weights):
    """Segments 0..n on a line with features chosen so consecutive weights match."""
    feats = np.concatenate([[0.0], np.cumsum(weights)])[:, None]
    n = len(feats)
    return RoadNetwork(range(n), feats, [1.0], [(i, i + 1) for i in range(n - 1)])


# -- edge weights --------------------------------------------------------------


def test_edge_weight_identical_features_is_zero():
    assert edge_weight([3.0, 1.0], [3.0, 1.0], [2.0, 5.0]) == 0.0


def test_edge_weight_hand_value():
    assert edge_weight([100, 2], [200, 4], [100, 4]) == pytest.approx(1.5, abs=1e-15)


def test_edge_weight_full_range_is_one():
    assert edge_weight([0.0], [7.5], [7.5]) == 1.0


def test_edge_weight_errors():
    with pytest.raises(ValueError, match="dimension"):
        edge_weight([1, 2], [1], [1, 1])
    with pytest.raises(ValueError, match="positive"):
        edge_weight([1, 2], [1, 3], [1, 0])


vec = st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3)


@given(vec, vec, st.lists(st.floats(0.1, 100), min_size=3, max_size=3))
def test_edge_weight_symmetric_and_zero_iff_equal(a, b, r):
    w = edge_weight(a, b, r)
    assert w == edge_weight(b, a, r)
    assert (w == 0) == (a == b)


def test_network_weights_come_from_features():
    net = RoadNetwork(["b", "a"], [[1.0, 0.0], [3.0, 2.0]], [2.0, 4.0], [("a", "b")])
    assert net.ids == ["a", "b"]
    assert net.weights == {(0, 1): pytest.approx(1.5)}


def test_network_rejects_bad_input():
    with pytest.raises(NetworkError, match="duplicate"):
        RoadNetwork([1, 1], [[0.0], [1.0]], [1.0], [])
    with pytest.raises(NetworkError, match="unknown"):
        RoadNetwork([1, 2], [[0.0], [1.0]], [1.0], [(1, 3)])
    with pytest.raises(NetworkError, match="positive"):
        RoadNetwork([1, 2], [[0.0], [1.0]], [0.0], [])


# -- shortest paths ------------------------------------------------------------


def test_single_segment_distance():
    net = RoadNetwork([0], [[0.0]], [1.0], [])
    np.testing.assert_array_equal(shortest_path_distances(net), [[0.0]])


def test_chain_distances():
    d = shortest_path_distances(chain([1.0, 2.0]))
    assert d[0, 2] == 3.0
    assert d[2, 0] == np.inf


def test_complete_graph_uniform_weight():
    n, w = 5, 0.7
    # features on a simplex-like layout: every pair differs by exactly w
    feats = np.eye(n) * w / 2
    edges = [(i, j) for i in range(n) for j in range(n) if i != j]
    d = shortest_path_distances(RoadNetwork(range(n), feats, np.ones(n), edges))
    off = d[~np.eye(n, dtype=bool)]
    np.testing.assert_allclose(off, w, rtol=1e-15)


@pytest.mark.parametrize("seed", range(8))
def test_distances_match_dijkstra(seed):
    net = random_network(25, seed=seed, max_out_degree=3, extra=0.7)
    g = nx.DiGraph()
    g.add_nodes_from(range(len(net)))
    for (i, j), w in net.weights.items():
        g.add_edge(i, j, weight=w)
    d = shortest_path_distances(net)
    ref = dict(nx.all_pairs_dijkstra_path_length(g))
    for i in range(len(net)):
        for j in range(len(net)):
            assert d[i, j] == pytest.approx(ref[i].get(j, np.inf), rel=1e-12)


def test_directed_triangle_inequality(rng):
    net = random_network(30, seed=3)
    d = shortest_path_distances(net)
    for _ in range(2000):
        a, b, c = rng.integers(0, 30, 3)
        assert d[a, c] <= d[a, b] + d[b, c] + 1e-12


def test_symmetrize_one_way_and_unreachable():
    d = np.array([[0.0, 2.0, 5.0], [4.0, 0.0, 1.0], [np.inf, np.inf, 0.0]])
    s = symmetrize_distances(d)
    assert s[0, 1] == s[1, 0] == 3.0
    assert s[1, 2] == s[2, 1] == 1.0
    assert s[0, 2] == s[2, 0] == 5.0
    with pytest.raises(NetworkError, match="unreachable"):
        symmetrize_distances(np.array([[0.0, np.inf], [np.inf, 0.0]]))


# -- MDS ------------------------------------------------------------------------


def pairwise(coords):
    return np.linalg.norm(coords[:, None] - coords[None], axis=-1)


def test_mds_two_points():
    emb = mds_embed(np.array([[0.0, 1.0], [1.0, 0.0]]), 1)
    assert pairwise(emb.coords)[0, 1] == pytest.approx(1.0, abs=1e-12)
    assert emb.stress == pytest.approx(0.0, abs=1e-20)


def test_mds_path_metric_embeds_on_a_line():
    d = np.array([[0, 1, 2], [1, 0, 1], [2, 1, 0]], dtype=float)
    emb = mds_embed(d, 1)
    e = pairwise(emb.coords)
    np.testing.assert_allclose([e[0, 1], e[1, 2], e[0, 2]], [1, 1, 2], atol=1e-12)
    assert emb.stress < 1e-20


def test_mds_four_cycle_is_a_square_with_positive_stress():
    d = np.array([[0, 1, 2, 1], [1, 0, 1, 2], [2, 1, 0, 1], [1, 2, 1, 0]], dtype=float)
    emb = mds_embed(d, 2)
    e = pairwise(emb.coords)
    adjacent = e[[0, 1, 2, 3], [1, 2, 3, 0]]
    assert emb.stress > 0
    # the cycle metric is not Euclidean: opposite corners stay at 2 and the
    # sides stretch to sqrt(2), giving the unit-square pattern scaled by sqrt(2)
    np.testing.assert_allclose(adjacent, np.sqrt(2), rtol=1e-12)
    np.testing.assert_allclose([e[0, 2], e[1, 3]], 2.0, rtol=1e-12)
    assert emb.stress == pytest.approx(4 * (np.sqrt(2) - 1) ** 2, rel=1e-12)


def test_mds_recovers_euclidean_metric(rng):
    pts = rng.normal(size=(25, 3))
    emb = mds_embed(pairwise(pts), 3)
    assert emb.stress <= 1e-6 * 0.5 * np.sum(pairwise(pts) ** 2)


def test_stress_recomputable_from_fields(rng):
    net = random_network(15, seed=1)
    d = shortest_path_distances(net)
    emb = mds_embed(d, 3)
    assert emb.stress == pytest.approx(embedding_stress(symmetrize_distances(d), emb.coords))


def test_mds_dimension_rule_and_range():
    assert choose_dimension([5.0, 3.0, 2.0, -1.0], 0.95) == 3
    assert choose_dimension([9.0, 1.0], 0.9) == 1
    d = np.array([[0.0, 1.0], [1.0, 0.0]])
    with pytest.raises(ValueError, match="out of range"):
        mds_embed(d, 3)
    with pytest.raises(NetworkError):
        mds_embed(np.array([[0.0, np.inf], [np.inf, 0.0]]), 1)


def test_mds_is_deterministic():
    d = shortest_path_distances(random_network(20, seed=5))
    a, b = mds_embed(d), mds_embed(d)
    np.testing.assert_array_equal(a.coords, b.coords)


# -- kernel ---------------------------------------------------------------------


EMB = Embedding(np.array([[0.0], [1.0], [25.0]]), 0.0)


def test_kernel_values():
    h = KernelHyper(4.0, 1.0, 0.5)
    assert kernel(0, 0, EMB, h) == 4.0
    assert kernel(0, 1, EMB, h) == pytest.approx(4 * np.exp(-0.5), rel=1e-15)
    assert round(kernel(0, 1, EMB, h), 5) == 2.42612
    assert kernel(0, 2, EMB, KernelHyper(4.0, 1.0)) < 1e-4 * 4.0


def test_kernel_unknown_segment():
    with pytest.raises(KeyError):
        kernel(0, 3, EMB, KernelHyper(1.0))


def test_prior_covariance_noise_on_diagonal_only():
    h = KernelHyper(4.0, 1.0, 0.5)
    assert prior_covariance(1, 1, EMB, h) == 4.5
    assert prior_covariance(0, 1, EMB, h) == kernel(0, 1, EMB, h)
    h0 = KernelHyper(4.0, 1.0, 0.0)
    assert all(prior_covariance(a, b, EMB, h0) == kernel(a, b, EMB, h0) for a in range(3) for b in range(3))


def test_hyper_validation():
    with pytest.raises(ValueError):
        KernelHyper(0.0)
    with pytest.raises(ValueError):
        KernelHyper(1.0, [1.0, -1.0])
    with pytest.raises(ValueError):
        KernelHyper(1.0, 1.0, -0.1)
    with pytest.raises(ValueError, match="length-scales"):
        KernelHyper(1.0, [1.0, 2.0]).scales(3)


def test_se_kernel_matches_scalar_kernel(rng):
    emb = Embedding(rng.normal(size=(6, 2)), 0.0)
    h = KernelHyper(2.0, [0.5, 1.5])
    K = se_kernel(emb.coords, emb.coords, h)
    for a in range(6):
        for b in range(6):
            assert K[a, b] == pytest.approx(kernel(a, b, emb, h), rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 1.0))
def test_prior_gram_positive_semidefinite(seed, noise):
    r = np.random.default_rng(seed)
    net = random_network(int(r.integers(5, 25)), seed=seed)
    emb = mds_embed(shortest_path_distances(net))
    h = KernelHyper(r.uniform(0.5, 2), r.uniform(0.3, 2), noise)
    for _ in range(4):
        idx = r.choice(len(net), size=int(r.integers(1, len(net) + 1)), replace=False)
        G = se_kernel(emb.coords[idx], emb.coords[idx], h) + noise * np.eye(idx.size)
        _, jitter = jittered_cholesky(G)
        assert jitter <= 1e-8 * np.mean(np.diag(G))


# -- files ----------------------------------------------------------------------


def test_csv_and_json_round_trip(tmp_path):
    net = random_network(12, seed=2)
    for name in ("n.csv", "n.json"):
        p = tmp_path / name
        net.save(p)
        back = RoadNetwork.load(p)
        assert back.ids == net.ids
        np.testing.assert_array_equal(back.features, net.features)
        assert back.edges == net.edges
    assert json.loads((tmp_path / "n.json").read_text())["ranges"] == list(net.ranges)


def test_csv_format_with_string_ids_and_comments(tmp_path):
    text = """# small example
[segments]
ranges,100,4
north,100,2
south,200,4
[edges]
north,south
south,north
"""
    p = tmp_path / "n.csv"
    p.write_text(text)
    net = RoadNetwork.load(p)
    assert net.ids == ["north", "south"]
    assert net.weights[(0, 1)] == pytest.approx(1.5)


def test_loader_rejects_disconnected_and_malformed(tmp_path):
    p = tmp_path / "n.csv"
    p.write_text("[segments]\nranges,1\n0,0\n1,1\n[edges]\n")
    with pytest.raises(NetworkError, match="weakly connected"):
        RoadNetwork.load(p)
    p.write_text("[segments]\n0,0\n")
    with pytest.raises(NetworkError, match="ranges"):
        RoadNetwork.load(p)
    p.write_text("[segments]\nranges,1\n0,0\n1,1\n[edges]\n0,1,2\n")
    with pytest.raises(NetworkError, match="two ids"):
        RoadNetwork.load(p)
