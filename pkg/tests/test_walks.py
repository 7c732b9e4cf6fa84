import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from ohmnet import rng as streams
from ohmnet.graph import Layer, MultiLayerNetwork
from ohmnet.walks import (AliasTable, WalkConfig, build_transition,
                          simulate_walks, transition_weights)

CHI2_ALPHA = 0.001
N_SAMPLES = 100_000


def triangle():
    return MultiLayerNetwork.build([("tri", [("a", "b", 1.0), ("b", "c", 1.0),
                                             ("c", "a", 1.0)])])


def path3():
    return MultiLayerNetwork.build([("path", [("a", "b", 1.0), ("b", "c", 1.0)])])


class TestAliasTable:
    def test_encodes_exact_distribution(self):
        w = np.array([2.0, 1.0, 1.0])
        table = AliasTable(w)
        np.testing.assert_allclose(table.outcome_probabilities(), w / w.sum(),
                                   atol=1e-12)

    @given(ws=st.lists(st.floats(0.01, 100.0), min_size=1, max_size=12))
    @settings(max_examples=80, deadline=None)
    def test_encodes_exact_distribution_any_weights(self, ws):
        w = np.array(ws)
        table = AliasTable(w)
        np.testing.assert_allclose(table.outcome_probabilities(), w / w.sum(),
                                   atol=1e-9)

    def test_chi_square_three_outcomes(self):
        w = np.array([2.0, 1.0, 1.0])
        table = AliasTable(w)
        gen = streams.stream(7, 99)
        draws = table.sample_many(gen, N_SAMPLES)
        observed = np.bincount(draws, minlength=3)
        _, p = chisquare(observed, N_SAMPLES * w / w.sum())
        assert p > CHI2_ALPHA

    def test_rejects_bad_weights(self):
        with pytest.raises(ValueError):
            AliasTable([])
        with pytest.raises(ValueError):
            AliasTable([0.0, 0.0])
        with pytest.raises(ValueError):
            AliasTable([1.0, -0.5])

    def test_scalar_and_vector_sampling_agree_in_distribution(self):
        table = AliasTable([3.0, 1.0])
        gen = streams.stream(3, 98)
        scalar = np.array([table.sample(gen) for _ in range(20_000)])
        assert abs(scalar.mean() - 0.25) < 0.02


class TestTransitionBias:
    def test_first_order_when_p_q_one(self):
        net = MultiLayerNetwork.build([("l", [("a", "b", 1.0), ("b", "c", 3.0),
                                              ("b", "d", 6.0)])])
        layer = net.layer(0)
        b = net.names.id("b")
        a = net.names.id("a")
        nbrs, w = transition_weights(layer, prev=a, cur=b, p=1.0, q=1.0)
        expected = {net.names.id("a"): 1.0, net.names.id("c"): 3.0, net.names.id("d"): 6.0}
        assert {int(n): float(x) for n, x in zip(nbrs, w)} == expected

    def test_triangle_case(self):
        # unit triangle, p=4, q=0.25, prev=a, cur=b: c is adjacent to a so the
        # unnormalized weights are {a: 1/4, c: 1} -> probabilities {0.2, 0.8}
        net = triangle()
        layer = net.layer(0)
        a, b, c = (net.names.id(x) for x in "abc")
        nbrs, w = transition_weights(layer, prev=a, cur=b, p=4.0, q=0.25)
        by_node = dict(zip(nbrs.tolist(), w.tolist()))
        assert by_node[a] == pytest.approx(0.25)
        assert by_node[c] == pytest.approx(1.0)
        probs = w / w.sum()
        by_node = dict(zip(nbrs.tolist(), probs.tolist()))
        assert by_node[a] == pytest.approx(0.2)
        assert by_node[c] == pytest.approx(0.8)

    def test_path_case(self):
        # a-b-c with prev=a, cur=b: c is NOT adjacent to a -> {a: 1/p, c: 1/q}
        net = path3()
        layer = net.layer(0)
        a, b, c = (net.names.id(x) for x in "abc")
        p, q = 2.0, 5.0
        nbrs, w = transition_weights(layer, prev=a, cur=b, p=p, q=q)
        by_node = dict(zip(nbrs.tolist(), w.tolist()))
        assert by_node[a] == pytest.approx(1.0 / p)
        assert by_node[c] == pytest.approx(1.0 / q)

    def test_isolated_cur_errors(self):
        layer = Layer.from_edges(0, "l", {(0, 1): 1.0}, extra_nodes=[2])
        with pytest.raises(ValueError, match="isolated"):
            transition_weights(layer, prev=0, cur=2, p=1.0, q=1.0)

    def test_build_transition_matches_weights(self):
        net = triangle()
        layer = net.layer(0)
        a, b = net.names.id("a"), net.names.id("b")
        cfg = WalkConfig(p=4.0, q=0.25, seed=0)
        table = build_transition(layer, a, b, cfg)
        nbrs, w = transition_weights(layer, a, b, 4.0, 0.25)
        np.testing.assert_allclose(table.outcome_probabilities(), w / w.sum(),
                                   atol=1e-12)

    def test_biased_next_step_chi_square(self):
        # empirical second-order next-step distribution on the triangle
        net = triangle()
        layer = net.layer(0)
        a, b = net.names.id("a"), net.names.id("b")
        cfg = WalkConfig(p=4.0, q=0.25, seed=11)
        table = build_transition(layer, a, b, cfg)
        gen = streams.stream(11, 97)
        draws = table.sample_many(gen, N_SAMPLES)
        observed = np.bincount(draws, minlength=table.n)
        nbrs, w = transition_weights(layer, a, b, 4.0, 0.25)
        _, p_value = chisquare(observed, N_SAMPLES * w / w.sum())
        assert p_value > CHI2_ALPHA

    def test_first_order_reduction_chi_square(self):
        # with p=q=1 the empirical next step from a fixed (prev, cur) matches
        # weight-proportional sampling
        net = MultiLayerNetwork.build([("l", [("a", "b", 2.0), ("b", "c", 1.0),
                                              ("b", "d", 1.0), ("a", "c", 1.0)])])
        layer = net.layer(0)
        a, b = net.names.id("a"), net.names.id("b")
        cfg = WalkConfig(p=1.0, q=1.0, seed=5)
        table = build_transition(layer, a, b, cfg)
        gen = streams.stream(5, 96)
        draws = table.sample_many(gen, N_SAMPLES)
        observed = np.bincount(draws, minlength=table.n)
        _, ws = layer.neighbors(b)
        _, p_value = chisquare(observed, N_SAMPLES * ws / ws.sum())
        assert p_value > CHI2_ALPHA


class TestSimulateWalks:
    def test_star_alternates_through_center(self):
        net = MultiLayerNetwork.build([("star", [("c", "x", 1.0), ("c", "y", 1.0),
                                                 ("c", "z", 1.0)])])
        cfg = WalkConfig(walks_per_node=2, walk_length=9, p=0.5, q=2.0, seed=1)
        corpus = simulate_walks(net, cfg)
        center = net.names.id("c")
        x = net.names.id("x")
        for walk in corpus.layer_walks(0):
            if walk[0] == x:
                assert all(walk[k] == center for k in range(1, len(walk), 2))

    def test_walk_count_and_length_contract(self):
        net, _, _ = _benchmark(nodes=100)
        cfg = WalkConfig(walks_per_node=10, walk_length=80, seed=2)
        corpus = simulate_walks(net, cfg)
        walks = corpus.layer_walks(0)
        assert len(walks) == 10 * 100
        assert all(len(w) == 81 for w in walks)

    def test_deterministic_for_seed(self):
        net = triangle()
        cfg = WalkConfig(walks_per_node=3, walk_length=12, seed=9)
        c1 = simulate_walks(net, cfg)
        c2 = simulate_walks(net, cfg)
        for w1, w2 in zip(c1.layer_walks(0), c2.layer_walks(0)):
            assert np.array_equal(w1, w2)

    def test_workers_do_not_change_output(self):
        net, _, _ = _benchmark(nodes=40)
        base = simulate_walks(net, WalkConfig(walks_per_node=2, walk_length=10, seed=3))
        par = simulate_walks(net, WalkConfig(walks_per_node=2, walk_length=10, seed=3,
                                             workers=4))
        for l in range(net.n_layers):
            for w1, w2 in zip(base.layer_walks(l), par.layer_walks(l)):
                assert np.array_equal(w1, w2)

    def test_isolated_node_yields_singleton(self):
        layer = Layer.from_edges(0, "l", {(0, 1): 1.0}, extra_nodes=[2])
        from ohmnet.graph import NameIndex
        net = MultiLayerNetwork(NameIndex(["a", "b", "lonely"]), [layer])
        cfg = WalkConfig(walks_per_node=2, walk_length=5, seed=0)
        corpus = simulate_walks(net, cfg)
        singles = [w for w in corpus.layer_walks(0) if len(w) == 1]
        assert len(singles) == 2
        assert all(w[0] == 2 for w in singles)

    def test_every_step_is_an_edge(self):
        net, _, _ = _benchmark(nodes=60)
        cfg = WalkConfig(walks_per_node=2, walk_length=15, p=0.5, q=2.0, seed=4)
        corpus = simulate_walks(net, cfg)
        for layer in net.layers:
            for walk in corpus.layer_walks(layer.layer_id):
                for a, b in zip(walk[:-1], walk[1:]):
                    assert layer.has_edge(int(a), int(b))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            WalkConfig(walks_per_node=0)
        with pytest.raises(ValueError):
            WalkConfig(walk_length=0)
        with pytest.raises(ValueError):
            WalkConfig(p=0.0)
        with pytest.raises(ValueError):
            WalkConfig(q=-1.0)


def _benchmark(nodes):
    from ohmnet.synth import SynthConfig, generate
    return generate(SynthConfig(nodes_per_layer=nodes, layers=4, communities=2,
                                p_in=0.15, p_out=0.02, seed=8))
