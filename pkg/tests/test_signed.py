import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import adjusted_rand_score

from macroregimes import oracles
from macroregimes.correlation import CorrelationStack, WindowSpec
from macroregimes.signed import (
    EmptyGraphError,
    Partition,
    SignedGraph,
    ari,
    from_correlation,
    newman_modularity,
    rolling_ari,
    select_k_by_modularity,
    signed_modularity,
    sponge_sym,
    stability_series,
    threshold_graph,
)
from macroregimes.synth import BlockSpec, business_days, signed_sbm

labels_st = st.lists(st.integers(0, 3), min_size=2, max_size=25)


def two_cliques(n=5):
    lab = np.repeat([0, 1], n)
    W = np.where(lab[:, None] == lab[None, :], 1.0, -1.0)
    np.fill_diagonal(W, 0)
    return SignedGraph(np.arange(2 * n), W), lab


class TestThreshold:
    def test_all_below_threshold(self):
        C = np.full((4, 4), 0.1)
        np.fill_diagonal(C, 1)
        with pytest.raises(EmptyGraphError):
            threshold_graph(C, 0.2, date="2020-01-01")

    def test_giant_component(self):
        C = np.eye(7)
        for group in ([0, 1, 2, 3], [4, 5, 6]):
            for i in group:
                for j in group:
                    if i != j:
                        C[i, j] = 0.5
        G = threshold_graph(C)
        np.testing.assert_array_equal(G.nodes, [0, 1, 2, 3])

    def test_tie_broken_by_smallest_id(self):
        C = np.eye(4)
        C[2, 3] = C[3, 2] = -0.6
        C[0, 1] = C[1, 0] = 0.6
        G = threshold_graph(C, nodes=[10, 11, 3, 4])
        np.testing.assert_array_equal(G.nodes, [3, 4])

    def test_threshold_bounds(self):
        with pytest.raises(ValueError):
            threshold_graph(np.eye(3), 0.0)
        with pytest.raises(ValueError):
            threshold_graph(np.eye(3), 1.0)

    def test_edges_respect_threshold(self):
        rng = np.random.default_rng(0)
        A = rng.standard_normal((10, 30))
        G = threshold_graph(np.corrcoef(A), 0.2)
        w = G.weights[G.weights != 0]
        assert np.all(np.abs(w) >= 0.2)
        assert np.all(np.diag(G.weights) == 0)
        np.testing.assert_array_equal(G.weights, G.weights.T)


class TestSponge:
    def test_two_cliques(self):
        G, lab = two_cliques()
        P = sponge_sym(G, 2)
        assert ari(P.assignment, lab) == 1.0

    def test_ssbm_recovery(self):
        W, lab = signed_sbm(60, 3, seed=1)
        P = sponge_sym(SignedGraph(np.arange(60), W), 3)
        assert ari(P.assignment, lab) >= 0.95

    def test_relabeling_invariance(self):
        W, lab = signed_sbm(45, 3, seed=2)
        perm = np.random.default_rng(0).permutation(45)
        a = sponge_sym(SignedGraph(np.arange(45), W), 3)
        b = sponge_sym(SignedGraph(perm, W[np.ix_(perm, perm)]), 3)
        back = np.empty(45, dtype=int)
        back[perm] = b.assignment
        assert ari(a.assignment, back) == 1.0

    def test_all_positive_clique_scores_below_single_cluster(self):
        W = np.ones((8, 8)) - np.eye(8)
        G = SignedGraph(np.arange(8), W)
        P = sponge_sym(G, 2)
        assert signed_modularity(G, P) < signed_modularity(G, np.zeros(8, dtype=int)) + 1e-12

    def test_bad_arguments(self):
        G, _ = two_cliques()
        with pytest.raises(ValueError):
            sponge_sym(G, 1)
        with pytest.raises(ValueError):
            sponge_sym(G, 2, tau_plus=0)


class TestModularity:
    def test_all_positive_equals_newman(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            W = np.triu(rng.random((9, 9)) * (rng.random((9, 9)) < 0.5), 1)
            W = W + W.T
            lab = rng.integers(0, 3, 9)
            G = SignedGraph(np.arange(9), W)
            assert signed_modularity(G, lab) == pytest.approx(newman_modularity(W, lab), abs=1e-12)

    def test_single_cluster_positive_term_zero(self):
        W = np.ones((5, 5)) - np.eye(5)
        assert newman_modularity(W, np.zeros(5)) == pytest.approx(0.0, abs=1e-15)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            W = np.triu(rng.uniform(-1, 1, (8, 8)), 1)
            W = W + W.T
            lab = rng.integers(0, 3, 8)
            ref = oracles.signed_modularity_loop(W.tolist(), lab.tolist())
            assert signed_modularity(SignedGraph(np.arange(8), W), lab) == pytest.approx(ref, abs=1e-12)

    def test_planted_beats_random_partitions(self):
        G, lab = two_cliques(6)
        q = signed_modularity(G, lab)
        rng = np.random.default_rng(5)
        for _ in range(200):
            assert signed_modularity(G, rng.integers(0, 2, 12)) < q

    def test_partition_must_cover(self):
        G, _ = two_cliques()
        with pytest.raises(ValueError):
            signed_modularity(G, Partition(np.zeros(3, dtype=int), [0, 1, 2]))


class TestSelectK:
    def test_planted_three(self):
        W, _ = signed_sbm(60, 3, seed=0)
        k, P, curve = select_k_by_modularity(SignedGraph(np.arange(60), W), range(2, 11))
        assert k == 3 and P.k == 3
        assert set(curve) == set(range(2, 11))

    def test_single_k(self):
        G, _ = two_cliques()
        assert select_k_by_modularity(G, [4])[0] == 4

    def test_increase_rule(self):
        G, _ = two_cliques()
        k, _, curve = select_k_by_modularity(G, range(2, 5), rule="increase")
        diffs = np.diff([0.0] + [curve[j] for j in range(2, 5)])
        assert k == 2 + int(np.argmax(diffs))

    def test_flat_curve_warns(self):
        # no edge mass: every partition scores 0
        G = SignedGraph(np.arange(6), np.zeros((6, 6)))
        with pytest.warns(RuntimeWarning, match="flat"):
            k, _, curve = select_k_by_modularity(G, range(2, 5))
        assert k == 2
        assert set(curve.values()) == {0.0}

    def test_exhaustive_oracle_agreement_on_clean_planted_graphs(self):
        for seed in range(3):
            W, lab = signed_sbm(9, 3, 1.0, 1.0, seed=seed)
            G = SignedGraph(np.arange(9), W)
            best, best_q = oracles.best_signed_partition(W.tolist())
            k, P, _ = select_k_by_modularity(G, range(2, 9))
            assert signed_modularity(G, P) == pytest.approx(best_q, abs=1e-12)
            assert ari(P.assignment, list(best)) == 1.0

    def test_vectorised_q_matches_oracle_on_every_partition(self):
        rng = np.random.default_rng(6)
        W = np.triu(rng.uniform(-1, 1, (6, 6)) * (rng.random((6, 6)) < 0.7), 1)
        W = W + W.T
        G = SignedGraph(np.arange(6), W)
        for p in oracles.set_partitions(6):
            assert signed_modularity(G, np.array(p)) == pytest.approx(
                oracles.signed_modularity_loop(W.tolist(), p), abs=1e-12)

    def test_unknown_rule(self):
        G, _ = two_cliques()
        with pytest.raises(ValueError):
            select_k_by_modularity(G, [2], rule="median")


class TestARI:
    def test_examples(self):
        assert ari([0, 0, 1, 1], [0, 0, 1, 1]) == 1.0
        assert ari([0, 0, 1, 1], [1, 1, 0, 0]) == 1.0
        assert ari([0, 0, 1, 1], [0, 1, 0, 1]) == pytest.approx(-0.5)

    @settings(max_examples=80, deadline=None)
    @given(labels_st, st.data())
    def test_matches_oracle_and_sklearn(self, a, data):
        b = data.draw(st.lists(st.integers(0, 3), min_size=len(a), max_size=len(a)))
        r = ari(a, b)
        assert r == pytest.approx(oracles.ari_pairs(a, b), abs=1e-12)
        assert r == pytest.approx(adjusted_rand_score(a, b), abs=1e-12)
        assert r == pytest.approx(ari(b, a), abs=1e-15)

    def test_common_nodes_warning(self):
        P1 = Partition(np.array([0, 0, 1]), [1, 2, 3])
        P2 = Partition(np.array([0, 0, 1, 1]), [1, 2, 3, 4])
        with pytest.warns(RuntimeWarning, match="common"):
            assert ari(P1, P2) == 1.0

    def test_too_few_nodes(self):
        with pytest.raises(ValueError):
            ari(Partition(np.array([0]), [1]), Partition(np.array([0]), [1]))


class TestStabilitySeries:
    def _stack(self, mats):
        return CorrelationStack(business_days(len(mats)), np.array(mats), WindowSpec(10))

    def test_identical_graphs(self):
        C = BlockSpec(tuple(np.arange(12) % 3), 0.6, -0.3).matrix()
        vals, parts, notes = stability_series(self._stack([C] * 8), k_range=range(2, 5))
        assert np.isnan(vals[:4]).all()
        np.testing.assert_array_equal(vals[4:], 1.0)
        assert notes == []

    def test_lookback_one_is_consecutive_ari(self):
        a = np.arange(12) % 3
        mats = [BlockSpec(tuple(np.roll(a, s)), 0.6, -0.3).matrix() for s in (0, 0, 1, 1, 2)]
        mats[2] = BlockSpec(tuple(np.sort(a)), 0.6, -0.3).matrix()
        vals, parts, _ = stability_series(self._stack(mats), k_range=range(2, 5), lookback=1)
        for t in range(1, 5):
            assert vals[t] == pytest.approx(ari(parts[t], parts[t - 1]))

    def test_failing_date_recorded_not_fatal(self):
        C = BlockSpec(tuple(np.arange(9) % 3), 0.6, -0.3).matrix()
        empty = np.eye(9)
        with pytest.warns(RuntimeWarning):
            vals, parts, notes = stability_series(self._stack([C, C, empty, C, C]), k_range=[3], lookback=2)
        assert parts[2] is None
        assert len(notes) == 1
        assert vals[4] == 1.0

    def test_threads_deterministic(self):
        rng = np.random.default_rng(0)
        mats = [np.corrcoef(rng.standard_normal((10, 40))) for _ in range(6)]
        a, *_ = stability_series(self._stack(mats), k_range=range(2, 5), threads=1)
        b, *_ = stability_series(self._stack(mats), k_range=range(2, 5), threads=4)
        np.testing.assert_array_equal(a, b)

    def test_rolling_ari_validation(self):
        with pytest.raises(ValueError):
            rolling_ari([], lookback=0)


def test_from_correlation_dense():
    C = np.array([[1, 0.1, -0.05], [0.1, 1, 0.3], [-0.05, 0.3, 1]])
    G = from_correlation(C)
    assert G.weights[0, 2] == -0.05 and G.weights[0, 0] == 0
