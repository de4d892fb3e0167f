import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from freshnet import (ActivationSetFamily, EnumerationCapError, FreshnetError,
                      NetworkSpec, check_feasible, matchings_of_graph,
                      maximal_sets, network_from_config)


def explicit(sets, n=None):
    return ActivationSetFamily.explicit(sets, n_links=n)


class TestNetworkSpec:
    def test_weights_normalized_and_raw_kept(self):
        net = NetworkSpec(weights=np.array([2.0, 6.0]), gamma=np.array([0.5, 1.0]))
        assert np.allclose(net.weights, [0.25, 0.75])
        assert np.allclose(net.raw_weights, [2.0, 6.0])

    def test_rejects_bad_inputs(self):
        with pytest.raises(FreshnetError):
            NetworkSpec(weights=np.array([1.0, 0.0]), gamma=np.array([1.0, 1.0]))
        with pytest.raises(FreshnetError):
            NetworkSpec(weights=np.array([1.0]), gamma=np.array([0.0]))
        with pytest.raises(FreshnetError):
            NetworkSpec(weights=np.array([1.0]), gamma=np.array([1.2]))


class TestMaximalSets:
    def test_superset_survives(self):
        fam = explicit([[0], [1], [0, 1]])
        assert maximal_sets(fam).sets == ((0, 1),)

    def test_klink_k1_singletons(self):
        fam = ActivationSetFamily.k_link(3, 1)
        assert maximal_sets(fam).sets == ((0,), (1,), (2,))

    def test_path_graph_adjacent_conflict(self):
        # links 0 = ab, 1 = bc share node b
        fam = ActivationSetFamily.single_hop([(0, 1), (1, 2)])
        assert set(maximal_sets(fam).sets) == {(0,), (1,)}

    def test_idempotent_and_covering(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            n = int(rng.integers(2, 7))
            sets = [tuple(sorted(rng.choice(n, size=int(rng.integers(1, n + 1)),
                                            replace=False))) for _ in range(8)]
            fam = explicit(sets, n=n)
            m1 = maximal_sets(fam)
            m2 = maximal_sets(m1)
            assert m1.sets == m2.sets
            covered_in = {e for s in fam.sets for e in s}
            covered_out = {e for s in m1.sets for e in s}
            assert covered_in == covered_out


class TestMatchings:
    def test_triangle(self):
        fam = matchings_of_graph([(0, 1), (1, 2), (0, 2)])
        assert set(fam.sets) == {(0,), (1,), (2,)}

    def test_path_three_edges(self):
        fam = matchings_of_graph([(0, 1), (1, 2), (2, 3)])
        assert set(fam.sets) == {(0, 2), (1,)}

    def test_four_cycle_perfect_matchings(self):
        fam = matchings_of_graph([(0, 1), (1, 2), (2, 3), (3, 0)])
        assert set(fam.sets) == {(0, 2), (1, 3)}

    def test_all_matchings_include_non_maximal(self):
        fam = ActivationSetFamily.single_hop([(0, 1), (1, 2), (2, 3)])
        assert set(fam.materialize()) == {(0,), (1,), (2,), (0, 2), (1,)} | {(2,)}

    def test_every_enumerated_set_is_a_matching(self):
        edges = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (0, 2)]
        fam = ActivationSetFamily.single_hop(edges)
        for m in fam.materialize():
            nodes = [v for e in m for v in edges[e]]
            assert len(nodes) == len(set(nodes))


class TestEnumerationCap:
    def test_klink_cap(self):
        fam = ActivationSetFamily.k_link(40, 10, cap=1000)
        with pytest.raises(EnumerationCapError):
            fam.maximal()
        with pytest.raises(EnumerationCapError):
            fam.materialize()


class TestCheckFeasible:
    def test_time_sharing(self):
        fam = explicit([[0], [1]])
        res = check_feasible(np.array([0.5, 0.5]), fam)
        assert res.feasible
        assert np.allclose(fam.incidence_matrix() @ res.witness, [0.5, 0.5],
                           atol=1e-8)

    def test_simplex_violation(self):
        fam = explicit([[0], [1]])
        res = check_feasible(np.array([0.6, 0.6]), fam)
        assert not res.feasible
        assert res.max_violation > 1e-3

    def test_joint_activation(self):
        fam = explicit([[0, 1]])
        res = check_feasible(np.array([1.0, 1.0]), fam)
        assert res.feasible
        assert res.witness[0] == pytest.approx(1.0, abs=1e-9)

    def test_separator_certifies_infeasibility(self):
        fam = explicit([[0], [1], [0, 1]])
        # the joint set makes the whole unit square reachable
        assert check_feasible(np.array([0.9, 0.9]), fam).feasible
        fam = explicit([[0], [1], [2]], n=3)
        f_bad = np.array([0.5, 0.4, 0.3])
        res = check_feasible(f_bad, fam)
        assert not res.feasible
        y = res.separator
        M = fam.incidence_matrix()
        lhs = float(y @ f_bad)
        rhs = max(0.0, float(np.max(y @ M)))
        assert lhs > rhs + 1e-9

    def test_mixture_of_sets_feasible(self):
        rng = np.random.default_rng(11)
        fam = explicit([[0], [1, 2], [0, 3], [2, 3]], n=4)
        M = fam.incidence_matrix()
        for _ in range(25):
            x = rng.dirichlet(np.ones(M.shape[1]))
            res = check_feasible(M @ x, fam)
            assert res.feasible

    @given(f=st.lists(st.floats(0.0, 1.0), min_size=4, max_size=4),
           K=st.integers(1, 3))
    @settings(max_examples=40, deadline=None)
    def test_klink_closed_form_matches_lp(self, f, K):
        # the K-link polytope is exactly {sum f <= K, 0 <= f <= 1}
        fam = ActivationSetFamily.k_link(4, K)
        f = np.array(f)
        closed_form = f.sum() <= K + 1e-12
        assert check_feasible(f, fam, tol=1e-7).feasible == closed_form


class TestConfig:
    def test_round_trip(self, tmp_path):
        cfg = {
            "links": 4,
            "weights": "uniform",
            "gamma": {"good": 0.9, "bad": 0.1, "theta": 0.5},
            "interference": {"kind": "k-link", "K": 2},
        }
        net, fam = network_from_config(cfg)
        assert net.n_links == 4
        assert np.allclose(net.gamma, [0.1, 0.1, 0.9, 0.9])
        assert fam.kind == "k-link" and fam.K == 2
        p = tmp_path / "net.json"
        p.write_text(json.dumps(cfg))
        from freshnet import load_network
        net2, fam2 = load_network(str(p))
        assert np.allclose(net2.weights, net.weights)

    def test_explicit_and_single_hop(self):
        net, fam = network_from_config({
            "links": 2, "gamma": [0.5, 1.0],
            "interference": {"kind": "explicit", "sets": [[0], [1]]},
        })
        assert fam.sets == ((0,), (1,))
        net, fam = network_from_config({
            "links": 3, "gamma": 1.0,
            "interference": {"kind": "single-hop",
                             "edges": [[0, 1], [1, 2], [2, 3]]},
        })
        assert fam.kind == "single-hop"
        assert net.n_links == 3

    def test_link_count_mismatch(self):
        with pytest.raises(FreshnetError):
            network_from_config({
                "links": 5, "gamma": 1.0,
                "interference": {"kind": "single-hop", "edges": [[0, 1]]},
            })
