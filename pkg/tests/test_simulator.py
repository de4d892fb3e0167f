from collections import deque

import numpy as np
import pytest

from freshnet import (ActivationSetFamily, NetworkSpec, SimulationConfigError,
                      berber1_age, dber1_age, measure_frequencies, replicate,
                      run)
from freshnet.simulator import (CHUNK, Distributed, RoundRobin, Sources,
                                StationaryCentralized, StationaryMarginal,
                                UniformStationary)


def reference_run(net, family, scheduler, sources, horizon, warmup, seed):
    """Transparent slot-by-slot oracle sharing the engine's randomness layout.

    Randomness is drawn chunk-by-chunk exactly like the engine (same streams,
    same order); the age/queue/frequency bookkeeping is then done by a plain
    loop over slots implementing the recursion directly.
    """
    n = net.n_links
    children = np.random.SeedSequence(seed).spawn(1 + 2 * n)
    rng_sched = np.random.Generator(np.random.Philox(children[0]))
    rng_chan = [np.random.Generator(np.random.Philox(children[1 + e]))
                for e in range(n)]
    rng_arr = [np.random.Generator(np.random.Philox(children[1 + n + e]))
               for e in range(n)]
    rows = []
    succ = [set() for _ in range(n)]
    arrివed = [set() for _ in range(n)]
    for t0 in range(0, horizon, CHUNK):
        m = min(CHUNK, horizon - t0)
        chunk = scheduler.emit(m, t0, rng_sched)
        rows.append(chunk)
        for e in range(n):
            idx = np.nonzero(chunk[:, e])[0]
            if len(idx):
                u = rng_chan[e].random(len(idx))
                for t_rel, ok in zip(idx, u < net.gamma[e]):
                    if ok:
                        succ[e].add(t0 + int(t_rel))
            if sources.kinds[e] == "bernoulli":
                gen = np.nonzero(rng_arr[e].random(m) < sources.rates[e])[0]
                for t_rel in gen:
                    arrived[e].add(t0 + int(t_rel))
    sched = np.vstack(rows)

    measured = horizon - warmup
    g_last = [-1] * n
    queues = [deque() for _ in range(n)]
    f_cnt = [0] * n
    age_sum = [0] * n
    peaks = [[] for _ in range(n)]
    q_sum = [0] * n
    for t in range(horizon):
        for e in range(n):
            kind = sources.kinds[e]
            if kind == "bernoulli" and t in arrived[e]:
                queues[e].append(t)
            elif kind == "periodic" and (t - sources.phases[e]) % sources.periods[e] == 0:
                queues[e].append(t)
        for e in range(n):
            age = t - g_last[e]
            if t >= warmup:
                age_sum[e] += age
            if sched[t, e]:
                if t >= warmup:
                    f_cnt[e] += 1
                if t in succ[e]:
                    if sources.kinds[e] == "active":
                        if t >= warmup:
                            peaks[e].append(age)
                        g_last[e] = t
                    elif queues[e] and queues[e][0] <= t - 1:
                        if t >= warmup:
                            peaks[e].append(age)
                        g_last[e] = queues[e].popleft()
            if t >= warmup and sources.kinds[e] != "active":
                q_sum[e] += len(queues[e])
    return {
        "f_hat": np.array(f_cnt) / measured,
        "peak": np.array([float(np.mean(p)) if p else np.nan for p in peaks]),
        "average": np.array(age_sum) / measured,
        "q_mean": np.array(q_sum) / measured,
    }


def assert_matches_reference(net, family, scheduler, sources, horizon, warmup,
                             seed):
    got = run(net, family, scheduler, sources, horizon, warmup, seed)
    want = reference_run(net, family, scheduler, sources, horizon, warmup, seed)
    np.testing.assert_allclose(got.f_hat, want["f_hat"], rtol=0, atol=0)
    np.testing.assert_allclose(got.average, want["average"], rtol=0, atol=1e-12)
    np.testing.assert_allclose(got.peak, want["peak"], rtol=0, atol=1e-12)
    np.testing.assert_allclose(got.q_mean, want["q_mean"], rtol=0, atol=1e-12)


class TestAgainstReferenceStepper:
    def test_stationary_active(self):
        net = NetworkSpec(weights=np.array([0.3, 0.7]), gamma=np.array([0.8, 0.5]))
        fam = ActivationSetFamily.explicit([[0], [1]])
        sched = StationaryCentralized(fam.sets, np.array([0.4, 0.6]), 2)
        assert_matches_reference(net, fam, sched, Sources.active(2), 4000, 400, 11)

    def test_stationary_buffered_bernoulli(self):
        net = NetworkSpec(weights=np.array([0.5, 0.5]), gamma=np.array([1.0, 0.7]))
        fam = ActivationSetFamily.explicit([[0], [1]])
        sched = StationaryCentralized(fam.sets, np.array([0.5, 0.5]), 2)
        src = Sources.bernoulli([0.2, 0.15])
        assert_matches_reference(net, fam, sched, src, 5000, 500, 23)

    def test_round_robin_periodic_sources_with_phase(self):
        net = NetworkSpec(weights=np.array([0.5, 0.5]), gamma=np.array([0.9, 0.6]))
        fam = ActivationSetFamily.k_link(2, 1)
        sched = RoundRobin([[0], [1]], 2)
        src = Sources.periodic([3, 5], phases=[0, 2])
        assert_matches_reference(net, fam, sched, src, 6000, 600, 5)

    def test_distributed_and_marginal(self):
        net = NetworkSpec(weights=np.array([0.2, 0.3, 0.5]),
                          gamma=np.array([0.9, 0.8, 0.4]))
        fam = ActivationSetFamily.k_link(3, 1)
        assert_matches_reference(net, fam, Distributed(np.array([0.3, 0.2, 0.25]), fam),
                                 Sources.active(3), 4000, 0, 17)
        assert_matches_reference(net, fam, StationaryMarginal(np.array([0.3, 0.3, 0.4]), 1),
                                 Sources.bernoulli([0.05, 0.05, 0.05]), 4000, 500, 19)

    def test_mixed_source_kinds(self):
        net = NetworkSpec(weights=np.array([0.4, 0.6]), gamma=np.array([1.0, 0.8]))
        fam = ActivationSetFamily.explicit([[0, 1]])
        sched = StationaryCentralized(fam.sets, np.array([1.0]), 2)
        src = Sources(kinds=("active", "periodic"), rates=np.zeros(2),
                      periods=np.array([0, 4]), phases=np.array([0, 1]))
        assert_matches_reference(net, fam, sched, src, 3000, 300, 3)

    def test_chunk_boundary(self):
        net = NetworkSpec(weights=np.array([1.0]), gamma=np.array([0.6]))
        fam = ActivationSetFamily.explicit([[0]])
        sched = StationaryCentralized(fam.sets, np.array([1.0]), 1)
        src = Sources.bernoulli([0.3])
        assert_matches_reference(net, fam, sched, src, CHUNK + 1777, 1000, 7)


class TestExamples:
    def test_perfect_link_every_slot(self):
        net = NetworkSpec(weights=np.array([1.0]), gamma=np.array([1.0]))
        fam = ActivationSetFamily.explicit([[0]])
        sched = StationaryCentralized(fam.sets, np.array([1.0]), 1)
        m = run(net, fam, sched, Sources.active(1), 10_000, 1000, 0)
        assert m.weighted_peak == pytest.approx(1.0)
        assert m.weighted_average == pytest.approx(1.0)
        assert m.f_hat[0] == 1.0

    def test_quarter_success_rate_age_four(self):
        net = NetworkSpec(weights=np.array([1.0]), gamma=np.array([0.25]))
        fam = ActivationSetFamily.explicit([[0]])
        sched = StationaryCentralized(fam.sets, np.array([1.0]), 1)
        m = replicate(net, fam, sched, Sources.active(1), 200_000, 20_000,
                      reps=6, base_seed=1)
        assert m.weighted_peak == pytest.approx(4.0, rel=0.02)
        assert m.weighted_average == pytest.approx(4.0, rel=0.02)

    def test_round_robin_exact_frequencies(self):
        net = NetworkSpec(weights=np.array([0.5, 0.5]), gamma=np.array([0.4, 0.9]))
        fam = ActivationSetFamily.k_link(2, 1)
        m = run(net, fam, RoundRobin([[0], [1]], 2), Sources.active(2),
                10_000, 2_000, 0)
        assert m.f_hat[0] == 0.5 and m.f_hat[1] == 0.5
        assert np.array_equal(measure_frequencies(m), m.f_hat)

    def test_distributed_collision_frequency(self):
        # both attempting collides under one-at-a-time: f = p（1-p) each
        net = NetworkSpec(weights=np.array([0.5, 0.5]), gamma=np.array([1.0, 1.0]))
        fam = ActivationSetFamily.k_link(2, 1)
        m = replicate(net, fam, Distributed(np.array([0.3, 0.3]), fam),
                      Sources.active(2), 300_000, 30_000, reps=4, base_seed=2)
        assert m.f_hat[0] == pytest.approx(0.21, abs=0.005)
        assert m.f_hat[1] == pytest.approx(0.21, abs=0.005)

    def test_marginal_sampler_hits_targets(self):
        f = np.array([0.15, 0.55, 0.8, 0.5])
        net = NetworkSpec(weights=np.full(4, 0.25), gamma=np.ones(4))
        fam = ActivationSetFamily.k_link(4, 2)
        m = run(net, fam, StationaryMarginal(f, 2), Sources.active(4),
                400_000, 0, 3)
        np.testing.assert_allclose(m.f_hat, f, atol=0.004)

    def test_buffered_bernoulli_matches_formula(self):
        net = NetworkSpec(weights=np.array([1.0]), gamma=np.array([1.0]))
        fam = ActivationSetFamily.explicit([[0]])
        sched = StationaryMarginal(np.array([0.5]), 1)
        m = replicate(net, fam, sched, Sources.bernoulli([0.25]),
                      1_000_000, 100_000, reps=3, base_seed=4)
        want = berber1_age(0.5, 1.0, 0.5)
        assert m.weighted_peak == pytest.approx(want.peak, rel=0.01)
        assert m.weighted_average == pytest.approx(want.average, rel=0.01)

    def test_buffered_periodic_matches_formula(self):
        net = NetworkSpec(weights=np.array([1.0]), gamma=np.array([0.8]))
        fam = ActivationSetFamily.explicit([[0]])
        sched = StationaryCentralized(fam.sets, np.array([1.0]), 1)
        m = replicate(net, fam, sched, Sources.periodic([3]),
                      1_000_000, 100_000, reps=3, base_seed=5)
        want = dber1_age(1.0, 0.8, 3)
        assert m.weighted_peak == pytest.approx(want.peak, rel=0.01)
        assert m.weighted_average == pytest.approx(want.average, rel=0.01)

    def test_unstable_queue_flagged(self):
        net = NetworkSpec(weights=np.array([1.0]), gamma=np.array([0.5]))
        fam = ActivationSetFamily.explicit([[0]])
        sched = StationaryMarginal(np.array([0.4]), 1)
        m = run(net, fam, sched, Sources.bernoulli([0.5]), 100_000, 10_000, 0)
        assert m.unstable[0]
        assert m.rho_hat[0] > 1.0


class TestReplication:
    def _metrics(self, reps, seed=0, horizon=50_000):
        net = NetworkSpec(weights=np.array([0.5, 0.5]), gamma=np.array([0.7, 0.7]))
        fam = ActivationSetFamily.k_link(2, 1)
        sched = StationaryMarginal(np.array([0.5, 0.5]), 1)
        return replicate(net, fam, sched, Sources.active(2), horizon,
                         horizon // 10, reps, base_seed=seed)

    def test_single_rep_zero_halfwidth(self):
        m = self._metrics(1)
        assert m.peak_hw == 0.0 and m.average_hw == 0.0

    def test_symmetric_links_agree_within_ci(self):
        m = self._metrics(8)
        spread = abs(m.peak[0] - m.peak[1])
        assert spread <= 3 * (m.per_link_peak_hw[0] + m.per_link_peak_hw[1])

    def test_halfwidth_shrinks_with_reps(self):
        hw4 = self._metrics(4, seed=100).peak_hw
        hw16 = self._metrics(16, seed=100).peak_hw
        assert hw16 < hw4  # ~1/2 expected by CLT scaling

    def test_determinism_bit_identical(self):
        a = self._metrics(3, seed=7)
        b = self._metrics(3, seed=7)
        assert a.weighted_peak == b.weighted_peak
        assert a.weighted_average == b.weighted_average
        assert np.array_equal(a.f_hat, b.f_hat)
        assert np.array_equal(a.peak, b.peak)

    def test_different_seeds_differ(self):
        a = self._metrics(2, seed=1)
        b = self._metrics(2, seed=2)
        assert a.weighted_peak != b.weighted_peak


class TestValidation:
    def test_bad_horizon(self):
        net = NetworkSpec(weights=np.array([1.0]), gamma=np.array([1.0]))
        fam = ActivationSetFamily.explicit([[0]])
        sched = StationaryCentralized(fam.sets, np.array([1.0]), 1)
        with pytest.raises(SimulationConfigError):
            run(net, fam, sched, Sources.active(1), 100, 100, 0)
        with pytest.raises(SimulationConfigError):
            run(net, fam, sched, Sources.active(1), 100, -1, 0)

    def test_link_count_mismatch(self):
        net = NetworkSpec(weights=np.array([1.0]), gamma=np.array([1.0]))
        fam = ActivationSetFamily.explicit([[0]])
        sched = StationaryCentralized(fam.sets, np.array([1.0]), 1)
        with pytest.raises(SimulationConfigError):
            run(net, fam, sched, Sources.active(2), 100, 0, 0)

    def test_uniform_scheduler_over_matchings(self):
        fam = ActivationSetFamily.single_hop([(0, 1), (1, 2), (2, 3)])
        net = NetworkSpec(weights=np.full(3, 1 / 3), gamma=np.ones(3))
        m = run(net, fam, UniformStationary(fam), Sources.active(3),
                50_000, 5_000, 0)
        # maximal matchings are {0,2} and {1}: link 1 gets half the slots
        assert m.f_hat[1] == pytest.approx(0.5, abs=0.01)
        assert m.f_hat[0] == pytest.approx(0.5, abs=0.01)
