import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from freshnet import (AgePair, ArrivalProcess, FreshnetError, QueueModel,
                      UnstableQueueError, alpha_star, berber1_age, dber1_age,
                      delta_gap, dm1_bound, factor_bounds, gber1_age,
                      mm1_bound, optimal_rho, sigma_hat, sigma_star)


class TestAlphaStar:
    def test_bernoulli_closed_form_examples(self):
        # geometric-MGF substitution collapses the fixed point to (mu-lam)/(1-lam)
        a = alpha_star(ArrivalProcess.bernoulli(0.25), 0.5)
        assert a == pytest.approx(1.0 / 3.0, abs=1e-12)
        a = alpha_star(ArrivalProcess.bernoulli(0.4), 0.8)
        assert a == pytest.approx(0.4 / 0.6, abs=1e-12)

    def test_periodic_perfect_service(self):
        assert alpha_star(ArrivalProcess.periodic(2), 1.0) == 1.0

    def test_closed_form_grid(self):
        for mu in np.arange(0.1, 1.0001, 0.1):
            for rho in np.arange(0.1, 0.95, 0.1):
                lam = rho * mu
                if not 0 < lam < 1:
                    continue
                a = alpha_star(ArrivalProcess.bernoulli(lam), mu)
                assert a == pytest.approx((mu - lam) / (1 - lam), abs=1e-9)

    def test_unstable_rejected(self):
        with pytest.raises(UnstableQueueError):
            alpha_star(ArrivalProcess.bernoulli(0.5), 0.5)

    def test_bare_callable_mgf(self):
        lam = 0.3
        mgf = lambda t: lam * math.exp(t) / (1 - (1 - lam) * math.exp(t))
        a = alpha_star(mgf, 0.7)
        assert a == pytest.approx((0.7 - lam) / (1 - lam), abs=1e-6)


class TestGBer1:
    def test_peak_examples(self):
        pair = gber1_age(ArrivalProcess.bernoulli(0.25), 0.5)
        assert pair.peak == pytest.approx(7.0, abs=1e-10)  # 1/alpha* + 1/lam = 3+4
        pair = gber1_age(ArrivalProcess.periodic(2), 1.0)
        assert pair.peak == pytest.approx(3.0, abs=1e-12)

    def test_matches_berber1_on_random_inputs(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            mu = rng.uniform(0.1, 1.0)
            rho = rng.uniform(0.05, 0.95)
            lam = rho * mu
            if not 0 < lam < 1:
                continue
            via_fp = gber1_age(ArrivalProcess.bernoulli(lam), mu)
            direct = berber1_age(mu, 1.0, rho)
            assert via_fp.peak == pytest.approx(direct.peak, rel=1e-9)
            assert via_fp.average == pytest.approx(direct.average, rel=1e-9)

    def test_matches_dber1(self):
        for mu, D in [(0.5, 4), (0.8, 3), (0.3, 10), (1.0, 2)]:
            via_fp = gber1_age(ArrivalProcess.periodic(D), mu)
            direct = dber1_age(mu, 1.0, D)
            assert via_fp.peak == pytest.approx(direct.peak, rel=1e-9)
            assert via_fp.average == pytest.approx(direct.average, rel=1e-9)

    def test_peak_monotone_decreasing_in_mu(self):
        lam = 0.2
        peaks = [gber1_age(ArrivalProcess.bernoulli(lam), mu).peak
                 for mu in np.arange(0.25, 1.0001, 0.05)]
        assert all(a > b for a, b in zip(peaks, peaks[1:]))


class TestBerBer1:
    def test_examples(self):
        assert berber1_age(0.5, 1.0, 0.5).peak == pytest.approx(7.0)
        pair = berber1_age(1.0, 1.0, 0.5)
        assert pair.peak == pair.average == pytest.approx(3.0)
        # service-rate-1 branch: 1 + 1/rho
        assert berber1_age(1.0, 1.0, 0.25).peak == pytest.approx(5.0)

    def test_branch_is_continuous_at_mu_one(self):
        for rho in (0.2, 0.5, 0.8):
            near = berber1_age(1.0 - 1e-12, 1.0, rho)
            at = berber1_age(1.0, 1.0, rho)
            assert near.peak == pytest.approx(at.peak, abs=1e-6)
            assert near.average == pytest.approx(at.average, abs=1e-6)

    def test_rejects_out_of_range(self):
        with pytest.raises(UnstableQueueError):
            berber1_age(0.5, 1.0, 1.0)
        with pytest.raises(FreshnetError):
            berber1_age(1.5, 1.0, 0.5)


class TestDBer1:
    def test_deterministic_service(self):
        assert dber1_age(1.0, 1.0, 2).peak == pytest.approx(3.0)

    def test_sigma_fixed_point_residual(self):
        for mu, D in [(0.5, 4), (0.8, 3), (0.3, 10), (0.9, 2), (0.05, 30)]:
            s = sigma_star(mu, D)
            assert 0 < s <= 1
            assert abs(s - 1 + (1 - s * mu) ** D) <= 1e-10

    def test_average_peak_identity(self):
        # ave = peak - 1/(2 rho mu) + 1/2, an algebraic consequence of the forms
        for mu, D in [(0.5, 4), (0.7, 5), (0.25, 9)]:
            pair = dber1_age(mu, 1.0, D)
            rho = 1.0 / (D * mu)
            assert pair.average == pytest.approx(
                pair.peak - 1.0 / (2 * rho * mu) + 0.5, rel=1e-12)

    def test_unstable_rejected(self):
        with pytest.raises(UnstableQueueError):
            dber1_age(0.5, 1.0, 2)


class TestContinuousTimeBounds:
    def test_mm1_dominates_berber1(self):
        rng = np.random.default_rng(12)
        for _ in range(1000):
            mu = rng.uniform(0.05, 1.0)
            rho = rng.uniform(0.02, 0.98)
            assert mm1_bound(mu, rho).peak >= berber1_age(mu, 1.0, rho).peak - 1e-12
            assert mm1_bound(mu, rho).average >= berber1_age(mu, 1.0, rho).average - 1e-12

    def test_dm1_dominates_dber1(self):
        rng = np.random.default_rng(13)
        for _ in range(300):
            mu = rng.uniform(0.05, 1.0)
            rho = rng.uniform(0.05, 0.95)
            D = 1.0 / (rho * mu)
            assert dm1_bound(mu, rho).peak >= dber1_age(mu, 1.0, D).peak - 1e-12
            assert dm1_bound(mu, rho).average >= dber1_age(mu, 1.0, D).average - 1e-12

    def test_mm1_example(self):
        assert mm1_bound(1.0, 0.5).peak == pytest.approx(4.0)

    def test_gap_grows_toward_saturation(self):
        mu = 0.8
        gaps = [mm1_bound(mu, r).peak - berber1_age(mu, 1.0, r).peak
                for r in (0.1, 0.5, 0.95)]
        assert gaps[0] < gaps[1] < gaps[2]

    @given(st.floats(0.05, 0.95), st.floats(0.1, 1.0))
    @settings(max_examples=60, deadline=None)
    def test_theorem2_shape_for_all_pairs(self, rho, mu):
        for pair in (berber1_age(mu, 1.0, rho), mm1_bound(mu, rho)):
            assert pair.peak <= 2 * pair.average - 1 + 1e-9


class TestOptimalRho:
    def test_values(self):
        assert optimal_rho("bernoulli-peak") == 0.5
        assert optimal_rho("bernoulli-ave") == pytest.approx(0.53, abs=0.01)
        assert optimal_rho("periodic-peak") == pytest.approx(0.594, abs=0.005)
        assert optimal_rho("periodic-ave") == pytest.approx(0.515, abs=0.005)

    def test_quartic_root_is_exact(self):
        r = optimal_rho("bernoulli-ave")
        assert abs(r**4 - 2 * r**3 + r**2 - 2 * r + 1) <= 1e-9

    def test_sigma_hat_residual(self):
        for rho in (0.3, 0.515, 0.594, 0.8):
            s = sigma_hat(rho)
            assert abs(s - 1 + math.exp(-s / rho)) <= 1e-12


class TestDeltaGap:
    def test_bernoulli_peak_below_one(self):
        for gf in np.arange(0.1, 0.95, 0.1):
            assert delta_gap("bernoulli", "peak", gf) <= 1.0

    def test_periodic_caps(self):
        assert max(delta_gap("periodic", "peak", g)
                   for g in np.arange(0.1, 0.95, 0.1)) < 0.7
        assert max(delta_gap("periodic", "ave", g)
                   for g in np.arange(0.1, 0.95, 0.1)) < 0.6

    def test_vanishes_at_low_service_rate(self):
        assert delta_gap("bernoulli", "peak", 0.02) < 0.02
        assert delta_gap("periodic", "peak", 0.02) < 0.02


class TestFactorBounds:
    def test_table(self):
        table = factor_bounds()
        assert table["bernoulli-peak"]["factor"] == pytest.approx(4.0, abs=1e-12)
        assert table["bernoulli-ave"]["factor"] == pytest.approx(7.0, abs=0.2)
        assert table["periodic-peak"]["factor"] == pytest.approx(2.15, abs=0.05)
        assert table["periodic-ave"]["factor"] == pytest.approx(4.51, abs=0.05)


class TestQueueModel:
    def test_rho_and_stability(self):
        q = QueueModel(ArrivalProcess.bernoulli(0.25), mu=0.5)
        assert q.rho == pytest.approx(0.5)
        with pytest.raises(UnstableQueueError):
            QueueModel(ArrivalProcess.bernoulli(0.5), mu=0.4)

    def test_age_pair_is_frozen(self):
        pair = AgePair(peak=2.0, average=1.5)
        with pytest.raises(AttributeError):
            pair.peak = 3.0
