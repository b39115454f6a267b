import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from irsec import metrics
from oracles import qfunc_inv_bisect, secrecy_direct, sinr_direct


class TestQfuncInv:
    def test_matches_bisection_over_grid(self):
        for p in [1.0e-9, 1.0e-7, 1.0e-5, 1.0e-3, 0.01, 0.1, 0.3, 0.5, 0.9]:
            assert metrics.qfunc_inv(p) == pytest.approx(
                qfunc_inv_bisect(p), abs=1.0e-10)

    def test_median_is_zero(self):
        assert metrics.qfunc_inv(0.5) == pytest.approx(0.0, abs=1.0e-12)

    def test_roundtrip(self):
        for p in [1.0e-6, 1.0e-4, 0.02, 0.4, 0.75]:
            assert metrics.qfunc(metrics.qfunc_inv(p)) == pytest.approx(
                p, rel=1.0e-10)

    def test_rejects_out_of_range(self):
        for bad in [0.0, 1.0, -0.2, 1.5]:
            with pytest.raises(ValueError):
                metrics.qfunc_inv(bad)


class TestPenalty:
    def test_reference_value(self):
        # xi = Q^{-1}(1e-5) / (ln 2 * sqrt(100))
        assert metrics.penalty_xi(1.0e-5, 100.0) == pytest.approx(
            0.61529, abs=1.0e-4)

    def test_half_tolerance_vanishes(self):
        assert metrics.penalty_xi(0.5, 100.0) == 0.0

    def test_monotone_in_blocklength(self):
        vals = [metrics.penalty_xi(1.0e-5, n) for n in [10, 100, 1000, 1.0e7]]
        assert all(a > b for a, b in zip(vals, vals[1:]))
        assert vals[-1] < 2.0e-3

    def test_validation(self):
        with pytest.raises(ValueError):
            metrics.penalty_xi(0.0, 100.0)
        with pytest.raises(ValueError):
            metrics.penalty_xi(0.6, 100.0)
        with pytest.raises(ValueError):
            metrics.penalty_xi(1.0e-5, 0.5)


class TestRateDispersion:
    def test_point_values(self):
        assert metrics.rate(1.0) == pytest.approx(math.log(2.0), rel=1.0e-12)
        assert metrics.dispersion(1.0e6) == pytest.approx(1.999998, abs=1.0e-6)
        assert metrics.dispersion(0.0) == 0.0

    def test_dispersion_range(self):
        g = np.logspace(-6, 9, 200)
        v = metrics.dispersion(g)
        assert np.all(v >= 0.0) and np.all(v < 2.0)
        assert np.all(np.diff(v) > 0.0)

    @given(st.floats(min_value=0.0, max_value=1.0e12))
    @settings(max_examples=200, deadline=None)
    def test_dispersion_identity(self, g):
        # V = 2 gamma / (1 + gamma) agrees with 2 (1 - 1/(1+gamma))
        assert metrics.dispersion(g) == pytest.approx(
            2.0 * (1.0 - 1.0 / (1.0 + g)), rel=1.0e-12, abs=1.0e-12)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            metrics.rate(-0.1)
        with pytest.raises(ValueError):
            metrics.dispersion(-0.1)


class TestJain:
    def test_known_value(self):
        assert metrics.jain_index([1.0, 2.0, 3.0]) == pytest.approx(
            36.0 / 42.0, rel=1.0e-12)

    def test_equal_rates_give_one(self):
        assert metrics.jain_index(np.full(7, 0.3)) == pytest.approx(1.0)

    def test_single_nonzero_gives_reciprocal(self):
        assert metrics.jain_index([0.0, 0.0, 5.0, 0.0]) == pytest.approx(0.25)

    def test_all_zero_raises(self):
        with pytest.raises(ValueError):
            metrics.jain_index(np.zeros(3))

    @given(st.lists(st.floats(min_value=0.0, max_value=100.0), min_size=1,
                    max_size=12).filter(lambda v: sum(x * x for x in v) > 0))
    @settings(max_examples=200, deadline=None)
    def test_bounds(self, vals):
        j = metrics.jain_index(vals)
        assert 1.0 / len(vals) - 1.0e-9 <= j <= 1.0 + 1.0e-9


def _random_point(rng, n, k):
    h = rng.standard_normal((k + 1, n)) + 1j * rng.standard_normal((k + 1, n))
    W = rng.standard_normal((n, k)) + 1j * rng.standard_normal((n, k))
    sigma = rng.uniform(0.5, 2.0, size=k + 1)
    return h, W, sigma


class TestSecrecyReport:
    def test_matches_direct_computation(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            n, k = int(rng.integers(2, 5)), int(rng.integers(1, 4))
            h, W, sigma = _random_point(rng, n, k)
            state = metrics.DesignState(W=W, theta=np.zeros(3),
                                        h=h)
            rep = metrics.secrecy_report(state, sigma, 0.3, 0.2)
            for kk in range(k):
                assert rep.gamma_user[kk] == pytest.approx(
                    sinr_direct(h, W, sigma, kk, kk), rel=1.0e-12)
                assert rep.secrecy_fbr_raw[kk] == pytest.approx(
                    secrecy_direct(h, W, sigma, 0.3, 0.2, kk), rel=1.0e-10,
                    abs=1.0e-12)

    def test_clipping_and_aggregates(self):
        rng = np.random.default_rng(3)
        h, W, sigma = _random_point(rng, 3, 2)
        state = metrics.DesignState(W=W, theta=np.zeros(4), h=h)
        rep = metrics.secrecy_report(state, sigma, 5.0, 5.0)
        assert np.all(rep.secrecy_fbr >= 0.0)
        assert rep.min_secrecy >= 0.0
        assert rep.min_secrecy_raw <= rep.min_secrecy
        assert rep.sum_secrecy == pytest.approx(float(np.sum(rep.secrecy_fbr)))

    def test_zero_xi_reduces_to_long_block_rates(self):
        rng = np.random.default_rng(11)
        h, W, sigma = _random_point(rng, 4, 3)
        state = metrics.DesignState(W=W, theta=np.zeros(5), h=h)
        rep = metrics.secrecy_report(state, sigma, 0.0, 0.0)
        np.testing.assert_allclose(rep.secrecy_fbr, rep.secrecy_lbr,
                                   rtol=1.0e-12)

    def test_fairness_nan_when_everything_clipped(self):
        rng = np.random.default_rng(5)
        h, W, sigma = _random_point(rng, 3, 2)
        state = metrics.DesignState(W=W, theta=np.zeros(2), h=h)
        rep = metrics.secrecy_report(state, sigma, 50.0, 50.0)
        assert math.isnan(rep.fairness())


class TestSinrValidation:
    def test_sigma_must_be_positive(self):
        with pytest.raises(ValueError):
            metrics.sinr(np.ones(2, dtype=complex), np.ones((2, 1), dtype=complex),
                         0.0, 0)
